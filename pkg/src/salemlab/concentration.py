"""Tail bounds for sums of bounded increments, with exact and sampled oracles.

Bounds are evaluated as ``log(prefactor) + exponent``.  When every input is
rational the exponent is a :class:`fractions.Fraction`, so two formulas can be
compared exactly before anything is exponentiated.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .constants import as_fraction
from .errors import DomainError
from .sampler import fourier_threshold, worker_count

BOUND_KINDS = ("hoeffding_small_t", "hoeffding_large_t", "azuma", "bernstein")


@dataclass(frozen=True)
class MartingaleSpec:
    """Increment bounds ``a_j`` and the window ``|lambda| < delta`` of the MGF hypothesis.

    ``delta=None`` means the hypothesis holds for every ``lambda``.
    """

    bounds: tuple
    delta: object = None
    increments: str = "bounded"
    A: Fraction = field(init=False)

    def __post_init__(self):
        a = tuple(as_fraction(x) for x in self.bounds)
        if not a or any(x <= 0 for x in a):
            raise DomainError("increment bounds must be positive")
        if self.delta is not None and as_fraction(self.delta) <= 0:
            raise DomainError("delta must be positive")
        object.__setattr__(self, "bounds", a)
        object.__setattr__(self, "A", sum((x * x for x in a), Fraction(0)))


def _variance_sum(params) -> Fraction:
    if "spec" in params:
        return params["spec"].A
    if "bounds" in params:
        return MartingaleSpec(tuple(params["bounds"])).A
    A = as_fraction(params["A"])
    if A <= 0:
        raise DomainError("A must be positive")
    return A


def _delta(params):
    if "spec" in params and params["spec"].delta is not None:
        return as_fraction(params["spec"].delta)
    if params.get("delta") is None:
        return None
    d = as_fraction(params["delta"])
    if d <= 0:
        raise DomainError("delta must be positive")
    return d


def bound_exponent(kind: str, **params):
    """``(prefactor, exponent)`` with ``bound = prefactor * exp(exponent)``."""
    if kind not in BOUND_KINDS:
        raise DomainError(f"unknown bound kind {kind!r}; expected one of {BOUND_KINDS}")
    t = as_fraction(params["t"])
    if t < 0:
        raise DomainError("t must be nonnegative")
    if kind == "bernstein":
        m = int(params["m"])
        if m < 1:
            raise DomainError("m must be positive")
        return 4, -m * t * t / 4
    A = _variance_sum(params)
    if kind == "azuma":
        return 2, -t * t / (2 * A)
    delta = _delta(params)
    if kind == "hoeffding_small_t":
        if delta is not None and t > A * delta:
            raise DomainError(f"t = {t} exceeds A*delta = {A * delta}; use hoeffding_large_t")
        return 2, -t * t / (2 * A)
    if delta is None:
        raise DomainError("hoeffding_large_t needs delta")
    if t < A * delta:
        raise DomainError(f"t = {t} is below A*delta = {A * delta}; use hoeffding_small_t")
    return 2, A * delta * delta / 2 - delta * t


def log_bound(kind: str, **params) -> float:
    pre, ex = bound_exponent(kind, **params)
    return math.log(pre) + float(ex)


def concentration_bound(kind: str, **params) -> float:
    pre, ex = bound_exponent(kind, **params)
    return pre * math.exp(float(ex))


def branch_continuity(A, delta) -> dict:
    """Both Hoeffding branches at ``t = A delta``; exact when the inputs are rational."""
    A, delta = as_fraction(A), as_fraction(delta)
    t = A * delta
    small = bound_exponent("hoeffding_small_t", A=A, delta=delta, t=t)
    large = bound_exponent("hoeffding_large_t", A=A, delta=delta, t=t)
    return {"t": t, "small": small, "large": large, "equal": small == large}


# exact tails

def _tail_suffix(m: int, p: Fraction) -> list:
    """``tails[M] = sum_{k >= M} C(m, k) p^k`` for ``M = 0..m`` as Fractions."""
    terms = [math.comb(m, k) * p ** k for k in range(m + 1)]
    tails = [Fraction(0)] * (m + 2)
    for k in range(m, -1, -1):
        tails[k] = tails[k + 1] + terms[k]
    return tails[: m + 1]


def _check_summation(m, p, M):
    if int(m) != m or m < 2:
        raise DomainError("m must be an integer >= 2")
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    if int(M) != M or not 2 * m * p <= M <= m:
        raise DomainError(f"need 2mp <= M <= m with integer M; got m={m}, p={float(p)}, M={M}")


def small_summation(m: int, p, M: int, method: str = "exact") -> dict:
    """Tail ``sum_{k=M}^m C(m,k) p^k`` against ``2 (mp)^M / M!``.

    ``method="exact"`` uses rationals; ``"mpmath"`` uses 40 significant digits.
    """
    p = as_fraction(p)
    _check_summation(m, p, M)
    if method == "exact":
        tail = sum((math.comb(m, k) * p ** k for k in range(M, m + 1)), Fraction(0))
        bound = 2 * (m * p) ** M / math.factorial(M)
        ok = tail <= bound
    elif method == "mpmath":
        with mpmath.workdps(40):
            pm = mpmath.mpf(p.numerator) / p.denominator
            tail = mpmath.fsum(mpmath.binomial(m, k) * pm ** k for k in range(M, m + 1))
            bound = 2 * (m * pm) ** M / mpmath.factorial(M)
            ok = bool(tail <= bound)
    else:
        raise DomainError(f"unknown method {method!r}")
    return {"m": m, "p": p, "M": M, "tail": tail, "bound": bound, "pass": ok}


SUMMATION_PS = tuple(Fraction(x) for x in ("0.001", "0.002", "0.005", "0.01", "0.02", "0.05",
                                           "0.1", "0.15", "0.2", "0.25", "0.3", "0.35", "0.4"))


def small_summation_grid(m_max: int = 50, ps=SUMMATION_PS) -> dict:
    """Every admissible ``(m, p, M)`` with ``2 <= m <= m_max``; exact rationals throughout."""
    checked, failures = 0, []
    for m in range(2, m_max + 1):
        for p in ps:
            p = as_fraction(p)
            lo = math.ceil(2 * m * p)
            if lo > m:
                continue
            tails = _tail_suffix(m, p)
            for M in range(max(lo, 1), m + 1):
                bound = 2 * (m * p) ** M / math.factorial(M)
                checked += 1
                if tails[M] > bound:
                    failures.append((m, p, M))
    return {"checked": checked, "failures": failures, "pass": not failures}


def factorial_ineq_check(T, n: int) -> dict:
    """``T^n / n! <= e^-n`` for ``n >= e^2 T``, compared in log space."""
    if T < 1:
        raise DomainError("T must be at least 1")
    threshold = minimal_factorial_n(T)
    lhs = n * math.log(T) - math.lgamma(n + 1)
    rhs = -float(n)
    applicable = n >= threshold
    return {"T": T, "n": n, "applicable": applicable, "log_lhs": lhs, "log_rhs": rhs,
            "margin": rhs - lhs, "pass": (lhs <= rhs) if applicable else None}


def minimal_factorial_n(T) -> int:
    with mpmath.workdps(50):
        return int(mpmath.ceil(mpmath.e ** 2 * mpmath.mpf(as_fraction(T).numerator) / as_fraction(T).denominator))


# moment generating function

def _distribution(dist, a):
    if dist is None:
        return np.array([-a, a], dtype=float), np.array([0.5, 0.5])
    values = np.array([float(v) for v, _ in dist])
    probs = np.array([float(q) for _, q in dist])
    if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-12):
        raise DomainError("probabilities must be nonnegative and sum to 1")
    exact = [(as_fraction(v), as_fraction(q)) for v, q in dist]
    mean = sum(v * q for v, q in exact)
    if mean != 0 and abs(float(mean)) > 1e-12:
        raise DomainError(f"distribution has nonzero mean {float(mean)}")
    if np.any(np.abs(values) > a * (1 + 1e-15)):
        raise DomainError("distribution is not bounded by a")
    return values, probs


def mgf_twopoint_check(a, ts, dist=None) -> dict:
    """Smallest ``exp(a^2 t^2 / 2) - E exp(tX)`` over ``ts``.

    ``dist`` is a list of ``(value, probability)`` pairs; default is ``X = +-a``.
    """
    if a <= 0:
        raise DomainError("a must be positive")
    values, probs = _distribution(dist, float(a))
    ts = np.asarray(ts, dtype=float)
    log_mgf = logsumexp(np.outer(ts, values) + np.log(probs)[None, :], axis=1)
    log_rhs = a * a * ts * ts / 2
    resid = np.exp(log_rhs) - np.exp(log_mgf)
    i = int(np.argmin(resid))
    return {"min_residual": float(resid[i]), "t_at_min": float(ts[i]),
            "min_log_gap": float(np.min(log_rhs - log_mgf)), "pass": bool(resid[i] >= -1e-12)}


# Monte Carlo

def wilson_interval(hits: int, n: int, level: float = 0.99) -> tuple:
    z = float(norm.ppf(0.5 + level / 2))
    p = hits / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class TailRow:
    t: float
    hits: int
    trials: int
    empirical: float
    ci_low: float
    ci_high: float
    bound: float
    passed: bool

    def as_dict(self):
        return {"t": self.t, "empirical": self.empirical, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "bound": self.bound, "trials": self.trials,
                "pass": self.passed}


@dataclass(frozen=True)
class TailReport:
    distribution: str
    m: int
    rows: tuple
    extra: dict

    @property
    def passed(self):
        return all(r.passed for r in self.rows) and self.extra.get("pass", True)


def _chunks(trials: int, size: int):
    starts = range(0, trials, size)
    return [(i, s, min(size, trials - s)) for i, s in enumerate(starts)]


def _rademacher_means(rng, count, m, N, u):
    ones = rng.binomial(m, 0.5, size=count)
    return np.abs(2.0 * ones - m) / m, None


def _character_means(rng, count, m, N, u):
    x = rng.integers(0, N, size=(count, m))
    phases = np.exp(-2j * np.pi * ((u * x) % N) / N)
    fixed = np.abs(phases.mean(axis=1))
    # the full spectrum of each sample, for the max-over-frequencies event
    hist = np.zeros((count, N))
    np.add.at(hist, (np.repeat(np.arange(count), m), x.ravel()), 1.0)
    spec = np.abs(np.fft.fft(hist, axis=1))[:, 1:] / m
    return fixed, spec.max(axis=1)


_GENERATORS = {"rademacher": _rademacher_means, "character": _character_means}


def monte_carlo_tail(distribution: str, ts, trials: int, m: int, seed: int = 0, N: int = 1009,
                     u: int = 1, h: int = 1, level: float = 0.99, chunk: int = 5000,
                     workers=None) -> TailReport:
    """Empirical ``P(|mean of X_j| >= t)`` against ``4 exp(-m t^2 / 4)`` (all ``|X_j| <= 1``).

    ``"rademacher"`` draws fair signs; ``"character"`` draws ``x_j`` uniform on
    ``Z_N`` and uses ``exp(-2 pi i u x_j / N)``.  The character run also counts
    trials whose largest nonzero-frequency coefficient exceeds the decay
    threshold of the sampler.
    """
    if trials < 1000:
        raise DomainError("need at least 1000 trials")
    if distribution not in _GENERATORS:
        raise DomainError(f"unknown distribution {distribution!r}")
    if distribution == "character" and u % N == 0:
        raise DomainError("character frequency must be nonzero mod N")
    gen = _GENERATORS[distribution]
    ts = [float(t) for t in ts]

    def work(job):
        idx, _, count = job
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        return gen(rng, count, m, N, u)

    jobs = _chunks(trials, chunk)
    with ThreadPoolExecutor(worker_count(workers)) as pool:
        parts = list(pool.map(work, jobs))
    means = np.concatenate([p[0] for p in parts])
    rows = []
    for t in ts:
        hits = int(np.count_nonzero(means >= t))
        lo, hi = wilson_interval(hits, trials, level)
        b = concentration_bound("bernstein", m=m, t=Fraction(repr(t)))
        rows.append(TailRow(t, hits, trials, hits / trials, lo, hi, b, hi <= b))
    extra = {}
    if distribution == "character":
        thr = fourier_threshold(N, 1, h, m)
        peaks = np.concatenate([p[1] for p in parts])
        hits = int(np.count_nonzero(peaks > thr))
        lo, hi = wilson_interval(hits, trials, level)
        extra = {"threshold": thr, "exceedances": hits, "frequency": hits / trials,
                 "ci_high": hi, "largest_peak": float(peaks.max()), "pass": hits / trials <= 1e-3}
    return TailReport(distribution, m, tuple(rows), extra)
