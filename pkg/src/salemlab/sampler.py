"""Random sparse point sets on the lattice torus and per-trial certificates.

Every certifier takes the integer-count measure ``sigma_m`` (``m`` unit
atoms, collisions allowed) and returns an :class:`EventReport` that compares
an exactly computed extremal statistic with an explicit threshold.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial, gcd

import numpy as np

from . import rng
from .constants import as_fraction, constants_M, log_mode_constant
from .errors import ConsistencyError, DomainError
from .grid import AtomicMeasure, TorusGrid, conv_power, dft, max_cube_mass

ASYMPTOTIC_WARNING = "asymptotic-regime unverified"
RANGE_WARNING = "outside lemma range"
# N > e^(e^e) is where the log-log lemma starts to apply.
LOGLOG_THRESHOLD = math.exp(math.exp(math.e))


def floor_power(N: int, beta) -> int:
    """``floor(N^beta)`` robust to round-off when ``N^beta`` is an integer."""
    x = N ** float(beta)
    k = int(math.floor(x))
    if math.isclose(x, k + 1, rel_tol=1e-12):
        k += 1
    return k


@dataclass(frozen=True)
class SampleConfig:
    grid: TorusGrid
    beta: float
    seed: int = 0
    trial_count: int = 1
    h: int = 1
    ell_max: int = 2
    P: int | None = None

    def __post_init__(self):
        d, N = self.grid.d, self.grid.N
        if not 0 < self.beta <= d:
            raise DomainError(f"sparsity exponent must lie in (0, {d}], got {self.beta}")
        if self.P is None:
            object.__setattr__(self, "P", floor_power(N, self.beta))
        if self.P < 1:
            raise DomainError("atom count must be at least 1")
        if int(self.h) != self.h or self.h < 1:
            raise DomainError("confidence exponent must be a positive integer")
        if self.ell_max < 1:
            raise DomainError("maximal convolution order must be at least 1")
        if gcd(factorial(self.ell_max), N) != 1:
            raise DomainError(f"gcd({self.ell_max}!, {N}) != 1; pick N coprime to {self.ell_max}!")
        if N <= 2 * self.ell_max:
            raise DomainError(f"N must exceed 2*ell_max = {2 * self.ell_max}")
        if self.trial_count < 1:
            raise DomainError("trial count must be positive")

    def to_dict(self):
        return {
            "d": self.grid.d,
            "N": self.grid.N,
            "beta": self.beta,
            "P": self.P,
            "seed": self.seed,
            "trial_count": self.trial_count,
            "h": self.h,
            "ell_max": self.ell_max,
        }


def _num(x):
    """JSON-stable number: ints stay ints, everything else a float."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else float(x)
    return float(x)


@dataclass
class EventReport:
    event: str
    tag: str
    threshold: float
    observed: float
    passed: bool
    witness: dict = field(default_factory=dict)
    trial: int | None = None
    seed: int | None = None
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "event": self.event,
            "tag": self.tag,
            "trial": self.trial,
            "seed": self.seed,
            "threshold": _num(self.threshold),
            "observed": _num(self.observed),
            "passed": bool(self.passed),
            "witness": self.witness,
            "warnings": list(self.warnings),
            "extra": {k: _num(v) if isinstance(v, (int, float, Fraction, np.number)) else v for k, v in self.extra.items()},
        }


# sampling

def sample_atoms(config: SampleConfig, trial: int) -> np.ndarray:
    """The ``P`` atoms of a trial as lattice indices, in draw order."""
    s = rng.trial_seed(config.seed, trial)
    flat = rng.uniform_integers(s, config.P, config.grid.size)
    return np.stack(np.unravel_index(flat, config.grid.shape), axis=1).astype(np.int64)


def sample_points(config: SampleConfig, trial: int) -> AtomicMeasure:
    return AtomicMeasure.from_points(config.grid, sample_atoms(config, trial))


# convolution increments

def conv_increment(sigma_j: AtomicMeasure, sigma_prev: AtomicMeasure, ell: int, x_j) -> AtomicMeasure:
    """``sigma_j^{*ell} - sigma_prev^{*ell}`` checked against the binomial expansion."""
    grid = sigma_prev.grid
    if not (sigma_j.is_integer and sigma_prev.is_integer and sigma_j.scale == 1 and sigma_prev.scale == 1):
        raise DomainError("increments are defined for unit-atom counting measures")
    x = np.asarray(grid.reduce(x_j))
    if not sigma_j.equals(sigma_prev + AtomicMeasure.delta(grid, x)):
        raise DomainError("sigma_j must equal sigma_prev plus a unit atom at x_j")
    if ell == 0:
        return AtomicMeasure.zero(grid)
    direct = conv_power(sigma_j, ell).mass - conv_power(sigma_prev, ell).mass
    expand = AtomicMeasure.delta(grid, ell * x).mass.copy()
    for k in range(1, ell):
        expand += comb(ell, k) * conv_power(sigma_prev, k).translate((ell - k) * x).mass
    if direct.min() < 0 or not np.array_equal(direct, expand):
        raise ConsistencyError("convolution increment disagrees with the binomial expansion")
    return AtomicMeasure(grid, direct)


def increments(grid: TorusGrid, atoms, ell: int):
    """All increments for the atoms taken in order; they telescope to ``sigma^{*ell}``."""
    prev = AtomicMeasure.zero(grid)
    out = []
    for x in np.asarray(atoms).reshape(-1, grid.d):
        cur = prev + AtomicMeasure.delta(grid, x)
        out.append(conv_increment(cur, prev, ell, x))
        prev = cur
    return out


# certifiers

def _centered(idx, N):
    return [int(i) if i < N - N // 2 else int(i) - N for i in idx]


def _count(sigma: AtomicMeasure) -> int:
    if not sigma.is_integer or sigma.scale != 1:
        raise DomainError("certifiers expect an integer-count measure sigma_m")
    return sigma.total_count


def fourier_threshold(N: int, d: int, h: int, m: int) -> float:
    return 4.0 * math.sqrt(math.log(8) + (d + h) * math.log(N)) / math.sqrt(m)


def certify_fourier_decay(sigma: AtomicMeasure, h: int) -> EventReport:
    m = _count(sigma)
    N, d = sigma.grid.N, sigma.grid.d
    spec = np.abs(dft(sigma).coeffs) / m
    spec[(0,) * d] = -1.0
    flat = int(np.argmax(spec))
    r = np.unravel_index(flat, spec.shape)
    obs = float(spec[r])
    thr = fourier_threshold(N, d, h, m)
    return EventReport("fourier_decay", "fourier-decay-discrete", thr, obs, obs <= thr,
                       {"frequency": _centered(r, N)})


def cube_side(N: int, d: int, bound: float) -> int:
    x = N * bound ** (1.0 / d)
    s = int(math.floor(x))
    if math.isclose(x, s + 1, rel_tol=1e-12):
        s += 1
    return max(1, min(N, s))


def certify_cube_regularity(sigma: AtomicMeasure, ell: int, mode: str, params: dict, h: int,
                            power: AtomicMeasure | None = None) -> EventReport:
    """Largest mass of ``sigma^{*ell}`` on a small cube against the lemma threshold.

    ``mode="fixed"`` uses cubes of measure ``m^-ell N^-eps`` and the exact
    constant ``M(ell, eps, h)``; ``mode="log"`` uses cubes of measure
    ``N^-(beta ell)`` and the log-scale threshold.
    """
    m = _count(sigma)
    N, d = sigma.grid.N, sigma.grid.d
    warnings, extra = [], {}
    logN = math.log(N)
    if mode == "fixed":
        eps = as_fraction(params["epsilon"])
        if not 0 < eps < d:
            raise DomainError(f"epsilon must lie in (0, {d})")
        if ell > 0 and math.log(m) > (d - float(eps)) / ell * logN + 1e-12:
            raise DomainError(f"m={m} exceeds N^((d-eps)/ell)")
        bound = math.exp(-ell * math.log(m) - float(eps) * logN)
        threshold = constants_M(ell, eps, h, d)
        tag = "cube-regularity-fixed"
    elif mode == "log":
        beta = float(params["beta"])
        if ell < 1:
            raise DomainError("log mode needs ell >= 1")
        if not 0 < beta <= d / ell + 1e-12:
            raise DomainError(f"beta must lie in (0, d/ell] = (0, {d / ell}]")
        if math.log(m) > beta * logN + 1e-12:
            raise DomainError(f"m={m} exceeds N^beta")
        if N <= max(2 * ell, LOGLOG_THRESHOLD):
            warnings.append(ASYMPTOTIC_WARNING)
        bound = N ** (-beta * ell)
        scale = logN / math.log(logN)
        threshold = log_mode_constant(ell, params["beta"], h, d) * scale
        tag = "cube-regularity-log"
    else:
        raise DomainError(f"unknown mode {mode!r}")
    if bound < N ** (-d):
        extra["degenerate"] = 1
    s = cube_side(N, d, bound)
    power = conv_power(sigma, ell) if power is None else power
    obs, cube = max_cube_mass(power, s)
    obs = int(obs)
    extra["side"] = s
    extra["cube_measure"] = float(Fraction(s, N) ** d)
    if mode == "log":
        extra["tightest_constant"] = obs / scale
    return EventReport(f"cube_{mode}_l{ell}", tag, threshold, obs, obs <= threshold,
                       cube.to_dict(), warnings=warnings, extra=extra)


def certify_point_mass(sigma: AtomicMeasure, ell: int, B: float, h: int, M0: float,
                       power: AtomicMeasure | None = None) -> EventReport:
    m = _count(sigma)
    N, d = sigma.grid.N, sigma.grid.d
    warnings = []
    if ell >= 1 and ell * math.log(m) > math.log(B * N ** d * math.log(N)) + 1e-12:
        warnings.append(RANGE_WARNING)
    power = conv_power(sigma, ell) if power is None else power
    u = np.unravel_index(int(np.argmax(power.mass)), power.mass.shape)
    obs = int(power.mass[u])
    thr = M0 * math.log(N)
    return EventReport(f"point_mass_l{ell}", "singleton-mass-log", thr, obs, obs <= thr,
                       {"point": [int(i) for i in u]}, warnings=warnings)


def certify_uniformity(sigma: AtomicMeasure, ell: int, kappa: int, h: int, C_cal: float,
                       power: AtomicMeasure | None = None) -> EventReport:
    m = _count(sigma)
    N, d = sigma.grid.N, sigma.grid.d
    if ell < kappa + 1:
        raise DomainError("uniformity needs ell >= kappa + 1")
    if (ell - kappa) * math.log(m) > math.log(N ** d * math.log(N)) + 1e-12:
        raise DomainError("m exceeds (N^d log N)^(1/(ell-kappa))")
    if gcd(factorial(ell), N) != 1:
        raise DomainError(f"gcd({ell}!, {N}) != 1")
    power = conv_power(sigma, ell) if power is None else power
    mean = m ** ell / N ** d
    dev = np.abs(power.mass - mean) / math.sqrt(mean)
    u = np.unravel_index(int(np.argmax(dev)), dev.shape)
    obs = float(dev[u])
    thr = C_cal * math.log(N) ** (1 + kappa / 2)
    return EventReport(f"uniformity_l{ell}", "bounded-convolution-full-range", thr, obs, obs <= thr,
                       {"point": [int(i) for i in u]})


def certify_point_masses(sigma: AtomicMeasure, beta: float, ell_max: int, C1: float, C2: float, C3: float):
    """The three items for the normalized measure ``mu = sigma / P``.

    Works with ``sigma`` and rescales by ``P^-ell``.
    """
    P = _count(sigma)
    N, d = sigma.grid.N, sigma.grid.d
    logN = math.log(N)
    out = []
    spec = np.abs(dft(sigma).coeffs) / P
    spec[(0,) * d] = -1.0
    r = np.unravel_index(int(np.argmax(spec)), spec.shape)
    thr = C1 * N ** (-beta / 2) * math.sqrt(logN)
    out.append(EventReport("point_masses_i", "fourier-decay-final", thr, float(spec[r]), float(spec[r]) <= thr,
                           {"frequency": _centered(r, N)}))
    for ell in range(1, ell_max + 1):
        power = conv_power(sigma, ell)
        if ell <= d / beta + 1e-12:
            s = cube_side(N, d, N ** (-ell * beta))
            raw, cube = max_cube_mass(power, s)
            obs = int(raw) / P ** ell
            thr = C2 * N ** (-ell * beta) * logN
            out.append(EventReport(f"point_masses_ii_l{ell}", "bdd-multiplicity", thr, obs, obs <= thr,
                                   cube.to_dict(), extra={"side": s}))
        if ell >= d / beta - 1e-12:
            dev = np.abs(power.mass / P ** ell - N ** (-d))
            u = np.unravel_index(int(np.argmax(dev)), dev.shape)
            thr = C3 * N ** (-d) * logN ** ((ell + 1) / 2) / N ** ((ell * beta - d) / 2)
            obs = float(dev[u])
            out.append(EventReport(f"point_masses_iii_l{ell}", "bdd-convol", thr, obs, obs <= thr,
                                   {"point": [int(i) for i in u]}))
    return out


# trial orchestration

def evaluate_events(sigma: AtomicMeasure, config: SampleConfig, events, calibration: dict):
    """Run the requested certifiers on one sample, sharing convolution powers."""
    powers = {}

    def power(ell):
        if ell not in powers:
            powers[ell] = conv_power(sigma, ell)
        return powers[ell]

    reports = []
    for ev in events:
        kind = ev["event"]
        h = int(ev.get("h", config.h))
        if kind == "fourier_decay":
            reports.append(certify_fourier_decay(sigma, h))
        elif kind in ("cube_fixed", "cube_log"):
            ell = int(ev["ell"])
            mode = kind.split("_")[1]
            params = {"epsilon": ev["epsilon"]} if mode == "fixed" else {"beta": ev.get("beta", config.beta)}
            reports.append(certify_cube_regularity(sigma, ell, mode, params, h, power(ell)))
        elif kind == "point_mass":
            ell = int(ev["ell"])
            M0 = float(ev.get("M0", calibration["M0"]))
            reports.append(certify_point_mass(sigma, ell, float(ev.get("B", 1.0)), h, M0, power(ell)))
        elif kind == "uniformity":
            ell = int(ev["ell"])
            C_cal = float(ev.get("C_cal", calibration["C_cal"]))
            reports.append(certify_uniformity(sigma, ell, int(ev["kappa"]), h, C_cal, power(ell)))
        elif kind == "point_masses":
            reports.extend(certify_point_masses(
                sigma, config.beta, int(ev.get("ell_max", config.ell_max)),
                float(ev.get("C1", calibration["C1"])), float(ev.get("C2", calibration["C2"])),
                float(ev.get("C3", calibration["C3"]))))
        else:
            raise DomainError(f"unknown event {kind!r}")
    return reports


def _one_trial(args):
    config, trial, events, calibration = args
    atoms = sample_atoms(config, trial)
    sigma = AtomicMeasure.from_points(config.grid, atoms)
    seed = rng.trial_seed(config.seed, trial)
    reports = evaluate_events(sigma, config, events, calibration)
    for r in reports:
        r.trial, r.seed = trial, seed
    return trial, atoms, reports


def worker_count(workers=None) -> int:
    import os

    if workers is None:
        env = os.environ.get("SALEMLAB_THREADS")
        workers = int(env) if env else 1
    return max(1, int(workers))


@dataclass
class AggregateReport:
    config: dict
    events: dict
    reports: list
    witness: dict | None
    warnings: list

    @property
    def hard_ok(self):
        return all(e["hard_ok"] for e in self.events.values())

    def to_dict(self):
        return {"config": self.config, "events": self.events, "witness": self.witness, "warnings": self.warnings}


def allowed_failures(N: int, h: int, trials: int, c: float = 4.0) -> int:
    """Failures tolerated when each trial fails with probability at most ``c N^-h``."""
    return int(math.ceil(c * N ** (-h) * trials))


def run_trials(config: SampleConfig, events, calibration: dict | None = None, workers=None) -> AggregateReport:
    """Evaluate every event on ``T`` independent trials.

    Results are reduced by trial index, so the output does not depend on
    the number of workers.
    """
    if calibration is None:
        from .calibration import load_calibration

        calibration = load_calibration()["constants"]
    jobs = [(config, t, events, calibration) for t in range(config.trial_count)]
    n = worker_count(workers)
    if n == 1:
        results = [_one_trial(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_one_trial, jobs))
    results.sort(key=lambda x: x[0])

    summary, order, witness, warnings = {}, [], None, set()
    flat = []
    for trial, atoms, reports in results:
        flat.extend(reports)
        if witness is None and reports and all(r.passed for r in reports):
            witness = {"trial": trial, "seed": reports[0].seed, "atoms": atoms.tolist()}
        for r in reports:
            warnings.update(r.warnings)
            s = summary.get(r.event)
            if s is None:
                order.append(r.event)
                s = summary[r.event] = {"tag": r.tag, "trials": 0, "passed": 0, "worst_observed": None,
                                        "worst_trial": None, "threshold": _num(r.threshold)}
            s["trials"] += 1
            s["passed"] += int(r.passed)
            if s["worst_observed"] is None or r.observed > s["worst_observed"]:
                s["worst_observed"], s["worst_trial"] = _num(r.observed), trial
    for name in order:
        s = summary[name]
        s["pass_rate"] = s["passed"] / s["trials"]
        s["allowed_failures"] = allowed_failures(config.grid.N, config.h, s["trials"])
        s["hard_ok"] = s["trials"] - s["passed"] <= s["allowed_failures"]
    return AggregateReport(config.to_dict(), {k: summary[k] for k in order}, flat, witness, sorted(warnings))
