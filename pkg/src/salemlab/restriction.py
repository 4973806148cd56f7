"""Restriction inequalities and multipliers of Bochner-Riesz type for atomic measures.

Conventions: functions ``f`` live on the cyclic group ``Z_W^d`` with
counting norms, and ``f^(xi) = sum_x f(x) e^(-2 pi i x.xi)`` for ``xi`` in
the dual lattice ``Gamma_W^d``.  Measures are probability measures on
``Gamma_N^d`` embedded in ``Gamma_W^d`` when ``N`` divides ``W``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import AtomicMeasure, TorusGrid, _check_capacity, conv_power
from .regularity import b_rho_blocks, ball_mass_profile, lower_regularity


def _probability(mu: AtomicMeasure) -> np.ndarray:
    v = mu.values()
    total = v.sum()
    if total <= 0:
        raise DomainError("measure has zero mass")
    return v / total


def _max_power(mu: AtomicMeasure, n: int) -> float:
    """``max_u mu^{*n}({u})`` for the probability normalization of ``mu``."""
    if mu.is_integer:
        power = conv_power(mu.with_scale(1), n)
        return float(int(power.mass.max())) / float(mu.total_count) ** n
    return float(conv_power(mu.normalized(), n).values().max())


# restriction inequality

@dataclass
class RestrictionInstance:
    mu: AtomicMeasure
    g: np.ndarray
    n: int
    p: float | None = None
    q: float | None = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.complex128)
        if self.g.shape != self.mu.grid.shape:
            raise ConfigurationError("weights must have the grid shape")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be a positive integer")
        if self.p is not None and self.q is not None and not 1 <= self.p <= self.q <= 2:
            raise DomainError("need 1 <= p <= q <= 2")


def restriction_check(inst: RestrictionInstance):
    """``sum_xi |(g mu)^(xi)|^(2n)`` against ``N^d max mu^{*n} (sum |g|^2 mu)^n``.

    Returns ``(lhs, rhs, ratio)``.  The left side is computed in frequency
    and again as ``N^d sum |(g mu)^{*n}|^2``; the two must agree.
    """
    mu, g, n = inst.mu, inst.g, inst.n
    d, N = mu.grid.d, mu.grid.N
    w = _probability(mu)
    gm = g * w
    spec = np.fft.fftn(gm)
    lhs = float(np.sum(np.abs(spec) ** (2 * n)))
    spatial = np.fft.ifftn(spec ** n)
    parseval = float(N ** d * np.sum(np.abs(spatial) ** 2))
    if not math.isclose(lhs, parseval, rel_tol=1e-9, abs_tol=1e-300):
        raise ArithmeticError(f"Parseval mismatch {lhs} vs {parseval}")
    rhs = N ** d * _max_power(mu, n) * float(np.sum(np.abs(g) ** 2 * w)) ** n
    return lhs, rhs, (lhs / rhs if rhs > 0 else math.inf)


# restriction constant

@dataclass
class ApEstimate:
    p: float
    lower: float
    upper: float
    converged: bool
    iterations: int
    witness: np.ndarray | None = field(default=None, repr=False)
    upper_source: str = ""

    def to_dict(self):
        return {"p": self.p, "lower": self.lower, "upper": self.upper, "converged": self.converged,
                "iterations": self.iterations, "upper_source": self.upper_source}


def _ap_functional(f, w):
    return float(np.sum(w * np.abs(np.fft.fftn(f)) ** 2))


def _dual_direction(G, p):
    """Maximizer of ``Re <G, h>`` over the unit ``l^p`` ball."""
    if p == 1:
        h = np.zeros_like(G)
        i = np.unravel_index(int(np.argmax(np.abs(G))), G.shape)
        h[i] = G[i] / abs(G[i]) if abs(G[i]) > 0 else 1.0
        return h
    q = p / (p - 1)
    a = np.abs(G)
    top = a.max()
    if top == 0:
        return None
    a = a / top
    h = np.exp(1j * np.angle(G)) * a ** (q - 1)
    return h / np.sum(np.abs(h) ** p) ** (1 / p)


def ap_upper_bound(mu: AtomicMeasure, p: float, n_max: int = 6):
    """Rigorous upper bound for ``A_p``.

    ``A_p`` at ``p_n = 2n/(2n-1)`` is at most ``(N^d max mu^{*n})^(1/2n)`` by
    the restriction inequality and duality; ``A_1 = (total mass)^(1/2)``.
    Between these endpoints Riesz-Thorin interpolation applies, and on the
    counting measure ``A_p <= A_{p_n}`` for ``p <= p_n``.
    """
    d, N = mu.grid.d, mu.grid.N
    if not 1 <= p <= 2:
        raise DomainError("p must lie in [1, 2]")
    ends = [(1.0, 1.0, "p=1 exact")]
    for n in range(1, n_max + 1):
        ends.append((2 * n / (2 * n - 1), (N ** d * _max_power(mu, n)) ** (1 / (2 * n)), f"n={n}"))
    best, source = math.inf, ""
    for pe, val, tag in ends:
        if p <= pe + 1e-15 and val < best:
            best, source = val, f"monotone {tag}"
    for pa, va, ta in ends:
        for pb, vb, tb in ends:
            if pa < p < pb:
                theta = (1 - 1 / p) / (1 - 1 / pb) if pa == 1.0 else (1 / pa - 1 / p) / (1 / pa - 1 / pb)
                val = va ** (1 - theta) * vb ** theta
                if val < best:
                    best, source = val, f"interpolation {ta}/{tb}"
    return best, source


def estimate_Ap(mu: AtomicMeasure, p: float, restarts: int = 8, seed: int = 0, max_iter: int = 500,
                tol: float = 1e-12, n_max: int = 6) -> ApEstimate:
    """Lower bound for ``A_p`` by conditional-gradient ascent, with the duality upper bound.

    ``Phi(f) = sum_u mu(u) |f^(u)|^2`` is convex, so replacing ``f`` by the
    unit-ball maximizer of its linearization never decreases ``Phi``.
    Starts: a point mass, the constant, the character at the heaviest atom,
    and ``restarts`` random complex vectors.
    """
    d, N = mu.grid.d, mu.grid.N
    if not 1 <= p <= 2:
        raise DomainError("p must lie in [1, 2]")
    w = _probability(mu)
    upper, source = ap_upper_bound(mu, p, n_max)
    if p == 2:
        lower = math.sqrt(N ** d * float(w.max()))
        u = np.unravel_index(int(np.argmax(w)), w.shape)
        grids = np.meshgrid(*([np.arange(N)] * d), indexing="ij")
        f = np.exp(2j * np.pi * sum(ui * x for ui, x in zip(u, grids)) / N) / N ** (d / 2)
        return ApEstimate(p, lower, upper, True, 0, f, source)
    if p == 1:
        f = np.zeros(mu.grid.shape, dtype=np.complex128)
        f[(0,) * d] = 1.0
        return ApEstimate(p, 1.0, upper, True, 0, f, source)

    rng = np.random.default_rng(seed)
    starts = []
    delta = np.zeros(mu.grid.shape, dtype=np.complex128)
    delta[(0,) * d] = 1.0
    starts.append(delta)
    starts.append(np.ones(mu.grid.shape, dtype=np.complex128))
    u = np.unravel_index(int(np.argmax(w)), w.shape)
    grids = np.meshgrid(*([np.arange(N)] * d), indexing="ij")
    starts.append(np.exp(2j * np.pi * sum(ui * x for ui, x in zip(u, grids)) / N))
    for _ in range(restarts):
        starts.append(rng.standard_normal(mu.grid.shape) + 1j * rng.standard_normal(mu.grid.shape))

    best, best_f, converged, total_iter = -1.0, None, True, 0
    for f in starts:
        f = f / np.sum(np.abs(f) ** p) ** (1 / p)
        val = _ap_functional(f, w)
        ok = False
        for it in range(max_iter):
            G = np.fft.ifftn(w * np.fft.fftn(f)) * N ** d
            h = _dual_direction(G, p)
            if h is None:
                ok = True
                break
            new = _ap_functional(h, w)
            total_iter += 1
            if new <= val * (1 + tol):
                if new > val:
                    f, val = h, new
                ok = True
                break
            f, val = h, new
        converged &= ok
        if val > best:
            best, best_f = val, f
    return ApEstimate(p, math.sqrt(best), upper, converged, total_iter, best_f, source)


# multiplier m_lambda and its kernel

def smooth_cutoff(zeta):
    """``chi = b * b / (b * b)(0)`` for ``b = (1 - 4 s^2)^4`` on ``[-1/2, 1/2]``.

    Supported in ``[-1, 1]`` with ``chi(0) = 1`` and nonnegative transform.
    """
    s = np.abs(np.asarray(zeta, dtype=np.float64))
    bb = _autocorrelation_poly()
    return np.where(s < 1.0, np.maximum(bb(np.minimum(s, 1.0)) / bb(0.0), 0.0), 0.0)


@lru_cache(maxsize=1)
def _autocorrelation_poly():
    """``(b * b)(s)`` on ``0 <= s <= 1`` as an exact polynomial (overlap ``[s - 1/2, 1/2]``)."""
    import sympy

    s, t = sympy.symbols("s t")
    half = sympy.Rational(1, 2)
    bt = (1 - 4 * t ** 2) ** 4
    expr = sympy.integrate(sympy.expand(bt * bt.subs(t, t - s)), (t, s - half, half))
    coeffs = sympy.Poly(sympy.expand(expr), s).all_coeffs()[::-1]
    return np.polynomial.Polynomial([float(c) for c in coeffs])


@dataclass
class MultiplierResult:
    lam: float
    alpha: float
    W: int
    half_width: float
    m_values: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)
    norms: dict = field(default_factory=dict)

    @property
    def spacing(self):
        return 2 * self.half_width / self.W


def _singular_profile(zeta, exponent, spacing, d):
    """``|zeta|^exponent`` with the origin cell replaced by its cell average."""
    r = np.sqrt(sum(z ** 2 for z in zeta))
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** exponent
    if d == 1:
        avg = (spacing / 2) ** exponent / (exponent + 1)
    else:
        # average over the ball with the cell's volume
        rad = (spacing ** d / (math.pi ** (d / 2) / math.gamma(d / 2 + 1))) ** (1 / d)
        avg = d / (d + exponent) * rad ** exponent
    out[~nz] = avg
    return out


def build_m_lambda(mu: AtomicMeasure, lam: float, alpha: float, chi="smooth", W: int = 1024,
                   half_width: float = 2.0, qs=(1.0, 1.25, 1.5, 2.0)) -> MultiplierResult:
    """``m_lambda = (chi |.|^(lambda-alpha)) * mu`` on a frequency box and its inverse transform.

    Atoms ``u/N`` are placed at ``u/N - 1/2`` inside the box ``[-L, L)^d``
    sampled with spacing ``2L/W``.  ``W`` must make ``1/N`` a multiple of the
    spacing.  The kernel is sampled at ``x = k/(2L)`` for ``|k| < W/2``, so
    the spatial window grows with ``W``.  ``chi`` is ``"smooth"`` or ``"one"``
    (the whole box).
    """
    d, N = mu.grid.d, mu.grid.N
    if lam <= alpha - d:
        raise DomainError(f"lambda must exceed alpha - d = {alpha - d}")
    _check_capacity(W, d)
    spacing = 2 * half_width / W
    step = 1 / (N * spacing)
    if abs(step - round(step)) > 1e-9:
        raise ConfigurationError(f"1/N={1 / N} is not a multiple of the frequency spacing {spacing}")
    step = int(round(step))
    # profile on the periodic difference grid, origin at index 0
    lag = np.where(np.arange(W) < W - np.arange(W), np.arange(W), np.arange(W) - W) * spacing
    lags = np.meshgrid(*([lag] * d), indexing="ij")
    prof = _singular_profile(lags, lam - alpha, spacing, d)
    if chi == "smooth":
        for z in lags:
            prof = prof * smooth_cutoff(z)
    elif chi != "one":
        raise ConfigurationError("chi must be 'smooth' or 'one'")
    emb = np.zeros((W,) * d)
    w = _probability(mu)
    idx = tuple(W // 2 + (np.arange(N) * step - N * step // 2) for _ in range(d))
    emb[np.ix_(*idx)] = w
    m_vals = np.real(np.fft.ifftn(np.fft.fftn(emb) * np.fft.fftn(prof)))
    # K(k/(2L)) = spacing^d sum_j m_j e^{2 pi i k (j - W/2)/W}, an inverse FFT up to the sign (-1)^k
    K = np.fft.ifftn(m_vals) * (W * spacing) ** d
    sign = np.where(np.arange(W) % 2 == 0, 1.0, -1.0)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = W
        K = K * sign.reshape(shape)
    K = np.fft.fftshift(K)
    cell = (1 / (2 * half_width)) ** d
    norms = {float(q): float((np.sum(np.abs(K) ** q) * cell) ** (1 / q)) for q in qs}
    return MultiplierResult(lam, alpha, W, half_width, m_vals, K, norms)


def kernel_thresholds(lam: float, alpha: float, d: int):
    """Exponents below which ``K_lambda`` cannot lie in ``L^q``.

    ``salem``: the necessity condition for Salem measures,
    ``lambda >= d(1/q - 1/2) - (d - alpha)/2``.  ``atomic``: a finite atomic
    measure has non-decaying transform, so ``|K| ~ |x|^(alpha-lambda-d)`` and
    ``q > d/(d + lambda - alpha)`` is needed.
    """
    salem = d / (lam + d - alpha / 2)
    atomic = d / (d + lam - alpha)
    return {"salem": salem, "atomic": atomic}


def multiplier_sweep(mu: AtomicMeasure, lam: float, alpha: float, Ws=(512, 1024, 2048, 4096), qs=(1.0, 1.25, 1.5, 2.0),
                     chi="smooth", half_width: float = 2.0):
    """Kernel norms per window size; rows ``(W, q, norm)``."""
    rows = []
    for W in Ws:
        res = build_m_lambda(mu, lam, alpha, chi, W, half_width, qs)
        rows.extend((W, q, v) for q, v in res.norms.items())
    return rows


# annulus pieces

def refine_measure(mu: AtomicMeasure, W: int) -> AtomicMeasure:
    """The same masses on ``Gamma_W^d``: atom ``u/N`` becomes index ``u W/N``."""
    N, d = mu.grid.N, mu.grid.d
    if W % N:
        raise ConfigurationError("W must be a multiple of N")
    arr = np.zeros((W,) * d, dtype=mu.mass.dtype)
    arr[tuple(slice(0, W, W // N) for _ in range(d))] = mu.mass
    return AtomicMeasure(TorusGrid(d, W), arr, mu.scale)

@dataclass(frozen=True)
class AnnulusSpec:
    """``eta_r(xi) = c phi(|xi| / r)`` with ``phi = ((s - 1/4)(1 - s))^order`` on ``[1/4, 1]``.

    ``c`` makes ``max_k r^k ||d^k eta_r||_inf = 1`` over ``k <= derivatives``.
    """

    order: int = 8
    derivatives: int = 4

    def _phi(self):
        P = np.polynomial.Polynomial
        return (P([-0.25, 1.0]) * P([1.0, -1.0])) ** self.order

    def constant(self):
        phi = self._phi()
        s = np.linspace(0.25, 1.0, 4001)
        sup = max(float(np.abs(phi.deriv(k)(s)).max()) if k else float(np.abs(phi(s)).max())
                  for k in range(self.derivatives + 1))
        return 1.0 / sup

    def values(self, xi, r):
        s = np.abs(np.asarray(xi, dtype=np.float64)) / r
        inside = (s >= 0.25) & (s <= 1.0)
        s = np.clip(s, 0.25, 1.0)
        # factored form: the expanded polynomial cancels badly near s = 1
        return np.where(inside, self.constant() * ((s - 0.25) * (1.0 - s)) ** self.order, 0.0)

    def derivative_check(self, r, W):
        """Finite-difference ``r^k ||d^k eta_r||`` on the grid of spacing ``1/W``."""
        xi = (np.arange(W) - W // 2) / W
        v = self.values(xi, r)
        out = []
        for k in range(self.derivatives + 1):
            out.append(float(np.abs(v).max()) * r ** k if k == 0 else
                       float(np.abs(np.diff(v, k)).max()) * W ** k * r ** k)
        return out


def _annulus_multiplier(mu: AtomicMeasure, r: float, spec: AnnulusSpec, W: int):
    """``h = eta_r * mu`` on ``Gamma_W`` (dimension one)."""
    N = mu.grid.N
    xi = np.where(np.arange(W) < W - np.arange(W), np.arange(W), np.arange(W) - W) / W
    eta = spec.values(xi, r)
    emb = _probability(refine_measure(mu, W))
    h = np.real(np.fft.ifft(np.fft.fft(emb) * np.fft.fft(eta)))
    return h, eta


def _cutoff_profile(x):
    """Smooth ``Phi`` with ``Phi = 1`` on ``|x| <= 1/2`` and ``0`` on ``|x| >= 1``."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    t = np.clip(2 * x - 1, 0.0, 1.0)

    def e(z):
        return np.where(z > 0, np.exp(-1 / np.maximum(z, 1e-300)), 0.0)

    return e(1 - t) / (e(1 - t) + e(t))


@dataclass
class AnnulusReport:
    r: float
    p: float
    q: float
    A_p: float
    ball_mass: float
    max_ratio: float
    ratios: list = field(repr=False)
    derivative_norms: list = field(default_factory=list)
    derivative_residual: float = 0.0
    decomposition_error: float | None = None
    piece_sup: list = field(default_factory=list)

    def to_dict(self):
        return {"r": self.r, "p": self.p, "q": self.q, "A_p": self.A_p, "ball_mass": self.ball_mass,
                "max_ratio": self.max_ratio, "derivative_norms": self.derivative_norms,
                "derivative_residual": self.derivative_residual,
                "decomposition_error": self.decomposition_error, "piece_sup": self.piece_sup}


def annulus_multiplier_check(mu: AtomicMeasure, r: float, p: float, q: float, fs, W: int | None = None,
                             spec: AnnulusSpec | None = None, A_p: float | None = None,
                             decomposition: bool = False) -> AnnulusReport:
    """Ratios ``||F^-1[h f^]||_q / (r^(d - d/q) A_p varpi(r)^(1/2) ||f||_p)`` over a batch.

    ``h = eta_r * mu`` with ``mu`` embedded in ``Gamma_W``; ``f`` ranges over
    the rows of ``fs`` (functions on ``Z_W``).  ``A_p`` defaults to the
    duality upper bound.  In decomposition mode the pieces
    ``h_n = F[F^-1[h] Phi_{n,r}]`` are built and their sum is compared with ``h``.
    """
    d = mu.grid.d
    if d != 1:
        raise ConfigurationError("the annulus check is implemented for d = 1")
    if not 1 <= p <= q <= 2:
        raise DomainError("need 1 <= p <= q <= 2")
    if not 0 < r <= 1:
        raise DomainError("r must lie in (0, 1]")
    N = mu.grid.N
    W = 8 * N if W is None else W
    spec = AnnulusSpec() if spec is None else spec
    h, eta = _annulus_multiplier(mu, r, spec, W)
    if np.any((eta != 0) & ((np.abs(np.fft.fftfreq(W)) < r / 4 - 1e-12) | (np.abs(np.fft.fftfreq(W)) > r + 1e-12))):
        raise DomainError("eta_r leaves the annulus r/4 <= |xi| <= r")
    fine = refine_measure(mu, W)
    if A_p is None:
        A_p = ap_upper_bound(fine, p)[0]
    varpi = ball_mass_profile(mu.normalized(), [r])[0][1]
    fs = np.atleast_2d(np.asarray(fs, dtype=np.complex128))
    if fs.shape[1] != W:
        raise ConfigurationError(f"test functions must have length W={W}")
    scale = r ** (d - d / q) * A_p * math.sqrt(varpi)
    out = np.fft.ifft(np.fft.fft(fs, axis=1) * h, axis=1)
    num = np.sum(np.abs(out) ** q, axis=1) ** (1 / q)
    den = np.sum(np.abs(fs) ** p, axis=1) ** (1 / p)
    ratios = (num / (scale * den)).tolist()
    dn = spec.derivative_check(r, W)
    report = AnnulusReport(r, p, q, A_p, varpi, max(ratios), ratios, dn, max(0.0, max(dn) - 1.0))
    if decomposition:
        kern = np.fft.ifft(h)
        x = np.where(np.arange(W) < W - np.arange(W), np.arange(W), np.arange(W) - W).astype(float)
        n_top = max(1, int(math.ceil(math.log2(max(r * W, 2.0)))) + 1)
        total = np.zeros(W, dtype=np.complex128)
        sups = []
        for n in range(n_top + 1):
            if n == 0:
                cut = _cutoff_profile(r * x)
            else:
                cut = _cutoff_profile(2.0 ** -n * r * x) - _cutoff_profile(2.0 ** (-n + 1) * r * x)
            piece = np.fft.fft(kern * cut)
            total += piece
            sups.append(float(np.abs(piece).max()))
        report.decomposition_error = float(np.abs(total - h).max())
        report.piece_sup = sups
    return report


def endpoint_integral_flag(radii_masses, alpha: float):
    """Dyadic partial sums of ``sum_j [2^(j alpha) varpi(2^-j)]^(1/2)``.

    Rows ``(t, mass)`` with ``t = 2^-j``; returns ``(partial sums, converging)``
    where ``converging`` means the last term is below a tenth of the first.
    """
    terms = [math.sqrt(m / t ** alpha) for t, m in radii_masses]
    partial = np.cumsum(terms).tolist()
    return partial, bool(terms and terms[-1] < 0.1 * terms[0])


# Ahlfors-David regularity diagnostic

def comb_measure(N: int, count: int, d: int = 1) -> AtomicMeasure:
    """``count`` atoms per axis at ``round(j N / count)``, equal masses."""
    if not 1 <= count <= N:
        raise DomainError("comb size must lie in [1, N]")
    idx = np.rint(np.arange(count) * N / count).astype(np.int64) % N
    grids = np.meshgrid(*([idx] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return AtomicMeasure.from_points(TorusGrid(d, N), pts).normalized()


def ad_regularity_diagnostic(mu: AtomicMeasure, alpha: float, c_lower: float | None = None, rhos=None,
                             radii=None):
    """Lower-regularity constant on the support, ``B_rho`` table and a recurrence verdict.

    ``recurring`` means the blocks in the top half of the ``rho`` range stay
    above half of the largest block; otherwise they are ``decaying``.
    """
    d, N = mu.grid.d, mu.grid.N
    if not 0 < alpha < d:
        raise DomainError(f"alpha must lie in (0, {d})")
    prob = mu.normalized() if mu.is_integer else mu
    if rhos is None:
        rhos = [2 ** j for j in range(3, int(math.log2(N / 4)) + 1)]
    if radii is None:
        radii = [2.0 ** -j for j in range(1, int(math.log2(N)) + 1)]
    c = lower_regularity(prob, alpha, radii)
    blocks = b_rho_blocks(prob, alpha, rhos)
    vals = [v for _, v in blocks]
    top = max(vals) if vals else 0.0
    upper_half = vals[len(vals) // 2:]
    verdict = "degenerate" if top == 0 else ("recurring" if min(upper_half) >= 0.5 * top else "decaying")
    return {
        "lower_constant": c,
        "lower_regular": c >= c_lower if c_lower is not None else None,
        "blocks": blocks,
        "max_block": top,
        "verdict": verdict,
        "band_limited": top == 0,
    }
