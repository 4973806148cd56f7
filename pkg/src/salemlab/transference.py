"""From point masses to smooth periodic densities.

The chain is: box kernel and lattice comb, mollification
``f = bump_N * box_N * mu``, ``p``-periodization, the periodized density
``F_m``, checks of its decay and regularity properties, and the distance
components of one approximation step.

Grid functions here live on ``R`` samples per axis.  ``R`` must be a
multiple of ``2N`` so the box kernel is a union of whole cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import factorial, gcd

import numpy as np
from scipy.special import jv

from .errors import ConfigurationError, DomainError
from .grid import (
    AtomicMeasure,
    GridFunction,
    TorusGrid,
    _check_capacity,
    conv_power,
    convolve,
    cube_mass_table,
    dft,
    hausdorff_distance,
)
from .regularity import ModulusPsi, holder_norm


def _require_multiple(R, k, what):
    if R % k:
        raise ConfigurationError(f"resolution {R} is not divisible by {what}={k}")


def box_kernel(N: int, R: int, d: int = 1) -> GridFunction:
    """``N^d`` times the indicator of ``[-1/(2N), 1/(2N))^d``."""
    _require_multiple(R, 2 * N, "2N")
    _check_capacity(R, d)
    L = R // (2 * N)
    j = np.arange(R)
    axis = ((j < L) | (j >= R - L)).astype(np.float64) * N
    out = axis
    for _ in range(d - 1):
        out = np.multiply.outer(out, axis)
    return GridFunction(out)


def lattice_comb(N: int, d: int = 1) -> AtomicMeasure:
    """Mass ``N^-d`` at every lattice point."""
    grid = TorusGrid(d, N)
    return AtomicMeasure(grid, np.ones(grid.shape, dtype=np.int64), f"1/{N ** d}")


def box_transform(freqs, N: int):
    """Exact Fourier coefficients of the box kernel: ``prod sin(pi r/N) / (pi r/N)``."""
    out = 1.0
    for f in np.atleast_1d(freqs) if np.ndim(freqs) <= 1 else freqs:
        out = out * np.sinc(np.asarray(f, dtype=np.float64) / N)
    return out


def box_convolve_measure(mu: AtomicMeasure, R: int) -> GridFunction:
    """``box_N * mu`` without round-off: the value at ``t`` is ``N^d mu(u)`` for the cell of ``t``."""
    N, d = mu.grid.N, mu.grid.d
    _require_multiple(R, 2 * N, "2N")
    _check_capacity(R, d)
    step = R // N
    cell = ((np.arange(R) + step // 2) // step) % N
    vals = mu.values()[np.ix_(*([cell] * d))] * N ** d
    return GridFunction(vals)


# mollifier

_BUMP_MASS = 128.0 / 315.0  # integral of (1 - 4 s^2)^4 over [-1/2, 1/2]


@dataclass(frozen=True)
class MollifierSpec:
    """Tensorized bump ``c (1 - (2s)^2)_+^4`` on ``(-1/2, 1/2)^d``, rescaled by ``N``."""

    N: int
    d: int = 1

    def profile(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.clip(1.0 - 4.0 * s * s, 0.0, None) ** 4 / _BUMP_MASS

    def kernel(self, R: int) -> GridFunction:
        """``N^d bump(N t)`` sampled at ``j/R`` and normalized to mean 1 on the grid."""
        _check_capacity(R, self.d)
        j = np.arange(R)
        t = np.where(j < R - j, j, j - R) / R
        axis = self.profile(self.N * t) * self.N
        axis = axis / axis.mean()
        out = axis
        for _ in range(self.d - 1):
            out = np.multiply.outer(out, axis)
        return GridFunction(out)

    def transform(self, xi):
        """Continuum Fourier transform of the one-dimensional bump at ``xi``."""
        w = np.pi * np.abs(np.asarray(xi, dtype=np.float64))
        out = np.ones_like(w)
        big = w > 1e-3
        # int_{-1}^{1} (1-x^2)^4 e^{-iwx} dx = sqrt(pi) 4! (2/w)^{9/2} J_{9/2}(w)
        out[big] = math.sqrt(math.pi) * 24 * (2 / w[big]) ** 4.5 * jv(4.5, w[big]) / (2 * _BUMP_MASS)
        ws = w[~big]
        out[~big] = 1 - ws ** 2 / 26 + ws ** 4 / 1144  # series at the origin
        return out

    def decay_constant(self):
        """``TV(bump'''')/(2 pi)^5``: then ``|bump^(xi)| <= C / |xi|^5``."""
        p = np.polynomial.Polynomial([1.0, 0.0, -4.0]) ** 4 / _BUMP_MASS
        d4 = p.deriv(4)
        roots = [r.real for r in p.deriv(5).roots() if abs(r.imag) < 1e-12 and -0.5 < r.real < 0.5]
        knots = [-0.5] + sorted(roots) + [0.5]
        # monotone pieces between critical points, plus the jumps at both ends
        tv = 2 * abs(d4(0.5)) + sum(abs(d4(b) - d4(a)) for a, b in zip(knots, knots[1:]))
        return float(tv) / (2 * math.pi) ** 5


def mollify_build_f(mu: AtomicMeasure, spec: MollifierSpec | None, R: int):
    """``f = bump_N * box_N * mu`` and the intermediate ``g = box_N * mu``."""
    N, d = mu.grid.N, mu.grid.d
    spec = MollifierSpec(N, d) if spec is None else spec
    if spec.N != N or spec.d != d:
        raise ConfigurationError("mollifier scale does not match the measure grid")
    g = box_convolve_measure(mu, R)
    f = convolve(spec.kernel(R), g)
    vals = np.where(np.abs(f.values) <= 1e-13 * max(1.0, f.sup()), 0.0, f.values)
    return GridFunction(np.clip(vals, 0.0, None)), g


def periodize(f: GridFunction, p: int) -> GridFunction:
    """``Per_p f(t) = f(p t mod 1)`` on ``p`` times the resolution of ``f``.

    The output samples are exactly the input samples tiled ``p`` times per
    axis, so its coefficient at ``k p`` is the input coefficient at ``k`` and
    every other coefficient vanishes.
    """
    if int(p) != p or p < 1:
        raise DomainError("period multiplier must be a positive integer")
    _check_capacity(f.R * p, f.d)
    return GridFunction(np.tile(f.values, (int(p),) * f.d))


# F_m

@dataclass
class FmConstruction:
    F: GridFunction
    f: GridFunction
    g: GridFunction
    mu: AtomicMeasure
    m: int
    k: int
    spec: MollifierSpec
    warnings: list = field(default_factory=list)

    @property
    def N(self):
        return self.m ** self.k

    @property
    def p(self):
        return 2 * self.m + 1

    @property
    def R(self):
        return self.F.R

    def coefficient_envelope(self, radius):
        """Upper bound for ``|F_m^(r)|`` over ``|r| >= radius``."""
        d, N = self.mu.grid.d, self.N
        kk = np.maximum(np.asarray(radius, dtype=np.float64) / math.sqrt(d) / self.p, 1e-300)
        x = kk / N
        bump = np.minimum(1.0, self.spec.decay_constant() / x ** 5)
        box = np.minimum(1.0, 1.0 / (math.pi * x))
        return bump * box * float(self.mu.total_mass)

    def continuum_coefficients(self, k):
        """``|F_m^(p k)| = |bump^(k/N)| |sinc(k/N)| |mu^(k mod N)|`` in dimension one."""
        if self.mu.grid.d != 1:
            raise ConfigurationError("continuum coefficients are implemented for d = 1")
        k = np.asarray(k)
        mu_hat = np.abs(dft(self.mu).coeffs)
        x = k / self.N
        return np.abs(self.spec.transform(x)) * np.abs(np.sinc(x)) * mu_hat[np.mod(k, self.N)]


def build_F_m(mu_sample: AtomicMeasure, m: int, k: int, R: int, alpha=None, beta=None, n_max=None,
              spec: MollifierSpec | None = None) -> FmConstruction:
    """The ``(2m+1)``-periodization of the mollified probability measure on ``Gamma_{m^k}``."""
    N = m ** k
    d = mu_sample.grid.d
    if mu_sample.grid.N != N:
        raise ConfigurationError(f"measure lives on N={mu_sample.grid.N}, expected m^k={N}")
    p = 2 * m + 1
    _require_multiple(R, 2 * N * p, "2N(2m+1)")
    _check_capacity(R, d)
    warnings = []
    if n_max is not None and gcd(factorial(n_max), m) != 1:
        raise DomainError(f"gcd({n_max}!, {m}) != 1")
    if alpha is not None and beta is not None:
        if beta <= alpha or k <= (alpha + 1) / (beta - alpha):
            warnings.append(f"k={k} does not exceed (alpha+1)/(beta-alpha); asymptotic regime not reached")
    mu = mu_sample.normalized()
    spec = MollifierSpec(N, d) if spec is None else spec
    f, g = mollify_build_f(mu, spec, R // p)
    return FmConstruction(periodize(f, p), f, g, mu, m, k, spec, warnings)


def support_cover(Fc: FmConstruction, atoms):
    """Check that ``supp F_m`` lies in the ``(2m+1)^d P`` cubes of side ``m^(-k-1)``.

    Cube centers are ``(x + j)/(2m+1)`` for atoms ``x`` (multiplicity kept)
    and ``j`` in ``{0..2m}^d``.
    """
    d, N, p, R, m, k = Fc.mu.grid.d, Fc.N, Fc.p, Fc.R, Fc.m, Fc.k
    atoms = np.asarray(atoms).reshape(-1, d)
    family = p ** d * len(atoms)
    side = float(m) ** (-k - 1)
    vals = Fc.F.values
    pts = np.argwhere(vals > 0) / R
    centers = (atoms[:, None, :] / N + np.array(list(np.ndindex(*(p,) * d)))[None, :, :]) / p
    centers = centers.reshape(-1, d)
    # distance from each support point to the nearest center in the sup norm
    from scipy.spatial import cKDTree

    tree = cKDTree(np.mod(centers, 1.0), boxsize=1.0)
    dist, _ = tree.query(pts, p=np.inf)
    covered = bool(np.all(dist < side / 2))
    # every cube carries part of the support
    tree_s = cKDTree(pts, boxsize=1.0)
    dist_c, _ = tree_s.query(np.mod(centers, 1.0), p=np.inf)
    occupied = bool(np.all(dist_c < side / 2))
    return {
        "family_size": int(family),
        "distinct_cubes": int(len({tuple(np.round(c * N * p).astype(int)) for c in centers})),
        "cube_side": side,
        "covered": covered,
        "all_occupied": occupied,
    }


def _box_table(arr: np.ndarray, sides):
    """Cyclic box sums with per-axis side lengths at every corner."""
    out = arr
    for ax, s in enumerate(sides):
        n = out.shape[ax]
        ext = np.concatenate([out, np.take(out, np.arange(s - 1), axis=ax)], axis=ax)
        pad = [(0, 0)] * out.ndim
        pad[ax] = (1, 0)
        c = np.pad(np.cumsum(ext, axis=ax), pad)
        out = np.take(c, np.arange(s, s + n), axis=ax) - np.take(c, np.arange(n), axis=ax)
    return out


def _geometric_sides(lo: int, hi: int, count: int):
    if hi < lo:
        return []
    vals = np.unique(np.rint(np.geomspace(lo, hi, count)).astype(int))
    return [int(v) for v in vals if lo <= v <= hi]


def _weights(spec, alpha, psi):
    r = spec.norms()
    nz = r > 0
    w = np.zeros_like(r)
    w[nz] = r[nz] ** (alpha / 2) / psi(1.0 / r[nz])
    return w


def verify_Fm_properties(Fc: FmConstruction, alpha: float, beta: float, psi: ModulusPsi, eta: float,
                         n_max: int = 3, cube_sides: int = 24, anchor_count: int = 64):
    """Evaluate the decay, small-cube, Hölder and rectangle properties of ``F_m``.

    Failures are report entries.  Rectangles for the last property have
    dyadic side lengths (in cells) from ``ceil(R/sqrt(m))`` up to ``R`` on
    every axis and corners on a lattice of stride ``R // anchor_count``.
    """
    F, R, d, m = Fc.F, Fc.R, Fc.mu.grid.d, Fc.m
    report = {"warnings": list(Fc.warnings)}
    spec = dft(F)
    w = _weights(spec, alpha, psi)
    val = float((w * np.abs(spec.coeffs)).max())
    report["fourier_decay"] = {"observed": val, "threshold": eta, "passed": val <= eta}

    powers = {}

    def power(n):
        if n not in powers:
            powers[n] = conv_power(F, n)
        return powers[n]

    low = [n for n in range(1, n_max + 1) if n < d / alpha]
    high = [n for n in range(1, n_max + 1) if n >= d / alpha]
    cell = 1.0 / R ** d
    worst = 0.0
    smax = int(math.floor(2 * R / math.sqrt(m)))
    for n in low:
        vals = power(n).values
        for s in _geometric_sides(1, min(smax, R), cube_sides):
            integral = float(cube_mass_table(vals, s).max()) * cell
            Q = (s / R) ** d
            worst = max(worst, integral / (eta * psi(Q) * Q ** (n * alpha / d)))
    report["small_cubes"] = {"observed": worst, "threshold": 1.0, "passed": worst <= 1.0, "orders": low}

    hold = {}
    for n in high:
        rho = (n * alpha - d) / 2
        est = holder_norm(power(n) - 1.0, rho, psi)
        hold[n] = {"rho": rho, "observed": est.value, "threshold": eta, "passed": est.value <= eta,
                   "mode": est.mode}
    report["holder"] = hold

    lo = int(math.ceil(R / math.sqrt(m)))
    sides = sorted({min(R, lo * 2 ** j) for j in range(int(math.log2(R / lo)) + 2)})
    stride = max(1, R // anchor_count)
    worst_rect, count = 0.0, 0
    for n in low:
        vals = power(n).values
        for shape in np.ndindex(*(len(sides),) * d):
            sd = [sides[i] for i in shape]
            tab = _box_table(vals, sd)[tuple(slice(0, R, stride) for _ in range(d))]
            vol = float(np.prod(sd)) / R ** d
            worst_rect = max(worst_rect, float(tab.max()) * cell / vol)
            count += tab.size
    report["rectangles"] = {"observed": worst_rect, "threshold": 1.0 + eta, "passed": worst_rect <= 1.0 + eta,
                            "rectangles": count, "sides": sides, "stride": stride}
    report["passed"] = bool(report["fourier_decay"]["passed"] and report["small_cubes"]["passed"]
                            and all(h["passed"] for h in hold.values()) and report["rectangles"]["passed"])
    return report


# approximation step

@dataclass
class MetricComponents:
    hausdorff: float
    zero_coefficient: float
    fourier: float
    fourier_window: float
    fourier_tail: float
    holder: dict
    slack: float | None = None

    @property
    def total(self):
        return (self.hausdorff + self.zero_coefficient + self.fourier
                + sum(2.0 ** -n * min(1.0, v) for n, v in self.holder.items()))

    def to_dict(self):
        return {
            "hausdorff": self.hausdorff,
            "zero_coefficient": self.zero_coefficient,
            "fourier": self.fourier,
            "fourier_window": self.fourier_window,
            "fourier_tail": self.fourier_tail,
            "holder": {str(k): v for k, v in self.holder.items()},
            "slack": self.slack,
            "total": self.total,
        }


def trig_polynomial(coeffs: dict, R: int, d: int = 1) -> GridFunction:
    """Real trigonometric polynomial from ``{frequency tuple: complex coefficient}``.

    Conjugate coefficients are added automatically.
    """
    x = np.meshgrid(*([np.arange(R) / R] * d), indexing="ij")
    vals = np.zeros((R,) * d)
    for r, c in coeffs.items():
        r = np.atleast_1d(r)
        phase = 2 * np.pi * sum(ri * xi for ri, xi in zip(r, x))
        if np.all(r == 0):
            vals = vals + np.real(c)
        else:
            vals = vals + 2 * np.real(c * np.exp(1j * phase))
    return GridFunction(vals)


def slack_level(g: GridFunction, alpha: float, psi: ModulusPsi, n_values, sides: int = 24):
    """Largest ``c`` with ``int_Q g^{*n} <= (1-c) psi(|Q|) |Q|^(n alpha/d)`` on sampled cubes."""
    R, d = g.R, g.d
    worst = 0.0
    for n in n_values:
        vals = conv_power(g, n).values
        for s in _geometric_sides(1, R, sides):
            Q = (s / R) ** d
            integral = float(cube_mass_table(vals, s).max()) / R ** d
            worst = max(worst, integral / (psi(Q) * Q ** (n * alpha / d)))
    return 1.0 - worst


def _tail_bound(Fc: FmConstruction, l1: float, degree: int, alpha: float, psi: ModulusPsi, edge: int,
                scan: int = 64):
    """Bound ``|r|^(alpha/2) |(F_m g)^(r)| / psi(1/|r|)`` for ``|r| > edge``.

    Uses ``|(F_m g)^(r)| <= ||g^||_1 max_{|j| <= degree} |F_m^(r - j)|``.  In
    dimension one the coefficients are scanned exactly up to ``scan`` times
    the edge and the decay envelope covers the rest; otherwise only the
    envelope is used.
    """
    p = Fc.p
    worst, far = 0.0, edge
    if Fc.mu.grid.d == 1:
        k = np.arange(max(1, (edge - degree) // p), scan * edge // p + 2)
        hi = (p * k + degree).astype(np.float64)
        coef = Fc.continuum_coefficients(k)
        ok = hi > edge
        worst = float(np.max(hi[ok] ** (alpha / 2) / psi(1.0 / hi[ok]) * l1 * coef[ok], initial=0.0))
        far = int(p * k[-1])
    radii = far * np.geomspace(1.0, 1e6, 400)
    env = Fc.coefficient_envelope(np.maximum(radii - degree, 1.0))
    return max(worst, float(np.max(radii ** (alpha / 2) / psi(1.0 / radii) * l1 * env)))


def fourier_component(g: GridFunction, Fc: FmConstruction, alpha: float, psi: ModulusPsi, degree=None, Fg=None):
    """Zero-coefficient term, weighted sup over the window, and the bound beyond it."""
    Fg = Fc.F * g if Fg is None else Fg
    d = g.d
    sg, sf = dft(g), dft(Fg)
    zero = float(abs(sg.coeffs[(0,) * d] - sf.coeffs[(0,) * d]))
    window = float((_weights(sg, alpha, psi) * np.abs(sg.coeffs - sf.coeffs)).max())
    # beyond the window g^ vanishes, so only (F_m g)^ contributes
    mag = np.abs(sg.coeffs)
    keep = mag > 1e-12 * mag.max()
    if degree is None:
        degree = int(np.ceil(sg.norms()[keep].max()))
    tail = _tail_bound(Fc, float(mag[keep].sum()), degree, alpha, psi, g.R // 2)
    return zero, window, tail


def approximation_step(g: GridFunction, Fc: FmConstruction, psi: ModulusPsi, alpha: float, n_max: int,
                       net_spacing: float = 0.01, degree: int | None = None) -> MetricComponents:
    """Distance components between ``(supp g, g)`` and ``(supp F_m g + net, F_m g)``.

    ``degree`` bounds the frequencies of the trigonometric polynomial ``g``;
    it is inferred from the spectrum when omitted and is used for the
    analytic bound on coefficients beyond the window.
    """
    if np.any(g.values < -1e-12):
        raise DomainError("g must be nonnegative")
    if g.R != Fc.R or g.d != Fc.F.d:
        raise ConfigurationError("g must be sampled on the grid of F_m")
    R, d = g.R, g.d
    Fg = Fc.F * g

    tol = 1e-12
    K = g.support_points(tol)
    step = max(1, int(round(net_spacing * R)))
    on_net = np.all(np.argwhere(g.values > tol) % step == 0, axis=1)
    H = np.concatenate([Fg.support_points(tol), K[on_net]])
    haus = hausdorff_distance(K, H)

    zero, window, tail = fourier_component(g, Fc, alpha, psi, degree, Fg)

    hold = {}
    for n in range(int(math.ceil(d / alpha)), n_max + 1):
        rho = (n * alpha - d) / 2
        diff = conv_power(g, n) - conv_power(Fg, n)
        hold[n] = holder_norm(diff, rho, psi).value
    low = [n for n in range(1, n_max + 1) if n < d / alpha]
    slack = slack_level(g, alpha, psi, low) if low else None
    return MetricComponents(haus, zero, max(window, tail), window, tail, hold, slack)
