"""Moduli of continuity, Hölder-type norms, spectral energies and ball masses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DomainError
from .grid import AtomicMeasure, GridFunction, dft

VARIANTS = ("constant", "exp-sqrt-log", "inverse-log", "inverse-loglog")
_CUTOFF = {
    "constant": 1.0,
    "exp-sqrt-log": math.exp(-1),
    "inverse-log": math.exp(-1),
    "inverse-loglog": math.exp(-math.e),
}


@dataclass(frozen=True)
class ModulusPsi:
    """A slowly varying modulus ``psi``.

    The closed formula is used for ``t`` up to ``cutoff``; above it the
    value at the cutoff is kept, which preserves monotonicity.
    """

    variant: str = "constant"
    C_psi: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown modulus {self.variant!r}; choose from {VARIANTS}")

    @property
    def cutoff(self):
        return _CUTOFF[self.variant]

    def _formula(self, t):
        if self.variant == "constant":
            return np.ones_like(t)
        L = np.log(1.0 / t)
        if self.variant == "exp-sqrt-log":
            return np.exp(-np.sqrt(L))
        if self.variant == "inverse-log":
            return 1.0 / L
        return 1.0 / np.log(L)

    def __call__(self, t):
        arr = np.asarray(t, dtype=np.float64)
        if np.any(arr <= 0):
            raise DomainError("modulus is evaluated at t > 0 only")
        out = self._formula(np.minimum(arr, self.cutoff))
        return float(out) if out.ndim == 0 else out


def psi_eval(psi: ModulusPsi, t):
    return psi(t)


def psi_doubling_check(psi: ModulusPsi, t_min: float, per_octave: int = 16):
    """Largest ``psi(t)/psi(t/2)`` over ``t in [t_min, 1]``.

    Dyadic points plus ``per_octave`` log-spaced points in each octave.
    Returns ``(C_observed, passed)``; without a supplied ``C_psi`` the check
    passes whenever the ratio is finite.
    """
    if not 0 < t_min < 1:
        raise DomainError("t_min must lie in (0, 1)")
    octaves = int(math.ceil(math.log2(1.0 / t_min)))
    exps = np.linspace(0.0, octaves, octaves * per_octave + 1)
    t = 2.0 ** (-exps)
    t = t[t >= t_min]
    ratio = psi(t) / psi(t / 2)
    C = float(np.max(ratio))
    ok = bool(np.isfinite(C)) and (psi.C_psi is None or C <= psi.C_psi * (1 + 1e-12))
    return C, ok


# Hölder-type norms

def _diff4(v: np.ndarray, axis: int, step: float):
    """Fourth-order centered first difference on a periodic grid."""
    r = lambda k: np.roll(v, -k, axis=axis)
    return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * step)


def derivatives(v: np.ndarray, order: int):
    """All partial derivatives of exact order ``order`` keyed by multi-index."""
    d, R = v.ndim, v.shape[0]
    out = {}
    for beta in product(range(order + 1), repeat=d):
        if sum(beta) != order:
            continue
        w = v
        for ax, k in enumerate(beta):
            for _ in range(k):
                w = _diff4(w, ax, 1.0 / R)
        out[beta] = w
    return out


def _offsets(R: int, d: int, mode: str):
    if mode == "all":
        rng = range(R)
        return [o for o in product(rng, repeat=d) if any(o)]
    steps = sorted({max(1, int(round(R * 2.0 ** -j))) for j in range(1, int(math.log2(R)) + 2)})
    steps = [s for s in steps if s <= R // 2]
    dirs = [tuple(int(i == a) for i in range(d)) for a in range(d)]
    if d > 1:
        dirs.append((1,) * d)
    return [tuple(s * e for e in u) for s in steps for u in dirs]


def _cyclic_length(offset, R):
    o = np.abs(np.asarray(offset))
    o = np.minimum(o, R - o)
    return float(np.sqrt(np.sum(o.astype(np.float64) ** 2))) / R


def seminorm(v: np.ndarray, theta: float, psi: ModulusPsi, mode: str = "auto", budget: int = 1 << 24):
    """Sampled ``sup |v(x+h) - v(x)| / (|h|^theta psi(|h|))``.

    ``mode="all"`` uses every grid offset, ``"dyadic"`` the offsets of
    length ``2^-j`` along each axis and the main diagonal.  Returns the
    value and the number of pairs examined.
    """
    R, d = v.shape[0], v.ndim
    if mode == "auto":
        mode = "all" if v.size * (R ** d) <= budget else "dyadic"
    best, pairs = 0.0, 0
    axes = tuple(range(d))
    for off in _offsets(R, d, mode):
        dist = _cyclic_length(off, R)
        if dist == 0:
            continue
        diff = np.abs(np.roll(v, tuple(-o for o in off), axis=axes) - v).max()
        best = max(best, float(diff) / (dist ** theta * psi(dist)))
        pairs += v.size
    return best, pairs, mode


@dataclass
class HolderEstimate:
    value: float
    sup_part: float
    seminorm: float
    rho: float
    pairs: int
    mode: str
    lower_bound: bool = True

    def to_dict(self):
        return dict(self.__dict__)


def holder_norm(F, rho: float, psi: ModulusPsi, mode: str = "auto", budget: int = 1 << 24) -> HolderEstimate:
    """Sampled ``C^{rho,psi}`` norm of a grid function.

    The norm is ``sum_{|b| <= k} ||D^b f||_inf`` with ``k = floor(rho)``,
    plus ``omega_{rho-k,psi}(D^b f)`` over ``|b| = k`` when ``rho`` is not an
    integer.  Every supremum runs over sampled points and pairs only, so the
    result is a lower bound on the true norm.
    """
    if rho < 0:
        raise DomainError("rho must be nonnegative")
    v = F.values if isinstance(F, GridFunction) else np.asarray(F, dtype=np.float64)
    k = int(math.floor(rho))
    theta = rho - k
    sup_part = 0.0
    top = None
    for order in range(k + 1):
        ders = derivatives(v, order)
        sup_part += sum(float(np.abs(w).max()) for w in ders.values())
        top = ders
    semi, pairs, used = 0.0, 0, mode
    if theta > 0:
        for w in top.values():
            s, p, used = seminorm(w, theta, psi, mode, budget)
            semi += s
            pairs += p
    return HolderEstimate(sup_part + semi, sup_part, semi, rho, pairs, used)


# spectral energy and dyadic blocks

def _spectrum_and_norms(mu: AtomicMeasure):
    s = dft(mu)
    return s.coeffs, s.norms()


@dataclass
class EnergyReport:
    gamma: float
    energy: float
    shells: list
    slope: float

    @property
    def growing(self):
        return self.slope > 0

    def to_dict(self):
        return {"gamma": self.gamma, "energy": self.energy, "shells": self.shells, "slope": self.slope,
                "growing": self.growing}


def energy_spectral(mu: AtomicMeasure, gamma: float, j_max: int | None = None) -> EnergyReport:
    """Truncated energy ``sum_{r != 0} |mu^(r)|^2 |r|^(gamma-d)`` over the window.

    Shell ``j`` collects ``2^j <= |r| < 2^(j+1)``.  ``slope`` is the least
    squares slope of ``log2`` of the shell sums against ``j`` (``j <= j_max``).
    """
    d = mu.grid.d
    if not 0 < gamma < d:
        raise DomainError(f"gamma must lie in (0, {d})")
    c, r = _spectrum_and_norms(mu)
    nz = r > 0
    w = np.zeros_like(r)
    w[nz] = np.abs(c[nz]) ** 2 * r[nz] ** (gamma - d)
    total = float(w.sum())
    # complete shells only: the top one must fit inside the frequency window
    jtop = int(math.floor(math.log2(r.max() + 1))) - 1
    if j_max is not None:
        jtop = min(jtop, j_max)
    shells = []
    for j in range(jtop + 1):
        m = (r >= 2 ** j) & (r < 2 ** (j + 1))
        shells.append(float(w[m].sum()))
    js = np.arange(len(shells))
    pos = np.array(shells) > 0
    slope = float(np.polyfit(js[pos], np.log2(np.array(shells)[pos]), 1)[0]) if pos.sum() >= 2 else 0.0
    return EnergyReport(gamma, total, shells, slope)


def energy_scaling(measures, gamma: float):
    """Fitted exponent ``e`` in ``energy ~ N^e`` across measures on different grids."""
    Ns = np.array([m.grid.N for m in measures], dtype=float)
    E = np.array([energy_spectral(m, gamma).energy for m in measures])
    return float(np.polyfit(np.log(Ns), np.log(E), 1)[0])


def b_rho_blocks(mu: AtomicMeasure, alpha: float, rhos):
    """``(sum_{rho <= |xi| <= 2 rho} |mu^(xi)|^(2d/alpha))^(alpha/2d)`` per ``rho``."""
    d, N = mu.grid.d, mu.grid.N
    if not 0 < alpha < d:
        raise DomainError(f"alpha must lie in (0, {d})")
    c, r = _spectrum_and_norms(mu)
    a = np.abs(c) ** (2 * d / alpha)
    out = []
    for rho in rhos:
        if rho > N / 4:
            raise DomainError(f"rho={rho} exceeds N/4={N / 4}")
        m = (r >= rho) & (r <= 2 * rho)
        out.append((float(rho), float(a[m].sum() ** (alpha / (2 * d)))))
    return out


def shell_holder_check(mu: AtomicMeasure, alpha: float, j_max: int):
    """Per annulus ``2^(j-1) <= |xi| <= 2^j``: ``sum |mu^|^2 <= (#annulus)^(1-alpha/d) B^2``."""
    d = mu.grid.d
    c, r = _spectrum_and_norms(mu)
    rows = []
    for j in range(1, j_max + 1):
        m = (r >= 2 ** (j - 1)) & (r <= 2 ** j)
        lhs = float((np.abs(c[m]) ** 2).sum())
        B = float((np.abs(c[m]) ** (2 * d / alpha)).sum() ** (alpha / (2 * d)))
        rhs = float(m.sum()) ** (1 - alpha / d) * B ** 2
        rows.append({"j": j, "lhs": lhs, "rhs": rhs, "weighted_block": 2 ** (j * (d - alpha)) * B ** 2,
                     "ok": lhs <= rhs * (1 + 1e-12) + 1e-300})
    return rows


# ball masses

def ball_mass_profile(mu: AtomicMeasure, radii):
    """``sup_x mu(B(x, r))`` over closed balls.

    Centers range over the lattice refined by a factor 2.  In dimension one
    this is the exact supremum over all centers; in higher dimensions it is
    reported as a lower bound.  Returns rows ``(r, value)``.
    """
    d, N = mu.grid.d, mu.grid.N
    M = 2 * N
    emb = np.zeros((M,) * d)
    emb[tuple(slice(0, M, 2) for _ in range(d))] = mu.mass
    femb = np.fft.fftn(emb)
    f = np.rint(np.fft.fftfreq(M) * M)
    grids = np.meshgrid(*([np.abs(f)] * d), indexing="ij")
    dist = np.sqrt(sum(g ** 2 for g in grids)) / M
    out = []
    for r in radii:
        if not 0 < r <= 0.5:
            raise DomainError("radii must lie in (0, 1/2]")
        stencil = (dist <= r + 1e-12).astype(float)
        # correlation: mass within the ball around every refined center
        counts = np.fft.ifftn(femb * np.conj(np.fft.fftn(stencil))).real
        best = float(np.rint(counts.max())) if mu.is_integer else float(counts.max())
        out.append((float(r), best * float(mu.scale)))
    return out


def lower_regularity(mu: AtomicMeasure, alpha: float, radii):
    """``min`` over atoms ``x`` and radii of ``mu(B(x, r)) / r^alpha``."""
    d, N = mu.grid.d, mu.grid.N
    pts = mu.support()
    vals = mu.values()
    f = np.rint(np.fft.fftfreq(N) * N)
    grids = np.meshgrid(*([np.abs(f)] * d), indexing="ij")
    dist = np.sqrt(sum(g ** 2 for g in grids)) / N
    fm = np.fft.fftn(vals)
    worst = math.inf
    for r in radii:
        stencil = (dist <= r + 1e-12).astype(float)
        ball = np.fft.ifftn(fm * np.conj(np.fft.fftn(stencil))).real
        at_atoms = ball[tuple(pts.T)]
        worst = min(worst, float(at_atoms.min()) / r ** alpha)
    return worst
