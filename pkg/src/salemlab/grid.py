"""Measures, functions and spectra on the discrete torus.

Index conventions
-----------------
A lattice index ``u`` in ``{0, ..., N-1}^d`` stands for the point ``u/N`` of
the torus.  Arrays are stored in numpy FFT order; integer frequencies are
read off with :meth:`Spectrum.frequencies`, which yields the centered window
``-floor(R/2) .. ceil(R/2)-1`` on every axis.

Atomic measures use the un-normalized transform
``mu_hat(r) = sum_u mass(u) exp(-2 pi i r.u / N)``.  Grid functions are
samples at ``j/R`` and use the averaged transform (the Riemann sum of the
integral), so the mean sits at ``r = 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapacityError, ConfigurationError, DomainError, PrecisionError

# Largest dense array (elements) any routine will allocate.
MEMORY_BUDGET = 1 << 26
# Integer results must stay below this for the float FFT path to be exact.
_FFT_EXACT_LIMIT = 1 << 52
_INT64_LIMIT = 1 << 62


def _check_capacity(R: int, d: int, budget=None):
    budget = MEMORY_BUDGET if budget is None else budget
    if R ** d > budget:
        raise CapacityError(f"dense array of {R}^{d} elements exceeds budget {budget}")


@dataclass(frozen=True)
class TorusGrid:
    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"side length must be an integer >= 2, got {self.N}")

    @property
    def shape(self):
        return (self.N,) * self.d

    @property
    def size(self):
        return self.N ** self.d

    def reduce(self, index):
        return tuple(int(i) % self.N for i in np.atleast_1d(index))


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(x)


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Nonnegative masses on the lattice cells of the torus.

    ``mass`` holds integer counts (``int64``) or real weights (``float64``);
    the physical mass of cell ``u`` is ``scale * mass[u]``.  Keeping the
    counts and the rational scale apart lets ``mu_m = sigma_m / m`` and all
    of its convolution powers stay exact.
    """

    grid: TorusGrid
    mass: np.ndarray
    scale: Fraction = field(default=Fraction(1))

    def __post_init__(self):
        arr = np.asarray(self.mass)
        if arr.shape != self.grid.shape:
            raise ConfigurationError(f"mass array shape {arr.shape} does not match grid {self.grid.shape}")
        if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
            arr = arr.astype(np.int64)
        else:
            arr = arr.astype(np.float64)
        if arr.size and arr.min() < 0:
            raise DomainError("masses must be nonnegative")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "mass", arr)
        object.__setattr__(self, "scale", _as_fraction(self.scale))
        if self.scale < 0:
            raise DomainError("scale must be nonnegative")

    # constructors

    @classmethod
    def zero(cls, grid: TorusGrid):
        return cls(grid, np.zeros(grid.shape, dtype=np.int64))

    @classmethod
    def delta(cls, grid: TorusGrid, index=None):
        arr = np.zeros(grid.shape, dtype=np.int64)
        idx = (0,) * grid.d if index is None else grid.reduce(index)
        arr[idx] = 1
        return cls(grid, arr)

    @classmethod
    def from_points(cls, grid: TorusGrid, points, scale=1):
        """Unit atoms at the given lattice indices (rows of a ``(k, d)`` array)."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, grid.d) % grid.N
        flat = np.ravel_multi_index(tuple(pts.T), grid.shape) if len(pts) else np.zeros(0, dtype=np.int64)
        counts = np.bincount(flat, minlength=grid.size).reshape(grid.shape)
        return cls(grid, counts, scale)

    # views

    @property
    def is_integer(self):
        return self.mass.dtype == np.int64

    @property
    def total_count(self):
        return int(self.mass.sum()) if self.is_integer else float(self.mass.sum())

    @property
    def total_mass(self):
        if self.is_integer:
            return self.scale * self.total_count
        return float(self.scale) * self.total_count

    def values(self):
        """Physical masses as floats."""
        return self.mass.astype(np.float64) * float(self.scale)

    def mass_at(self, index):
        v = self.mass[self.grid.reduce(index)]
        return self.scale * int(v) if self.is_integer else float(self.scale) * float(v)

    def max_mass(self):
        v = self.mass.max()
        return self.scale * int(v) if self.is_integer else float(self.scale) * float(v)

    def support(self):
        """Lattice indices of the atoms as a ``(k, d)`` array."""
        return np.argwhere(self.mass > 0)

    def with_scale(self, scale):
        return AtomicMeasure(self.grid, self.mass, _as_fraction(scale))

    def normalized(self):
        total = self.total_count
        if total == 0:
            raise DomainError("cannot normalize the zero measure")
        if self.is_integer:
            return self.with_scale(Fraction(1, total))
        return AtomicMeasure(self.grid, self.mass / total)

    def translate(self, shift):
        shift = self.grid.reduce(shift)
        return AtomicMeasure(self.grid, np.roll(self.mass, shift, axis=tuple(range(self.grid.d))), self.scale)

    def __add__(self, other):
        if not isinstance(other, AtomicMeasure) or other.grid != self.grid:
            return NotImplemented
        if self.scale == other.scale:
            return AtomicMeasure(self.grid, self.mass + other.mass, self.scale)
        return AtomicMeasure(self.grid, self.values() + other.values())

    def equals(self, other) -> bool:
        """Exact equality of physical masses."""
        if self.grid != other.grid:
            return False
        if self.is_integer and other.is_integer:
            if self.scale == other.scale:
                return bool(np.array_equal(self.mass, other.mass))
            a, b = self.scale, other.scale
            return all(
                a * int(x) == b * int(y) for x, y in zip(self.mass.ravel(), other.mass.ravel())
            )
        return bool(np.array_equal(self.values(), other.values()))

    # serialization

    def to_json(self) -> str:
        atoms = [
            [[int(i) for i in idx], int(self.mass[tuple(idx)]) if self.is_integer else float(self.mass[tuple(idx)])]
            for idx in self.support()
        ]
        doc = {"d": self.grid.d, "N": self.grid.N, "atoms": atoms}
        if self.scale != 1:
            doc["scale"] = str(self.scale)
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str):
        doc = json.loads(text)
        grid = TorusGrid(int(doc["d"]), int(doc["N"]))
        counts = [c for _, c in doc["atoms"]]
        is_int = all(isinstance(c, int) for c in counts)
        arr = np.zeros(grid.shape, dtype=np.int64 if is_int else np.float64)
        for idx, c in doc["atoms"]:
            arr[grid.reduce(idx)] += c
        return cls(grid, arr, Fraction(doc.get("scale", "1")))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a real function on the torus at the points ``j/R``."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim < 1 or len(set(arr.shape)) != 1:
            raise ConfigurationError(f"grid function needs equal sides, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ConfigurationError("resolution must be at least 2")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def R(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.ndim

    @property
    def mean(self):
        return float(self.values.mean())

    @classmethod
    def sample(cls, fn, R: int, d: int = 1, budget=None):
        """Evaluate ``fn`` on the coordinate arrays of the grid ``{j/R}^d``."""
        _check_capacity(R, d, budget)
        axes = np.meshgrid(*([np.arange(R) / R] * d), indexing="ij")
        return cls(np.broadcast_to(fn(*axes), (R,) * d))

    @classmethod
    def constant(cls, c, R: int, d: int = 1):
        return cls(np.full((R,) * d, float(c)))

    def coords(self):
        return np.meshgrid(*([np.arange(self.R) / self.R] * self.d), indexing="ij")

    def sup(self):
        return float(np.abs(self.values).max())

    def support_points(self, tol=0.0):
        """Coordinates in ``[0,1)^d`` of the samples where the function exceeds ``tol``."""
        return np.argwhere(self.values > tol) / self.R

    def __add__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.values + other.values)
        return GridFunction(self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.values - other.values)
        return GridFunction(self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.values * other.values)
        return GridFunction(self.values * other)

    __rmul__ = __mul__

    # flat binary snapshot with a JSON sidecar

    def save(self, path):
        path = Path(path)
        self.values.astype("<f8").tofile(path)
        Path(str(path) + ".json").write_text(json.dumps({"d": self.d, "R": self.R}))

    @classmethod
    def load(cls, path):
        path = Path(path)
        head = json.loads(Path(str(path) + ".json").read_text())
        arr = np.fromfile(path, dtype="<f8").reshape((head["R"],) * head["d"])
        return cls(arr)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Fourier coefficients in numpy FFT order.

    ``normalization`` is ``"sum"`` for atomic measures and ``"mean"`` for
    grid functions; it only matters for :meth:`inverse`.
    """

    coeffs: np.ndarray
    normalization: str = "sum"

    @property
    def R(self):
        return self.coeffs.shape[0]

    @property
    def d(self):
        return self.coeffs.ndim

    def frequencies(self):
        """Integer frequency arrays, one per axis, aligned with ``coeffs``."""
        f = np.rint(np.fft.fftfreq(self.R) * self.R).astype(np.int64)
        return np.meshgrid(*([f] * self.d), indexing="ij")

    def norms(self):
        """Euclidean length ``|r|`` of every frequency."""
        fr = self.frequencies()
        return np.sqrt(sum(f.astype(np.float64) ** 2 for f in fr))

    def centered(self):
        return np.fft.fftshift(self.coeffs)

    def at(self, r):
        r = tuple(int(x) % self.R for x in np.atleast_1d(r))
        return complex(self.coeffs[r])

    def inverse(self):
        out = np.fft.ifftn(self.coeffs)
        if self.normalization == "mean":
            out = out * self.R ** self.d
        return out


def dft(obj, continuum: bool = False, budget=None) -> Spectrum:
    """Discrete Fourier transform of a measure or a grid function.

    With ``continuum=True`` a grid function is read as piecewise constant on
    the cells ``[j/R, (j+1)/R)`` and the exact Fourier coefficients of that
    step function are returned.
    """
    if isinstance(obj, AtomicMeasure):
        _check_capacity(obj.grid.N, obj.grid.d, budget)
        c = np.fft.fftn(obj.mass.astype(np.float64)) * float(obj.scale)
        return Spectrum(c, "sum")
    if isinstance(obj, GridFunction):
        _check_capacity(obj.R, obj.d, budget)
        c = np.fft.fftn(obj.values) / obj.R ** obj.d
        if continuum:
            c = c * cell_factor(obj.R, obj.d)
        return Spectrum(c, "mean")
    raise TypeError(f"cannot transform {type(obj).__name__}")


def cell_factor(R: int, d: int, freqs=None):
    """Transform of the indicator of one grid cell, relative to a point sample."""
    if freqs is None:
        f = np.rint(np.fft.fftfreq(R) * R)
        freqs = np.meshgrid(*([f] * d), indexing="ij")
    out = np.ones(np.shape(freqs[0]), dtype=complex)
    for f in freqs:
        x = np.asarray(f, dtype=np.float64) / R
        out = out * np.exp(-1j * np.pi * x) * np.sinc(x)
    return out


# convolution

def _direct_int_convolve(a: np.ndarray, b: np.ndarray, budget=None):
    if np.count_nonzero(a) > np.count_nonzero(b):
        a, b = b, a
    nz = np.argwhere(a != 0)
    budget = MEMORY_BUDGET * 64 if budget is None else budget
    if len(nz) * b.size > budget:
        raise PrecisionError("direct convolution fallback exceeds its budget")
    out = np.zeros_like(b, dtype=np.int64)
    axes = tuple(range(b.ndim))
    for idx in nz:
        out += int(a[tuple(idx)]) * np.roll(b, tuple(int(i) for i in idx), axis=axes)
    return out


def _rounded(x: np.ndarray):
    r = np.rint(x)
    resid = float(np.abs(x - r).max()) if x.size else 0.0
    return r, resid


def _int_convolve(a: np.ndarray, b: np.ndarray, budget=None):
    total = int(a.sum()) * int(b.sum())
    if total >= _INT64_LIMIT:
        raise PrecisionError("integer masses would overflow 64 bits")
    if total < _FFT_EXACT_LIMIT:
        axes = tuple(range(a.ndim))
        x = np.fft.irfftn(np.fft.rfftn(a, axes=axes) * np.fft.rfftn(b, axes=axes), s=a.shape, axes=axes)
        r, resid = _rounded(x)
        if resid < 0.25:
            return r.astype(np.int64)
    return _direct_int_convolve(a, b, budget)


def _embed(mu: AtomicMeasure, R: int):
    """Place the masses of ``mu`` on the cells ``u*R/N`` of a resolution-R grid."""
    N = mu.grid.N
    if R % N:
        raise ConfigurationError(f"resolution {R} is not divisible by N={N}")
    arr = np.zeros((R,) * mu.grid.d)
    step = R // N
    arr[tuple(slice(0, R, step) for _ in range(mu.grid.d))] = mu.values()
    return arr


def convolve(a, b, budget=None):
    """Group convolution on the cyclic group.

    Measure * measure is exact for integer counts.  Function * function is
    the averaged cyclic convolution (spectra multiply).  Function * measure
    (resolution divisible by N) returns ``sum_u mu(u) f(t - u/N)``.
    """
    if isinstance(a, AtomicMeasure) and isinstance(b, AtomicMeasure):
        if a.grid != b.grid:
            raise ConfigurationError("measures live on different grids")
        if a.is_integer and b.is_integer:
            return AtomicMeasure(a.grid, _int_convolve(a.mass, b.mass, budget), a.scale * b.scale)
        x = np.fft.ifftn(np.fft.fftn(a.values()) * np.fft.fftn(b.values())).real
        return AtomicMeasure(a.grid, np.clip(x, 0.0, None))
    if isinstance(a, GridFunction) and isinstance(b, GridFunction):
        if a.values.shape != b.values.shape:
            raise ConfigurationError("grid functions have different resolutions")
        x = np.fft.ifftn(np.fft.fftn(a.values) * np.fft.fftn(b.values)).real / a.R ** a.d
        return GridFunction(x)
    if isinstance(a, AtomicMeasure) and isinstance(b, GridFunction):
        a, b = b, a
    if isinstance(a, GridFunction) and isinstance(b, AtomicMeasure):
        if a.d != b.grid.d:
            raise ConfigurationError("dimension mismatch")
        emb = _embed(b, a.R)
        return GridFunction(np.fft.ifftn(np.fft.fftn(a.values) * np.fft.fftn(emb)).real)
    raise TypeError("unsupported operand types for convolve")


def conv_power(a, ell: int, budget=None):
    """``ell``-fold self-convolution; the zeroth power is the unit mass at 0."""
    if int(ell) != ell or ell < 0:
        raise DomainError(f"convolution order must be a nonnegative integer, got {ell}")
    ell = int(ell)
    if isinstance(a, AtomicMeasure):
        if ell == 0:
            return AtomicMeasure.delta(a.grid)
        if not a.is_integer:
            x = np.fft.ifftn(np.fft.fftn(a.values()) ** ell).real
            return AtomicMeasure(a.grid, np.clip(x, 0.0, None))
        scale = a.scale ** ell
        total = a.total_count ** ell
        if total >= _INT64_LIMIT:
            raise PrecisionError("integer masses would overflow 64 bits")
        if total < _FFT_EXACT_LIMIT:
            axes = tuple(range(a.grid.d))
            x = np.fft.irfftn(np.fft.rfftn(a.mass, axes=axes) ** ell, s=a.grid.shape, axes=axes)
            r, resid = _rounded(x)
            if resid < 0.25:
                return AtomicMeasure(a.grid, r.astype(np.int64), scale)
        # exact fallback by repeated squaring
        result, base, k = None, a.mass, ell
        while k:
            if k & 1:
                result = base if result is None else _int_convolve(result, base, budget)
            k >>= 1
            if k:
                base = _int_convolve(base, base, budget)
        return AtomicMeasure(a.grid, result, scale)
    if isinstance(a, GridFunction):
        if ell == 0:
            v = np.zeros(a.values.shape)
            v[(0,) * a.d] = a.R ** a.d
            return GridFunction(v)
        s = np.fft.fftn(a.values) / a.R ** a.d
        return GridFunction(np.fft.ifftn(s ** ell).real * a.R ** a.d)
    raise TypeError("unsupported operand type for conv_power")


# cubes

@dataclass(frozen=True)
class Cube:
    """Half-open cyclic cube of ``side`` cells with its corner on the lattice."""

    corner: tuple
    side: int
    N: int

    def __post_init__(self):
        if not 1 <= self.side <= self.N:
            raise DomainError(f"cube side must lie in [1, {self.N}], got {self.side}")
        object.__setattr__(self, "corner", tuple(int(c) % self.N for c in self.corner))

    @property
    def d(self):
        return len(self.corner)

    @property
    def measure(self) -> Fraction:
        return Fraction(self.side, self.N) ** self.d

    def to_dict(self):
        return {"corner": list(self.corner), "side": self.side, "N": self.N}


def _scaled_sum(mu: AtomicMeasure, raw):
    return mu.scale * int(raw) if mu.is_integer else float(mu.scale) * float(raw)


def cube_mass(mu: AtomicMeasure, Q: Cube):
    if Q.N != mu.grid.N or Q.d != mu.grid.d:
        raise ConfigurationError("cube and measure live on different grids")
    idx = np.ix_(*[(c + np.arange(Q.side)) % Q.N for c in Q.corner])
    return _scaled_sum(mu, mu.mass[idx].sum())


def cube_mass_table(arr: np.ndarray, s: int):
    """Raw mass of the cyclic cube of side ``s`` at every corner.

    Built as a summed-area table one axis at a time: each axis is extended
    cyclically by ``s-1`` cells, prefix-summed, and differenced.
    """
    out = np.asarray(arr)
    N = out.shape[0]
    if not 1 <= s <= N:
        raise DomainError(f"cube side must lie in [1, {N}], got {s}")
    for ax in range(out.ndim):
        ext = np.concatenate([out, np.take(out, np.arange(s - 1), axis=ax)], axis=ax)
        pad = [(0, 0)] * out.ndim
        pad[ax] = (1, 0)
        c = np.pad(np.cumsum(ext, axis=ax), pad)
        hi = np.take(c, np.arange(s, s + N), axis=ax)
        lo = np.take(c, np.arange(0, N), axis=ax)
        out = hi - lo
    return out


def max_cube_mass(mu: AtomicMeasure, s: int):
    """Largest mass of a cyclic cube of side ``s`` and the first cube attaining it."""
    table = cube_mass_table(mu.mass, s)
    flat = int(np.argmax(table))
    corner = np.unravel_index(flat, table.shape)
    return _scaled_sum(mu, table[corner]), Cube(tuple(int(c) for c in corner), s, mu.grid.N)


# metrics

def _wrap01(x):
    x = np.mod(np.asarray(x, dtype=np.float64), 1.0)
    return np.where(x >= 1.0, 0.0, x)


def torus_distance(x, y):
    """Euclidean norm of the coordinatewise cyclic distances on ``[0,1)^d``."""
    diff = np.abs(_wrap01(x) - _wrap01(y))
    diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(np.atleast_1d(diff) ** 2, axis=-1))


def hausdorff_distance(A, B) -> float:
    """Sum of the two one-sided excesses ``sup_A dist(., B) + sup_B dist(., A)``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.size == 0 or B.size == 0:
        raise DomainError("Hausdorff distance needs nonempty sets")
    if A.shape[1] != B.shape[1]:
        raise DomainError("point sets have different dimensions")
    A, B = _wrap01(A), _wrap01(B)
    ta = cKDTree(A, boxsize=1.0)
    tb = cKDTree(B, boxsize=1.0)
    return float(tb.query(A)[0].max() + ta.query(B)[0].max())


def lattice_points(grid: TorusGrid):
    """All lattice indices in C order as a ``(N^d, d)`` array."""
    return np.stack(np.unravel_index(np.arange(grid.size), grid.shape), axis=1)
