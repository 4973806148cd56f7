"""Explicit constants for the cube-regularity bounds of random sparse sets.

All values are integers computed exactly.  The recursion is::

    M(0, eps, h) = 1
    M(l, eps, h) = U(eps, h) * kappa(l, h)
    U(eps, h)    = max(floor(e^(d+2)), ceil((2d + h + 1) / eps))
    kappa(l, h)  = sum_{q<l} C(l, q) * M(q, d(1 - q/l), h + 1)

plus two variants of ``kappa`` that change the second argument of the
inner ``M``.
"""

from fractions import Fraction
from functools import lru_cache
from math import ceil, comb

import mpmath

from .errors import DomainError


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # decimal literal the caller most likely meant (0.1 -> 1/10)
        return Fraction(repr(x))
    return Fraction(x)


def _floor_exp(k: int) -> int:
    with mpmath.workdps(50):
        return int(mpmath.floor(mpmath.e ** k))


def U(eps, h: int, d: int) -> int:
    eps = as_fraction(eps)
    if eps <= 0:
        raise DomainError("eps must be positive")
    return max(_floor_exp(d + 2), ceil(Fraction(2 * d + h + 1) / eps))


@lru_cache(maxsize=None)
def _M(ell: int, eps: Fraction, h: int, d: int) -> int:
    if ell == 0:
        return 1
    return U(eps, h, d) * _kappa(ell, h, d)


@lru_cache(maxsize=None)
def _kappa(ell: int, h: int, d: int) -> int:
    return sum(comb(ell, q) * _M(q, d * (1 - Fraction(q, ell)), h + 1, d) for q in range(ell))


def _check(ell, h, d):
    if int(ell) != ell or ell < 0:
        raise DomainError(f"order must be a nonnegative integer, got {ell}")
    if int(h) != h or h < 1:
        raise DomainError(f"confidence exponent must be a positive integer, got {h}")
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d}")


def constants_M(ell: int, eps, h: int, d: int) -> int:
    """The cube-regularity constant ``M(ell, eps, h)`` in dimension ``d``."""
    _check(ell, h, d)
    eps = as_fraction(eps)
    if not 0 < eps < d:
        raise DomainError(f"eps must lie in (0, {d}), got {eps}")
    return _M(int(ell), eps, int(h), int(d))


def kappa(ell: int, h: int, d: int) -> int:
    _check(ell, h, d)
    if ell == 0:
        raise DomainError("kappa is defined for ell >= 1")
    return _kappa(int(ell), int(h), int(d))


def kappa_log(ell: int, beta, h: int, d: int) -> int:
    """Variant used by the log-scale lemma: inner argument ``beta * (ell - q)``."""
    _check(ell, h, d)
    beta = as_fraction(beta)
    return sum(comb(ell, q) * _M(q, beta * (ell - q), h + 1, d) for q in range(ell))


def kappa_point(ell: int, h: int, d: int) -> int:
    """Variant used for singleton masses: inner argument ``(d/2)(1 - q/ell)``."""
    _check(ell, h, d)
    return sum(comb(ell, q) * _M(q, Fraction(d, 2) * (1 - Fraction(q, ell)), h + 1, d) for q in range(ell))


def growth_bound(ell: int, eps, h: int, d: int):
    """``eps^-1 (e^(d+3) ell^2 (h + ell))^ell`` as a 50-digit mpmath number."""
    eps = as_fraction(eps)
    with mpmath.workdps(50):
        base = mpmath.e ** (d + 3) * ell * ell * (h + ell)
        return mpmath.mpf(eps.denominator) / eps.numerator * base ** ell


def check_growth(ell: int, eps, h: int, d: int) -> bool:
    with mpmath.workdps(50):
        return mpmath.mpf(constants_M(ell, eps, h, d)) <= growth_bound(ell, eps, h, d)


def log_mode_constant(ell: int, beta, h: int, d: int) -> float:
    """``(beta*ell)^-1 (10^(d+1) ell^2 (ell + h))^ell``; multiplies ``log N / log log N``."""
    beta = as_fraction(beta)
    return float(Fraction(10 ** (d + 1) * ell * ell * (ell + h)) ** ell / (beta * ell))
