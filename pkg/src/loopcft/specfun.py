"""Self-contained special functions: Gamma, Gauss 2F1, and one pinned 3F2.

Everything here is scalar float/complex arithmetic tuned for the parameter
sets that appear in the loop-soup correlators:

* ``gamma`` for positive real arguments (Lanczos approximation),
* ``hyp2f1`` with real parameters and complex argument on the principal
  branch (series, Pfaff map, and 1-z connection formulas, including the
  logarithmic case c-a-b integer),
* ``hyp3f2_1_1_43_2_53``, the single 3F2(1,1,4/3;2,5/3;w) used by the
  half-plane layering two-point function.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .errors import AccuracyError, DomainError

__all__ = ["EvalOptions", "DEFAULT_OPTIONS", "gamma", "hyp2f1", "hyp3f2_1_1_43_2_53"]


@dataclass(frozen=True)
class EvalOptions:
    """Accuracy controls for series evaluation."""

    tolerance: float = 1e-12
    max_terms: int = 10000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise DomainError("tolerance must be positive")
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")


DEFAULT_OPTIONS = EvalOptions()

# Lanczos g=7, n=9 coefficients (double precision classic set).
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_INT_EPS = 1e-12


def _is_nonpos_int(x: float) -> bool:
    return x < 0.5 and abs(x - round(x)) < _INT_EPS


def gamma(x: float) -> float:
    """Gamma function for real x > 0."""
    if not x > 0:
        raise DomainError(f"gamma requires a positive argument, got {x}")
    return _gamma_pos(float(x))


def _gamma_pos(x: float) -> float:
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * _gamma_pos(1.0 - x))
    x -= 1.0
    s = _LANCZOS[0]
    for i in range(1, 9):
        s += _LANCZOS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * s


def _gamma_real(x: float) -> float:
    """Gamma on the real line minus the poles (internal; reflection for x<0)."""
    if x > 0:
        return _gamma_pos(x)
    if abs(x - round(x)) < _INT_EPS:
        raise DomainError(f"gamma pole at {x}")
    return math.pi / (math.sin(math.pi * x) * _gamma_pos(1.0 - x))


# Asymptotic digamma coefficients B_{2n}/(2n).
_PSI_COEFFS = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def _digamma(x: float) -> float:
    """Real digamma (internal; used by the logarithmic connection formula)."""
    if x <= 0 and abs(x - round(x)) < _INT_EPS:
        raise DomainError(f"digamma pole at {x}")
    r = 0.0
    while x < 8.0:
        r -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    s = math.log(x) - 0.5 * inv
    p = inv2
    for c in _PSI_COEFFS:
        s -= c * p
        p *= inv2
    return r + s


def _series_2f1(a, b, c, z, opts):
    """Raw Gauss series; returns (value, converged)."""
    term = 1.0 + 0.0j
    total = 1.0 + 0.0j
    for n in range(opts.max_terms):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if abs(term) <= opts.tolerance * max(abs(total), 1e-300):
            term *= (a + n + 1) * (b + n + 1) / ((c + n + 1) * (n + 2.0)) * z
            if abs(term) <= opts.tolerance * max(abs(total + term), 1e-300):
                return total + term, True
            total += term
    return total, False


def _terminating_2f1(a, b, c, z):
    if _is_nonpos_int(b) and (not _is_nonpos_int(a) or -b < -a):
        a, b = b, a
    m = int(round(-a))
    term = 1.0 + 0.0j
    total = 1.0 + 0.0j
    for n in range(m):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
    return total


def _connection_1mz(a, b, c, z, opts):
    """2F1 via the 1-z connection; handles integer c-a-b >= 0 (log case)."""
    s = 1.0 - z
    cab = c - a - b
    m_near = round(cab)
    if abs(cab - m_near) > 1e-9:
        # generic exponents
        aa = _gamma_real(c) * _gamma_real(cab) / (_gamma_real(c - a) * _gamma_real(c - b))
        bb = _gamma_real(c) * _gamma_real(-cab) / (_gamma_real(a) * _gamma_real(b))
        f1, ok1 = _series_2f1(a, b, a + b - c + 1.0, s, opts)
        f2, ok2 = _series_2f1(c - a, c - b, cab + 1.0, s, opts)
        return aa * f1 + bb * s ** cab * f2, ok1 and ok2
    m = int(m_near)
    if m < 0:
        raise AccuracyError("1-z connection not available for negative integer c-a-b")
    ln_s = cmath.log(s)
    if m == 0:
        pre = _gamma_real(a + b) / (_gamma_real(a) * _gamma_real(b))
        total = 0.0 + 0.0j
        term = 1.0 + 0.0j
        for n in range(opts.max_terms):
            bracket = 2.0 * _digamma(n + 1.0) - _digamma(a + n) - _digamma(b + n) - ln_s
            total += term * bracket
            term *= (a + n) * (b + n) / ((n + 1.0) ** 2) * s
            if abs(term) * (abs(bracket) + 3.0) <= opts.tolerance * max(abs(total), 1e-300):
                return pre * total, True
        return pre * total, False
    # m >= 1: finite part plus logarithmic series (DLMF 15.8.10 form)
    first = 0.0 + 0.0j
    term = 1.0 + 0.0j
    for n in range(m):
        first += term
        if n < m - 1:
            term *= (a + n) * (b + n) / ((n + 1.0) * (1.0 - m + n)) * s
    first *= _gamma_real(m) * _gamma_real(a + b + m) / (_gamma_real(a + m) * _gamma_real(b + m))
    pre2 = (-1.0) ** (m + 1) * _gamma_real(a + b + m) / (_gamma_real(a) * _gamma_real(b))
    total2 = 0.0 + 0.0j
    term2 = 1.0 / _gamma_pos(m + 1.0)
    for n in range(opts.max_terms):
        bracket = (
            ln_s
            - _digamma(n + 1.0)
            - _digamma(n + m + 1.0)
            + _digamma(a + m + n)
            + _digamma(b + m + n)
        )
        total2 += term2 * bracket
        term2 *= (a + m + n) * (b + m + n) / ((n + 1.0) * (n + m + 1.0)) * s
        if abs(term2) * (abs(bracket) + 3.0) <= opts.tolerance * max(
            abs(total2), abs(first), 1e-300
        ):
            return first + pre2 * s ** m * total2, True
    return first + pre2 * s ** m * total2, False


def hyp2f1(a: float, b: float, c: float, z: complex, opts: EvalOptions = DEFAULT_OPTIONS) -> complex:
    """Gauss hypergeometric 2F1(a,b;c;z), real parameters, principal branch.

    The argument is routed to the representation with the smallest mapped
    modulus among the direct series (z), the Pfaff map (z/(z-1)) and the
    1-z connection formulas; each converges on its own disk, which jointly
    cover the plane minus small neighbourhoods of exp(+-i*pi/3).
    """
    z = complex(z)
    a, b, c = float(a), float(b), float(c)
    terminating = _is_nonpos_int(a) or _is_nonpos_int(b)
    if _is_nonpos_int(c):
        # only fine when the series terminates strictly before the c-pole
        order = min((-a if _is_nonpos_int(a) else math.inf), (-b if _is_nonpos_int(b) else math.inf))
        if not (terminating and order < -c):
            raise DomainError(f"c={c} is a non-positive integer (pole)")
    if terminating:
        return _terminating_2f1(a, b, c, z)
    if z.imag == 0.0 and z.real >= 1.0:
        raise DomainError(f"z={z} lies on the branch cut [1, inf)")
    if z == 0:
        return 1.0 + 0.0j
    routes = sorted(
        [
            (abs(z), "direct"),
            (abs(z / (z - 1.0)), "pfaff"),
            (abs(1.0 - z), "connection"),
        ]
    )
    partial = None
    for mod, name in routes:
        if mod > 0.999:
            continue
        if name == "direct":
            val, ok = _series_2f1(a, b, c, z, opts)
        elif name == "pfaff":
            val, ok = _series_2f1(a, c - b, c, z / (z - 1.0), opts)
            val = (1.0 - z) ** (-a) * val
        else:
            try:
                val, ok = _connection_1mz(a, b, c, z, opts)
            except AccuracyError:
                continue
        if ok:
            return val
        partial = val
    raise AccuracyError(
        f"2F1 did not converge within {opts.max_terms} terms at z={z}", partial=partial
    )


def hyp3f2_1_1_43_2_53(w: float, opts: EvalOptions = DEFAULT_OPTIONS) -> float:
    """3F2(1,1,4/3; 2,5/3; w) for real w in [0, 1).

    Direct series with compensated summation; the terms decay like
    w^n * n^(-4/3), so arguments extremely close to 1 converge too slowly
    and raise :class:`AccuracyError`.
    """
    w = float(w)
    if not 0.0 <= w < 1.0:
        raise DomainError(f"argument must lie in [0, 1), got {w}")
    if w == 0.0:
        return 1.0
    # term_n = (4/3)_n / ((n+1) (5/3)_n) * w^n
    term = 1.0
    total = 1.0
    comp = 0.0
    for n in range(opts.max_terms):
        term *= (4.0 / 3.0 + n) * (n + 1.0) / ((5.0 / 3.0 + n) * (n + 2.0)) * w
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if term <= opts.tolerance * total:
            return total
    raise AccuracyError(
        f"3F2 series did not converge within {opts.max_terms} terms at w={w}", partial=total
    )
