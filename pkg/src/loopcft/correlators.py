"""Closed-form loop-soup correlators in the plane and the upper half-plane.

Conventions: points are plain ``complex`` numbers (``float`` for boundary
points on the real axis), fractional powers are taken on the principal
branch, and the mixed powers ``w**(2-2d) * conj(w)**(-2d)`` that appear in
the stress-tensor correlators are evaluated in the branch-consistent form
``w**2 * abs(w)**(-4d)``, which is continuous and exchange-symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

from . import specfun
from .errors import DomainError, InputError

__all__ = [
    "ModelParams",
    "BoundaryConstants",
    "BOUNDARY_CONSTANTS",
    "ExcursionPrediction",
    "conformal_dimension",
    "two_point_edge_plane",
    "alpha_hat_single",
    "z_twist",
    "alpha_hat_pair",
    "four_point_OOEE",
    "ward_rhs_bulk",
    "closed_TOO",
    "closed_TEE",
    "tt_two_point",
    "jw_coefficients",
    "sigma_cross",
    "g_kernel",
    "one_point_layering_halfplane",
    "two_point_layering_halfplane",
    "three_point_BOO",
    "ward_rhs_boundary",
    "bubble_separation_weight",
    "two_point_boundary_edge",
    "n_point_partition_sum",
    "halfplane_slit_map",
    "excursion_ope_prediction",
    "phi12_ope_coefficients",
]


@dataclass(frozen=True)
class ModelParams:
    """Loop-soup intensity and layering angle."""

    lam: float
    beta: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("intensity lam must be positive")

    @property
    def delta(self) -> float:
        """Layering dimension (lam/10)(1 - cos beta)."""
        return self.lam / 10.0 * (1.0 - math.cos(self.beta))

    @property
    def central_charge(self) -> float:
        return 2.0 * self.lam


@dataclass(frozen=True)
class BoundaryConstants:
    """Fixed normalisations of the boundary edge operator."""

    c_hat_b: float = 1.0
    bubble_to_sle_factor: float = 8.0 / 5.0


BOUNDARY_CONSTANTS = BoundaryConstants()

# Prefactor of the single-point pinned weight alpha^z_{z1|z2}.
_ALPHA_SINGLE_C = (2.0 ** (7.0 / 6.0) * math.pi) / (
    3.0 ** 0.25 * math.sqrt(5.0) * specfun.gamma(1.0 / 6.0) * specfun.gamma(4.0 / 3.0)
)
# Coefficient of the second conformal block in the twist four-point.
_K_TWIST = (
    4.0
    * specfun.gamma(2.0 / 3.0) ** 6
    / (specfun.gamma(4.0 / 3.0) ** 2 * specfun.gamma(1.0 / 3.0) ** 4)
)


def conformal_dimension(params: ModelParams) -> float:
    """Scaling dimension of the layering operator at the given angle."""
    return params.delta


def _require_distinct(msg, *pairs):
    for u, v in pairs:
        if u == v:
            raise DomainError(msg)


def two_point_edge_plane(z3: complex, z4: complex) -> float:
    """Plane edge-operator two-point function |z3-z4|^(-4/3)."""
    _require_distinct("coincident edge insertions", (complex(z3), complex(z4)))
    return abs(complex(z3) - complex(z4)) ** (-4.0 / 3.0)


def alpha_hat_single(z3: complex, z1: complex, z2: complex) -> float:
    """Pinned one-ball weight for loops separating z1 from z2, ball at z3."""
    z3, z1, z2 = complex(z3), complex(z1), complex(z2)
    _require_distinct("alpha_hat_single needs three distinct points", (z3, z1), (z3, z2), (z1, z2))
    return _ALPHA_SINGLE_C * abs((z1 - z2) / ((z1 - z3) * (z2 - z3))) ** (2.0 / 3.0)


def z_twist(z1: complex, z2: complex, z3: complex, z4: complex) -> float:
    """Twist-operator four-point block at cross-ratio x = z12*z34/(z13*z24)."""
    z1, z2, z3, z4 = complex(z1), complex(z2), complex(z3), complex(z4)
    z12, z34 = z1 - z2, z3 - z4
    z13, z24, z23, z14 = z1 - z3, z2 - z4, z2 - z3, z1 - z4
    if z34 == 0 or z13 == 0 or z24 == 0 or z23 == 0 or z14 == 0:
        raise DomainError("degenerate four-point configuration")
    x = z12 * z34 / (z13 * z24)
    if x.imag == 0.0 and x.real >= 1.0:
        raise DomainError(f"cross-ratio {x} on the cut [1, inf)")
    pref = abs(z13 * z24 / (z34 ** 2 * z23 * z14)) ** (2.0 / 3.0)
    f1 = specfun.hyp2f1(-2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, x)
    f2 = specfun.hyp2f1(-1.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0, x)
    return pref * (abs(f1) ** 2 - _K_TWIST * abs(x) ** (2.0 / 3.0) * abs(f2) ** 2)


def alpha_hat_pair(z3: complex, z4: complex, z1: complex, z2: complex) -> float:
    """Two-ball weight for loops separating z1 from z2, balls at z3, z4."""
    z3, z4 = complex(z3), complex(z4)
    _require_distinct("coincident pinning points", (z3, z4))
    return (abs(z3 - z4) ** (-4.0 / 3.0) - z_twist(z1, z2, z3, z4)) / 2.0


def four_point_OOEE(z1: complex, z2: complex, z3: complex, z4: complex, params: ModelParams) -> float:
    """Mixed four-point <O_beta(z1) O_-beta(z2) E(z3) E(z4)> in the plane."""
    z1, z2, z3, z4 = complex(z1), complex(z2), complex(z3), complex(z4)
    _require_distinct("coincident layering insertions", (z1, z2))
    cb = 1.0 - math.cos(params.beta)
    oo = abs(z1 - z2) ** (-4.0 * params.delta)
    bracket = abs(z3 - z4) ** (-4.0 / 3.0)
    if cb != 0.0:
        bracket -= cb * alpha_hat_pair(z3, z4, z1, z2)
        bracket += params.lam * cb ** 2 * alpha_hat_single(z3, z1, z2) * alpha_hat_single(z4, z1, z2)
    return oo * bracket


def _wirtinger(f, z, h):
    """(d/dz, d/dzbar) of f at z: Richardson-refined central differences."""

    def grads(step):
        dx = (f(z + step) - f(z - step)) / (2.0 * step)
        dy = (f(z + 1j * step) - f(z - 1j * step)) / (2.0 * step)
        return dx, dy

    dx1, dy1 = grads(h)
    dx2, dy2 = grads(h / 2.0)
    dx = (4.0 * dx2 - dx1) / 3.0
    dy = (4.0 * dy2 - dy1) / 3.0
    return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)


_DERIV_STEP = 1e-4


def ward_rhs_bulk(z: complex, insertions, base) -> complex:
    """Right-hand side of the plane conformal Ward identity.

    ``insertions`` is a sequence of ``(z_j, delta_j)`` pairs and ``base`` a
    callable mapping the tuple of insertion points to the underlying
    correlator value; the holomorphic derivatives are numerical.
    """
    z = complex(z)
    pts = [complex(p) for p, _ in insertions]
    deltas = [float(d) for _, d in insertions]
    for p in pts:
        if p == z:
            raise DomainError("stress-tensor point collides with an insertion")
    total = 0.0 + 0.0j
    for j, (zj, dj) in enumerate(zip(pts, deltas)):
        others = [abs(zj - q) for k, q in enumerate(pts) if k != j] + [abs(zj - z)]
        h = _DERIV_STEP * min(others)

        def partial_f(w, j=j):
            args = list(pts)
            args[j] = w
            return base(tuple(args))

        dz, _ = _wirtinger(partial_f, zj, h)
        total += dj / (z - zj) ** 2 + dz / (z - zj)
    return total


def closed_TOO(z: complex, z1: complex, z2: complex, params: ModelParams) -> complex:
    """<T(z) O_beta(z1) O_-beta(z2)> in the plane."""
    z, z1, z2 = complex(z), complex(z1), complex(z2)
    _require_distinct("coincident points", (z, z1), (z, z2), (z1, z2))
    d = params.delta
    z12 = z1 - z2
    return d * z12 ** 2 * abs(z12) ** (-4.0 * d) / ((z - z1) ** 2 * (z - z2) ** 2)


def closed_TEE(z: complex, z3: complex, z4: complex) -> complex:
    """<T(z) E(z3) E(z4)> in the plane."""
    z, z3, z4 = complex(z), complex(z3), complex(z4)
    _require_distinct("coincident points", (z, z3), (z, z4), (z3, z4))
    z34 = z3 - z4
    return z34 ** 2 * abs(z34) ** (-4.0 / 3.0) / (3.0 * (z - z3) ** 2 * (z - z4) ** 2)


def tt_two_point(z: complex, zp: complex, params: ModelParams) -> complex:
    """<T(z) T(z')> = lam / (z - z')^4."""
    z, zp = complex(z), complex(zp)
    _require_distinct("coincident stress-tensor points", (z, zp))
    return params.lam / (z - zp) ** 4


def jw_coefficients(params: ModelParams):
    """Squared three-point couplings of the spin-1 and spin-2 currents."""
    cj_sq = params.lam / 10.0 * math.sin(params.beta) ** 2
    return cj_sq, 0.5 * cj_sq ** 2


def sigma_cross(z1: complex, z2: complex) -> float:
    """Half-plane invariant |z1-z2|^2 / |z1-conj(z2)|^2, in [0, 1)."""
    z1, z2 = complex(z1), complex(z2)
    if z1.imag <= 0 or z2.imag <= 0:
        raise DomainError("points must lie in the open upper half-plane")
    return abs(z1 - z2) ** 2 / abs(z1 - z2.conjugate()) ** 2


def g_kernel(sigma: float) -> float:
    """Separation kernel G(sigma) = 1 - sigma * 2F1(1,4/3;5/3;1-sigma)."""
    sigma = float(sigma)
    if not 0.0 < sigma <= 1.0:
        raise DomainError(f"sigma must lie in (0, 1], got {sigma}")
    if sigma == 1.0:
        return 0.0
    return 1.0 - sigma * specfun.hyp2f1(1.0, 4.0 / 3.0, 5.0 / 3.0, 1.0 - sigma).real


def one_point_layering_halfplane(z: complex, params: ModelParams) -> float:
    """<O~_beta(z)> in the upper half-plane."""
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("point must lie in the open upper half-plane")
    return (2.0 * z.imag) ** (-2.0 * params.delta)


def two_point_layering_halfplane(z1: complex, z2: complex, params: ModelParams) -> float:
    """<O~_beta(z1) O~_-beta(z2)> in the upper half-plane."""
    z1, z2 = complex(z1), complex(z2)
    _require_distinct("coincident layering insertions", (z1, z2))
    if z1.imag <= 0 or z2.imag <= 0:
        raise DomainError("points must lie in the open upper half-plane")
    d = params.delta
    if d == 0.0:
        return 1.0
    sig = sigma_cross(z1, z2)
    f32 = specfun.hyp3f2_1_1_43_2_53(1.0 - sig)
    return (
        abs(z1 - z2) ** (-4.0 * d)
        * abs(z1 - z2.conjugate()) ** (4.0 * d)
        * (2.0 * z1.imag) ** (-2.0 * d)
        * (2.0 * z2.imag) ** (-2.0 * d)
        * math.exp(-2.0 * d * (1.0 - sig) * f32)
    )


def _separation_brace(z1: complex, z2: complex) -> float:
    """Brace {2/5 [Im(1/z1)^2 + Im(1/z2)^2] - 4/5 Im(1/z1) Im(1/z2) G(sigma)}."""
    im1 = (1.0 / z1).imag
    im2 = (1.0 / z2).imag
    g = g_kernel(sigma_cross(z1, z2))
    return 0.4 * (im1 ** 2 + im2 ** 2) - 0.8 * im1 * im2 * g


def three_point_BOO(x: float, z1: complex, z2: complex, params: ModelParams,
                    constants: BoundaryConstants = BOUNDARY_CONSTANTS) -> float:
    """<B(x) O~_beta(z1) O~_-beta(z2)> in the upper half-plane.

    The boundary insertion is moved to a general real x by translating the
    whole configuration, which leaves half-plane correlators unchanged.
    """
    x = float(x)
    w1, w2 = complex(z1) - x, complex(z2) - x
    if w1.imag <= 0 or w2.imag <= 0:
        raise DomainError("bulk points must lie in the open upper half-plane")
    if w1 == w2:
        raise DomainError("coincident layering insertions")
    cb = 1.0 - math.cos(params.beta)
    if cb == 0.0:
        return 0.0
    oo = two_point_layering_halfplane(w1, w2, params)
    return -constants.c_hat_b * math.sqrt(params.lam) * cb * oo * _separation_brace(w1, w2)


def ward_rhs_boundary(x: float, z1: complex, z2: complex, params: ModelParams) -> float:
    """Boundary Ward identity applied to the half-plane layering two-point.

    Numerically differentiates the two-point function in each insertion and
    its conjugate; equals sqrt(lam) * three_point_BOO at the same arguments.
    """
    x = float(x)
    z1, z2 = complex(z1), complex(z2)
    d = params.delta
    if d == 0.0:
        return 0.0
    pts = [z1, z2]
    total = 0.0 + 0.0j
    for j, zj in enumerate(pts):
        scale = min(zj.imag, abs(z1 - z2), abs(zj - x))
        h = _DERIV_STEP * scale

        def partial_f(w, j=j):
            args = list(pts)
            args[j] = w
            return two_point_layering_halfplane(args[0], args[1], params)

        dz, dzbar = _wirtinger(partial_f, zj, h)
        zjc = zj.conjugate()
        total += d / (x - zj) ** 2 + dz / (x - zj)
        total += d / (x - zjc) ** 2 + dzbar / (x - zjc)
    return total.real


def bubble_separation_weight(x: float, z1: complex, z2: complex) -> float:
    """Bubble-measure weight of loops pinned at x that separate z1 from z2."""
    x = float(x)
    z1, z2 = complex(z1), complex(z2)
    if z1.imag <= 0 or z2.imag <= 0:
        raise DomainError("points must lie in the open upper half-plane")
    if z1 == z2:
        raise DomainError("coincident points cannot be separated")
    d1 = abs(z1 - x)
    d2 = abs(z2 - x)
    g = g_kernel(sigma_cross(z1, z2))
    return (
        0.4 * z1.imag ** 2 / d1 ** 4
        + 0.4 * z2.imag ** 2 / d2 ** 4
        - 0.8 * z1.imag * z2.imag * g / (d1 ** 2 * d2 ** 2)
    )


def two_point_boundary_edge(x1: float, x2: float) -> float:
    """Boundary edge-operator two-point function |x1-x2|^(-4)."""
    if x1 == x2:
        raise DomainError("coincident boundary insertions")
    return abs(float(x1) - float(x2)) ** (-4.0)


def _partitions_no_singletons(items):
    """Partitions of ``items`` into blocks of size >= 2."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k in range(1, len(rest) + 1):
        for comb in combinations(range(len(rest)), k):
            chosen = set(comb)
            block = (first,) + tuple(rest[i] for i in comb)
            remaining = [rest[i] for i in range(len(rest)) if i not in chosen]
            for sub in _partitions_no_singletons(remaining):
                yield [block] + sub


def n_point_partition_sum(weights, n: int, params: ModelParams,
                          constants: BoundaryConstants = BOUNDARY_CONSTANTS) -> float:
    """Boundary n-point function from per-subset pinned weights.

    ``weights`` maps frozensets of point indices (0..n-1, size >= 2) to the
    corresponding pinned-loop weight; the sum runs over all partitions with
    no singleton blocks, each partition contributing lam^r times the product
    of its block weights.
    """
    if n < 2:
        raise InputError("n must be >= 2")
    if n > 8:
        raise InputError("partition enumeration capped at n = 8")
    table = {frozenset(k): float(v) for k, v in weights.items()}
    for size in range(2, n + 1):
        for comb in combinations(range(n), size):
            if frozenset(comb) not in table:
                raise InputError(f"missing weight for subset {sorted(comb)}")
    total = 0.0
    for part in _partitions_no_singletons(list(range(n))):
        prod = 1.0
        for block in part:
            prod *= table[frozenset(block)]
        total += params.lam ** len(part) * prod
    return constants.c_hat_b ** n * params.lam ** (-n / 2.0) * total


def halfplane_slit_map(z: complex, eps: float) -> complex:
    """Slit map z + eps^2/z removing an eps-half-disk at the origin."""
    z = complex(z)
    if not eps > 0:
        raise DomainError("eps must be positive")
    if z == 0:
        raise DomainError("slit map has a pole at 0")
    return z + eps * eps / z


@dataclass(frozen=True)
class ExcursionPrediction:
    """Small-x prediction for the excursion-inserted two-point function."""

    probability_route: float
    ward_route: float
    separation_probability: float


def excursion_ope_prediction(x: float, z1: complex, z2: complex, params: ModelParams) -> ExcursionPrediction:
    """Excursion-inserted layering two-point at small endpoint separation x.

    Returns the value computed from the quadratic separation probability and
    the equivalent boundary-stress-tensor form; the two agree identically
    when the quadratic law is used for the probability.
    """
    x = float(x)
    if not x > 0:
        raise DomainError("x must be positive")
    z1, z2 = complex(z1), complex(z2)
    sep_prob = 5.0 / 8.0 * bubble_separation_weight(0.0, z1, z2) * x * x
    oo = two_point_layering_halfplane(z1, z2, params)
    cb = 1.0 - math.cos(params.beta)
    p_route = oo * (1.0 - cb * sep_prob)
    t_oo = math.sqrt(params.lam) * three_point_BOO(0.0, z1, z2, params)
    ward_route = oo + 5.0 / 8.0 * t_oo * x * x / params.lam
    return ExcursionPrediction(p_route, ward_route, sep_prob)


def phi12_ope_coefficients(params: ModelParams):
    """Leading exponent and stress-tensor coefficient of the phi_{1,2} OPE."""
    return -5.0 / 4.0, 5.0 / (8.0 * params.lam)
