"""Stress-tensor extraction by angular-mode projection and radius extrapolation.

The holomorphic stress tensor is read off a four-point function by placing
a probe pair on a small circle of radius rho, projecting onto the e^{-2i
theta} Fourier mode, stripping the known power of rho, and extrapolating
rho -> 0.  After stripping, the residual corrections of the projected
four-point functions are powers of rho^(2/3) (the subleading conformal
block enters at rho^(2/3), not at integer order), so the extrapolation fits
a polynomial in u = rho^(2/3).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .correlators import ModelParams, closed_TEE, four_point_OOEE
from .errors import AccuracyError, DomainError

__all__ = [
    "ModeProjectionPlan",
    "default_plan",
    "angular_mode",
    "extrapolate_to_zero",
    "extract_T_against_EE",
    "extract_T_against_OO",
    "tt_via_double_extraction",
]

_BLOCK_POWER = 2.0 / 3.0  # correction spacing after stripping


@dataclass(frozen=True)
class ModeProjectionPlan:
    """Quadrature and extrapolation controls for one extraction."""

    mode: int = 2
    n_nodes: int = 64
    rho_ladder: tuple = tuple(0.1 * 2.0 ** -k for k in range(9))
    extrapolation_order: int = 5

    def __post_init__(self):
        if self.n_nodes < 4 * abs(self.mode):
            raise DomainError("n_nodes must be at least 4*|mode|")
        rhos = tuple(float(r) for r in self.rho_ladder)
        if any(r <= 0 for r in rhos) or any(
            rhos[i] <= rhos[i + 1] for i in range(len(rhos) - 1)
        ):
            raise DomainError("rho_ladder must be strictly decreasing and positive")
        if len(rhos) < self.extrapolation_order + 1:
            raise DomainError("rho_ladder shorter than extrapolation_order + 1")
        object.__setattr__(self, "rho_ladder", rhos)


def default_plan(scale: float = 1.0, mode: int = 2) -> ModeProjectionPlan:
    """Default plan with the rho ladder scaled to a configuration size."""
    if not scale > 0:
        raise DomainError("scale must be positive")
    return ModeProjectionPlan(
        mode=mode, rho_ladder=tuple(scale * 0.1 * 2.0 ** -k for k in range(9))
    )


def angular_mode(f, mode: int, n_nodes: int) -> complex:
    """(1/2pi) * integral of e^{-i*mode*theta} f(theta) over [0, 2pi).

    Uniform-node trapezoid rule, spectrally exact for trigonometric
    polynomials of degree below n_nodes - |mode|.
    """
    if n_nodes < 4 * abs(mode):
        raise DomainError("n_nodes must be at least 4*|mode|")
    thetas = 2.0 * math.pi * np.arange(n_nodes) / n_nodes
    vals = np.asarray([f(t) for t in thetas], dtype=complex)
    return complex(np.mean(np.exp(-1j * mode * thetas) * vals))


def extrapolate_to_zero(rhos, values, order: int):
    """Least-squares polynomial limit at 0 with a simple error estimate.

    Fits value(rho) = L + a1*rho + ... + a_order*rho^order and returns
    (L, error_est) where error_est is the change between the order and
    order-1 fits.
    """
    rhos = np.asarray(rhos, dtype=float)
    values = np.asarray(values, dtype=complex)
    if len(rhos) != len(values):
        raise DomainError("rhos and values must have equal length")
    if len(set(rhos.tolist())) != len(rhos):
        raise DomainError("rhos must be distinct")
    if len(rhos) < order + 1:
        raise DomainError("need at least order + 1 points")

    def fit(deg):
        scale = rhos.max()
        vander = np.vander(rhos / scale, deg + 1, increasing=True)
        coef, _, rank, _ = np.linalg.lstsq(vander, values, rcond=None)
        if rank < deg + 1:
            raise AccuracyError("ill-conditioned extrapolation fit")
        return coef[0]

    limit = fit(order)
    prev = fit(order - 1) if order >= 1 else limit
    return complex(limit), abs(limit - prev)


def _extract(integrand, prefactor_of_rho, plan):
    """Shared ladder -> mode projection -> u = rho^(2/3) extrapolation."""
    rhos = np.asarray(plan.rho_ladder, dtype=float)
    vals = []
    for rho in rhos:
        m = angular_mode(lambda t: integrand(rho, t), plan.mode, plan.n_nodes)
        vals.append(prefactor_of_rho(rho) * m)
    limit, err = extrapolate_to_zero(rhos ** _BLOCK_POWER, vals, plan.extrapolation_order)
    return limit, err


def extract_T_against_EE(z: complex, z3: complex, z4: complex, params: ModelParams,
                         plan: ModeProjectionPlan | None = None) -> complex:
    """<T(z) E(z3) E(z4)> from a layering probe pair around z.

    The spin-1 and spin-2 currents present in the layering OPE drop out
    because their correlators with two edge operators vanish, so the mode-2
    projection of the mixed four-point isolates the stress tensor.
    """
    z, z3, z4 = complex(z), complex(z3), complex(z4)
    d = params.delta
    if d == 0.0:
        raise DomainError("layering probe requires beta with nonzero dimension")
    scale = min(abs(z - z3), abs(z - z4))
    if scale == 0.0:
        raise DomainError("probe point collides with a spectator")
    if plan is None:
        plan = default_plan(scale)
    if plan.rho_ladder[0] >= 0.5 * scale:
        raise DomainError("rho ladder too large for the spectator separation")

    def integrand(rho, theta):
        probe = z + rho * cmath.exp(1j * theta)
        return four_point_OOEE(probe, z, z3, z4, params)

    limit, _ = _extract(integrand, lambda rho: params.lam / d * rho ** (4.0 * d - 2.0), plan)
    return limit


def extract_T_against_OO(z: complex, z1: complex, z2: complex, params: ModelParams,
                         plan: ModeProjectionPlan | None = None) -> complex:
    """<T(z) O_beta(z1) O_-beta(z2)> from an edge probe pair around z."""
    z, z1, z2 = complex(z), complex(z1), complex(z2)
    scale = min(abs(z - z1), abs(z - z2))
    if scale == 0.0:
        raise DomainError("probe point collides with a spectator")
    if plan is None:
        plan = default_plan(scale)
    if plan.rho_ladder[0] >= 0.5 * scale:
        raise DomainError("rho ladder too large for the spectator separation")

    def integrand(rho, theta):
        probe = z + rho * cmath.exp(1j * theta)
        return four_point_OOEE(z1, z2, probe, z, params)

    limit, _ = _extract(integrand, lambda rho: 3.0 * params.lam * rho ** (-2.0 / 3.0), plan)
    return limit


def tt_via_double_extraction(z: complex, zp: complex, params: ModelParams,
                             plan: ModeProjectionPlan | None = None) -> complex:
    """<T(z) T(z')> by extracting a second stress tensor from closed_TEE."""
    z, zp = complex(z), complex(zp)
    if z == zp:
        raise DomainError("coincident stress-tensor points")
    if plan is None:
        plan = default_plan(abs(z - zp))
    if plan.rho_ladder[0] >= 0.5 * abs(z - zp):
        raise DomainError("rho ladder too large for the point separation")

    def integrand(rho, theta):
        probe = zp + rho * cmath.exp(1j * theta)
        return closed_TEE(z, probe, zp)

    limit, _ = _extract(integrand, lambda rho: 3.0 * params.lam * rho ** (-2.0 / 3.0), plan)
    return limit
