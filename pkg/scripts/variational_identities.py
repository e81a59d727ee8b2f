"""
variational_identities.py

Residuals of the integral identities on S¹. Every exact form integrates to
zero on the circle, so each identity is checked through its integrated form.

    check_ftc                 F(φ+ψ) - F(φ) - ∫₀¹ DF_{φ+tψ}(ψ) dt
    check_taylor_integral     Taylor formula with integral remainder, n ≤ 3
    check_poincare_first      ∫ρf(jψ) - ∫ψ·EL(f)(jψ)
    check_poincare_pointwise  ρf - u₀·EL(f) - D_x J at every node
    check_poincare_second     ∫f(j(ψ₁+ψ₂)) - ∫f(jψ₁) - ∫₀¹∫ψ₂·EL(f)(j(ψ₁+tψ₂)) dt
    check_el_gradient         ∇F_φ from the derivative engine against EL(f) along φ
    check_exactness           ∫D_x t(jψ) and constancy of ψ ↦ ∫D_x t(jψ)

The homotopy integrals use Gauss–Legendre nodes mapped to [0, 1].
"""

import math
import logging
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from derivative_engine import DEFAULT_BAND, DerivativeConfig, gateaux, gradient
from functional_zoo import Functional, make_local
from grid_core import Field, l2_norm
from jet_lagrangian import (
    JetExpr,
    contains_coordinate,
    euler_lagrange,
    evaluate_along,
    to_prefix,
    total_derivative,
    vertical_euler,
)

MIN_QUAD = 8
DEFAULT_QUAD = 16
MAX_TAYLOR_ORDER = 3

# EL gradients smaller than this in L² are compared in absolute terms.
EL_NORM_FLOOR = 1e-6


def gauss_legendre_unit(n_quad: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of n_quad-point Gauss–Legendre on [0, 1]."""
    if n_quad < MIN_QUAD:
        raise ValueError(f"n_quad must be ≥ {MIN_QUAD}, got {n_quad}")
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _integral_along(f: JetExpr, phi: Field) -> float:
    return float(phi.grid.spacing * np.sum(evaluate_along(f, phi)))


def _is_zero(f: Field) -> bool:
    return not np.any(f.samples)


# ─── Fundamental theorem and Taylor ───────────────────────────────────────────

def check_ftc(F: Functional, phi: Field, psi: Field, n_quad: int = DEFAULT_QUAD,
              cfg: Optional[DerivativeConfig] = None) -> float:
    """|F(φ+ψ) - F(φ) - ∫₀¹ DF_{φ+tψ}(ψ) dt| with numerical directional derivatives."""
    ts, ws = gauss_legendre_unit(n_quad)
    if _is_zero(psi):
        return 0.0
    path = sum(w * gateaux(F, phi + t * psi, [psi], cfg) for t, w in zip(ts, ws))
    residual = abs(F(phi + psi) - F(phi) - path)
    logging.debug(f"[identities] ftc {F.name}: {residual:.3e}")
    return residual


def _derivative(F: Functional, phi: Field, dirs: Sequence[Field],
                cfg: Optional[DerivativeConfig]) -> float:
    if F.has_analytic(len(dirs)):
        return F.analytic_derivative(phi, dirs)
    return gateaux(F, phi, dirs, cfg)


def check_taylor_integral(F: Functional, phi: Field, psi: Field, n: int,
                          n_quad: int = DEFAULT_QUAD, cfg: Optional[DerivativeConfig] = None) -> float:
    """
    |F(φ+ψ) - Σ_{j≤n} D^jF_φ(ψ…ψ)/j! - ∫₀¹ (1-t)ⁿ/n! D^{n+1}F_{φ+tψ}(ψ…ψ) dt|.

    Closed-form derivatives are used where the functional carries them.
    """
    if not 0 <= n <= MAX_TAYLOR_ORDER:
        raise ValueError(f"check_taylor_integral supports 0 ≤ n ≤ {MAX_TAYLOR_ORDER}, got {n}")
    ts, ws = gauss_legendre_unit(n_quad)
    if _is_zero(psi):
        return 0.0
    poly = F(phi) + sum(
        _derivative(F, phi, [psi] * j, cfg) / math.factorial(j) for j in range(1, n + 1)
    )
    remainder = sum(
        w * (1.0 - t) ** n / math.factorial(n) * _derivative(F, phi + t * psi, [psi] * (n + 1), cfg)
        for t, w in zip(ts, ws)
    )
    return abs(F(phi + psi) - poly - remainder)


# ─── Poincaré identities ──────────────────────────────────────────────────────

def check_poincare_first(f: JetExpr, psi_samples: Iterable[Field]) -> float:
    """max over ψ of |∫ρf(jψ) - ∫ψ·EL(f)(jψ)|."""
    rho_f = vertical_euler(f)
    el = euler_lagrange(f).expr
    worst = 0.0
    for psi in psi_samples:
        lhs = _integral_along(rho_f, psi)
        rhs = float(psi.grid.spacing * np.sum(psi.samples * evaluate_along(el, psi)))
        worst = max(worst, abs(lhs - rhs))
    logging.info(f"[identities] first identity {to_prefix(f)}: {worst:.3e}")
    return worst


def check_poincare_pointwise(f: JetExpr, psi: Field) -> float:
    """
    max_x |ρf - u₀·EL(f) - D_x J| along ψ, relative to max(1, max|ρf|).

    J is the boundary current returned by euler_lagrange.
    """
    res = euler_lagrange(f)
    rho = evaluate_along(vertical_euler(f), psi)
    el = evaluate_along(res.expr, psi)
    div = evaluate_along(total_derivative(res.boundary_current), psi)
    gap = np.max(np.abs(rho - psi.samples * el - div))
    return float(gap / max(1.0, float(np.max(np.abs(rho)))))


def check_poincare_second(f: JetExpr, psi1: Field, psi2: Field, n_quad: int = DEFAULT_QUAD) -> float:
    ts, ws = gauss_legendre_unit(n_quad)
    if _is_zero(psi2):
        return 0.0
    el = euler_lagrange(f).expr
    lhs = _integral_along(f, psi1 + psi2) - _integral_along(f, psi1)
    rhs = 0.0
    for t, w in zip(ts, ws):
        moved = psi1 + t * psi2
        rhs += w * float(psi2.grid.spacing * np.sum(psi2.samples * evaluate_along(el, moved)))
    return abs(lhs - rhs)


# ─── Gradient representation ──────────────────────────────────────────────────

def check_el_gradient(f: JetExpr, phi_samples: Iterable[Field], cfg: Optional[DerivativeConfig] = None,
                      band: int = DEFAULT_BAND) -> float:
    """
    max over φ of ‖∇F_φ - EL(f)(j φ)‖_{L²} / max(EL_NORM_FLOOR, ‖EL(f)(j φ)‖_{L²}), F = make_local(f).
    """
    F = make_local(f)
    el = euler_lagrange(f).expr
    worst = 0.0
    for phi in phi_samples:
        numeric = gradient(F, phi, cfg, band).field
        exact = Field(phi.grid, evaluate_along(el, phi))
        worst = max(worst, l2_norm(numeric - exact) / max(EL_NORM_FLOOR, l2_norm(exact)))
    logging.info(f"[identities] EL gradient {to_prefix(f)}: {worst:.3e}")
    return worst


# ─── Exactness ────────────────────────────────────────────────────────────────

def check_exactness(t: JetExpr, psi_samples: Sequence[Field]) -> float:
    """
    max of |∫D_x t(jψ)| and |F(ψ) - F(0)| for F(ψ) = ∫D_x t(jψ), relative to
    max(1, ∫|D_x t(jψ)|).

    The bare coordinate x is not periodic, so expressions containing it are rejected;
    use a coefficient field instead.
    """
    if contains_coordinate(t):
        raise ValueError(
            f"check_exactness needs periodic densities; {to_prefix(t)} contains the bare coordinate x"
        )
    dt = total_derivative(t)
    worst = 0.0
    for psi in psi_samples:
        values = evaluate_along(dt, psi)
        scale = max(1.0, float(psi.grid.spacing * np.sum(np.abs(values))))
        at_psi = float(psi.grid.spacing * np.sum(values))
        at_zero = _integral_along(dt, Field.zeros(psi.grid))
        worst = max(worst, abs(at_psi) / scale, abs(at_psi - at_zero) / scale)
    return worst
