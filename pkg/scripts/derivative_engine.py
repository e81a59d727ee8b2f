"""
derivative_engine.py

Numerical Gâteaux/Bastiani derivatives of any Functional.

    gateaux             D^k F_φ(v₁,…,v_k), k ≤ 4: mixed central difference over the
                        k-cube, step halved per level, Neville/Richardson table with
                        factors 4, 16, …; returns value, error estimate and round-off floor
    gradient            ∇F_φ synthesized from pairings with cos(nx), sin(nx) up to a band
    kernel_probe2       D²F_φ(ψ, χ)
    extract_delta_coefficients
                        pointwise Vandermonde solve of A_ξ(x) e^{-iξx} = Σ_j f_j(x)(iξ)^j,
                        so D²F_φ(v, w) = ∫ v Σ_j f_j w^(j)
    estimate_order      log-log slope of |DF_φ(e^{iωx})| against ω
    taylor_remainder    fitted exponent of the Taylor remainder in t

Steps scale as base_step / (1 + ‖v_i‖_{C⁰}) in relative mode. Stencil
evaluations may fan out over a thread pool; results are collected in stencil
order so the reduction is schedule-independent.
"""

import csv
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from grid_core import Field, GridSpec, integrate

SCALE_MODES = ("absolute", "relative")
MAX_ORDER = 4
MAX_DELTA_ORDER = 6

# Pairings below this are treated as exact zeros by estimate_order.
ZERO_PAIRING = 1e-13

# Coefficients below SNAP · scale print as 0 in reports; returned data is untouched.
REPORT_SNAP = 1e-10

EPS = np.finfo(float).eps

# Round-off of a k-th difference grows like eps/h^k; base_step is scaled by
# this factor per order so it stays below 1e-8 relative up to k = 3.
ORDER_STEP_SCALE = (1.0, 1.0, 2.0, 5.0, 8.0)


@dataclass(frozen=True)
class DerivativeConfig:
    base_step: float = 1e-2
    richardson_levels: int = 3
    scale_mode: str = "relative"
    workers: int = 1

    def __post_init__(self):
        if not self.base_step > 0:
            raise ValueError(f"base_step must be > 0, got {self.base_step}")
        if self.richardson_levels < 2:
            raise ValueError(f"richardson_levels must be ≥ 2, got {self.richardson_levels}")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}, got {self.scale_mode!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be ≥ 1, got {self.workers}")

    def step_for(self, v: Field, order: int = 1) -> float:
        """Step along v for an order-`order` stencil; wider for higher orders."""
        step = self.base_step * ORDER_STEP_SCALE[order]
        if self.scale_mode == "absolute":
            return step
        return step / (1.0 + v.max_abs())


@dataclass(frozen=True)
class GateauxEstimate:
    value: float
    error: float
    noise: float

    @property
    def floor(self) -> float:
        """Magnitude below which the estimate cannot be told apart from zero."""
        return self.error + self.noise


@dataclass(frozen=True)
class GradientDensity:
    field: Field
    band: int
    pairings: Tuple[float, ...]

    def pair(self, v: Field) -> float:
        return integrate(self.field * v)


@dataclass(frozen=True)
class KernelCoefficients:
    coefficients: Tuple[Field, ...]
    frequencies: Tuple[int, ...]
    residual: float

    @property
    def k_max(self) -> int:
        return len(self.coefficients) - 1


def _evaluate_all(F, points: List[Field], workers: int) -> List[float]:
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(F, points))
    return [F(p) for p in points]


def gateaux_estimate(F, phi: Field, dirs: Sequence[Field],
                     cfg: Optional[DerivativeConfig] = None) -> GateauxEstimate:
    """D^kF_φ(dirs) with its Richardson error estimate and round-off floor."""
    cfg = cfg or DerivativeConfig()
    k = len(dirs)
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"gateaux supports 1 ≤ k ≤ {MAX_ORDER} directions, got {k}")
    for v in dirs:
        if v.grid != phi.grid:
            raise ValueError("gateaux directions must live on the base field's grid")
    steps = [cfg.step_for(v, k) for v in dirs]
    signs = list(product((1.0, -1.0), repeat=k))
    weights = [math.prod(s) for s in signs]

    table: List[List[float]] = []
    noise = 0.0
    for level in range(cfg.richardson_levels):
        scale = 0.5 ** level
        hs = [h * scale for h in steps]
        points = []
        for s in signs:
            shift = phi.samples.copy()
            for sign, h, v in zip(s, hs, dirs):
                shift = shift + sign * h * v.samples
            points.append(Field(phi.grid, shift))
        values = _evaluate_all(F, points, cfg.workers)
        for s, val in zip(signs, values):
            if not math.isfinite(val):
                t_point = ", ".join(f"{sign * h:.3e}" for sign, h in zip(s, hs))
                raise ArithmeticError(
                    f"Non-finite functional value {val} at stencil point t=({t_point})"
                )
        denom = (2.0 ** k) * math.prod(hs)
        estimate = sum(w * val for w, val in zip(weights, values)) / denom
        noise = max(noise, EPS * sum(abs(val) for val in values) / denom)
        row = [estimate]
        for j in range(1, level + 1):
            factor = 4.0 ** j
            row.append((factor * row[j - 1] - table[level - 1][j - 1]) / (factor - 1.0))
        table.append(row)

    best = table[-1][-1]
    error = abs(best - table[-1][-2])
    return GateauxEstimate(value=float(best), error=float(error), noise=float(noise))


def gateaux(F, phi: Field, dirs: Sequence[Field], cfg: Optional[DerivativeConfig] = None) -> float:
    return gateaux_estimate(F, phi, dirs, cfg).value


def kernel_probe2(F, phi: Field, psi: Field, chi: Field,
                  cfg: Optional[DerivativeConfig] = None) -> float:
    """D²F_φ(ψ, χ) = ⟨F^(2)_φ, ψ⊗χ⟩."""
    return gateaux(F, phi, [psi, chi], cfg)


# ─── Gradients ────────────────────────────────────────────────────────────────

DEFAULT_BAND = 64


def fourier_probes(grid: GridSpec, band: int) -> List[Tuple[str, int, Field]]:
    """[("cos", 0, 1), ("cos", 1, cos x), ("sin", 1, sin x), …] up to `band`."""
    x = grid.nodes
    probes = [("cos", 0, Field.constant(grid, 1.0))]
    for n in range(1, band + 1):
        probes.append(("cos", n, Field(grid, np.cos(n * x))))
        probes.append(("sin", n, Field(grid, np.sin(n * x))))
    return probes


def _check_band(grid: GridSpec, band: int) -> None:
    if not 0 <= band <= grid.nyquist - 1:
        raise ValueError(
            f"Gradient band {band} exceeds the Nyquist guard {grid.nyquist - 1} for n={grid.n_points}"
        )


def gradient(F, phi: Field, cfg: Optional[DerivativeConfig] = None, band: int = DEFAULT_BAND,
             fixed_dirs: Sequence[Field] = ()) -> GradientDensity:
    """
    Density of v ↦ D^{1+m}F_φ(v, fixed_dirs…) from its pairings with the Fourier modes.

    ∫ ∇F cos(nx) = π a_n, ∫ ∇F sin(nx) = π b_n, ∫ ∇F = 2π a_0.
    """
    cfg = cfg or DerivativeConfig()
    grid = phi.grid
    _check_band(grid, band)
    x = grid.nodes
    out = np.zeros(grid.n_points)
    pairings = []
    for kind, n, probe in fourier_probes(grid, band):
        c = gateaux(F, phi, [probe, *fixed_dirs], cfg)
        pairings.append(c)
        if n == 0:
            out += c / (2.0 * math.pi)
        elif kind == "cos":
            out += (c / math.pi) * np.cos(n * x)
        else:
            out += (c / math.pi) * np.sin(n * x)
    return GradientDensity(field=Field(grid, out), band=band, pairings=tuple(pairings))


def spectral_tail_fraction(f: Field, band: int, fraction: float = 0.75) -> float:
    """Share of spectral energy carried by modes |n| > fraction · band."""
    power = np.abs(f.spectrum) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    tail = np.abs(f.grid.wavenumbers) > fraction * band
    return float(np.sum(power[tail]) / total)


# ─── Delta coefficients ───────────────────────────────────────────────────────

def delta_system(k_max: int) -> np.ndarray:
    """Real 2(2k+1) × (k+1) matrix of (iξ)^j, rows (Re, Im) per ξ ∈ -k..k."""
    rows = []
    for xi in range(-k_max, k_max + 1):
        powers = np.array([(1j * xi) ** j for j in range(k_max + 1)])
        rows.append(powers.real)
        rows.append(powers.imag)
    return np.array(rows)


def extract_delta_coefficients(F, phi: Field, k_max: int, cfg: Optional[DerivativeConfig] = None,
                               band: int = DEFAULT_BAND) -> KernelCoefficients:
    """
    Coefficient fields f_0 … f_{k_max} of F^(2)_φ = Σ_j f_j(x) ∂^j δ(x-y).

    Normalization: D²F_φ(ψ, χ) = ∫ ψ(x) Σ_j f_j(x) χ^(j)(x) dx, with the full
    second derivative and no factor ½. For ∫ h φ⁴ + g (φ′)² this gives
    (f_0, f_1, f_2) = (12hφ², -2g′, -2g); halving D²F gives (6hφ², -g′, -g).

    For each ξ ≥ 0 the complex probe e^{iξx} is split into cos and sin; the
    densities for negative ξ are their complex conjugates.
    """
    if not 0 <= k_max <= MAX_DELTA_ORDER:
        raise ValueError(
            f"k_max={k_max} makes the Vandermonde system ill-conditioned; use 0 ≤ k_max ≤ {MAX_DELTA_ORDER}"
        )
    cfg = cfg or DerivativeConfig()
    grid = phi.grid
    x = grid.nodes
    dens = {}
    for xi in range(0, k_max + 1):
        cos_dir = Field(grid, np.cos(xi * x))
        a_cos = gradient(F, phi, cfg, band, fixed_dirs=[cos_dir]).field.samples
        if xi == 0:
            dens[0] = a_cos.astype(complex)
            continue
        sin_dir = Field(grid, np.sin(xi * x))
        a_sin = gradient(F, phi, cfg, band, fixed_dirs=[sin_dir]).field.samples
        dens[xi] = a_cos + 1j * a_sin
        dens[-xi] = a_cos - 1j * a_sin
        logging.debug(f"[engine] delta probe ξ=±{xi} done")

    rhs_rows = []
    for xi in range(-k_max, k_max + 1):
        shifted = dens[xi] * np.exp(-1j * xi * x)
        rhs_rows.append(shifted.real)
        rhs_rows.append(shifted.imag)
    matrix = delta_system(k_max)
    rhs = np.array(rhs_rows)
    solution, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
    residual = float(np.max(np.abs(matrix @ solution - rhs))) if rhs.size else 0.0
    coeffs = tuple(Field(grid, solution[j]) for j in range(k_max + 1))
    return KernelCoefficients(coefficients=coeffs, frequencies=tuple(range(-k_max, k_max + 1)),
                              residual=residual)


# ─── Order and Taylor diagnostics ─────────────────────────────────────────────

def oscillatory_pairing(F, phi: Field, omega: int, cfg: Optional[DerivativeConfig] = None) -> float:
    """|DF_φ(e^{iωx})| from its cos and sin parts."""
    x = phi.grid.nodes
    c = gateaux(F, phi, [Field(phi.grid, np.cos(omega * x))], cfg)
    s = gateaux(F, phi, [Field(phi.grid, np.sin(omega * x))], cfg)
    return math.hypot(c, s)


def estimate_order(F, phi: Field, freqs: Sequence[int],
                   cfg: Optional[DerivativeConfig] = None) -> float:
    """Least-squares slope of log|DF_φ(e_ω)| against log ω."""
    freqs = list(freqs)
    if any(b <= a for a, b in zip(freqs, freqs[1:])):
        raise ValueError(f"estimate_order needs strictly ascending frequencies, got {freqs}")
    if not freqs or freqs[0] < 1 or freqs[-1] > phi.grid.aliasing_guard:
        raise ValueError(
            f"estimate_order frequencies must lie in [1, {phi.grid.aliasing_guard}], got {freqs}"
        )
    pairs = [(w, oscillatory_pairing(F, phi, w, cfg)) for w in freqs]
    live = [(w, p) for w, p in pairs if p > ZERO_PAIRING]
    if len(live) < 2:
        raise ValueError(
            f"order undefined (zero derivative): only {len(live)} pairing(s) above {ZERO_PAIRING:g}"
        )
    logw = np.log([w for w, _ in live])
    logp = np.log([p for _, p in live])
    slope = float(np.polyfit(logw, logp, 1)[0])
    logging.info(f"[engine] order slope over ω={freqs[0]}..{freqs[-1]}: {slope:.3f}")
    return slope


@dataclass(frozen=True)
class TaylorFit:
    order: int
    exponent: float
    ts: Tuple[float, ...]
    remainders: Tuple[float, ...]


def taylor_remainder(F, phi: Field, psi: Field, n: int, ts: Sequence[float],
                     cfg: Optional[DerivativeConfig] = None) -> TaylorFit:
    """
    r(t) = |F(φ+tψ) - Σ_{j≤n} t^j/j! D^jF_φ(ψ,…,ψ)| and the fitted exponent of r ~ t^p.
    """
    if not 0 <= n < MAX_ORDER:
        raise ValueError(f"taylor_remainder supports n ≤ {MAX_ORDER - 1}, got {n}")
    base = F(phi)
    derivs = [gateaux(F, phi, [psi] * j, cfg) for j in range(1, n + 1)]
    rems = []
    for t in ts:
        approx = base + sum(t ** j / math.factorial(j) * d for j, d in enumerate(derivs, start=1))
        rems.append(abs(F(phi + t * psi) - approx))
    live = [(t, r) for t, r in zip(ts, rems) if r > 0.0]
    if len(live) < 2:
        raise ValueError("taylor_remainder: remainder vanished at every t; nothing to fit")
    exponent = float(np.polyfit(np.log([t for t, _ in live]), np.log([r for _, r in live]), 1)[0])
    return TaylorFit(order=n, exponent=exponent, ts=tuple(ts), remainders=tuple(rems))


# ─── CSV I/O ──────────────────────────────────────────────────────────────────

def gradient_to_csv(grad: GradientDensity, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"# band={grad.band}"])
        writer.writerow(["x", "gradient"])
        for x, v in zip(grad.field.grid.nodes, grad.field.samples):
            writer.writerow([repr(float(x)), repr(float(v))])
    logging.info(f"[engine] Gradient CSV written: {path}")
    return path


def kernel_coefficients_to_csv(kc: KernelCoefficients, path, scale: Optional[float] = None) -> Path:
    """One column per f_j. Entries below REPORT_SNAP · scale print as 0."""
    path = Path(path)
    grid = kc.coefficients[0].grid
    if scale is None:
        scale = max((c.max_abs() for c in kc.coefficients), default=0.0)
    snap = REPORT_SNAP * scale
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"# k_max={kc.k_max} residual={kc.residual!r}"])
        writer.writerow(["x", *(f"f{j}" for j in range(kc.k_max + 1))])
        for i, x in enumerate(grid.nodes):
            vals = [c.samples[i] for c in kc.coefficients]
            writer.writerow([repr(float(x)), *(repr(float(v)) if abs(v) >= snap else "0.0" for v in vals)])
    logging.info(f"[engine] Kernel coefficient CSV written: {path}")
    return path
