"""
peetre_probe.py

Peetre mollifiers, jet determination and k-local maps.

    mollifier                  χ_λ = (unit-mass bump of radius 3λ/8) ∗ 1{d(·,X) ≤ λ/2}:
                               1 on d ≤ λ/8, 0 on d ≥ λ
    check_peetre_estimate      π_{m,S¹}(χ_λ φ) / (λ π_{m+1, d≤λ}(φ)) for φ vanishing to
                               order m+1 on X
    test_jet_determination     smallest p such that equal p-jets at X force equal outputs at X
    test_k_local               outputs at k points unchanged by perturbations away from them
    test_peetre_local_additivity
                               pointwise Hammerstein identity for field-to-field maps

Distances are arc distances on S¹. A "density map" is any callable Field → Field.
"""

import csv
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft

from functional_zoo import Functional
from grid_core import (
    TWO_PI,
    Field,
    GridSpec,
    SupportWindow,
    arc_distance,
    bump,
    derivative_noise,
    derivative_stack,
    integrate,
    random_field,
    seminorm,
)
from jet_lagrangian import JetExpr, euler_lagrange, evaluate_along
from locality_lab import (
    ProbeReport,
    TrialRow,
    aggregate_trials,
    base_field,
    classify,
    separated_bumps,
)

DensityMap = Callable[[Field], Field]
KPointMap = Callable[[Field, Tuple[float, ...]], float]

MIN_LAMBDA_CELLS = 16
DEFAULT_LAMBDAS = tuple(2.0 ** -j for j in range(2, 7))

# Jets at X above this violate the vanishing precondition.
VANISHING_ATOL = 1e-9

JET_TOL = 1e-7
K_LOCAL_TOL = 1e-9
MAX_K = 3

# Neighbourhood of each point left untouched by k-local perturbations.
K_LOCAL_GUARD = 0.3

TRIAL_BAND, TRIAL_DECAY = 4, 0.5
TRIAL_SPREAD = 0.3


@dataclass(frozen=True)
class PointSet:
    points: Tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(p) % TWO_PI for p in self.points)
        if not pts:
            raise ValueError("PointSet must contain at least one point")
        for i, a in enumerate(pts):
            for b in pts[i + 1:]:
                if arc_distance(a, b) < 1e-12:
                    raise ValueError(f"PointSet points must be distinct, got {a!r} twice")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def distance(self, grid: GridSpec) -> np.ndarray:
        """d(x, X) at every node."""
        return np.min([arc_distance(grid.nodes, p) for p in self.points], axis=0)

    def node_indices(self, grid: GridSpec) -> List[int]:
        return [grid.node_index(p) for p in self.points]

    def windows(self, radius: float) -> List[SupportWindow]:
        return [SupportWindow(p, radius) for p in self.points]


# ─── Mollifier ────────────────────────────────────────────────────────────────

def mollifier(X: PointSet, lam: float, grid: GridSpec) -> Field:
    """Circular convolution of the λ/2-neighbourhood indicator with a unit-mass bump."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"Mollifier λ must lie in (0, 1], got {lam}")
    if lam < MIN_LAMBDA_CELLS * grid.spacing:
        raise ValueError(
            f"λ={lam} below resolvability {MIN_LAMBDA_CELLS}·spacing = "
            f"{MIN_LAMBDA_CELLS * grid.spacing:.3e} for n={grid.n_points}; refine the grid"
        )
    indicator = (X.distance(grid) <= lam / 2.0).astype(float)
    kernel = bump(SupportWindow(0.0, 3.0 * lam / 8.0), grid).samples
    kernel = kernel / (grid.spacing * np.sum(kernel))
    conv = np.real(sp_fft.ifft(sp_fft.fft(indicator) * sp_fft.fft(kernel))) * grid.spacing
    return Field(grid, conv)


def vanishing_trial(grid: GridSpec, X: PointSet, m: int, seed) -> Field:
    """Π_i sin^{m+1}(x - x_i) · (1 + 0.3 r), r a random band-limited field."""
    x = grid.nodes
    r = random_field(grid, seed, TRIAL_BAND, TRIAL_DECAY)
    factor = np.ones(grid.n_points)
    for p in X.points:
        factor = factor * np.sin(x - p) ** (m + 1)
    return Field(grid, factor * (1.0 + TRIAL_SPREAD * r.samples))


def _check_vanishing(phi: Field, X: PointSet, m: int) -> None:
    """Jets up to order m at X must be zero, up to spectral round-off."""
    stack = derivative_stack(phi, m)
    limits = [max(VANISHING_ATOL, derivative_noise(phi.grid, j, phi.max_abs())) for j in range(m + 1)]
    for p, idx in zip(X.points, X.node_indices(phi.grid)):
        for j in range(m + 1):
            value = abs(float(stack[j, idx]))
            if value > limits[j]:
                raise ValueError(
                    f"Trial field does not vanish to order {m + 1} at x={p:.6f}: "
                    f"|φ^({j})| = {value:.3e} > {limits[j]:.3e}"
                )


@dataclass
class PeetreTable:
    m: int
    points: Tuple[float, ...]
    lambdas: Tuple[float, ...]
    rows: List[Tuple[int, float, float, float, float]] = field(default_factory=list)

    def ratios_at(self, lam: float) -> List[float]:
        return [r[4] for r in self.rows if r[1] == lam]

    @property
    def max_ratio(self) -> float:
        return max((r[4] for r in self.rows), default=0.0)

    @property
    def reference_ratio(self) -> float:
        """Largest ratio at the largest λ."""
        return max(self.ratios_at(max(self.lambdas)), default=0.0)

    def bounded(self, factor: float = 3.0) -> bool:
        if self.max_ratio == 0.0:
            return True
        return self.max_ratio <= factor * self.reference_ratio


def check_peetre_estimate(X: PointSet, m: int, lambdas: Sequence[float], trials: Sequence[Field]) -> PeetreTable:
    """
    Rows (trial, λ, π_m(χ_λφ), λ·π_{m+1}(φ on d ≤ λ), ratio).

    Every trial must vanish to order m+1 on X.
    """
    if m < 0:
        raise ValueError(f"Peetre order m must be non-negative, got {m}")
    table = PeetreTable(m=m, points=X.points, lambdas=tuple(lambdas))
    for t, phi in enumerate(trials):
        _check_vanishing(phi, X, m)
        for lam in lambdas:
            chi = mollifier(X, lam, phi.grid)
            num = seminorm(chi * phi, m)
            den = lam * seminorm(phi, m + 1, X.windows(lam))
            ratio = num / den if den > 0.0 else 0.0
            table.rows.append((t, lam, num, den, ratio))
    logging.info(
        f"[peetre] m={m} |X|={len(X)}: max ratio {table.max_ratio:.4g}, "
        f"at largest λ {table.reference_ratio:.4g}"
    )
    return table


# ─── Jet determination ────────────────────────────────────────────────────────

def _farthest_point(grid: GridSpec, X: PointSet) -> float:
    d = X.distance(grid)
    return float(grid.nodes[int(np.argmax(d))])


def jet_witness(grid: GridSpec, X: PointSet, p: int, seed) -> Field:
    """δ with vanishing p-jets on X but nonzero (p+1)-st derivatives there and a bump far away."""
    delta = vanishing_trial(grid, X, p, seed)
    far = _farthest_point(grid, X)
    radius = 0.5 * float(np.max(X.distance(grid)))
    return delta + bump(SupportWindow(far, radius), grid, peak=1.0)


@dataclass
class JetDetermination:
    order: Optional[int]
    candidates: Tuple[int, ...]
    residuals: Dict[int, float]
    witnesses: Dict[int, Tuple[Field, Field]] = field(default_factory=dict)

    @property
    def determined(self) -> bool:
        return self.order is not None

    def describe(self) -> str:
        if self.order is None:
            return f"not jet-determined up to {max(self.candidates)}"
        return f"determined by {self.order}-jets"


def test_jet_determination(F: DensityMap, candidates: Sequence[int], X: PointSet, seed: int = 0, *,
                           grid: Optional[GridSpec] = None, trials: int = 5,
                           tol: float = JET_TOL) -> JetDetermination:
    """
    For each candidate p, compare F(φ)(x) and F(φ+δ)(x) at x ∈ X where δ has zero
    p-jets on X. Differences are normalized by the larger C⁰ norm of the two outputs.
    """
    grid = grid or GridSpec(2048)
    idx = X.node_indices(grid)
    residuals: Dict[int, float] = {}
    witnesses: Dict[int, Tuple[Field, Field]] = {}
    for p in sorted(candidates):
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            phi1 = base_field(rng, grid)
            phi2 = phi1 + jet_witness(grid, X, p, int(rng.integers(2 ** 32)))
            out1, out2 = F(phi1), F(phi2)
            scale = max(out1.max_abs(), out2.max_abs())
            diff = max(abs(out1.samples[i] - out2.samples[i]) for i in idx)
            ratio = diff / scale if scale > 0.0 else 0.0
            if ratio > worst:
                worst = ratio
                witnesses[p] = (phi1, phi2)
        residuals[p] = worst
        if worst > tol:
            continue
        witnesses.pop(p, None)
    determined = [p for p in sorted(candidates) if residuals[p] <= tol]
    result = JetDetermination(
        order=determined[0] if determined else None,
        candidates=tuple(sorted(candidates)),
        residuals=residuals,
        witnesses=witnesses,
    )
    logging.info(f"[peetre] jet determination: {result.describe()}")
    return result


def density_map(f: JetExpr) -> DensityMap:
    """φ ↦ f(j φ) as a field."""
    return lambda phi: Field(phi.grid, evaluate_along(f, phi))


def integral_map(phi: Field) -> Field:
    """φ ↦ (∫φ)·1, which sees the far field."""
    return Field.constant(phi.grid, integrate(phi))


# ─── k-local maps ─────────────────────────────────────────────────────────────

def product_of_densities(f: JetExpr) -> KPointMap:
    """(φ; x₁, …, x_k) ↦ Π_i f(j φ)(x_i)."""

    def F(phi: Field, points: Tuple[float, ...]) -> float:
        values = evaluate_along(f, phi)
        return float(math.prod(values[phi.grid.node_index(x)] for x in points))

    return F


def point_times_integral(phi: Field, points: Tuple[float, ...]) -> float:
    return phi.value_at(points[0]) * integrate(phi)


def constant_map(phi: Field, points: Tuple[float, ...]) -> float:
    return 1.0


def _perturbation_away(rng: np.random.Generator, grid: GridSpec, points: Sequence[float]) -> Field:
    """A bump in the widest gap between points, clear of their K_LOCAL_GUARD neighbourhoods."""
    ordered = sorted(points)
    gaps = [((ordered[(i + 1) % len(ordered)] - a) % TWO_PI or TWO_PI, a) for i, a in enumerate(ordered)]
    width, start = max(gaps)
    radius = 0.5 * width - K_LOCAL_GUARD
    if radius <= 4 * grid.spacing:
        raise ValueError(f"Points too crowded for a perturbation clear of radius {K_LOCAL_GUARD}")
    return bump(SupportWindow(start + 0.5 * width, radius), grid, peak=rng.uniform(0.5, 1.5))


def _random_points(rng: np.random.Generator, grid: GridSpec, k: int) -> Tuple[float, ...]:
    """k nodes at least 2·K_LOCAL_GUARD + a bit apart."""
    while True:
        idx = rng.choice(grid.n_points, size=k, replace=False)
        pts = tuple(float(grid.nodes[i]) for i in idx)
        if all(arc_distance(a, b) > 2.5 * K_LOCAL_GUARD for i, a in enumerate(pts) for b in pts[i + 1:]):
            return pts


def test_k_local(F: KPointMap, k: int, trials: int = 20, seed: int = 0, *, name: str = "map",
                 grid: Optional[GridSpec] = None, tol: float = K_LOCAL_TOL) -> ProbeReport:
    """F(φ; x₁…x_k) must not move when φ changes only away from the x_i."""
    if not 1 <= k <= MAX_K:
        raise ValueError(f"test_k_local supports 1 ≤ k ≤ {MAX_K}, got {k}")
    grid = grid or GridSpec(2048)
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(trials):
        points = _random_points(rng, grid, k)
        phi = base_field(rng, grid)
        eta = _perturbation_away(rng, grid, points)
        a, b = F(phi, points), F(phi + eta, points)
        residual = abs(a - b)
        scale = max(abs(a), abs(b), 1.0)
        rows.append(TrialRow(t, residual, scale, classify(residual / scale, tol)))
    return aggregate_trials(name, f"{k}_local", rows, tol, seed, {"k": k})


def test_peetre_local_additivity(F: DensityMap, trials: int = 20, seed: int = 0, *, name: str = "map",
                                 grid: Optional[GridSpec] = None, tol: float = K_LOCAL_TOL) -> ProbeReport:
    """max_x |F(φ₁+φ₂+φ)(x) - F(φ₁+φ)(x) - F(φ₂+φ)(x) + F(φ)(x)| over disjoint φ₁, φ₂."""
    grid = grid or GridSpec(2048)
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(trials):
        phi1, phi2, _ = separated_bumps(rng, grid)
        phi = base_field(rng, grid)
        outs = [F(phi1 + phi2 + phi), F(phi1 + phi), F(phi2 + phi), F(phi)]
        gap = outs[0].samples - outs[1].samples - outs[2].samples + outs[3].samples
        residual = float(np.max(np.abs(gap)))
        scale = max(o.max_abs() for o in outs)
        rows.append(TrialRow(t, residual, scale, classify(residual / scale if scale else 0.0, tol)))
    return aggregate_trials(name, "pointwise_additivity", rows, tol, seed, {})


# ─── Helpers shared with the suites ───────────────────────────────────────────

def functional_density_map(F: Functional) -> DensityMap:
    """EL density of a local functional: φ ↦ ∇F_φ computed symbolically."""
    if F.density is None:
        raise ValueError(f"{F.name} has no jet density")
    el = euler_lagrange(F.density).expr
    return density_map(el)


PEETRE_CSV_HEADER = ["m", "points", "trial", "lambda", "numerator", "denominator", "ratio"]


def peetre_table_to_csv(tables: Sequence[PeetreTable], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PEETRE_CSV_HEADER)
        for table in tables:
            pts = ";".join(f"{p:.6f}" for p in table.points)
            for t, lam, num, den, ratio in table.rows:
                writer.writerow([table.m, pts, t, repr(lam), repr(num), repr(den), repr(ratio)])
    logging.info(f"[peetre] Ratio table CSV written: {path}")
    return path
