"""
locality_lab.py

Locality harness for functionals on S¹.

    test_additivity          Hammerstein residual F(φ₁+φ₂+φ₃) - F(φ₁+φ₂) - F(φ₂+φ₃) + F(φ₂)
                             over bumps φ₁, φ₃ with disjoint supports
    test_partial_additivity  F(φ₁+φ₂) - F(φ₁) - F(φ₂) + F(0) over disjoint bump pairs
    test_diagonal_support    D²F_φ(ψ, χ) on disjoint pairs, normalized by an overlapping pair
    locality_verdict         the three conditions combined at several φ-samples, plus
                             spectral-decay and Lipschitz proxies on the gradient
    functional_support       centres whose neighbourhoods carry a perturbation that moves F

Verdicts: pass when residual ≤ tol · scale on every trial, fail when some
trial exceeds 10 · tol · scale, inconclusive in between. Trials are drawn from
numpy.random.default_rng(seed) in a fixed order, so reports are deterministic.
"""

import csv
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from derivative_engine import (
    DEFAULT_BAND,
    DerivativeConfig,
    gateaux_estimate,
    gradient,
    spectral_tail_fraction,
)
from functional_zoo import Functional
from grid_core import (
    TWO_PI,
    Field,
    GridSpec,
    SupportWindow,
    bump,
    l2_norm,
    random_field,
)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
LOCAL, NONLOCAL = "local", "nonlocal"

DEFAULT_GRID_POINTS = 2048
DEFAULT_TRIALS = 50

# "Disjoint" here means at least this many cells apart.
LOCALITY_GAP_CELLS = 8
FAIL_FACTOR = 10.0

# Probe magnitudes below this are indistinguishable from zero.
NOISE_FLOOR = 1e-13

BUMP_RADIUS = (1.3, 1.45)
BUMP_PEAK = (0.8, 1.2)

BASE_BAND, BASE_DECAY, BASE_AMPLITUDE = 4, 0.5, 0.5
JITTER_AMPLITUDE = 0.01

TAIL_THRESHOLD = 1e-8
TAIL_FRACTION = 0.75
# Gradients with a smaller L² norm are round-off; their spectrum carries no signal.
GRADIENT_FLOOR = 1e-10
LIPSCHITZ_DELTA = 1e-3
LIPSCHITZ_BOUND = 1e4

DEFAULT_TOLERANCES = {"additivity": 1e-9, "diagonal": 1e-7}

SMOOTHNESS_NOTE = "spectral-decay proxy for an empty wave front set, not a certificate"
VANISHING_GRADIENT_NOTE = "gradient vanishes to round-off; spectral-decay proxy not applicable"

# Levels for the unbounded-order member. At an integer level n only χ_n fires
# and F is affine nearby, so D²F vanishes there.
UNBOUNDED_SAMPLE_LEVELS = (1.25, 1.5, 2.5)
CONTINUITY_NOTE = "finite-difference Lipschitz proxy for smoothness of φ ↦ ∇F_φ"


@dataclass
class TrialRow:
    trial: int
    residual: float
    scale: float
    status: str


@dataclass
class ProbeReport:
    functional: str
    test: str
    trials: int
    max_residual: float
    scale: float
    verdict: str
    seed: Optional[int]
    parameters: Dict[str, object] = field(default_factory=dict)
    rows: List[TrialRow] = field(default_factory=list)
    sub_reports: List["ProbeReport"] = field(default_factory=list)
    witness: Optional[Dict[str, Field]] = None
    note: str = ""

    @property
    def ratio(self) -> float:
        return _ratio(self.max_residual, self.scale)

    @property
    def failing_conditions(self) -> List[str]:
        return [r.test for r in self.sub_reports if r.verdict == FAIL]

    def summary(self) -> str:
        return (
            f"{self.functional} {self.test}: {self.verdict} "
            f"(max_residual={self.max_residual:.3e}, scale={self.scale:.3e}, trials={self.trials})"
        )


def _ratio(residual: float, scale: float) -> float:
    if scale > 0.0:
        return residual / scale
    return 0.0 if residual == 0.0 else math.inf


def classify(ratio: float, tol: float) -> str:
    if ratio <= tol:
        return PASS
    if ratio > FAIL_FACTOR * tol:
        return FAIL
    return INCONCLUSIVE


def aggregate_trials(name: str, test: str, rows: List[TrialRow], tol: float, seed,
                     parameters: Dict[str, object], witness=None, note: str = "") -> ProbeReport:
    """
    Worst trial by residual/scale decides the verdict.

    Rows with scale 0 carry no ratio; they count by their stored status only.
    """
    if not rows:
        return ProbeReport(name, test, 0, 0.0, 0.0, PASS, seed, parameters, note=note)
    scored = [r for r in rows if r.scale > 0.0]
    unscored = {r.status for r in rows if r.scale <= 0.0}
    if scored:
        worst = max(scored, key=lambda r: r.residual / r.scale)
        verdict = classify(worst.residual / worst.scale, tol)
    else:
        worst = max(rows, key=lambda r: r.residual)
        verdict = PASS
    statuses = {r.status for r in scored} | unscored
    if FAIL in unscored:
        verdict = FAIL
    elif verdict == PASS and INCONCLUSIVE in statuses:
        verdict = INCONCLUSIVE
    report = ProbeReport(
        functional=name,
        test=test,
        trials=len(rows),
        max_residual=worst.residual,
        scale=worst.scale,
        verdict=verdict,
        seed=seed,
        parameters={"tol": tol, **parameters},
        rows=rows,
        witness=witness if verdict == FAIL else None,
        note=note,
    )
    log = logging.warning if verdict == INCONCLUSIVE else logging.info
    log(f"[locality] {report.summary()}")
    return report


# ─── Trial fields ─────────────────────────────────────────────────────────────

def _grid_for(grid: Optional[GridSpec], base: Optional[Field]) -> GridSpec:
    if base is not None:
        return base.grid
    return grid or GridSpec(DEFAULT_GRID_POINTS)


def separated_bumps(rng: np.random.Generator, grid: GridSpec) -> Tuple[Field, Field, SupportWindow]:
    """Two bumps centred π apart, at least LOCALITY_GAP_CELLS cells between supports."""
    r_max = (math.pi - (LOCALITY_GAP_CELLS + 2) * grid.spacing) / 2.0
    radius = min(rng.uniform(*BUMP_RADIUS), r_max)
    center = rng.uniform(0.0, TWO_PI)
    w1 = SupportWindow(center, radius)
    w3 = SupportWindow(center + math.pi, radius)
    if not w1.disjoint_from(w3, grid, LOCALITY_GAP_CELLS):
        raise ValueError(f"Grid n={grid.n_points} too coarse for disjoint locality bumps")
    phi1 = bump(w1, grid, peak=rng.uniform(*BUMP_PEAK))
    phi3 = bump(w3, grid, peak=rng.uniform(*BUMP_PEAK))
    return phi1, phi3, w1


def base_field(rng: np.random.Generator, grid: GridSpec, base: Optional[Field] = None) -> Field:
    """Random band-limited φ₂, or a small jitter around `base`."""
    seed = int(rng.integers(2 ** 32))
    if base is None:
        return random_field(grid, seed, BASE_BAND, BASE_DECAY, BASE_AMPLITUDE)
    return base + random_field(grid, seed, BASE_BAND, BASE_DECAY, JITTER_AMPLITUDE)


# ─── Additivity ───────────────────────────────────────────────────────────────

def test_additivity(F: Functional, trials: int = DEFAULT_TRIALS, seed: int = 0, *,
                    grid: Optional[GridSpec] = None, base: Optional[Field] = None,
                    tol: float = DEFAULT_TOLERANCES["additivity"]) -> ProbeReport:
    """Hammerstein property over `trials` random triples."""
    grid = _grid_for(grid, base)
    rng = np.random.default_rng(seed)
    rows, witness = [], None
    worst = -1.0
    for t in range(trials):
        phi1, phi3, _ = separated_bumps(rng, grid)
        phi2 = base_field(rng, grid, base)
        values = [F(phi1 + phi2 + phi3), F(phi1 + phi2), F(phi2 + phi3), F(phi2)]
        residual = abs(values[0] - values[1] - values[2] + values[3])
        scale = max(abs(v) for v in values)
        ratio = _ratio(residual, scale)
        rows.append(TrialRow(t, residual, scale, classify(ratio, tol)))
        if ratio > worst:
            worst = ratio
            witness = {"phi1": phi1, "phi2": phi2, "phi3": phi3}
    return aggregate_trials(F.name, "additivity", rows, tol, seed,
                            {"base": "random" if base is None else "jittered"}, witness)


def test_partial_additivity(F: Functional, trials: int = DEFAULT_TRIALS, seed: int = 0, *,
                            grid: Optional[GridSpec] = None,
                            tol: float = DEFAULT_TOLERANCES["additivity"]) -> ProbeReport:
    """F(φ₁+φ₂) = F(φ₁) + F(φ₂) - F(0) over disjoint bump pairs."""
    grid = _grid_for(grid, None)
    rng = np.random.default_rng(seed)
    f0 = F(Field.zeros(grid))
    rows, witness = [], None
    worst = -1.0
    for t in range(trials):
        phi1, phi2, _ = separated_bumps(rng, grid)
        values = [F(phi1 + phi2), F(phi1), F(phi2), f0]
        residual = abs(values[0] - values[1] - values[2] + values[3])
        scale = max(abs(v) for v in values)
        ratio = _ratio(residual, scale)
        rows.append(TrialRow(t, residual, scale, classify(ratio, tol)))
        if ratio > worst:
            worst = ratio
            witness = {"phi1": phi1, "phi2": phi2}
    return aggregate_trials(F.name, "partial_additivity", rows, tol, seed, {}, witness)


# ─── Diagonal support ─────────────────────────────────────────────────────────

def _negligible(estimate) -> bool:
    return abs(estimate.value) <= max(NOISE_FLOOR, 4.0 * estimate.floor)


def test_diagonal_support(F: Functional, phi: Field, trials: int = DEFAULT_TRIALS, seed: int = 0,
                          cfg: Optional[DerivativeConfig] = None,
                          tol: float = DEFAULT_TOLERANCES["diagonal"]) -> ProbeReport:
    """
    |D²F_φ(ψ, χ)| for disjoint bumps, relative to |D²F_φ(ψ, χ̃)| with χ̃ centred on ψ.

    A trial whose normalizer is lost in round-off passes when the disjoint probe
    is lost too, and is inconclusive otherwise.
    """
    grid = phi.grid
    rng = np.random.default_rng(seed)
    rows, witness = [], None
    worst = -1.0
    for t in range(trials):
        psi, chi, w_psi = separated_bumps(rng, grid)
        chi_overlap = bump(SupportWindow(w_psi.center, w_psi.radius), grid, peak=chi.max_abs())
        disjoint = gateaux_estimate(F, phi, [psi, chi], cfg)
        overlap = gateaux_estimate(F, phi, [psi, chi_overlap], cfg)
        residual = abs(disjoint.value)
        if _negligible(overlap):
            status = PASS if _negligible(disjoint) else INCONCLUSIVE
            rows.append(TrialRow(t, 0.0 if status == PASS else residual, 0.0, status))
            continue
        scale = abs(overlap.value)
        ratio = _ratio(residual, scale)
        rows.append(TrialRow(t, residual, scale, classify(ratio, tol)))
        if ratio > worst:
            worst = ratio
            witness = {"phi": phi, "psi": psi, "chi": chi}

    degenerate = sum(1 for r in rows if r.scale == 0.0)
    note = f"{degenerate} trial(s) with vanishing second derivative" if degenerate else ""
    if degenerate:
        logging.warning(f"[locality] {F.name}: {note}")
    return aggregate_trials(F.name, "diagonal_support", rows, tol, seed, {}, witness, note)


# ─── Gradient proxies ─────────────────────────────────────────────────────────

def _smoothness_report(F: Functional, phi: Field, grad: Field, band: int, label: str) -> ProbeReport:
    norm = l2_norm(grad)
    if norm <= GRADIENT_FLOOR:
        tail, verdict, note = 0.0, PASS, VANISHING_GRADIENT_NOTE
        logging.info(f"[locality] {F.name} gradient norm {norm:.3e} at {label}: vanishing")
    else:
        tail = spectral_tail_fraction(grad, band, TAIL_FRACTION)
        verdict, note = classify(tail, TAIL_THRESHOLD), SMOOTHNESS_NOTE
        logging.info(f"[locality] {F.name} gradient tail fraction {tail:.3e} at {label}")
    return ProbeReport(
        functional=F.name, test=f"smoothness@{label}", trials=1, max_residual=tail, scale=1.0,
        verdict=verdict, seed=None,
        parameters={"band": band, "fraction": TAIL_FRACTION, "tol": TAIL_THRESHOLD,
                    "gradient_norm": norm},
        note=note,
    )


def _continuity_report(F: Functional, phi: Field, grad: Field, band: int, seed: int,
                       cfg: Optional[DerivativeConfig], label: str) -> ProbeReport:
    direction = random_field(phi.grid, seed, BASE_BAND, BASE_DECAY, 1.0)
    direction = direction / max(direction.max_abs(), NOISE_FLOOR)
    moved = gradient(F, phi + LIPSCHITZ_DELTA * direction, cfg, band).field
    lipschitz = l2_norm(moved - grad) / (LIPSCHITZ_DELTA * max(1.0, l2_norm(grad)))
    verdict = PASS if lipschitz <= LIPSCHITZ_BOUND else INCONCLUSIVE
    return ProbeReport(
        functional=F.name, test=f"continuity@{label}", trials=1, max_residual=lipschitz, scale=1.0,
        verdict=verdict, seed=seed,
        parameters={"delta": LIPSCHITZ_DELTA, "bound": LIPSCHITZ_BOUND},
        note=CONTINUITY_NOTE,
    )


# ─── Combined verdict ─────────────────────────────────────────────────────────

def locality_verdict(F: Functional, samples: Sequence[Field], cfg: Optional[DerivativeConfig] = None,
                     trials: int = DEFAULT_TRIALS, seed: int = 0, band: int = DEFAULT_BAND,
                     tolerances: Optional[Dict[str, float]] = None) -> ProbeReport:
    """local iff every condition passes at every sample; nonlocal if any fails."""
    tols = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    subs: List[ProbeReport] = []
    for i, phi in enumerate(samples):
        label = f"phi{i}"
        add = test_additivity(F, trials, seed + i, base=phi, tol=tols["additivity"])
        add.test = f"additivity@{label}"
        diag = test_diagonal_support(F, phi, trials, seed + i, cfg, tol=tols["diagonal"])
        diag.test = f"diagonal_support@{label}"
        grad = gradient(F, phi, cfg, band).field
        subs += [
            add,
            diag,
            _smoothness_report(F, phi, grad, band, label),
            _continuity_report(F, phi, grad, band, seed + i, cfg, label),
        ]

    verdicts = {r.verdict for r in subs}
    if FAIL in verdicts:
        verdict = NONLOCAL
    elif INCONCLUSIVE in verdicts:
        verdict = INCONCLUSIVE
    else:
        verdict = LOCAL
    worst = max(subs, key=lambda r: r.ratio) if subs else None
    report = ProbeReport(
        functional=F.name,
        test="locality",
        trials=trials,
        max_residual=worst.max_residual if worst else 0.0,
        scale=worst.scale if worst else 0.0,
        verdict=verdict,
        seed=seed,
        parameters={"samples": len(samples), "band": band, **tols},
        sub_reports=subs,
    )
    failing = report.failing_conditions
    report.note = "failing: " + ", ".join(failing) if failing else SMOOTHNESS_NOTE
    logging.info(f"[locality] {F.name}: {verdict}" + (f" ({report.note})" if failing else ""))
    return report


def default_samples(F: Functional, grid: GridSpec, seed: int = 0) -> List[Field]:
    """Three φ-samples; non-integer constants for the unbounded-order member, random/1/random otherwise."""
    if F.kind == "unbounded_order":
        return [Field.constant(grid, c) for c in UNBOUNDED_SAMPLE_LEVELS]
    rng = np.random.default_rng(seed)
    return [
        base_field(rng, grid),
        Field.constant(grid, 1.0),
        base_field(rng, grid),
    ]


# ─── Support ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SupportProbe:
    centers: Tuple[float, ...]
    active: Tuple[bool, ...]
    changes: Tuple[float, ...]

    @property
    def support_centers(self) -> List[float]:
        return [c for c, a in zip(self.centers, self.active) if a]


def functional_support(F: Functional, phi: Field, centers: int = 16, tol: float = 1e-6) -> SupportProbe:
    """
    Centres 2πi/centers whose narrow bump perturbation changes F beyond tol · scale.

    Bump radius is 0.9 of the half-spacing between centres, so the bumps tile S¹
    without overlapping.
    """
    grid = phi.grid
    radius = 0.9 * math.pi / centers
    base = F(phi)
    cs, active, changes = [], [], []
    for i in range(centers):
        c = TWO_PI * i / centers
        moved = F(phi + bump(SupportWindow(c, radius), grid, peak=1.0))
        change = abs(moved - base)
        cs.append(c)
        changes.append(change)
        active.append(change > tol * max(abs(base), abs(moved), 1.0))
    logging.info(f"[locality] {F.name} support: {sum(active)}/{centers} centres active")
    return SupportProbe(tuple(cs), tuple(active), tuple(changes))


# ─── CSV ──────────────────────────────────────────────────────────────────────

REPORT_CSV_HEADER = ["functional", "test", "trial", "residual", "scale", "status"]


def report_rows(report: ProbeReport) -> List[list]:
    """Flatten a report and its sub-reports into one row per trial."""
    out = []
    for r in [report, *report.sub_reports]:
        for row in r.rows:
            out.append([r.functional, r.test, row.trial, repr(row.residual), repr(row.scale), row.status])
    return out


def report_to_csv(report: ProbeReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_HEADER)
        writer.writerows(report_rows(report))
        writer.writerow([f"# summary {report.summary()}"])
    logging.info(f"[locality] Report CSV written: {path}")
    return path
