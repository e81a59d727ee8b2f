import math

import numpy as np
import pytest

import locality_lab as lab
from grid_core import TWO_PI, Field, SupportWindow, bump, fields_disjoint
from jet_lagrangian import JetVar, Pow
from functional_zoo import make_local, zoo_by_name

TRIALS = 6


@pytest.fixture(scope="module")
def members(grid2048):
    return zoo_by_name(grid2048)


# ─── Classification ───────────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "ratio, expected",
    [
        (0.0, lab.PASS),
        (1e-9, lab.PASS),
        (5e-9, lab.INCONCLUSIVE),
        (1.1e-8, lab.FAIL),
        (math.inf, lab.FAIL),
    ],
)
def test_classify(ratio, expected):
    assert lab.classify(ratio, 1e-9) == expected


def test_aggregate_marks_inconclusive_trials():
    rows = [
        lab.TrialRow(0, 0.0, 1.0, lab.PASS),
        lab.TrialRow(1, 0.0, 0.0, lab.INCONCLUSIVE),
    ]
    report = lab.aggregate_trials("F", "diagonal_support", rows, 1e-7, 0, {})
    assert report.verdict == lab.INCONCLUSIVE
    assert report.parameters["tol"] == 1e-7


@pytest.mark.parametrize(
    "unscored, expected",
    [
        ([lab.TrialRow(1, 1e-3, 0.0, lab.INCONCLUSIVE)], lab.INCONCLUSIVE),
        ([lab.TrialRow(1, 0.0, 0.0, lab.PASS)], lab.PASS),
        ([lab.TrialRow(1, 1e-3, 0.0, lab.FAIL)], lab.FAIL),
    ],
)
def test_aggregate_counts_unscored_rows_by_status(unscored, expected):
    rows = [lab.TrialRow(0, 1e-12, 1.0, lab.PASS)] + unscored
    report = lab.aggregate_trials("F", "diagonal_support", rows, 1e-7, 0, {})
    assert report.verdict == expected
    assert report.scale == 1.0


def test_aggregate_with_only_unscored_rows():
    rows = [lab.TrialRow(t, 1e-3, 0.0, lab.INCONCLUSIVE) for t in range(3)]
    assert lab.aggregate_trials("F", "diagonal_support", rows, 1e-7, 0, {}).verdict == lab.INCONCLUSIVE


def test_aggregate_without_trials_passes():
    assert lab.aggregate_trials("F", "additivity", [], 1e-9, 0, {}).verdict == lab.PASS


# ─── Trial fields ─────────────────────────────────────────────────────────────

def test_separated_bumps_are_disjoint(grid2048):
    rng = np.random.default_rng(3)
    for _ in range(10):
        phi1, phi3, window = lab.separated_bumps(rng, grid2048)
        assert fields_disjoint(phi1, phi3, lab.LOCALITY_GAP_CELLS)
        assert lab.BUMP_RADIUS[0] <= window.radius <= lab.BUMP_RADIUS[1]


def test_base_field_jitter_stays_close(grid2048):
    rng = np.random.default_rng(4)
    one = Field.constant(grid2048, 1.0)
    jittered = lab.base_field(rng, grid2048, one)
    assert (jittered - one).max_abs() <= 2 * lab.JITTER_AMPLITUDE


# ─── Additivity ───────────────────────────────────────────────────────────────

@pytest.mark.parametrize("name", ["F2", "F3", "H", "I", "K", "L_quartic"])
def test_local_members_are_additive(members, grid2048, name):
    report = lab.test_additivity(members[name], TRIALS, seed=1, grid=grid2048)
    assert report.verdict == lab.PASS
    assert report.max_residual <= 1e-9 * report.scale


def test_bilocal_kernel_is_not_additive(members, grid2048):
    report = lab.test_additivity(members["G"], TRIALS, seed=1, grid=grid2048)
    assert report.verdict == lab.FAIL
    assert set(report.witness) == {"phi1", "phi2", "phi3"}


def test_counterexample_fails_additivity_at_one(members, grid2048):
    one = Field.constant(grid2048, 1.0)
    report = lab.test_additivity(members["F_nl"], TRIALS, seed=2, base=one)
    assert report.verdict == lab.FAIL
    assert report.ratio >= 0.1


def test_partial_additivity(members, grid2048):
    assert lab.test_partial_additivity(members["F_nl"], TRIALS, seed=5, grid=grid2048).verdict == lab.PASS
    square = make_local(Pow(JetVar(0), 2))
    assert lab.test_partial_additivity(square, TRIALS, seed=5, grid=grid2048).verdict == lab.PASS
    assert lab.test_partial_additivity(members["J"], TRIALS, seed=5, grid=grid2048).verdict == lab.FAIL


@pytest.mark.parametrize("name", ["F2", "G", "H", "J", "L_quartic", "unbounded_order", "F_nl"])
def test_additivity_implies_partial_additivity(members, grid2048, name):
    F = members[name]
    full = lab.test_additivity(F, TRIALS, seed=8, grid=grid2048)
    partial = lab.test_partial_additivity(F, TRIALS, seed=8, grid=grid2048)
    assert full.verdict != lab.PASS or partial.verdict == lab.PASS


def test_additivity_is_deterministic(members, grid2048):
    a = lab.test_additivity(members["G"], 3, seed=9, grid=grid2048)
    b = lab.test_additivity(members["G"], 3, seed=9, grid=grid2048)
    assert [r.residual for r in a.rows] == [r.residual for r in b.rows]


# ─── Diagonal support ─────────────────────────────────────────────────────────

def test_quartic_kernel_is_diagonal(members, grid2048):
    rng = np.random.default_rng(6)
    phi = lab.base_field(rng, grid2048)
    assert lab.test_diagonal_support(members["L_quartic"], phi, TRIALS, seed=6).verdict == lab.PASS


def test_bilocal_kernel_is_off_diagonal(members, grid2048):
    phi = Field.zeros(grid2048)
    assert lab.test_diagonal_support(members["G"], phi, TRIALS, seed=6).verdict == lab.FAIL


def test_counterexample_diagonal_regimes(members, grid2048):
    F = members["F_nl"]
    at_one = lab.test_diagonal_support(F, Field.constant(grid2048, 1.0), TRIALS, seed=7)
    assert at_one.verdict == lab.FAIL
    away = bump(SupportWindow(1.0, 1.0), grid2048, peak=1.0) + bump(SupportWindow(1.0 + math.pi, 1.0), grid2048, peak=1.0)
    assert lab.test_diagonal_support(F, away, TRIALS, seed=7).verdict == lab.PASS


# ─── Verdict ──────────────────────────────────────────────────────────────────

EXPECTED_CLASSIFICATION = {
    "F2": lab.LOCAL,
    "F3": lab.LOCAL,
    "G": lab.NONLOCAL,
    "H": lab.LOCAL,
    "I": lab.LOCAL,
    "J": lab.NONLOCAL,
    "K": lab.LOCAL,
    "L_quartic": lab.LOCAL,
    "unbounded_order": lab.LOCAL,
    "F_nl": lab.NONLOCAL,
}

DEFAULT_SEED = 1234
STABILITY_SEEDS = (1, 2, 3, 4, 5)
STABILITY_TRIALS = 10


@pytest.fixture(scope="module")
def default_verdict(members, grid2048):
    """Verdicts at the default trial count, computed once per functional."""
    cache = {}

    def verdict_for(name):
        if name not in cache:
            F = members[name]
            samples = lab.default_samples(F, grid2048, seed=DEFAULT_SEED + list(members).index(name))
            cache[name] = lab.locality_verdict(F, samples, trials=lab.DEFAULT_TRIALS, seed=DEFAULT_SEED)
        return cache[name]

    return verdict_for


@pytest.mark.parametrize("name, expected", EXPECTED_CLASSIFICATION.items())
def test_classification_table(default_verdict, name, expected):
    report = default_verdict(name)
    assert report.verdict == expected, report.note
    assert len(report.sub_reports) == 4 * 3
    if expected == lab.NONLOCAL:
        assert report.note.startswith("failing: ")
        assert any(t.startswith("additivity@") for t in report.failing_conditions)


@pytest.mark.parametrize("name", [n for n in EXPECTED_CLASSIFICATION if n != "F_nl"])
def test_additivity_and_diagonal_support_agree(default_verdict, name):
    by_test = {r.test: r.verdict for r in default_verdict(name).sub_reports}
    for k in range(3):
        assert by_test[f"additivity@phi{k}"] == by_test[f"diagonal_support@phi{k}"], k


@pytest.mark.parametrize("seed", STABILITY_SEEDS)
def test_classification_is_stable_across_seeds(members, grid2048, seed):
    observed = {}
    for name, F in members.items():
        samples = lab.default_samples(F, grid2048, seed=seed)
        observed[name] = lab.locality_verdict(F, samples, trials=STABILITY_TRIALS, seed=seed).verdict
    assert observed == EXPECTED_CLASSIFICATION


def test_vanishing_gradient_passes_smoothness(members, grid2048):
    report = lab.locality_verdict(members["H"], [Field.constant(grid2048, 1.0)], trials=2, seed=0)
    smoothness = next(r for r in report.sub_reports if r.test == "smoothness@phi0")
    assert smoothness.verdict == lab.PASS
    assert smoothness.note == lab.VANISHING_GRADIENT_NOTE
    assert smoothness.parameters["gradient_norm"] <= lab.GRADIENT_FLOOR


def test_vanishing_second_derivative_never_fails(members, grid2048):
    # F is affine near an integer level, so every normalizer is lost in round-off.
    report = lab.test_diagonal_support(members["unbounded_order"], Field.constant(grid2048, 1.0), TRIALS, seed=4)
    assert report.verdict != lab.FAIL
    assert "vanishing second derivative" in report.note


def test_unbounded_samples_avoid_integer_levels(members, grid2048):
    samples = lab.default_samples(members["unbounded_order"], grid2048)
    levels = [s.samples[0] for s in samples]
    assert levels == list(lab.UNBOUNDED_SAMPLE_LEVELS)
    assert all(level != round(level) for level in levels)


# ─── Support and CSV ──────────────────────────────────────────────────────────

def test_windowed_functional_support(grid2048):
    F = make_local(Pow(JetVar(0), 2), window=SupportWindow(math.pi, 0.5))
    probe = lab.functional_support(F, Field.zeros(grid2048))
    expected = [TWO_PI * i / 16 for i in (7, 8, 9)]
    assert probe.support_centers == pytest.approx(expected)


def test_report_csv(members, grid2048, tmp_path):
    report = lab.test_additivity(members["G"], 3, seed=1, grid=grid2048)
    path = lab.report_to_csv(report, tmp_path / "additivity.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(lab.REPORT_CSV_HEADER)
    assert len(lines) == 1 + 3 + 1
    assert lines[-1].startswith("# summary G additivity: fail")
