import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grid_core import (
    TWO_PI,
    Field,
    GridSpec,
    SupportWindow,
    arc_distance,
    bump,
    derivative_stack,
    field_from_csv,
    field_to_csv,
    fields_disjoint,
    integrate,
    plateau_cutoff,
    random_field,
    seminorm,
    smooth_step,
    sobolev_norm,
    spectral_derivative,
    spectrum_from_csv,
    spectrum_to_csv,
)


# ─── GridSpec ─────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("n", [0, 8, 100, 1000, True])
def test_gridspec_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        GridSpec(n)


def test_gridspec_nodes_and_guard(grid64):
    assert grid64.nodes[0] == 0.0
    assert grid64.spacing == pytest.approx(TWO_PI / 64)
    assert grid64.aliasing_guard == 16
    assert grid64.node_index(grid64.nodes[5]) == 5


def test_node_index_rejects_off_grid_points(grid64):
    with pytest.raises(ValueError, match="not a grid node"):
        grid64.node_index(0.5 * grid64.spacing)


# ─── Spectral derivative ──────────────────────────────────────────────────────

def test_derivative_of_sine_is_cosine(grid64):
    f = Field.from_function(grid64, np.sin)
    np.testing.assert_allclose(spectral_derivative(f, 1).samples, np.cos(grid64.nodes), atol=1e-12)


def test_derivative_of_constant_vanishes(grid64):
    f = Field.constant(grid64, 1.0)
    np.testing.assert_allclose(spectral_derivative(f, 1).samples, 0.0, atol=1e-14)


def test_second_derivative_of_exp_sin(grid256):
    x = grid256.nodes
    f = Field(grid256, np.exp(np.sin(x)))
    expected = (np.cos(x) ** 2 - np.sin(x)) * np.exp(np.sin(x))
    np.testing.assert_allclose(spectral_derivative(f, 2).samples, expected, atol=1e-8)


def test_derivative_order_beyond_guard_is_rejected(grid64):
    f = Field.from_function(grid64, np.sin)
    with pytest.raises(ValueError, match="aliasing guard"):
        spectral_derivative(f, 17)


def test_derivative_stack_rows(grid64):
    f = Field.from_function(grid64, np.sin)
    stack = derivative_stack(f, 3)
    x = grid64.nodes
    np.testing.assert_allclose(stack, [np.sin(x), np.cos(x), -np.sin(x), -np.cos(x)], atol=1e-12)


# ─── Integrals and norms ──────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "fn, expected, atol",
    [
        (lambda x: np.ones_like(x), TWO_PI, 1e-12),
        (np.sin, 0.0, 1e-12),
        (lambda x: np.sin(x) ** 2, math.pi, 1e-10),
    ],
)
def test_integrate(grid64, fn, expected, atol):
    assert integrate(Field.from_function(grid64, fn)) == pytest.approx(expected, abs=atol)


def test_seminorm_of_sine(grid64):
    f = Field.from_function(grid64, np.sin)
    assert seminorm(f, 0) == pytest.approx(1.0, abs=1e-10)
    assert seminorm(f, 1) == pytest.approx(1.0, abs=1e-10)
    assert seminorm(Field.zeros(grid64), 2, SupportWindow(1.0, 0.5)) == 0.0


def test_seminorm_rejects_empty_window(grid64):
    f = Field.from_function(grid64, np.sin)
    with pytest.raises(ValueError, match="no grid nodes"):
        seminorm(f, 0, SupportWindow(0.5 * grid64.spacing, 0.1 * grid64.spacing))


def test_sobolev_norm_closed_forms(grid64):
    assert sobolev_norm(Field.constant(grid64, 1.0), 1) == pytest.approx(TWO_PI)
    assert sobolev_norm(Field.zeros(grid64), 1) == 0.0
    assert sobolev_norm(Field.from_function(grid64, np.sin), 1) == pytest.approx(TWO_PI * math.sqrt(2.0))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), band=st.integers(0, 32))
def test_parseval(seed, band):
    grid = GridSpec(256)
    f = random_field(grid, seed, band, 0.8)
    energy = TWO_PI * float(np.sum(np.abs(f.spectrum) ** 2))
    assert integrate(f * f) == pytest.approx(energy, rel=1e-10, abs=1e-12)


def test_seminorm_is_monotone_in_order_and_window(grid256):
    f = random_field(grid256, 12, 6, 0.6)
    inner, outer = SupportWindow(1.0, 0.3), SupportWindow(1.0, 0.9)
    for windows in (inner, outer, None):
        values = [seminorm(f, m, windows) for m in range(4)]
        assert values == sorted(values)
    for m in range(4):
        assert seminorm(f, m, inner) <= seminorm(f, m, outer) <= seminorm(f, m)


# ─── Bumps and random fields ──────────────────────────────────────────────────

def test_bump_centre_value_and_support(grid64):
    w = SupportWindow(grid64.nodes[16], 0.8)
    b = bump(w, grid64)
    assert b.value_at(w.center) == pytest.approx(math.exp(-1.0))
    outside = arc_distance(grid64.nodes, w.center) >= w.radius
    assert np.all(b.samples[outside] == 0.0)


def test_bump_peak_override(grid64):
    b = bump(SupportWindow(grid64.nodes[8], 1.0), grid64, peak=2.5)
    assert b.max_abs() == pytest.approx(2.5)


def test_random_field_is_deterministic(grid64):
    a = random_field(grid64, 11, 8, 0.5)
    b = random_field(grid64, 11, 8, 0.5)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.isfinite(seminorm(a, 0))


def test_random_field_band_zero_is_constant(grid64):
    f = random_field(grid64, 3, 0, 0.5)
    assert np.ptp(f.samples) == pytest.approx(0.0, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), band=st.integers(0, 16))
def test_random_field_respects_band_limit(seed, band):
    grid = GridSpec(64)
    spectrum = random_field(grid, seed, band, 0.7).spectrum
    high = np.abs(grid.wavenumbers) > band
    assert np.max(np.abs(spectrum[high]), initial=0.0) < 1e-14


def test_fields_disjoint(grid256):
    a = bump(SupportWindow(1.0, 0.5), grid256)
    b = bump(SupportWindow(1.0 + math.pi, 0.5), grid256)
    assert fields_disjoint(a, b)
    assert not fields_disjoint(a, a)


# ─── Smooth step ──────────────────────────────────────────────────────────────

def test_smooth_step_limits():
    assert smooth_step(0.5, 1.0, 2.0) == 1.0
    assert smooth_step(2.5, 1.0, 2.0) == 0.0
    assert smooth_step(1.5, 1.0, 2.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        smooth_step(1.0, 2.0, 1.0)


def test_plateau_cutoff(grid256):
    c = plateau_cutoff(grid256, math.pi, 0.6)
    d = arc_distance(grid256.nodes, math.pi)
    assert np.all(c.samples[d <= 0.3] == 1.0)
    assert np.all(c.samples[d >= 0.6] == 0.0)


# ─── Field arithmetic and CSV ─────────────────────────────────────────────────

def test_fields_on_different_grids_do_not_mix(grid64, grid256):
    with pytest.raises(ValueError, match="different grids"):
        Field.zeros(grid64) + Field.zeros(grid256)


def test_non_finite_samples_rejected(grid64):
    vals = np.zeros(64)
    vals[3] = np.nan
    with pytest.raises(ValueError, match="finite"):
        Field(grid64, vals)


def test_field_csv_round_trip(grid64, tmp_path):
    f = random_field(grid64, 5, 6, 0.5)
    path = field_to_csv(f, tmp_path / "field.csv")
    np.testing.assert_array_equal(field_from_csv(path).samples, f.samples)


def test_spectrum_csv_round_trip(grid64, tmp_path):
    f = random_field(grid64, 9, 6, 0.5)
    path = spectrum_to_csv(f, tmp_path / "spectrum.csv")
    np.testing.assert_array_equal(spectrum_from_csv(path), f.spectrum)
