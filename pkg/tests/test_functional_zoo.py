import math

import numpy as np
import pytest

from grid_core import TWO_PI, Field, GridSpec, SupportWindow, bump, integrate, random_field, seminorm, sobolev_norm
from jet_lagrangian import Coeff, JetVar, Pow, Prod, quartic_gradient, standard_coefficients
from functional_zoo import (
    FUNCTIONAL_KINDS,
    Functional,
    counterexample_cutoff,
    counterexample_thresholds,
    default_kernel,
    distance_from_one,
    embedding_constant,
    evaluate_by_jets,
    hammerstein_witness,
    make_counterexample,
    make_local,
    make_unbounded_order,
    zoo,
    zoo_by_name,
)

ZOO_NAMES = ["F2", "F3", "G", "H", "I", "J", "K", "L_quartic", "unbounded_order"]


def test_zoo_is_enumerable_by_name(grid):
    members = zoo_by_name(grid)
    assert list(members) == ZOO_NAMES + ["F_nl"]
    for F in members.values():
        assert F.kind in FUNCTIONAL_KINDS
        assert F.metadata()["name"] == F.name


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="kind"):
        Functional(name="bad", evaluate=lambda phi: 0.0, kind="mystery")


def test_missing_analytic_order_rejected(grid):
    J = zoo_by_name(grid)["J"]
    phi = Field.zeros(grid)
    with pytest.raises(ValueError, match="no closed-form"):
        J.analytic_derivative(phi, [phi] * 4)


# ─── make_local ───────────────────────────────────────────────────────────────

def test_local_linear_density_on_sine(grid):
    F = make_local(JetVar(0))
    assert F(Field.from_function(grid, np.sin)) == pytest.approx(0.0, abs=1e-12)


def test_local_square_on_sine(grid):
    F = make_local(Pow(JetVar(0), 2))
    assert F(Field.from_function(grid, np.sin)) == pytest.approx(math.pi, abs=1e-10)


def test_local_quartic_unit_coefficients_on_sine(grid):
    one = Field.constant(grid, 1.0)
    F = make_local(quartic_gradient(one, one))
    assert F(Field.from_function(grid, np.sin)) == pytest.approx(7 * math.pi / 4, abs=1e-10)


def test_local_window_restricts_support(grid):
    window = SupportWindow(math.pi, 0.5)
    F = make_local(Pow(JetVar(0), 2), window=window)
    far = bump(SupportWindow(0.0, 1.0), grid)
    assert F(far) == 0.0
    assert F(Field.constant(grid, 1.0)) > 0.0


def test_vectorized_and_jet_paths_agree(grid256):
    c = standard_coefficients(grid256)
    F = make_local(quartic_gradient(c["h"], c["g"]), window=SupportWindow(1.0, 1.2))
    phi = random_field(grid256, 12, 4, 0.5, 0.5)
    assert F(phi) == pytest.approx(evaluate_by_jets(F, phi), rel=1e-12)


def test_local_first_derivative_from_euler_lagrange(grid):
    c = standard_coefficients(grid)
    F = make_local(Prod((Coeff("f", c["f"]), Pow(JetVar(0), 2))))
    phi = random_field(grid, 1, 4, 0.5)
    v = random_field(grid, 2, 4, 0.5)
    expected = 2.0 * integrate(c["f"] * phi * v)
    assert F.analytic_derivative(phi, [v]) == pytest.approx(expected, rel=1e-12)


# ─── Closed forms ─────────────────────────────────────────────────────────────

def test_power_functional_closed_form(grid):
    F2 = zoo_by_name(grid)["F2"]
    c = standard_coefficients(grid)
    assert F2(Field.constant(grid, 2.0)) == pytest.approx(4.0 * integrate(c["f"]))


def test_bilocal_kernel_is_symmetric_and_positive(grid64):
    kernel = default_kernel(grid64)
    m = kernel.matrix()
    np.testing.assert_allclose(m, m.T)
    assert np.min(m) > 0.0


def test_bilocal_cross_term_nonzero_on_disjoint_bumps(grid):
    G = zoo_by_name(grid)["G"]
    psi = bump(SupportWindow(0.5, 0.4), grid)
    chi = bump(SupportWindow(0.5 + math.pi, 0.4), grid)
    assert abs(G.analytic_derivative(Field.zeros(grid), [psi, chi])) > 1e-3


def test_exp_integral_derivative(grid):
    J = zoo_by_name(grid)["J"]
    c = standard_coefficients(grid)
    phi = random_field(grid, 5, 3, 0.5, 0.3)
    v = random_field(grid, 6, 3, 0.5)
    expected = J(phi) * integrate(c["f"] * v)
    assert J.analytic_derivative(phi, [v]) == pytest.approx(expected, rel=1e-12)


# ─── Unbounded order ──────────────────────────────────────────────────────────

@pytest.mark.parametrize("level", [1, 2, 3])
def test_unbounded_order_vanishes_at_integer_constants(grid, level):
    F = make_unbounded_order()
    assert F(Field.constant(grid, float(level))) == pytest.approx(0.0, abs=1e-9)


def test_unbounded_order_first_derivative_pairs_with_poisson(grid):
    F = make_unbounded_order()
    x = grid.nodes
    v = Field(grid, np.cos(3 * x))
    value = F.analytic_derivative(Field.constant(grid, 2.0), [v])
    # only χ_2 fires: ∫ v″ P_ρ = -9 · 2π ρ³ for v = cos 3x
    assert value == pytest.approx(-9.0 * TWO_PI * 0.6 ** 3, rel=1e-9)


# ─── Counterexample ───────────────────────────────────────────────────────────

def test_counterexample_constants(grid):
    c = embedding_constant(grid)
    a, b = counterexample_thresholds(grid)
    assert 0.19 < c < 0.22
    assert a == pytest.approx(1.0 / (3 * c * c))
    assert b == pytest.approx(1.0 / (2 * c * c))


@pytest.mark.parametrize("seed", range(100))
def test_embedding_inequality(grid256, seed):
    c = embedding_constant(grid256)
    f = random_field(grid256, seed, seed % 24, 0.85, 1.0 + seed / 50)
    assert seminorm(f, 0) <= c * sobolev_norm(f, 1) * (1 + 1e-12)


def test_embedding_constant_is_grid_stable():
    assert embedding_constant(GridSpec(256)) == pytest.approx(embedding_constant(GridSpec(512)), abs=1e-6)


@pytest.mark.parametrize("N", [2, 3])
def test_counterexample_at_one(grid, N):
    F = make_counterexample(N)
    assert F(Field.constant(grid, 1.0)) == pytest.approx(TWO_PI ** N, rel=1e-8)


def test_counterexample_cutoff_regimes(grid):
    assert counterexample_cutoff(Field.constant(grid, 1.0)) == 1.0
    assert counterexample_cutoff(Field.zeros(grid)) == 0.0


def test_counterexample_rejects_small_exponent():
    with pytest.raises(ValueError):
        make_counterexample(1)


@pytest.mark.parametrize("N", [2, 3])
def test_hammerstein_witness(grid, N):
    w = hammerstein_witness(grid, N)
    assert w.residual == pytest.approx(TWO_PI ** N - TWO_PI, rel=1e-9)


def test_sums_of_disjoint_fields_stay_away_from_one(grid):
    a = bump(SupportWindow(1.0, 0.8), grid, peak=1.0)
    b = bump(SupportWindow(1.0 + math.pi, 0.8), grid, peak=0.9)
    assert distance_from_one(a + b) >= 1.0


def test_zoo_members_have_analytic_first_derivatives(grid):
    for F in zoo(grid):
        assert F.has_analytic(1), F.name
