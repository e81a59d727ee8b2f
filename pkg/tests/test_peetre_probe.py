import numpy as np
import pytest

import peetre_probe as pp
from functional_zoo import zoo_by_name
from grid_core import Field, GridSpec, integrate, random_field
from jet_lagrangian import JetVar, Pow, euler_lagrange, standard_coefficients, quartic_gradient

LAMBDAS = (0.25, 0.125, 0.0625)


@pytest.fixture(scope="module")
def fine():
    return GridSpec(8192)


def two_points(grid):
    return pp.PointSet((grid.nodes[grid.n_points // 8], grid.nodes[5 * grid.n_points // 8]))


# ─── Point sets ───────────────────────────────────────────────────────────────

def test_point_set_wraps_and_rejects():
    X = pp.PointSet((7.0,))
    assert X.points[0] == pytest.approx(7.0 - 2 * np.pi)
    with pytest.raises(ValueError, match="at least one"):
        pp.PointSet(())
    with pytest.raises(ValueError, match="distinct"):
        pp.PointSet((1.0, 1.0))


def test_point_set_distance(grid):
    X = pp.PointSet((0.0, np.pi))
    d = X.distance(grid)
    assert d.max() == pytest.approx(np.pi / 2, abs=grid.spacing)
    assert d[X.node_indices(grid)].tolist() == [0.0, 0.0]


# ─── Mollifier ────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("lam", LAMBDAS)
def test_mollifier_shape(fine, lam):
    X = two_points(fine)
    chi = pp.mollifier(X, lam, fine)
    d = X.distance(fine)
    assert np.allclose(chi.samples[d <= lam / 8], 1.0, atol=1e-12)
    assert np.allclose(chi.samples[d >= lam], 0.0, atol=1e-12)
    assert chi.samples.min() >= -1e-12 and chi.samples.max() <= 1.0 + 1e-12


@pytest.mark.parametrize("lam", LAMBDAS)
def test_mollifier_mass(fine, lam):
    X = two_points(fine)
    mass = integrate(pp.mollifier(X, lam, fine))
    assert len(X) * lam / 4 * (1 - 1e-9) <= mass <= len(X) * 2 * lam
    # One λ-wide indicator per point, up to a cell at each edge.
    assert mass == pytest.approx(len(X) * lam, rel=5e-2)


def test_mollifier_rejects_bad_lambda(grid, fine):
    X = two_points(fine)
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        pp.mollifier(X, 1.5, fine)
    with pytest.raises(ValueError, match="refine the grid"):
        pp.mollifier(pp.PointSet((0.0,)), 2.0 ** -6, grid)


# ─── Peetre estimate ──────────────────────────────────────────────────────────

@pytest.mark.parametrize("m", [0, 1, 2])
def test_vanishing_trials_keep_ratios_bounded(fine, m):
    X = two_points(fine)
    trials = [pp.vanishing_trial(fine, X, m, s) for s in (1, 2)]
    table = pp.check_peetre_estimate(X, m, LAMBDAS, trials)
    assert len(table.rows) == len(trials) * len(LAMBDAS)
    assert table.reference_ratio > 0.0
    assert table.bounded(3.0)


def test_non_vanishing_trial_rejected(fine):
    X = two_points(fine)
    phi = random_field(fine, 3, 4, 0.5, 1.0) + 2.0
    with pytest.raises(ValueError, match="does not vanish"):
        pp.check_peetre_estimate(X, 0, LAMBDAS, [phi])


def test_negative_order_rejected(fine):
    with pytest.raises(ValueError, match="non-negative"):
        pp.check_peetre_estimate(two_points(fine), -1, LAMBDAS, [])


def test_table_csv(fine, tmp_path):
    X = two_points(fine)
    table = pp.check_peetre_estimate(X, 0, LAMBDAS[:2], [pp.vanishing_trial(fine, X, 0, 5)])
    lines = pp.peetre_table_to_csv([table], tmp_path / "ratios.csv").read_text().splitlines()
    assert lines[0] == ",".join(pp.PEETRE_CSV_HEADER)
    assert len(lines) == 3
    assert lines[1].startswith("0,")


# ─── Jet determination ────────────────────────────────────────────────────────

def test_jet_witness_vanishes_on_points(grid2048):
    X = two_points(grid2048)
    delta = pp.jet_witness(grid2048, X, 1, seed=4)
    for i in X.node_indices(grid2048):
        assert abs(delta.samples[i]) <= 1e-12
    assert delta.max_abs() > 0.5


def test_square_density_is_zero_jet_determined(grid2048):
    X = two_points(grid2048)
    result = pp.test_jet_determination(pp.density_map(Pow(JetVar(0), 2)), (0, 1, 2), X, grid=grid2048, trials=3)
    assert result.order == 0
    assert result.describe() == "determined by 0-jets"


def test_quartic_euler_lagrange_needs_two_jets(grid2048):
    c = standard_coefficients(grid2048)
    el = euler_lagrange(quartic_gradient(c["h"], c["g"])).expr
    X = two_points(grid2048)
    result = pp.test_jet_determination(pp.density_map(el), (0, 1, 2, 3), X, grid=grid2048, trials=3)
    assert result.order == 2
    assert set(result.witnesses) == {0, 1}
    assert result.residuals[3] <= pp.JET_TOL


def test_integral_map_is_not_jet_determined(grid2048):
    X = two_points(grid2048)
    result = pp.test_jet_determination(pp.integral_map, (0, 1, 2), X, grid=grid2048, trials=3)
    assert not result.determined
    assert set(result.witnesses) == {0, 1, 2}


# ─── k-local maps ─────────────────────────────────────────────────────────────

def test_product_of_densities_is_k_local(grid2048):
    F = pp.product_of_densities(Pow(JetVar(1), 2))
    assert pp.test_k_local(F, 2, trials=5, grid=grid2048).verdict == "pass"


def test_point_times_integral_is_not_local(grid2048):
    report = pp.test_k_local(pp.point_times_integral, 1, trials=5, grid=grid2048, name="point_times_integral")
    assert report.verdict == "fail"
    assert report.test == "1_local"


def test_constant_map_is_local(grid2048):
    assert pp.test_k_local(pp.constant_map, 3, trials=5, grid=grid2048).verdict == "pass"


def test_k_range(grid2048):
    with pytest.raises(ValueError, match="1 ≤ k ≤ 3"):
        pp.test_k_local(pp.constant_map, 4, grid=grid2048)


def test_pointwise_additivity(grid2048):
    c = standard_coefficients(grid2048)
    el = pp.density_map(euler_lagrange(quartic_gradient(c["h"], c["g"])).expr)
    assert pp.test_peetre_local_additivity(el, trials=4, grid=grid2048).verdict == "pass"

    def squared_mean(phi):
        return Field.constant(phi.grid, integrate(phi) ** 2)

    assert pp.test_peetre_local_additivity(squared_mean, trials=4, grid=grid2048).verdict == "fail"


def test_functional_density_map(grid):
    members = zoo_by_name(grid)
    f = standard_coefficients(grid)["f"]
    phi = random_field(grid, 8, 4, 0.5, 0.5)
    out = pp.functional_density_map(members["F2"])(phi)
    assert np.allclose(out.samples, 2.0 * f.samples * phi.samples, atol=1e-12)
    with pytest.raises(ValueError, match="no jet density"):
        pp.functional_density_map(members["J"])
