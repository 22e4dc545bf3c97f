import numpy as np
import pytest

from qds.errors import AdmissibilityError, ConvergenceError, DimensionError
from qds.pm_map import PMMap
from qds.transfer_op import (Grid, GridDensity, OperatorCache, apply_density, build_ulam,
                             compose_apply, density_from_csv, density_to_csv, exact_transfer,
                             l1_distance, power_iterate, srb_density)

from .oracles import cell_averaged_transfer


def test_exact_transfer_examples():
    one = lambda x: np.ones_like(x)  # noqa: E731
    assert exact_transfer(PMMap(0.0), one, 0.4) == 1.0
    assert exact_transfer(PMMap(0.0), lambda x: x, 0.4) == pytest.approx(0.45, abs=1e-15)
    # 1/T'(1/2-) + 1/2 with T'(1/2-) = 1 + sqrt(2) * 1.5 * sqrt(1/2) = 2.5
    assert exact_transfer(PMMap(0.5), one, 1.0) == pytest.approx(0.9, abs=1e-12)


def test_ulam_doubling_small():
    assert np.array_equal(build_ulam(PMMap(0.0), 2).dense(), np.full((2, 2), 0.5))
    expected = np.array([[.5, .5, 0, 0], [0, 0, .5, .5], [.5, .5, 0, 0], [0, 0, .5, .5]])
    assert np.array_equal(build_ulam(PMMap(0.0), 4).dense(), expected)


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("grid", [Grid.uniform(257), Grid.graded(512)])
def test_rows_stochastic(alpha, grid):
    P = build_ulam(PMMap(alpha), grid).matrix
    assert np.abs(np.asarray(P.sum(axis=1)).ravel() - 1).max() <= 1e-12
    assert P.data.min() >= 0 and P.data.max() <= 1 + 1e-15


def test_apply_examples():
    op = build_ulam(PMMap(0.0), 64)
    u = GridDensity.uniform(64)
    assert np.allclose(apply_density(op, u).values, 1.0, atol=0, rtol=1e-15)
    z = apply_density(op, GridDensity.zeros(64))
    assert np.all(z.values == 0)
    d = apply_density(build_ulam(PMMap(0.0), 2), GridDensity(Grid.uniform(2), [2.0, 0.0]))
    assert d.values.tolist() == [1.0, 1.0]


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_density(build_ulam(PMMap(0.2), 8), GridDensity.uniform(16))
    with pytest.raises(DimensionError):
        l1_distance(GridDensity.uniform(8), GridDensity.uniform(16))
    with pytest.raises(DimensionError):
        l1_distance(GridDensity.uniform(Grid.uniform(64)), GridDensity.uniform(Grid.graded(64)))


def test_l1_examples():
    d = GridDensity.uniform(10)
    assert l1_distance(d, d) == 0
    assert l1_distance(d, GridDensity.zeros(10)) == 1.0
    g = Grid.uniform(2)
    assert l1_distance(GridDensity(g, [2, 0]), GridDensity(g, [0, 2])) == 2.0


def test_srb_doubling_is_uniform():
    op = build_ulam(PMMap(0.0), 64)
    d, resid, it = power_iterate(op)
    assert resid == 0.0 and it == 1
    assert np.array_equal(d.values, np.ones(64))


def test_srb_half_is_decreasing_with_unit_mass():
    d = srb_density(PMMap(0.5), 2048)
    assert abs(d.mass - 1) <= 1e-12
    assert np.all(np.diff(d.values) <= 0)
    assert d.values[0] > d.values[-1]


def test_srb_convergence_error_carries_residual():
    with pytest.raises(ConvergenceError) as info:
        srb_density(PMMap(0.5), 256, tol=1e-14, max_iter=3)
    assert info.value.residual > 1e-14 and info.value.iterations == 3


def test_compose_examples():
    u = GridDensity.uniform(1024)
    assert compose_apply([], 1024, u) is u
    assert np.allclose(compose_apply([0.0, 0.0], 1024, u).values, 1.0, rtol=1e-15)
    assert abs(compose_apply([0.2, 0.3], 1024, u).mass - 1) <= 1e-12
    with pytest.raises(AdmissibilityError):
        compose_apply([0.2, 0.6], 1024, u, beta_star=0.5)


def test_cache_quantizes_and_matches_fresh_build():
    cache = OperatorCache()
    a = cache.operator(0.23341, 256)
    b = cache.operator(0.23339, 256)
    assert a is b and a.alpha == 0.2334
    fresh = build_ulam(PMMap(0.2334), 256)
    assert (a.matrix != fresh.matrix).nnz == 0


def test_cache_thread_safety():
    from concurrent.futures import ThreadPoolExecutor
    cache = OperatorCache()
    alphas = [0.1, 0.2, 0.3] * 8
    with ThreadPoolExecutor(8) as pool:
        ops = list(pool.map(lambda a: cache.operator(a, 512), alphas))
    assert len({id(o) for o in ops}) == 3


def test_oracle_agreement_small():
    grid = Grid.uniform(1024)
    f = lambda x: 1.0 + 0.5 * np.cos(3 * x)  # noqa: E731
    matrix_route = apply_density(build_ulam(PMMap(0.4), grid), GridDensity.from_function(grid, f))
    exact_route = cell_averaged_transfer(0.4, f, grid)
    assert l1_distance(matrix_route, exact_route) <= 5 / 1024


def test_duality():
    N = 2048
    grid = Grid.uniform(N)
    pm = PMMap(0.3)
    h = GridDensity.power_profile(grid, 0.3)
    f = lambda x: np.sin(2 * x) + x  # noqa: E731
    lhs = np.sum(f(grid.midpoints) * apply_density(build_ulam(pm, grid), h).values) / N
    rhs = np.sum(f(pm(grid.midpoints)) * h.values) / N
    assert abs(lhs - rhs) <= 10 / N


def test_graded_grid_structure():
    g = Grid.graded(4096)
    assert g.edges[0] == 0 and g.edges[-1] == 1 and g.n_cells == 4096
    assert g.edges[1] == pytest.approx(1e-14)
    assert not g.is_uniform and Grid.uniform(8).is_uniform


def test_csv_round_trip(tmp_path):
    d = srb_density(PMMap(0.3), 64)
    path = tmp_path / "d.csv"
    density_to_csv(d, path, alpha=0.3)
    back = density_from_csv(path)
    assert np.array_equal(back.values, d.values)
    build_ulam(PMMap(0.3), 8).to_csv(tmp_path / "op.csv")
    lines = (tmp_path / "op.csv").read_text().splitlines()
    assert lines[0].startswith("# N=8") and lines[1] == "i,j,p"
