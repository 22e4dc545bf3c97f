import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from qds.cone import ConeParams, cone_membership, random_cone_density
from qds.param_curve import CurveSegment, PiecewiseHolderCurve, build_row, sample_curve
from qds.pm_map import PMMap, derivative, evaluate, left_preimage
from qds.transfer_op import GridDensity, apply_density, build_ulam

alphas = st.floats(0.0, 1.0)
points = st.floats(0.0, 1.0)


@given(alphas, points)
def test_evaluate_stays_in_unit_interval(a, x):
    y = evaluate(PMMap(a), x)
    assert 0.0 <= y <= 1.0


# x = 1 is excluded: its left-branch preimage is the endpoint 1/2 of the open branch
@given(alphas, st.floats(0.0, 1.0, exclude_max=True))
def test_round_trip(a, x):
    pm = PMMap(a)
    assert abs(evaluate(pm, left_preimage(pm, x, 1e-13)) - x) <= 1e-12


@given(alphas, points, points)
def test_preimage_monotone(a, x1, x2):
    lo, hi = sorted((x1, x2))
    pm = PMMap(a)
    assert left_preimage(pm, lo) <= left_preimage(pm, hi)


@given(st.floats(0.01, 1.0), points)
def test_derivative_at_least_one(a, x):
    d = derivative(PMMap(a), x)
    assert d >= 1.0
    if x > 1e-12:  # below this x^a may round away entirely
        assert d > 1.0


@given(points)
def test_alpha_zero_is_doubling(x):
    assert evaluate(PMMap(0.0), x) == (2 * x if x < 0.5 else 2 * x - 1)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
def test_mass_and_positivity(a, seed):
    rng = np.random.default_rng(seed)
    d = random_cone_density(rng, 256, 0.5)
    out = apply_density(build_ulam(PMMap(a), 256), d)
    assert abs(out.mass - d.mass) <= 1e-12
    assert out.values.min() >= 0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
def test_cone_invariance(a, seed):
    rng = np.random.default_rng(seed)
    params = ConeParams(0.5)
    d = random_cone_density(rng, 512, 0.5)
    out = apply_density(build_ulam(PMMap(a), 512), d)
    assert cone_membership(out, params, 1e-6 + 2 / 512).passes


@given(st.floats(0.0, 0.3), st.floats(0.0, 0.2), st.floats(0.1, 1.0), st.integers(1, 60))
def test_row_equals_samples(a0, c, theta, n):
    curve = PiecewiseHolderCurve((CurveSegment.power_holder(0.0, 1.0, a0, c, theta),), theta, 0.5)
    row = build_row(curve, n)
    assert all(row[k] == sample_curve(curve, k / n) for k in range(n + 1))
