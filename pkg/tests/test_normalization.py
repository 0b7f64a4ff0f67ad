import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bsde_eigen import autodiff as ad
from bsde_eigen.normalization import (
    NormState,
    PiecewiseConstant,
    batch_estimate,
    batch_estimate_var,
    hinge_penalty,
    update_moving_average,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(1, 64), elements=finite)


def test_batch_estimate_examples():
    assert batch_estimate([1.0, 1.0, 1.0]) == 1.0
    assert batch_estimate([-2.0, -2.0]) == -2.0
    assert batch_estimate([3.0, -3.0]) == 0.0


def test_batch_estimate_empty():
    with pytest.raises(ValueError):
        batch_estimate([])


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
def test_scale_covariance(v, a):
    assume(abs(v.sum()) > 1e-9 * max(1.0, np.abs(v).sum()))
    np.testing.assert_allclose(batch_estimate(a * v), a * batch_estimate(v), rtol=1e-12)
    np.testing.assert_allclose(batch_estimate(-a * v), -a * batch_estimate(v), rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_var_twin_matches_float(v):
    assume(abs(v.sum()) > 1e-9 * max(1.0, np.abs(v).sum()))
    assume(np.any(v != 0))
    t = ad.Tape()
    assert float(batch_estimate_var(t.leaf(v)).value) == pytest.approx(batch_estimate(v), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(finite, st.floats(0.0, 0.999))
def test_moving_average_fixed_point(z, gamma):
    assert update_moving_average(z, z, gamma) == pytest.approx(z, rel=1e-12, abs=1e-12)


@given(finite)
def test_moving_average_first_call_adopts_estimate(z):
    assert update_moving_average(None, z, 0.5) == z


def test_moving_average_converges_to_constant_input():
    state = NormState(PiecewiseConstant((0.9,)))
    state.update(-1.0, 1)
    for step in range(2, 400):
        state.update(3.0, step)
    assert state.Z == pytest.approx(3.0, rel=1e-12)


def test_degenerate_batch_keeps_previous():
    state = NormState(PiecewiseConstant((0.5,)))
    state.update(2.5, 1)
    assert state.update(0.0, 2) == 2.5
    assert state.degenerate_batches == 1


def test_hinge_threshold():
    assert hinge_penalty(2.0) == 0.0
    assert hinge_penalty(2.5) == 0.0
    assert hinge_penalty(1.5) == pytest.approx(50.0)
    assert hinge_penalty(-1.0) == pytest.approx(300.0)


@given(st.floats(-10, 10))
def test_hinge_piecewise_linear(z):
    expected = 100.0 * max(2.0 - z, 0.0)
    assert hinge_penalty(z) == pytest.approx(expected, abs=1e-9)
    t = ad.Tape()
    assert float(hinge_penalty(t.leaf(z)).value) == pytest.approx(expected, abs=1e-9)


def test_hinge_gradient():
    t = ad.Tape()
    z = t.leaf(1.0)
    assert ad.backward(hinge_penalty(z), wrt=[z])[z] == -100.0
    t = ad.Tape()
    z = t.leaf(3.0)
    assert ad.backward(hinge_penalty(z), wrt=[z])[z] == 0.0


def test_schedule_boundaries():
    lr = PiecewiseConstant((1e-4, 5e-5, 1e-5), (30000, 60000))
    assert lr(1) == 1e-4
    assert lr(30000) == 1e-4
    assert lr(30001) == 5e-5
    assert lr(60000) == 5e-5
    assert lr(60001) == 1e-5
    assert lr(10**6) == 1e-5


def test_schedule_validation():
    with pytest.raises(ValueError):
        PiecewiseConstant((1.0, 2.0), ())
    with pytest.raises(ValueError):
        PiecewiseConstant((1.0, 2.0, 3.0), (5, 2))


def test_schedule_scaled():
    s = PiecewiseConstant((1.0, 2.0, 3.0), (30000, 60000)).scaled(0.1)
    assert s.boundaries == (3000, 6000)
