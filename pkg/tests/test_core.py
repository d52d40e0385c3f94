import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nestedunfold.core import (
    StageState,
    as_mask,
    as_raster,
    decompose_residual,
    fidelity_energy,
    hadamard,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_hadamard_identity_and_annihilator(rng):
    b = rng.uniform(0, 1, (4, 5, 3))
    assert np.array_equal(hadamard(np.ones((4, 5)), b), b)
    assert np.array_equal(hadamard(np.zeros((4, 5)), b), np.zeros_like(b))


def test_hadamard_scalar():
    out = hadamard(np.array([[0.5]]), np.array([[[0.4]]]))
    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == pytest.approx(0.2)


def test_hadamard_rejects_mismatched_grid(rng):
    with pytest.raises(ValueError):
        hadamard(np.ones((4, 4)), rng.uniform(0, 1, (4, 5, 3)))


def test_decompose_residual_cases(rng):
    x = rng.uniform(0, 1, (6, 6, 3))
    gt = (rng.uniform(0, 1, (6, 6)) > 0.5).astype(float)
    assert np.allclose(decompose_residual(x, gt, x * (1 - gt[:, :, None])), 0.0)
    assert np.array_equal(decompose_residual(x, np.zeros((6, 6)), np.zeros_like(x)), x)
    r = decompose_residual(np.array([[[1.0]]]), np.array([[0.5]]), np.array([[[0.2]]]))
    assert r[0, 0, 0] == pytest.approx(0.3)


def test_fidelity_energy_cases(rng):
    assert fidelity_energy(np.ones((1, 1, 1)), np.zeros((1, 1)), np.zeros((1, 1, 1))) == 0.5
    x = rng.uniform(0, 1, (5, 5, 3))
    gt = (rng.uniform(0, 1, (5, 5)) > 0.5).astype(float)
    assert fidelity_energy(x, gt, x * (1 - gt[:, :, None])) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4, 3), elements=unit), arrays(np.float64, (3, 4), elements=unit))
def test_energy_quadruples_when_residual_doubles(x, m):
    # with B = 0 the residual is linear in X, so scaling X by 2 doubles it
    b = np.zeros_like(x)
    assert fidelity_energy(2 * x, m, b) == pytest.approx(4 * fidelity_energy(x, m, b), rel=1e-12, abs=1e-15)


def test_validation_rejects_bad_input():
    with pytest.raises(ValueError):
        as_raster(np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        as_raster(np.full((2, 2, 1), np.nan))
    with pytest.raises(ValueError):
        as_mask(np.zeros((2, 2, 3)))
    assert as_raster(np.zeros((3, 3))).shape == (3, 3, 1)


def test_initial_state():
    y = np.full((3, 3, 3), 0.25)
    s = StageState.initial(y)
    assert s.stage_index == 0
    assert np.array_equal(s.mask, np.zeros((3, 3)))
    assert np.array_equal(s.background, np.zeros((3, 3, 3)))
    assert s.x_t1 is s.x_t2
    assert np.array_equal(s.final_iterate, y)
