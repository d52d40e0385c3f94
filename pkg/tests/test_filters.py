import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nestedunfold.filters import (
    dark_channel,
    grad2d,
    grad2d_adjoint,
    guided_filter,
    total_variation,
    tv_prox,
)


def test_grad_adjoint(rng):
    for shape in ((5, 7), (6, 6, 3)):
        u = rng.standard_normal(shape)
        px, py = rng.standard_normal(shape), rng.standard_normal(shape)
        gx, gy = grad2d(u)
        lhs = np.sum(gx * px) + np.sum(gy * py)
        assert lhs == pytest.approx(np.sum(u * grad2d_adjoint(px, py)), rel=1e-12)


def test_guided_filter_preserves_constants(rng):
    guide = rng.uniform(0, 1, (10, 10))
    assert np.allclose(guided_filter(guide, np.full((10, 10), 0.4), 2, 1e-3), 0.4)


def test_dark_channel_window():
    x = np.ones((9, 9, 3))
    x[4, 4, 1] = 0.0
    d = dark_channel(x, 3)
    assert d[4, 4] == 0.0 and d[3, 5] == 0.0 and d[0, 0] == 1.0


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (8, 8), elements=st.floats(0, 1)), st.floats(0.01, 0.5))
def test_tv_prox_does_not_increase_tv(g, weight):
    assert total_variation(tv_prox(g, weight, 50)) <= total_variation(g) + 1e-9


def test_tv_prox_spatial_weight_only_smooths_where_weighted(rng):
    g = rng.uniform(0, 1, (12, 12))
    weight = np.zeros((12, 12))
    assert np.allclose(tv_prox(g, weight), g)
    out = tv_prox(g, np.full((12, 12), 0.2))
    assert out.var() < g.var()
