import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nestedunfold.bui import csc_divergence, csc_terms, rank_scores, score, select_t1_t2
from nestedunfold.metrics import weighted_bce


def _checker(n=8):
    return (np.indices((n, n)).sum(axis=0) % 2).astype(float)[:, :, None].repeat(3, axis=2)


def test_score_examples():
    gray = score(np.full((8, 8, 3), 0.5))
    assert gray.sharpness == 0.0 and gray.contrast == pytest.approx(0.0, abs=1e-12)
    assert gray.exposure == pytest.approx(1.0)
    black = score(np.zeros((8, 8, 3)))
    assert black.exposure == 0.0 and black.clarity == 1.0
    assert score(_checker()).composite > gray.composite


def test_score_rejects_bad_weights():
    with pytest.raises(ValueError):
        score(np.zeros((4, 4, 3)), weights=(0, 0, 0, 0))
    with pytest.raises(ValueError):
        score(np.zeros((4, 4, 3)), weights=(1, -1, 0, 0))


def test_rank_examples():
    assert rank_scores([0.3, 0.9, 0.5]) == (1, 2)
    assert rank_scores([0.5, 0.5]) == (0, 1)
    assert rank_scores([0.7]) == (0, 0)
    with pytest.raises(ValueError):
        rank_scores([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=8), st.floats(0.01, 100.0))
def test_rank_invariant_under_increasing_transforms(ints, scale):
    scores = [float(v) for v in ints]
    base = rank_scores(scores)
    assert rank_scores([scale * s for s in scores]) == base
    assert rank_scores([np.exp(s) for s in scores]) == base


def test_select_t1_t2_on_rasters():
    iterates = [np.full((8, 8, 3), 0.5), _checker(), np.zeros((8, 8, 3))]
    t1, t2 = select_t1_t2(iterates)
    assert t1 == 1
    with pytest.raises(ValueError):
        select_t1_t2([])


def test_csc_examples(rng):
    m = rng.uniform(0, 1, (8, 8))
    bce, iou = csc_terms(m, m)
    assert iou == pytest.approx(0.0, abs=1e-12)
    assert bce == pytest.approx(weighted_bce(m, m))
    binary = (m > 0.5).astype(float)
    assert csc_terms(binary, 1 - binary)[1] == 1.0
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    b = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert csc_terms(a, b)[1] == pytest.approx(0.5)
    assert csc_divergence(a, b) == pytest.approx(sum(csc_terms(a, b)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_csc_iou_symmetric_for_binary(seed):
    rng = np.random.default_rng(seed)
    a = (rng.uniform(0, 1, (6, 6)) > 0.5).astype(float)
    b = (rng.uniform(0, 1, (6, 6)) > 0.5).astype(float)
    assert csc_terms(a, b)[1] == pytest.approx(csc_terms(b, a)[1])
    assert csc_divergence(a, b) >= 0.0
