import itertools

import numpy as np
import pytest

from multical.core import LinearHypothesis, PredictionGrid, Transcript, make_rng
from multical.covers import (CoverSpec, cover_distance, cover_weights, lattice_spacing,
                             linear_cover, nearest_member, sample_l1_ball)
from multical.mcerror import k_error, k_error_all


def test_one_dimensional_fixture():
    W = cover_weights(CoverSpec(1, 1.0))
    assert sorted(W.ravel().tolist()) == [-1.0, 0.0, 1.0]
    assert len(linear_cover(CoverSpec(1, 1.0))) == 3 <= CoverSpec(1, 1.0).size_bound


def test_one_dimensional_cover_exhaustive():
    # every point of [-1, 1] on a fine grid is within 1 of {-1, 0, 1}
    pts = np.linspace(-1, 1, 20001)[:, None]
    assert cover_distance(pts, cover_weights(CoverSpec(1, 1.0))).max() <= 1.0 + 1e-12


def test_coarse_beta_gives_origin():
    W = cover_weights(CoverSpec(2, 2.0))
    assert W.tolist() == [[0.0, 0.0]]
    W = cover_weights(CoverSpec(1, 5.0))
    assert W.tolist() == [[0.0]]


def test_two_dimensional_fixture():
    spec = CoverSpec(2, 0.5)
    W = cover_weights(spec)
    assert len(W) == 13 <= 25
    assert np.all(np.abs(W).sum(axis=1) <= 1 + 1e-12)
    pts = sample_l1_ball(2, 1.0, 10_000, make_rng(0))
    assert cover_distance(pts, W).max() <= 0.5 + 1e-12


@pytest.mark.parametrize("d,k,beta", [(3, 1, 0.5), (2, 2, 0.6), (4, 1, 1.0), (1, 3, 0.5)])
def test_cover_property_higher_dims(d, k, beta):
    spec = CoverSpec(d, beta, degree=k)
    W = cover_weights(spec)
    assert np.all(np.abs(W).sum(axis=1) <= spec.bound + 1e-12)
    pts = sample_l1_ball(spec.n, spec.bound, 3000, make_rng(d * 10 + k))
    assert cover_distance(pts, W).max() <= beta + 1e-12


def test_nearest_member_is_in_cover_and_close():
    rng = make_rng(1)
    for d, beta in [(1, 1.0), (2, 0.5), (3, 0.4), (5, 1.0)]:
        spec = CoverSpec(d, beta)
        W = cover_weights(spec)
        keys = {tuple(np.round(w, 12)) for w in W}
        for p in sample_l1_ball(d, 1.0, 500, rng):
            q = nearest_member(p, spec)
            assert tuple(np.round(q, 12)) in keys
            assert np.abs(p - q).sum() <= beta + 1e-12


def test_lattice_spacing_rule():
    assert lattice_spacing(1, 1.0) == 1.0
    assert lattice_spacing(2, 0.5) == 0.5
    assert lattice_spacing(3, 0.6) == pytest.approx(0.3)
    assert lattice_spacing(4, 1.0) == 0.25


def test_size_bound_holds_small():
    for d, beta in itertools.product((1, 2), (1.0, 0.5, 0.25)):
        spec = CoverSpec(d, beta)
        assert len(cover_weights(spec)) <= spec.size_bound


def test_cap_and_spec_validation():
    with pytest.raises(ValueError):
        cover_weights(CoverSpec(6, 0.05), cap=1000)
    with pytest.raises(ValueError):
        CoverSpec(0, 1.0)
    with pytest.raises(ValueError):
        CoverSpec(1, 0.0)


def test_polynomial_cover_members():
    H = linear_cover(CoverSpec(1, 1.0, degree=2))
    assert all(h.degree == 2 for h in H.members)
    assert np.all(np.abs(H.values([0.5])) <= 1 + 1e-12)


def test_ball_sampler_inside_ball():
    pts = sample_l1_ball(3, 2.0, 5000, make_rng(2))
    assert np.abs(pts).sum(axis=1).max() <= 2.0


def test_lipschitz_transfer_to_cover():
    rng = make_rng(3)
    spec = CoverSpec(2, 0.5)
    H = linear_cover(spec)
    for _ in range(20):
        T, m = 100, 5
        W = np.zeros((T, m + 1))
        preds = rng.integers(0, m + 1, T)
        W[np.arange(T), preds] = 1
        tr = Transcript(PredictionGrid(m), rng.random((T, 2)), preds, rng.random(T), W)
        kmax = k_error_all(tr, H).max()
        for w in sample_l1_ball(2, 1.0, 50, rng):
            assert k_error(tr, LinearHypothesis(w)).total <= kmax + spec.beta + 1e-12
