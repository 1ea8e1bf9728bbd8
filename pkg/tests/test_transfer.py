import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from hexrefit.demos import distorted_grid
from hexrefit.mesh import gauss_points
from hexrefit.transfer import (
    BasisFallbackWarning,
    FieldSpec,
    OrphanQueryError,
    PatchError,
    TransferSummary,
    logmls_interpolate,
    mls_fit,
    mls_interpolate,
    normalized_weights,
    polynomial_basis,
    transfer_fields,
)


def test_weights_sum_to_one(rng):
    pts = rng.uniform(-1, 1, (20, 3))
    w = normalized_weights(pts, np.zeros(3), 9.0)
    assert abs(w.sum() - 1.0) < 1e-14 and np.all(w > 0)


def test_weights_underflow():
    with pytest.raises(PatchError, match="underflow"):
        normalized_weights(np.array([[100.0, 0, 0]]), np.zeros(3), 1e3)


@pytest.mark.parametrize("order", [0, 1, 2])
def test_polynomial_reproduction(order, rng):
    for _ in range(20):
        pts = rng.uniform(-1, 1, (25, 3))
        xp = rng.uniform(-0.5, 0.5, 3)
        coef = rng.standard_normal(10)[: {0: 1, 1: 4, 2: 10}[order]]
        vals = polynomial_basis(pts, np.zeros(3), order) @ coef
        exact = polynomial_basis(xp[None], np.zeros(3), order) @ coef
        assert mls_interpolate(pts, vals, xp, order) == pytest.approx(exact[0], abs=1e-10)


def test_rank_deficient_patch_falls_back():
    # collinear points: linear basis is rank deficient
    pts = np.c_[np.linspace(0, 1, 6), np.zeros(6), np.zeros(6)]
    with pytest.warns(BasisFallbackWarning):
        val, used = mls_fit(pts, np.ones(6), np.array([0.5, 0, 0]), order=1)
    assert used == 0 and val == pytest.approx(1.0)
    with pytest.raises(PatchError):
        mls_fit(pts, np.ones(6), np.array([0.5, 0, 0]), order=1, strict=True)


def test_too_few_points_for_quadratic(rng):
    pts = rng.uniform(-1, 1, (6, 3))
    with pytest.warns(BasisFallbackWarning):
        _, used = mls_fit(pts, pts[:, 0], np.zeros(3), order=2)
    assert used == 1


@given(arrays(np.float64, 12, elements=st.floats(-5, 5)), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_order0_is_bounded(vals, seed):
    pts = np.random.default_rng(seed).uniform(-1, 1, (12, 3))
    v = mls_interpolate(pts, vals, np.zeros(3), order=0)
    assert vals.min() - 1e-12 <= v <= vals.max() + 1e-12


def test_consensus(rng):
    pts = rng.uniform(-1, 1, (15, 3))
    for order in (0, 1, 2):
        assert mls_interpolate(pts, np.full(15, 3.25), np.zeros(3), order) == pytest.approx(3.25, abs=1e-12)
        assert logmls_interpolate(pts, np.full(15, 3.25), np.zeros(3), order) == pytest.approx(3.25, rel=1e-12)


def test_logmls_positive_where_mls_is_not():
    # steep positive data whose linear MLS extrapolation goes negative
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0.0]])
    vals = np.array([1.0, 1e-6, 1.0, 1.0, 1e-6])
    xp = np.array([1.6, 0.2, 0.0])
    assert mls_interpolate(pts, vals, xp, 1, c=0.01) < 0
    assert logmls_interpolate(pts, vals, xp, 1, c=0.01) > 0


def test_logmls_rejects_nonpositive():
    with pytest.raises(ValueError, match="positive"):
        logmls_interpolate(np.eye(3), np.array([1.0, 0.0, 2.0]), np.zeros(3), order=0)


def test_identity_transfer_reproduces_nodal_field(rng):
    m = distorted_grid(n=6)
    f = rng.standard_normal(m.n_nodes)
    out = transfer_fields(m.nodes, {"s": f}, m.nodes)["s"]
    assert np.array_equal(out, f)


def test_linear_field_across_perturbed_grid(rng):
    old = distorted_grid(n=8, seed=1)
    new = distorted_grid(n=8, seed=2)
    a = rng.standard_normal(4)
    lin = lambda p: a[0] + p @ a[1:]  # noqa: E731
    q = gauss_points(new)
    out = transfer_fields(old.nodes, {"s": lin(old.nodes)}, q)["s"]
    assert np.abs(out - lin(q)).max() <= 1e-10


def test_patch_radius_grows_and_orphans_are_listed():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1.0]])
    summary = TransferSummary()
    out = transfer_fields(pts, {"s": np.ones(5)}, np.array([[0.5, 0.5, 0.5]]), {"s": FieldSpec(r_p=0.6)}, summary)
    assert out["s"][0] == pytest.approx(1.0)
    assert summary.grown == 1
    with pytest.raises(OrphanQueryError) as err:
        transfer_fields(pts, {"s": np.ones(5)}, np.array([[0.5, 0.5, 0.5], [50.0, 0, 0]]), {"s": FieldSpec(r_p=0.9)})
    assert err.value.queries == [1]


def test_fallback_count_is_reported(rng):
    pts = np.c_[np.linspace(0, 1, 8), np.zeros(8), np.zeros(8)]
    summary = TransferSummary()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        transfer_fields(pts, {"s": pts[:, 0]}, np.array([[0.3, 0, 0]]), {"s": FieldSpec(r_p=1.0)}, summary)
    assert summary.fallbacks["s"] == 1
    assert any(issubclass(w.category, BasisFallbackWarning) for w in caught)


def test_unknown_scheme():
    with pytest.raises(ValueError, match="scheme"):
        transfer_fields(np.eye(3), {"s": np.ones(3)}, np.array([[0.1, 0.1, 0.1]]), {"s": FieldSpec("cubic", 0, r_p=5)})
