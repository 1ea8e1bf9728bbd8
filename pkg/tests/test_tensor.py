import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from hexrefit.tensor import (
    ClusteredEigenvaluesWarning,
    DecompositionError,
    RotationMeanError,
    decompose_tensor,
    rotation_exp,
    rotation_log,
    rotation_mean,
    tensor_interpolate_rmls,
)
from hexrefit.transfer import FieldSpec, TransferSummary, transfer_fields


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def random_spd(rng, lo=0.2, hi=5.0):
    Q = random_rotation(rng)
    return Q @ np.diag(rng.uniform(lo, hi, 3)) @ Q.T


def random_invertible(rng):
    return random_rotation(rng) @ random_spd(rng)


def test_decomposition_reconstructs(rng):
    for _ in range(50):
        T = random_invertible(rng)
        f = decompose_tensor(T)
        assert_allclose(f.tensor(), T, atol=1e-12)
        assert_allclose(f.R @ f.R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(f.R) == pytest.approx(1.0)
        assert np.linalg.det(f.Q) == pytest.approx(1.0)
        assert np.all(np.diff(f.lam) <= 0)


def test_decomposition_canonical_cases():
    f = decompose_tensor(np.diag([3.0, 2.0, 1.0]))
    assert_allclose(f.R, np.eye(3), atol=1e-15)
    assert_allclose(f.Q, np.eye(3), atol=1e-15)
    assert_allclose(f.lam, [3, 2, 1])
    iso = decompose_tensor(2.5 * np.eye(3))
    assert_allclose(iso.Q, np.eye(3))
    assert_allclose(iso.Lambda, 2.5 * np.eye(3))


def test_decomposition_errors():
    with pytest.raises(DecompositionError, match="reflection"):
        decompose_tensor(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(DecompositionError, match="singular"):
        decompose_tensor(np.diag([1.0, 1.0, 0.0]))


def test_rotation_log_exp_roundtrip(rng):
    for _ in range(20):
        w = rng.uniform(-1, 1, 3)
        assert_allclose(rotation_log(rotation_exp(w)), w, atol=1e-12)


def test_rotation_mean_cases(rng):
    Rs = np.array([random_rotation(rng) for _ in range(2)])
    assert np.array_equal(rotation_mean(Rs, [1.0, 0.0]), Rs[0])
    same = np.repeat(Rs[:1], 4, axis=0)
    assert_allclose(rotation_mean(same, rng.uniform(0.1, 1, 4)), Rs[0], atol=1e-14)
    # two rotations about a common axis: mean is the half-angle rotation
    a, b = rotation_exp([0, 0, 0.2]), rotation_exp([0, 0, 0.8])
    assert_allclose(rotation_mean(np.array([a, b]), [0.5, 0.5]), rotation_exp([0, 0, 0.5]), atol=1e-12)


def test_rotation_mean_reports_nonconvergence(rng):
    Rs = np.array([random_rotation(rng) for _ in range(6)])
    with pytest.raises(RotationMeanError):
        rotation_mean(Rs, np.ones(6), max_iter=1)


def test_rmls_consensus(rng):
    pts = rng.uniform(-1, 1, (12, 3))
    for T in (random_spd(rng), random_invertible(rng)):
        out = tensor_interpolate_rmls(pts, np.repeat(T[None], 12, axis=0), rng.uniform(-0.3, 0.3, 3), order=1)
        assert_allclose(out, T, atol=1e-10 * np.abs(T).max())


def test_rmls_spd_and_objectivity(rng):
    for _ in range(30):
        pts = rng.uniform(-1, 1, (12, 3))
        T = np.array([random_spd(rng) for _ in range(12)])
        xp = rng.uniform(-0.4, 0.4, 3)
        out = tensor_interpolate_rmls(pts, T, xp)
        assert_allclose(out, out.T, atol=1e-12 * np.abs(out).max())
        np.linalg.cholesky(out)
        R0 = random_rotation(rng)
        rot = tensor_interpolate_rmls(pts, R0 @ T @ R0.T, xp)
        assert_allclose(rot, R0 @ out @ R0.T, atol=1e-9 * np.abs(out).max())


def test_eigenvalue_clustering_falls_back(rng):
    pts = rng.uniform(-1, 1, (8, 3))
    T = np.array([Q @ np.diag([2.0, 1.0, 1.0]) @ Q.T for Q in (random_rotation(rng) for _ in range(8))])
    with pytest.warns(ClusteredEigenvaluesWarning):
        out = tensor_interpolate_rmls(pts, T, np.zeros(3))
    np.linalg.cholesky(out)


def test_isotropic_patch_without_warning(rng):
    pts = rng.uniform(-1, 1, (8, 3))
    T = np.array([s * np.eye(3) for s in rng.uniform(1, 2, 8)])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = tensor_interpolate_rmls(pts, T, np.zeros(3))
    assert_allclose(out, out[0, 0] * np.eye(3), atol=1e-14)


def test_transfer_fields_tensor_summary(rng):
    pts = rng.uniform(0, 1, (200, 3))
    T = np.array([random_spd(rng, 0.5, 2.0) for _ in range(200)])
    summary = TransferSummary()
    q = rng.uniform(0.2, 0.8, (20, 3))
    out = transfer_fields(pts, {"F": T}, q, {"F": FieldSpec("rmls", 1, r_p=0.3)}, summary)["F"]
    assert out.shape == (20, 3, 3)
    assert summary.spd_violations["F"] == 0
    comp = transfer_fields(pts, {"F": T}, q, {"F": FieldSpec("componentwise", 1, r_p=0.3)})["F"]
    assert comp.shape == (20, 3, 3)
