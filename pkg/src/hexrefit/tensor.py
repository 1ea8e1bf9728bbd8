"""Structure-preserving interpolation of invertible second-order tensors.

Each sample is split as ``T = R Q^T diag(lam) Q`` (polar factor ``R``,
stretch eigenframe ``Q`` with eigenvectors as rows, eigenvalues ``lam``
sorted descending).  Eigenvalues are interpolated as scalars; ``R`` and
``Q`` are interpolated on the rotation group by fitting rotation vectors
relative to a weighted intrinsic mean (R-MLS).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .transfer import logmls_interpolate, mls_fit, mls_interpolate, normalized_weights


class DecompositionError(ValueError):
    pass


class RotationMeanError(RuntimeError):
    pass


class ClusteredEigenvaluesWarning(UserWarning):
    """Eigenframes ill defined; the frame falls back to a weighted mean."""


@dataclass
class TensorFactors:
    R: np.ndarray
    Q: np.ndarray
    lam: np.ndarray

    @property
    def Lambda(self):
        return np.diag(self.lam)

    def tensor(self):
        return self.R @ self.Q.T @ np.diag(self.lam) @ self.Q


def _canonical_rows(Q):
    Q = Q.copy()
    for k in range(3):
        i = np.argmax(np.abs(Q[k]))
        if Q[k, i] < 0:
            Q[k] = -Q[k]
    if np.linalg.det(Q) < 0:
        Q[2] = -Q[2]
    return Q


def decompose_tensor(T, cluster_tol=1e-8):
    """Polar and spectral factors of an invertible 3x3 tensor."""
    T = np.asarray(T, dtype=np.float64).reshape(3, 3)
    U, s, Vt = np.linalg.svd(T)
    if not s[-1] > 1e-14 * s[0]:
        raise DecompositionError("tensor is singular")
    R = U @ Vt
    if np.linalg.det(R) < 0:
        raise DecompositionError("polar rotation factor is a reflection (det T < 0); outside method scope")
    if s[0] - s[-1] <= cluster_tol * s[0]:
        Q = np.eye(3)
    else:
        Q = _canonical_rows(Vt)
    return TensorFactors(R, Q, s.copy())


def rotation_log(R):
    return Rotation.from_matrix(R).as_rotvec()


def rotation_exp(w):
    return Rotation.from_rotvec(w).as_matrix()


def rotation_mean(rotations, weights, tol=1e-12, max_iter=50):
    """Weighted intrinsic (Karcher) mean of rotation matrices.

    Seeded from the largest-weight rotation; iterates
    ``R <- R exp(sum_j w_j log(R^T R_j))``.
    """
    rotations = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    R = rotations[int(np.argmax(weights))].copy()
    active = weights > 0
    rots, w = rotations[active], weights[active]
    for _ in range(max_iter):
        xi = w @ Rotation.from_matrix(np.einsum("ji,njk->nik", R, rots)).as_rotvec()
        if np.linalg.norm(xi) < tol:
            return R
        R = R @ rotation_exp(xi)
    raise RotationMeanError(
        f"rotation mean did not converge in {max_iter} iterations; rotations in the patch are too dispersed, "
        "reduce the patch radius"
    )


def _align_frames(Qs, ref):
    """Flip eigenvector signs so every frame's rows point like the reference's rows."""
    out = Qs.copy()
    R0 = Qs[ref]
    for j in range(len(Qs)):
        dots = np.einsum("kc,kc->k", out[j], R0)
        flip = dots < 0
        out[j][flip] *= -1.0
        if np.linalg.det(out[j]) < 0:
            k = int(np.argmin(np.abs(dots)))
            out[j][k] *= -1.0
    return out


def _rmls_rotations(points, rotations, xp, w, order, c, scale, strict):
    Rbar = rotation_mean(rotations, w)
    psi = Rotation.from_matrix(np.einsum("ji,njk->nik", Rbar, rotations)).as_rotvec()
    if order == 0 or np.allclose(psi, 0.0, atol=0.0):
        psi_p = w @ psi
    else:
        psi_p, _ = mls_fit(points, psi, xp, order, c, scale, strict)
    return Rbar @ rotation_exp(psi_p)


def tensor_interpolate_rmls(points, tensors, xp, order=1, scalar_scheme="logmls", c=None, scale=None, strict=False,
                            cluster_tol=1e-8):
    """R-MLS interpolation of a patch of tensors at ``xp``.

    Eigenvalues use ``scalar_scheme`` ("logmls" or "mls"); polar rotations
    and eigenframes use MLS on rotation vectors about their weighted mean.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tensors = np.asarray(tensors, dtype=np.float64).reshape(-1, 3, 3)
    xp = np.asarray(xp, dtype=np.float64)
    d = np.linalg.norm(points - xp, axis=1)
    if scale is None:
        scale = d.max() if d.max() > 0 else 1.0
    if c is None:
        c = 9.0 / scale**2
    w = normalized_weights(points, xp, c)
    factors = [decompose_tensor(T, cluster_tol) for T in tensors]
    R = np.array([f.R for f in factors])
    Q = np.array([f.Q for f in factors])
    lam = np.array([f.lam for f in factors])
    ref = int(np.argmax(w))

    if scalar_scheme == "logmls":
        lam_p = logmls_interpolate(points, lam, xp, order, c, scale, strict)
    elif scalar_scheme == "mls":
        lam_p = mls_interpolate(points, lam, xp, order, c, scale, strict)
    else:
        raise ValueError(f"unknown eigenvalue scheme {scalar_scheme!r}")

    R_p = _rmls_rotations(points, R, xp, w, order, c, scale, strict)

    gaps = np.minimum(lam[:, 0] - lam[:, 1], lam[:, 1] - lam[:, 2])
    clustered = np.any(gaps < cluster_tol * np.abs(lam).max(axis=1))
    Q = _align_frames(Q, ref)
    if clustered:
        if not np.allclose(Q, Q[ref], atol=1e-12):
            warnings.warn(
                "eigenvalues clustered in the patch; eigenframe uses the weighted mean only",
                ClusteredEigenvaluesWarning,
                stacklevel=2,
            )
        Q_p = rotation_mean(Q, w)
    else:
        Q_p = _rmls_rotations(points, Q, xp, w, order, c, scale, strict)
    return R_p @ Q_p.T @ np.diag(lam_p) @ Q_p
