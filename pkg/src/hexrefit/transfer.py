"""Scattered-data transfer from old-mesh samples to new-mesh query points.

Scalar schemes are weighted least-squares polynomial fits on a patch of
samples around each query point (MLS), optionally on log-transformed data
(LOGMLS) so that positive data stay positive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

MIN_PATCH = {0: 1, 1: 4, 2: 10}


class PatchError(ValueError):
    """Patch unusable for the requested fit."""


class OrphanQueryError(PatchError):
    """Some query points found no usable patch."""

    def __init__(self, message, queries=()):
        super().__init__(message)
        self.queries = list(queries)


class BasisFallbackWarning(UserWarning):
    """Basis order was reduced because the patch is rank deficient."""


def normalized_weights(points, xp, c):
    """Exponential weights ``exp(-c |x_j - x_p|^2)`` scaled to unit sum."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(points) == 0:
        raise PatchError("empty patch")
    d2 = np.sum((points - np.asarray(xp, dtype=np.float64)) ** 2, axis=1)
    w = np.exp(-c * d2)
    total = w.sum()
    if not total > 0.0:
        raise PatchError(f"all weights underflow to zero (c={c:g}, nearest distance {np.sqrt(d2.min()):.3g})")
    return w / total


def basis_size(order):
    return {0: 1, 1: 4, 2: 10}[order]


def polynomial_basis(points, xp, order, scale=1.0):
    """Complete polynomial basis in local coordinates ``(x - xp) / scale``."""
    d = (np.atleast_2d(points) - np.asarray(xp)) / scale
    cols = [np.ones(len(d))]
    if order >= 1:
        cols += [d[:, 0], d[:, 1], d[:, 2]]
    if order >= 2:
        cols += [d[:, i] * d[:, j] for i in range(3) for j in range(i, 3)]
    return np.stack(cols, axis=1)


def mls_fit(points, values, xp, order=1, c=None, scale=None, strict=False, rcond=1e-10):
    """Weighted least-squares fit evaluated at ``xp``.

    ``values`` may be (N,) or (N, k); each column is fitted with the same
    weights.  Returns ``(value_at_xp, order_used)``.  A rank-deficient patch
    lowers the order (2 -> 1 -> 0) with a :class:`BasisFallbackWarning`,
    or raises :class:`PatchError` when ``strict``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    values = np.asarray(values, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    d = np.linalg.norm(points - xp, axis=1)
    if scale is None:
        scale = d.max() if d.max() > 0 else 1.0
    if c is None:
        c = 9.0 / scale**2
    w = normalized_weights(points, xp, c)
    sw = np.sqrt(w)
    rhs = values * (sw if values.ndim == 1 else sw[:, None])
    for k in range(order, -1, -1):
        P = polynomial_basis(points, xp, k, scale)
        if len(points) >= basis_size(k):
            A = P * sw[:, None]
            s = np.linalg.svd(A, compute_uv=False)
            if s[-1] > rcond * s[0]:
                a, *_ = np.linalg.lstsq(A, rhs, rcond=None)
                if k < order:
                    warnings.warn(f"MLS basis order reduced from {order} to {k}", BasisFallbackWarning, stacklevel=2)
                return a[0], k
        if strict:
            raise PatchError(f"patch of {len(points)} points is rank deficient for basis order {k}")
    raise PatchError("patch is rank deficient even for a constant fit")


def mls_interpolate(points, values, xp, order=1, c=None, scale=None, strict=False):
    """Moving least squares value at ``xp``."""
    return mls_fit(points, values, xp, order, c, scale, strict)[0]


def logmls_interpolate(points, values, xp, order=1, c=None, scale=None, strict=False):
    """MLS on ``ln(values)``; the result is ``exp`` of the fit, hence positive."""
    values = np.asarray(values, dtype=np.float64)
    bad = np.argwhere(~(values > 0))
    if bad.size:
        j = tuple(bad[0])
        raise ValueError(f"LOGMLS needs positive data; sample {j[0]} has value {values[j]!r}")
    return np.exp(mls_fit(points, np.log(values), xp, order, c, scale, strict)[0])


# ---------------------------------------------------------------------------
# Field transfer driver
# ---------------------------------------------------------------------------


@dataclass
class FieldSpec:
    """How to transfer one field.

    scheme : "mls" or "logmls" for scalars; "rmls" or "componentwise" for tensors
    """

    scheme: str = "mls"
    basis_order: int = 1
    r_p: float | None = None
    c: float | None = None
    strict: bool = False
    eigen_scheme: str = "logmls"


@dataclass
class TransferSummary:
    fallbacks: dict = field(default_factory=dict)
    spd_violations: dict = field(default_factory=dict)
    grown: int = 0


def default_radius(points, order):
    tree = cKDTree(points)
    d, _ = tree.query(points, k=2)
    h = float(np.median(d[:, 1])) if len(points) > 1 else 1.0
    return (3.5 if order >= 2 else 2.5) * h


class PatchFinder:
    """Radius search with automatic growth (x1.5, up to 3 times)."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=np.float64)
        self.tree = cKDTree(self.points)

    def patch(self, xp, r_p, min_size, grow=1.5, attempts=3):
        r = r_p
        for _ in range(attempts + 1):
            idx = self.tree.query_ball_point(xp, r)
            if len(idx) >= min_size:
                return np.sort(np.asarray(idx, dtype=np.int64)), r
            r *= grow
        return None, r


def _is_spd(T):
    try:
        np.linalg.cholesky(0.5 * (T + T.T))
    except np.linalg.LinAlgError:
        return False
    return np.allclose(T, T.T, rtol=1e-10, atol=1e-12 * np.abs(T).max())


def transfer_fields(old_points, fields, query_points, specs=None, summary=None):
    """Interpolate named fields from old sample points to query points.

    Parameters
    ----------
    old_points : (N, 3) sample locations
    fields : dict name -> (N,) scalars or (N, 3, 3) tensors
    query_points : (M, 3)
    specs : dict name -> FieldSpec (default: MLS order 1 for scalars,
        R-MLS order 1 for tensors)

    Returns a dict name -> (M,) or (M, 3, 3) arrays.
    """
    from .tensor import tensor_interpolate_rmls

    old_points = np.asarray(old_points, dtype=np.float64)
    query_points = np.atleast_2d(np.asarray(query_points, dtype=np.float64))
    specs = specs or {}
    summary = summary if summary is not None else TransferSummary()
    finder = PatchFinder(old_points)
    nearest_d, nearest_i = finder.tree.query(query_points)
    out = {}
    for name, values in fields.items():
        values = np.asarray(values, dtype=np.float64)
        tensor = values.ndim == 3
        spec = specs.get(name) or FieldSpec(scheme="rmls" if tensor else "mls")
        r_p = spec.r_p or default_radius(old_points, spec.basis_order)
        min_size = MIN_PATCH[spec.basis_order]
        result = np.empty((len(query_points),) + values.shape[1:])
        orphans = []
        n_fallback = 0
        for q, xp in enumerate(query_points):
            if nearest_d[q] <= 1e-12 * r_p:
                result[q] = values[nearest_i[q]]
                continue
            idx, r_used = finder.patch(xp, r_p, min_size)
            if idx is None:
                orphans.append(q)
                continue
            if r_used > r_p:
                summary.grown += 1
            c = spec.c if spec.c is not None else 9.0 / r_used**2
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                if spec.scheme == "mls":
                    result[q] = mls_interpolate(old_points[idx], values[idx], xp, spec.basis_order, c, r_used, spec.strict)
                elif spec.scheme == "logmls":
                    result[q] = logmls_interpolate(old_points[idx], values[idx], xp, spec.basis_order, c, r_used, spec.strict)
                elif spec.scheme == "componentwise":
                    result[q] = mls_interpolate(
                        old_points[idx], values[idx].reshape(len(idx), 9), xp, spec.basis_order, c, r_used, spec.strict
                    ).reshape(3, 3)
                elif spec.scheme == "rmls":
                    result[q] = tensor_interpolate_rmls(
                        old_points[idx], values[idx], xp, spec.basis_order, spec.eigen_scheme, c=c, scale=r_used, strict=spec.strict
                    )
                else:
                    raise ValueError(f"unknown transfer scheme {spec.scheme!r}")
            n_fallback += sum(issubclass(w.category, BasisFallbackWarning) for w in caught)
            for w in caught:
                if not issubclass(w.category, BasisFallbackWarning):
                    warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
        if orphans:
            raise OrphanQueryError(
                f"field {name!r}: {len(orphans)} query point(s) found fewer than {min_size} samples "
                f"within the grown radius: {orphans[:20]}",
                orphans,
            )
        if n_fallback:
            warnings.warn(f"field {name!r}: basis order reduced at {n_fallback} query point(s)", BasisFallbackWarning, stacklevel=2)
        summary.fallbacks[name] = n_fallback
        if tensor:
            spd_in = all(_is_spd(T) for T in values)
            if spd_in:
                summary.spd_violations[name] = int(sum(not _is_spd(T) for T in result))
        out[name] = result
    return out
