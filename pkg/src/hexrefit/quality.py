"""Element quality diagnostics: included-angle skewness and edge statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import edge_vectors, node_angle_cosines


def skewness_from_coords(xe):
    """Skewness of a batch of elements plus a degenerate flag.

    ``skew = max((theta_max - 90)/90, (90 - theta_min)/90)`` over the 24
    included angles (degrees).  Elements with a zero-length edge get 1.0
    and are flagged.
    """
    xe = np.asarray(xe, dtype=np.float64).reshape(-1, 8, 3)
    cos = node_angle_cosines(xe)
    degenerate = ~np.isfinite(cos).all(axis=(1, 2))
    theta = np.degrees(np.arccos(np.clip(np.nan_to_num(cos), -1.0, 1.0)))
    tmax = theta.max(axis=(1, 2))
    tmin = theta.min(axis=(1, 2))
    skew = np.maximum((tmax - 90.0) / 90.0, (90.0 - tmin) / 90.0)
    skew = np.clip(skew, 0.0, 1.0)
    skew[degenerate] = 1.0
    return skew, degenerate


def element_skewness(mesh, e, nodes=None):
    x = mesh.nodes if nodes is None else np.asarray(nodes)
    return float(skewness_from_coords(x[mesh.elements[e]][None])[0][0])


def signed_volumes(xe):
    """Approximate element volume from the averaged edge vectors' triple product."""
    vb = edge_vectors(xe).mean(axis=2)
    return np.einsum("ij,ij->i", np.cross(vb[:, 0], vb[:, 1]), vb[:, 2])


@dataclass
class QualityReport:
    """Per-element skewness and edge lengths with aggregates.

    ``empty`` is True when the region filter selected no element; the
    aggregate fields are then None.
    """

    skewness: np.ndarray
    mean_edge: np.ndarray
    degenerate: np.ndarray
    inverted: np.ndarray
    selected: np.ndarray
    empty: bool
    min_skewness: float | None = None
    max_skewness: float | None = None
    mean_skewness: float | None = None
    min_edge: float | None = None
    max_edge: float | None = None
    mean_edge_length: float | None = None

    def summary(self):
        if self.empty:
            return "empty region: no element passes the filter"
        return (
            f"elements={int(self.selected.sum())} "
            f"skewness min={self.min_skewness:.6g} max={self.max_skewness:.6g} mean={self.mean_skewness:.6g} "
            f"edge min={self.min_edge:.6g} max={self.max_edge:.6g} mean={self.mean_edge_length:.6g} "
            f"degenerate={int(self.degenerate[self.selected].sum())} inverted={int(self.inverted[self.selected].sum())}"
        )


def quality_report(mesh, region_filter=None, nodes=None):
    """Skewness and edge-length report, optionally restricted to a region.

    ``region_filter`` is called with the (m, 3) array of element centroids
    and must return a boolean mask.
    """
    xe = mesh.element_coords(nodes)
    skew, degenerate = skewness_from_coords(xe)
    v = edge_vectors(xe)
    lengths = np.linalg.norm(v, axis=-1)
    mean_edge = lengths.mean(axis=2)
    inverted = signed_volumes(xe) <= 0.0
    if region_filter is None:
        selected = np.ones(len(xe), dtype=bool)
    else:
        selected = np.asarray(region_filter(xe.mean(axis=1)), dtype=bool)
    report = QualityReport(skew, mean_edge, degenerate, inverted, selected, empty=not selected.any())
    if not report.empty:
        s = skew[selected]
        le = lengths[selected]
        report.min_skewness = float(s.min())
        report.max_skewness = float(s.max())
        report.mean_skewness = float(s.mean())
        report.min_edge = float(le.min())
        report.max_edge = float(le.max())
        report.mean_edge_length = float(le.mean())
    return report


def edge_length_cv(mesh, nodes=None):
    """Coefficient of variation of edge lengths, per parametric direction."""
    lengths = np.linalg.norm(edge_vectors(mesh.element_coords(nodes)), axis=-1)
    per_dir = lengths.transpose(1, 0, 2).reshape(3, -1)
    return per_dir.std(axis=1) / per_dir.mean(axis=1)


def sphere_region(center, radius):
    center = np.asarray(center, dtype=np.float64)

    def inside(c):
        return np.linalg.norm(c - center, axis=1) <= radius

    return inside


def band_region(f, fmin, fmax):
    """Elements whose centroid satisfies ``fmin < f(X) < fmax``."""

    def inside(c):
        val = f(c)
        return (val > fmin) & (val < fmax)

    return inside
