"""Boundary-preserving mesh sliding with a penalty on weighted nodal gaps.

The slave surface is a set of boundary quads of the mesh.  At the start of
a refit its geometry is copied into a frozen auxiliary surface.  Each slave
Gauss point ``p`` is projected along the interpolated averaged normal ``n``
onto the auxiliary surface, ``y = p + t n``, and the pointwise normal gap is
``g_n = -n . (p - y) = t``.  Weighted nodal gaps are

    g_j = sum_facets sum_gauss N_j(xi) g_n(xi) dA

and the sliding potential is ``eps_m / 2 * sum_j g_j^2``.  Normals and the
area element are those of the frozen (updated reference) surface, so the
potential depends on the slave positions only through the projections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .mesh import MeshError, NormalError, facet_normals

# corner parametric coordinates of a quad, counter-clockwise
_QUAD_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_GP = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]) / np.sqrt(3.0)


def _shape(xi):
    """Bilinear shape functions and derivatives at points xi (q, 2)."""
    xi = np.atleast_2d(xi)
    c = _QUAD_CORNERS
    a = 1.0 + xi[:, None, 0] * c[None, :, 0]
    b = 1.0 + xi[:, None, 1] * c[None, :, 1]
    N = 0.25 * a * b
    dN1 = 0.25 * c[None, :, 0] * b
    dN2 = 0.25 * a * c[None, :, 1]
    return N, dN1, dN2


_N_GP, _DN1_GP, _DN2_GP = _shape(_GP)
# second mixed derivative of the bilinear map is constant
_D12 = 0.25 * _QUAD_CORNERS[:, 0] * _QUAD_CORNERS[:, 1]


class PinningRequiredError(NormalError):
    """A slave node sits on a sharp feature or has no averaged normal."""


class ProjectionError(RuntimeError):
    """A slave point has no projection onto the auxiliary surface."""

    def __init__(self, message, facet=None, point=None):
        super().__init__(message)
        self.facet = facet
        self.point = point


@dataclass
class SlidingInterface:
    """Slave facets, frozen auxiliary replica and fixed nodal normals.

    Attributes
    ----------
    facets : (k, 4) mesh node indices of the slave quads
    slave_nodes : (s,) sorted unique node indices on the slave surface
    local : (k, 4) index of each facet corner into ``slave_nodes``
    aux_nodes : (s, 3) frozen coordinates forming the auxiliary surface
    normals : (s, 3) averaged unit normals (zero where undefined)
    corner_normals : (k, 4, 3) normals interpolated at Gauss points
    pinned : (s,) bool, nodes without a gap equation
    eps_m : penalty parameter
    """

    facets: np.ndarray
    slave_nodes: np.ndarray
    local: np.ndarray
    aux_nodes: np.ndarray
    normals: np.ndarray
    corner_normals: np.ndarray
    pinned: np.ndarray
    eps_m: float
    gp_weights: np.ndarray
    facet_diameter: np.ndarray
    _tree: cKDTree = None

    def __post_init__(self):
        self.aux_nodes.setflags(write=False)
        centers = self.aux_nodes[self.local].mean(axis=1)
        self._tree = cKDTree(centers)

    @property
    def aux_facets(self):
        return self.aux_nodes[self.local]

    @property
    def active_nodes(self):
        """Mesh indices of slave nodes carrying a gap equation."""
        return self.slave_nodes[~self.pinned]


def _facet_ids(mesh, facet_set):
    if isinstance(facet_set, str):
        return mesh.facets_in_set(facet_set)
    return np.asarray(facet_set, dtype=np.int64).ravel()


def sharp_nodes(mesh, facet_set, sharp_angle=60.0, nodes=None):
    """Slave nodes on a sharp feature or with a vanishing averaged normal.

    A node is sharp when any adjacent facet normal deviates from the
    averaged normal by more than ``sharp_angle / 2`` degrees.
    """
    x = mesh.nodes if nodes is None else np.asarray(nodes)
    facets = mesh.boundary_facets[_facet_ids(mesh, facet_set)]
    fn = facet_normals(x, facets)
    node_ids = np.unique(facets)
    local = np.searchsorted(node_ids, facets)
    acc = np.zeros((len(node_ids), 3))
    np.add.at(acc, local.ravel(), np.repeat(fn, 4, axis=0))
    norm = np.linalg.norm(acc, axis=1)
    avg = np.divide(acc, norm[:, None], out=np.zeros_like(acc), where=norm[:, None] > 1e-12)
    min_cos = np.ones(len(node_ids))
    dots = np.einsum("kac,kc->ka", avg[local], fn)
    np.minimum.at(min_cos, local.ravel(), dots.ravel())
    bad = (norm <= 1e-12) | (min_cos < np.cos(np.radians(sharp_angle) / 2.0))
    return node_ids[bad]


def build_interface(mesh, facet_set, pinned=(), eps_m=2e8, sharp_angle=60.0, nodes=None):
    """Create the sliding interface on the current configuration.

    Parameters
    ----------
    facet_set : indices into ``mesh.boundary_facets`` or a node-set name
    pinned : node indices held fixed (no gap equation)
    sharp_angle : feature angle in degrees; unpinned nodes on sharper
        features raise :class:`PinningRequiredError`
    """
    x = mesh.nodes if nodes is None else np.asarray(nodes, dtype=np.float64)
    fid = _facet_ids(mesh, facet_set)
    if len(fid) == 0:
        raise MeshError("sliding facet set is empty")
    if not eps_m > 0:
        raise ValueError("sliding penalty eps_m must be positive")
    facets = mesh.boundary_facets[fid]
    slave = np.unique(facets)
    local = np.searchsorted(slave, facets)
    pinned_mask = np.isin(slave, np.asarray(list(pinned), dtype=np.int64))
    need = sharp_nodes(mesh, fid, sharp_angle, nodes=x)
    unpinned_sharp = np.setdiff1d(need, slave[pinned_mask])
    if unpinned_sharp.size:
        raise PinningRequiredError(
            f"slave node(s) {unpinned_sharp.tolist()} lie on a sharp edge/corner or have no averaged normal; "
            "pin them with a Dirichlet condition",
            unpinned_sharp,
        )
    fn = facet_normals(x, facets)
    acc = np.zeros((len(slave), 3))
    np.add.at(acc, local.ravel(), np.repeat(fn, 4, axis=0))
    norm = np.linalg.norm(acc, axis=1)
    normals = np.divide(acc, norm[:, None], out=np.zeros_like(acc), where=norm[:, None] > 1e-12)
    corner = normals[local].copy()
    pin_corner = pinned_mask[local]
    corner[pin_corner] = np.repeat(fn[:, None, :], 4, axis=1)[pin_corner]
    q = x[facets]
    a1 = np.einsum("ga,kac->kgc", _DN1_GP, q)
    a2 = np.einsum("ga,kac->kgc", _DN2_GP, q)
    jac = np.linalg.norm(np.cross(a1, a2), axis=-1)
    diam = np.maximum(np.linalg.norm(q[:, 2] - q[:, 0], axis=1), np.linalg.norm(q[:, 3] - q[:, 1], axis=1))
    return SlidingInterface(
        facets=facets,
        slave_nodes=slave,
        local=local,
        aux_nodes=x[slave].copy(),
        normals=normals,
        corner_normals=corner,
        pinned=pinned_mask,
        eps_m=float(eps_m),
        gp_weights=jac,
        facet_diameter=diam,
    )


def _gauss_data(iface, x):
    """Current Gauss point positions (k, 4, 3) and ray directions (k, 4, 3)."""
    p = np.einsum("ga,kac->kgc", _N_GP, x[iface.facets])
    n = np.einsum("ga,kac->kgc", _N_GP, iface.corner_normals)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return p, n


def _solve_projection(X, p, n, iters=25):
    """Ray projection ``X(eta) = p + t n`` on bilinear quads, batched.

    X : (q, 4, 3) quad corners, p, n : (q, 3).
    Returns z = (eta1, eta2, t) (q, 3), Jinv (q, 3, 3), X12 (q, 3), ok (q,).
    """
    q = len(p)
    z = np.zeros((q, 3))
    X12 = np.einsum("a,qac->qc", _D12, X)
    ok = np.ones(q, dtype=bool)
    for _ in range(iters):
        N, d1, d2 = _shape(z[:, :2])
        Xe = np.einsum("qa,qac->qc", N, X)
        J = np.stack([np.einsum("qa,qac->qc", d1, X), np.einsum("qa,qac->qc", d2, X), -n], axis=2)
        F = Xe - p - z[:, 2:3] * n
        det = np.linalg.det(J)
        good = np.abs(det) > 1e-300
        dz = np.zeros_like(z)
        dz[good] = np.linalg.solve(J[good], -F[good][..., None])[..., 0]
        ok &= good
        z += dz
        if np.all(np.abs(dz[:, :2]) < 1e-14) and np.all(np.abs(dz[:, 2]) < 1e-14 * (1.0 + np.abs(z[:, 2]))):
            break
    N, d1, d2 = _shape(z[:, :2])
    J = np.stack([np.einsum("qa,qac->qc", d1, X), np.einsum("qa,qac->qc", d2, X), -n], axis=2)
    det = np.linalg.det(J)
    ok &= np.abs(det) > 1e-300
    Jinv = np.zeros_like(J)
    Jinv[ok] = np.linalg.inv(J[ok])
    ok &= np.isfinite(z).all(axis=1)
    return z, Jinv, X12, ok


@dataclass
class _Projection:
    t: np.ndarray  # (k, 4) normal gap at each Gauss point
    dt: np.ndarray  # (k, 4, 3)
    Ht: np.ndarray  # (k, 4, 3, 3)
    target_facet: np.ndarray  # (k, 4)


def project(iface, x, inside_tol=1e-10, extrapolate=0.5, k_candidates=8):
    """Project all slave Gauss points onto the auxiliary surface."""
    x = np.asarray(x, dtype=np.float64)
    p, n = _gauss_data(iface, x)
    nf = len(iface.facets)
    P = p.reshape(-1, 3)
    Nrm = n.reshape(-1, 3)
    own = np.repeat(np.arange(nf), 4)
    aux = iface.aux_facets
    z, Jinv, X12, ok = _solve_projection(aux[own], P, Nrm)
    excess = np.maximum(np.abs(z[:, :2]).max(axis=1) - 1.0, 0.0)
    target = own.copy()
    redo = np.flatnonzero(~ok | (excess > inside_tol))
    if redo.size:
        k = min(k_candidates, nf)
        _, cand = iface._tree.query(P[redo], k=k)
        cand = np.asarray(cand).reshape(len(redo), k)
        zc, Jc, Xc, okc = _solve_projection(aux[cand.ravel()], np.repeat(P[redo], k, axis=0), np.repeat(Nrm[redo], k, axis=0))
        zc = zc.reshape(len(redo), k, 3)
        exc = np.maximum(np.abs(zc[..., :2]).max(axis=2) - 1.0, 0.0).reshape(len(redo), k)
        okc = okc.reshape(len(redo), k)
        diam = iface.facet_diameter[cand]
        # rank: inside first, then by excess, then by |t|
        score = np.where(okc, exc, np.inf)
        inside = score <= inside_tol
        absz = np.abs(zc[..., 2])
        key = np.where(inside, absz / diam, np.inf)
        best_inside = np.argmin(key, axis=1)
        best_out = np.argmin(score, axis=1)
        choice = np.where(np.isfinite(key[np.arange(len(redo)), best_inside]), best_inside, best_out)
        rows = np.arange(len(redo))
        sel_exc = score[rows, choice]
        if np.any(sel_exc > extrapolate):
            bad = redo[int(np.argmax(sel_exc > extrapolate))]
            raise ProjectionError(
                f"slave Gauss point {bad % 4} of facet {bad // 4} has no projection onto the auxiliary surface",
                facet=int(bad // 4),
                point=int(bad % 4),
            )
        flat = rows * k + choice
        z[redo] = zc.reshape(-1, 3)[flat]
        Jinv[redo] = Jc.reshape(-1, 3, 3)[flat]
        X12[redo] = Xc.reshape(-1, 3)[flat]
        target[redo] = cand[rows, choice]
        ok[redo] = True
    tol = 0.5 * iface.facet_diameter[target]
    far = np.abs(z[:, 2]) > tol
    if np.any(far):
        bad = int(np.argmax(far))
        raise ProjectionError(
            f"slave Gauss point {bad % 4} of facet {bad // 4} is {abs(z[bad, 2]):.3g} away from the auxiliary "
            f"surface (search tolerance {tol[bad]:.3g})",
            facet=bad // 4,
            point=bad % 4,
        )
    dt = Jinv[:, 2, :]
    c = -np.einsum("qc,qc->q", dt, X12)
    r0, r1 = Jinv[:, 0, :], Jinv[:, 1, :]
    Ht = c[:, None, None] * (r0[:, :, None] * r1[:, None, :] + r1[:, :, None] * r0[:, None, :])
    return _Projection(z[:, 2].reshape(nf, 4), dt.reshape(nf, 4, 3), Ht.reshape(nf, 4, 3, 3), target.reshape(nf, 4))


@dataclass
class WeightedGaps:
    """Weighted nodal gap and regularized normal multiplier per slave node.

    Pinned nodes carry zero in both arrays.
    """

    nodes: np.ndarray
    g_tilde: np.ndarray
    lambda_n: np.ndarray


def _weighted(iface, proj):
    contrib = _N_GP[None, :, :] * (iface.gp_weights * proj.t)[:, :, None]  # (k, gp, a)
    g = np.zeros(len(iface.slave_nodes))
    np.add.at(g, np.broadcast_to(iface.local[:, None, :], contrib.shape).ravel(), contrib.ravel())
    g[iface.pinned] = 0.0
    return g


def weighted_gaps(iface, x):
    proj = project(iface, x)
    g = _weighted(iface, proj)
    return WeightedGaps(iface.slave_nodes, g, -iface.eps_m * g)


def sliding_potential(iface, x):
    g = weighted_gaps(iface, x).g_tilde
    return 0.5 * iface.eps_m * float(g @ g)


def assemble_sliding(iface, x, n_nodes=None, free=None, order=2):
    """Residual (gradient of the sliding potential), tangent and potential.

    Returns ``(f, K, pi)`` sized for the whole mesh (``3 * n_nodes`` dofs),
    restricted to ``free`` dofs when a mask is given.
    """
    x = np.asarray(x, dtype=np.float64)
    n_nodes = len(x) if n_nodes is None else n_nodes
    ndof = 3 * n_nodes
    proj = project(iface, x)
    g = _weighted(iface, proj)
    eps = iface.eps_m
    active = ~iface.pinned[iface.local]  # (k, a)
    W = iface.gp_weights  # (k, gp)
    # d g_j / d x_b = sum_gp N_j W N_b dt
    coef = _N_GP[None, :, :, None] * _N_GP[None, :, None, :] * W[:, :, None, None]  # (k, gp, a, b)
    vals = coef[..., None] * proj.dt[:, :, None, None, :]  # (k, gp, a, b, c)
    vals = vals * active[:, None, :, None, None]
    rows = np.broadcast_to(iface.local[:, None, :, None, None], vals.shape)
    cols = np.broadcast_to(3 * iface.facets[:, None, None, :, None] + np.arange(3), vals.shape)
    G = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(len(iface.slave_nodes), ndof)).tocsr()
    f = eps * (G.T @ g)
    K = None
    if order >= 2:
        K = eps * (G.T @ G)
        s = W * np.einsum("ga,ka->kg", _N_GP, np.where(active, g[iface.local], 0.0))  # (k, gp)
        blk = (s[:, :, None, None] * _N_GP[None, :, :, None] * _N_GP[None, :, None, :])[..., None, None] * proj.Ht[
            :, :, None, None
        ]  # (k, gp, b, c, 3, 3)
        r = np.broadcast_to((3 * iface.facets[:, None, :, None, None, None] + np.arange(3)[:, None]), blk.shape)
        cc = np.broadcast_to((3 * iface.facets[:, None, None, :, None, None] + np.arange(3)), blk.shape)
        K2 = sp.coo_matrix((eps * blk.ravel(), (r.ravel(), cc.ravel())), shape=(ndof, ndof)).tocsr()
        K = (K + K2).tocsr()
        K = 0.5 * (K + K.T)
    pi = 0.5 * eps * float(g @ g)
    if free is not None:
        f = f[free]
        if K is not None:
            K = K[free][:, free]
    return f, K, pi


def _closest_on_quads(X, p, iters=30):
    """Closest points on bilinear quads X (q, 4, 3) to points p (q, 3), eta clamped."""
    eta = np.zeros((len(p), 2))
    for _ in range(iters):
        N, d1, d2 = _shape(eta)
        y = np.einsum("qa,qac->qc", N, X)
        J = np.stack([np.einsum("qa,qac->qc", d1, X), np.einsum("qa,qac->qc", d2, X)], axis=2)
        JtJ = np.einsum("qci,qcj->qij", J, J)
        rhs = np.einsum("qci,qc->qi", J, p - y)
        step = np.linalg.solve(JtJ + 1e-300 * np.eye(2), rhs[..., None])[..., 0]
        eta = np.clip(eta + step, -1.0, 1.0)
    N, _, _ = _shape(eta)
    return np.einsum("qa,qac->qc", N, X)


@dataclass
class DistanceReport:
    nodes: np.ndarray
    distance: np.ndarray
    max: float
    mean: float


def boundary_distance_report(iface, x, include_pinned=False, k_candidates=6):
    """Geometric distance of slave nodes to the auxiliary surface."""
    x = np.asarray(x, dtype=np.float64)
    sel = np.ones(len(iface.slave_nodes), dtype=bool) if include_pinned else ~iface.pinned
    nodes = iface.slave_nodes[sel]
    p = x[nodes]
    if len(p) == 0:
        return DistanceReport(nodes, np.zeros(0), 0.0, 0.0)
    k = min(k_candidates, len(iface.facets))
    _, cand = iface._tree.query(p, k=k)
    cand = np.asarray(cand).reshape(len(p), k)
    y = _closest_on_quads(iface.aux_facets[cand.ravel()], np.repeat(p, k, axis=0))
    d = np.linalg.norm(y - np.repeat(p, k, axis=0), axis=1).reshape(len(p), k).min(axis=1)
    return DistanceReport(nodes, d, float(d.max()), float(d.mean()))
