"""Element distortion potential with consistent residual and tangent.

Every hex carries 39 penalty constraints built from its edge vectors:

* 3 averaged-edge length constraints  ``|v_bar_i| / l_i - 1``
* 12 equal-edge constraints           ``(v_ij . v_ij) / (v_bar_i . v_bar_i) - r_ij``
* 24 angle constraints                ``cos(angle at node n between dirs m, n) - cos(theta)``

The potential is ``sum_k eps_k G_k^2 / 2``.  Each constraint is a function
of at most two vectors ``u_a = sum_n A[a, n] x_n`` that are fixed linear
combinations of the element's nodal positions, so derivatives are formed
with respect to those vectors and mapped to the 24 nodal unknowns.

``r_ij`` defaults to 1; it only differs from 1 during target incrementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import (
    ANGLE_PAIRS,
    HEX_EDGES,
    NODE_EDGES,
    DegenerateElementError,
    ElementEdgeFrame,
    averaged_edge_lengths,
    edge_vectors,
    node_angle_cosines,
)

N_CONSTRAINTS = 39
_I3 = np.eye(3)


def _edge_row(i, j):
    row = np.zeros(8)
    tail, head = HEX_EDGES[i, j]
    row[head] += 1.0
    row[tail] -= 1.0
    return row


# A-matrices (rows = local vectors, columns = element nodes)
_AVG_ROWS = np.array([sum(_edge_row(i, j) for j in range(4)) / 4.0 for i in range(3)])
_EDGE_ROWS = np.array([[_edge_row(i, j) for j in range(4)] for i in range(3)])


def _outgoing_row(node, direction):
    j, sign = NODE_EDGES[node, direction]
    return sign * _EDGE_ROWS[direction, j]


# ---------------------------------------------------------------------------
# Constraint kernels: value, gradient and Hessian with respect to local vectors
# ---------------------------------------------------------------------------


def _avg_edge_kernel(u, l_r):
    """``|u|/l - 1`` for u (m, 3)."""
    nu = np.linalg.norm(u, axis=1)
    G = nu / l_r - 1.0
    n = u / nu[:, None]
    g = (n / l_r[:, None])[:, None, :]
    H = (_I3 - n[:, :, None] * n[:, None, :]) / (nu * l_r)[:, None, None]
    return G, g, H[:, None, :, None, :]


def _equal_edge_kernel(v, vb, ratio):
    """``(v.v)/(vb.vb) - ratio``; local vectors ordered (v, vb)."""
    a = np.einsum("ij,ij->i", v, v)
    b = np.einsum("ij,ij->i", vb, vb)
    G = a / b - ratio
    m = len(v)
    g = np.empty((m, 2, 3))
    g[:, 0] = 2.0 * v / b[:, None]
    g[:, 1] = -2.0 * (a / b**2)[:, None] * vb
    H = np.empty((m, 2, 3, 2, 3))
    H[:, 0, :, 0, :] = 2.0 * _I3 / b[:, None, None]
    cross = -4.0 * v[:, :, None] * vb[:, None, :] / (b**2)[:, None, None]
    H[:, 0, :, 1, :] = cross
    H[:, 1, :, 0, :] = cross.transpose(0, 2, 1)
    H[:, 1, :, 1, :] = (-2.0 * a / b**2)[:, None, None] * _I3 + (8.0 * a / b**3)[:, None, None] * (
        vb[:, :, None] * vb[:, None, :]
    )
    return G, g, H


def _angle_kernel(a, b, cos_r):
    """``a.b/(|a||b|) - cos_r``; local vectors ordered (a, b)."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ah = a / na[:, None]
    bh = b / nb[:, None]
    f = np.einsum("ij,ij->i", ah, bh)
    G = f - cos_r
    m = len(a)
    g = np.empty((m, 2, 3))
    g[:, 0] = (bh - f[:, None] * ah) / na[:, None]
    g[:, 1] = (ah - f[:, None] * bh) / nb[:, None]

    def outer(p, q):
        return p[:, :, None] * q[:, None, :]

    fI = f[:, None, None] * _I3
    sym = outer(ah, bh) + outer(bh, ah)
    H = np.empty((m, 2, 3, 2, 3))
    H[:, 0, :, 0, :] = (-sym + 3.0 * f[:, None, None] * outer(ah, ah) - fI) / (na**2)[:, None, None]
    H[:, 1, :, 1, :] = (-sym + 3.0 * f[:, None, None] * outer(bh, bh) - fI) / (nb**2)[:, None, None]
    ab = (_I3 - outer(bh, bh) - outer(ah, ah) + f[:, None, None] * outer(ah, bh)) / (na * nb)[:, None, None]
    H[:, 0, :, 1, :] = ab
    H[:, 1, :, 0, :] = ab.transpose(0, 2, 1)
    return G, g, H


# ---------------------------------------------------------------------------
# Targets and penalties
# ---------------------------------------------------------------------------


@dataclass
class TargetShape:
    """Per-element target lengths (m, 3), angles (m, 8, 3) and edge ratios (m, 3, 4)."""

    lengths: np.ndarray
    angles: np.ndarray
    ratios: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=np.float64)
        m = len(self.lengths)
        self.angles = np.broadcast_to(np.asarray(self.angles, dtype=np.float64), (m, 8, 3)).copy()
        self.ratios = np.broadcast_to(np.asarray(self.ratios, dtype=np.float64), (m, 3, 4)).copy()
        if np.any(~(self.lengths > 0)):
            raise ValueError("target lengths must be positive")
        if np.any(~((self.angles > 0) & (self.angles < np.pi))):
            raise ValueError("target angles must lie in (0, pi)")

    @classmethod
    def uniform(cls, n_elements, lengths, theta=np.pi / 2):
        lengths = np.broadcast_to(np.asarray(lengths, dtype=np.float64), (n_elements, 3))
        return cls(lengths.copy(), np.full((n_elements, 8, 3), float(theta)), np.ones((n_elements, 3, 4)))

    def __len__(self):
        return len(self.lengths)


@dataclass
class PenaltyParams:
    """Penalty weights for averaged-edge, equal-edge and angle constraints.

    Each weight is a number or a callable mapping (m, 3) element centroids
    to (m,) weights.
    """

    eps_E_bar: object = 1e-2
    eps_E_hat: object = 1e-2
    eps_A: object = 1e-2

    @classmethod
    def from_eps(cls, eps_E=1e-2, eps_A=1e-2):
        return cls(eps_E, eps_E, eps_A)

    def evaluate(self, centroids):
        """Per-element weights, shape (m, 3)."""
        centroids = np.asarray(centroids, dtype=np.float64)
        m = len(centroids)
        cols = []
        for eps in (self.eps_E_bar, self.eps_E_hat, self.eps_A):
            val = eps(centroids) if callable(eps) else eps
            cols.append(np.broadcast_to(np.asarray(val, dtype=np.float64), (m,)))
        out = np.stack(cols, axis=1)
        if np.any(out < 0):
            raise ValueError("penalty parameters must be nonnegative")
        if not callable(self.eps_E_bar) and not callable(self.eps_E_hat) and not callable(self.eps_A):
            if not np.any(out > 0):
                raise ValueError("at least one penalty parameter must be positive")
        return out


# ---------------------------------------------------------------------------
# Element evaluation
# ---------------------------------------------------------------------------


@dataclass
class ConstraintEval:
    """Value, gradient (24,) and Hessian (24, 24) of one constraint for one element.

    Unknowns are ordered node-major: ``3 * node + component``.
    """

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def _to_nodes(A, g, H):
    gx = np.einsum("an,mac->mnc", A, g).reshape(len(g), 24)
    Hx = np.einsum("an,bp,macbd->mncpd", A, A, H).reshape(len(g), 24, 24)
    return gx, Hx


def _guard(xe, tol, element_ids):
    v = edge_vectors(xe)
    short = (np.linalg.norm(v, axis=-1) <= tol).any(axis=(1, 2))
    short_avg = (np.linalg.norm(v.mean(axis=2), axis=-1) <= tol).any(axis=1)
    if short.any() or short_avg.any():
        k = int(np.argmax(short | short_avg))
        what = "an edge vector" if short[k] else "an averaged edge vector"
        e = int(element_ids[k])
        raise DegenerateElementError(f"element {e}: {what} has (near) zero length", element=e)


def _iter_constraints(xe, targets):
    """Yield (kind, A, G, g_u, H_u) for the 39 constraints, batched over elements."""
    v = edge_vectors(xe)
    vb = v.mean(axis=2)
    for i in range(3):
        A = _AVG_ROWS[i : i + 1]
        yield (0, A) + _avg_edge_kernel(vb[:, i], targets.lengths[:, i])
    for i in range(3):
        for j in range(4):
            A = np.stack([_EDGE_ROWS[i, j], _AVG_ROWS[i]])
            yield (1, A) + _equal_edge_kernel(v[:, i, j], vb[:, i], targets.ratios[:, i, j])
    for n in range(8):
        for k, (p, q) in enumerate(ANGLE_PAIRS):
            A = np.stack([_outgoing_row(n, p), _outgoing_row(n, q)])
            a = A[0] @ xe
            b = A[1] @ xe
            yield (2, A) + _angle_kernel(a, b, np.cos(targets.angles[:, n, k]))


def element_terms(xe, targets, eps, order=2, length_scale=None, element_ids=None):
    """Potential, gradient and Hessian of a batch of elements.

    Parameters
    ----------
    xe : (m, 8, 3) nodal coordinates
    targets : TargetShape with m entries
    eps : (m, 3) penalty weights (averaged edge, equal edge, angle)
    order : 0 for potential only, 1 adds gradient, 2 adds Hessian

    Returns
    -------
    pi : (m,), grad : (m, 24) or None, hess : (m, 24, 24) or None
    """
    xe = np.asarray(xe, dtype=np.float64)
    m = len(xe)
    if element_ids is None:
        element_ids = np.arange(m)
    if length_scale is None:
        length_scale = float(np.ptp(xe.reshape(-1, 3), axis=0).max()) if m else 1.0
    _guard(xe, 1e-14 * max(length_scale, 1e-300), element_ids)
    pi = np.zeros(m)
    grad = np.zeros((m, 24)) if order >= 1 else None
    # Hessian accumulated component-major, (m, c, d, node, node)
    hcd = np.zeros((m, 3, 3, 8, 8)) if order >= 2 else None
    for kind, A, G, g, H in _iter_constraints(xe, targets):
        w = eps[:, kind]
        pi += 0.5 * w * G**2
        if order >= 1:
            gx = np.einsum("an,mac->mnc", A, g).reshape(m, 24)
            grad += (w * G)[:, None] * gx
        if order >= 2:
            M = g[:, :, :, None, None] * g[:, None, None, :, :] + G[:, None, None, None, None] * H
            M *= w[:, None, None, None, None]
            hcd += A.T @ M.transpose(0, 2, 4, 1, 3) @ A
    hess = None
    if hcd is not None:
        hess = hcd.transpose(0, 3, 1, 4, 2).reshape(m, 24, 24)
        hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    return pi, grad, hess


def constraint_values(xe, targets):
    """All 39 constraint values per element, shape (m, 39)."""
    return np.stack([G for _, _, G, _, _ in _iter_constraints(np.asarray(xe, dtype=np.float64), targets)], axis=1)


def _single(kernel_out, A):
    G, g, H = kernel_out
    gx, Hx = _to_nodes(A, g, H)
    return ConstraintEval(float(G[0]), gx[0], 0.5 * (Hx[0] + Hx[0].T))


def _as_frame(obj):
    if isinstance(obj, ElementEdgeFrame):
        return obj
    return ElementEdgeFrame.from_coords(obj)


def _require(vectors, what):
    scale = max(np.linalg.norm(u) for u in vectors)
    if min(np.linalg.norm(u) for u in vectors) <= 1e-14 * max(scale, 1e-300):
        raise DegenerateElementError(f"{what} vanishes")


def constraint_avg_edge(frame, i, l_r):
    """Averaged-edge constraint of direction ``i``.

    ``frame`` is an ElementEdgeFrame or the (8, 3) element coordinates.
    """
    frame = _as_frame(frame)
    u = frame.v_bar[i]
    if np.linalg.norm(u) == 0.0:
        raise DegenerateElementError(f"averaged edge vector of direction {i} vanishes")
    return _single(_avg_edge_kernel(u[None], np.array([float(l_r)])), _AVG_ROWS[i : i + 1])


def constraint_equal_edges(frame, i, j, ratio=1.0):
    """Equal-edge constraint for edge ``j`` of direction ``i``."""
    frame = _as_frame(frame)
    vb = frame.v_bar[i]
    if np.linalg.norm(vb) == 0.0:
        raise DegenerateElementError(f"averaged edge vector of direction {i} vanishes")
    A = np.stack([_EDGE_ROWS[i, j], _AVG_ROWS[i]])
    return _single(_equal_edge_kernel(frame.v[i, j][None], vb[None], np.array([float(ratio)])), A)


def constraint_angle(frame, node, pair, theta_r=np.pi / 2):
    """Angle constraint at ``node`` between the directions in ``pair``."""
    frame = _as_frame(frame)
    p, q = pair
    a, b = frame.outgoing(node, p), frame.outgoing(node, q)
    _require((a, b), f"edge vector at node {node}")
    A = np.stack([_outgoing_row(node, p), _outgoing_row(node, q)])
    return _single(_angle_kernel(a[None], b[None], np.array([np.cos(theta_r)])), A)


def element_potential(mesh, e, targets, penalties, nodes=None):
    x = mesh.nodes if nodes is None else np.asarray(nodes)
    xe = x[mesh.elements[e]][None]
    eps = penalties.evaluate(xe.mean(axis=1)) if isinstance(penalties, PenaltyParams) else np.atleast_2d(penalties)
    t = TargetShape(targets.lengths[e : e + 1], targets.angles[e : e + 1], targets.ratios[e : e + 1])
    pi, _, _ = element_terms(xe, t, eps, order=0, length_scale=mesh.diameter(), element_ids=np.array([e]))
    return float(pi[0])


# ---------------------------------------------------------------------------
# Global assembly
# ---------------------------------------------------------------------------


def element_dofs(elements):
    return (3 * np.asarray(elements)[:, :, None] + np.arange(3)).reshape(len(elements), 24)


def assemble_distortion(mesh, targets, eps, nodes=None, free=None, order=2):
    """Global residual, tangent and potential of the distortion term.

    Parameters
    ----------
    eps : (m, 3) array of per-element penalties, or a PenaltyParams
        (evaluated at the centroids of ``mesh.nodes``)
    free : optional boolean dof mask; when given the returned vector and
        matrix are restricted to free dofs.

    Returns
    -------
    f : (ndof,) residual, K : csr matrix (ndof, ndof) or None, pi : float
    """
    x = mesh.nodes if nodes is None else np.asarray(nodes, dtype=np.float64)
    if isinstance(eps, PenaltyParams):
        eps = eps.evaluate(mesh.centroids())
    ndof = 3 * mesh.n_nodes
    pi_e, g_e, H_e = element_terms(x[mesh.elements], targets, eps, order=order, length_scale=mesh.diameter())
    dofs = element_dofs(mesh.elements)
    f = np.zeros(ndof)
    if order >= 1:
        np.add.at(f, dofs.ravel(), g_e.ravel())
    K = None
    if order >= 2:
        rows = np.broadcast_to(dofs[:, :, None], H_e.shape).ravel()
        cols = np.broadcast_to(dofs[:, None, :], H_e.shape).ravel()
        K = sp.coo_matrix((H_e.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    if free is not None:
        f = f[free]
        if K is not None:
            K = K[free][:, free]
    return f, K, float(pi_e.sum())


# ---------------------------------------------------------------------------
# Target fields
# ---------------------------------------------------------------------------


def average_target_lengths(mesh, nodes=None):
    """Mean norm of the averaged edge vector per direction over all elements."""
    if mesh.n_elements == 0:
        raise ValueError("cannot average edge lengths of an empty mesh")
    return averaged_edge_lengths(mesh, nodes).mean(axis=0)


def measured_shape(mesh, nodes=None):
    """Current shape of every element expressed as a TargetShape."""
    xe = mesh.element_coords(nodes)
    v = edge_vectors(xe)
    vb = v.mean(axis=2)
    lengths = np.linalg.norm(vb, axis=-1)
    cos = node_angle_cosines(xe)
    if not np.isfinite(cos).all() or np.any(lengths <= 0):
        bad = int(np.flatnonzero(~np.isfinite(cos).all(axis=(1, 2)) | (lengths <= 0).any(axis=1))[0])
        raise DegenerateElementError(f"element {bad} is degenerate", element=bad)
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    # keep strictly inside (0, pi) for the TargetShape invariant
    angles = np.clip(angles, 1e-12, np.pi - 1e-12)
    ratios = np.einsum("mijc,mijc->mij", v, v) / np.einsum("mic,mic->mi", vb, vb)[:, :, None]
    return TargetShape(lengths, angles, ratios)


def increment_targets(start, goal, alpha):
    """Linear blend between a measured start shape and the goal shape."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"increment factor {alpha} outside [0, 1]")
    if alpha == 0.0:
        return TargetShape(start.lengths, start.angles, start.ratios)
    if alpha == 1.0:
        return TargetShape(goal.lengths, goal.angles, goal.ratios)
    blend = lambda a, b: a + alpha * (b - a)  # noqa: E731
    return TargetShape(
        blend(start.lengths, goal.lengths), blend(start.angles, goal.angles), blend(start.ratios, goal.ratios)
    )


@dataclass
class LocalizationField:
    """Target length field ``l_r(X) = l_r0 * f(X)`` with exponential ``f``.

    ``variant="point"``:  ``f = 1 + a exp(-c |X - X0|^2)``
    ``variant="cylindrical"``: ``f = 1 + a exp(-c ((r - r_ei)^2 + (z - l_e)^2))``

    where ``r`` is the distance from the z axis (``radial="distance"``) or,
    with ``radial="squared"``, the squared form ``x^2 + y^2``.
    The default amplitude ``a = 1`` doubles the target length at the center;
    ``-1 < a < 0`` refines toward the center instead.
    """

    l_r0: float
    center: object = None
    c: float = 0.0
    variant: str = "point"
    r_ei: float = 0.0
    l_e: float = 0.0
    radial: str = "distance"
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.amplitude > -1.0:
            raise ValueError("amplitude must exceed -1 so that target lengths stay positive")
        if self.c < 0:
            raise ValueError("decay rate c must be nonnegative")
        if not self.l_r0 > 0:
            raise ValueError("reference length l_r0 must be positive")
        if self.variant not in ("point", "cylindrical"):
            raise ValueError(f"unknown localization variant {self.variant!r}")
        if self.variant == "point":
            self.center = np.asarray(self.center, dtype=np.float64)

    def f(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.variant == "point":
            d2 = np.sum((X - self.center) ** 2, axis=1)
        else:
            rho2 = X[:, 0] ** 2 + X[:, 1] ** 2
            r_n = np.sqrt(rho2) if self.radial == "distance" else rho2
            d2 = r_n**2 + self.r_ei**2 - 2.0 * r_n * self.r_ei + (X[:, 2] - self.l_e) ** 2
        return 1.0 + self.amplitude * np.exp(-self.c * d2)

    def __call__(self, X):
        return self.l_r0 * self.f(X)


def localization_field(l_r0, center=None, c=0.0, variant="point", **kw):
    return LocalizationField(l_r0, center, c, variant, **kw)


def localized_targets(mesh, l_r0, f, theta=np.pi / 2, nodes=None):
    """Uniform-shape targets with lengths ``l_r0 * f(centroid)`` in all directions.

    ``f`` is any callable mapping (m, 3) points to (m,) factors; ``l_r0`` may
    be a scalar or a 3-vector.
    """
    c = mesh.centroids(nodes)
    scale = np.asarray(f(c), dtype=np.float64)
    lengths = np.broadcast_to(np.asarray(l_r0, dtype=np.float64), (3,))[None, :] * scale[:, None]
    return TargetShape.uniform(mesh.n_elements, lengths, theta)
