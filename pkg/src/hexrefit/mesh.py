"""Hexahedral mesh data model and geometric primitives.

Node ordering of a hex8 element (parametric corner coordinates)::

    0: (0,0,0)  1: (1,0,0)  2: (1,1,0)  3: (0,1,0)
    4: (0,0,1)  5: (1,0,1)  6: (1,1,1)  7: (0,1,1)

Edges are grouped by the parametric direction they run along.  Within a
direction the four edges are numbered j = 0..3 and always point from the
lower to the higher parametric coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: (direction, j) -> (tail node, head node)
HEX_EDGES = np.array(
    [
        [[0, 1], [3, 2], [4, 5], [7, 6]],
        [[0, 3], [1, 2], [4, 7], [5, 6]],
        [[0, 4], [1, 5], [2, 6], [3, 7]],
    ],
    dtype=np.int64,
)

#: Parametric corner coordinates of the eight nodes.
HEX_CORNERS = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
    dtype=np.int64,
)

#: Local faces with outward orientation (right-hand rule).
HEX_FACES = np.array(
    [
        [0, 3, 2, 1],
        [4, 5, 6, 7],
        [0, 1, 5, 4],
        [1, 2, 6, 5],
        [2, 3, 7, 6],
        [3, 0, 4, 7],
    ],
    dtype=np.int64,
)


def _node_edge_table():
    # for every node and direction: (direction, j, sign) of the edge leaving the node
    table = np.zeros((8, 3, 2), dtype=np.int64)
    for i in range(3):
        for j in range(4):
            tail, head = HEX_EDGES[i, j]
            table[tail, i] = (j, 1)
            table[head, i] = (j, -1)
    return table


#: NODE_EDGES[n, i] = (j, sign): edge j of direction i touches node n; sign=+1
#: if the stored edge vector already points away from n.
NODE_EDGES = _node_edge_table()

#: Direction pairs used for the three included angles at each node.
ANGLE_PAIRS = ((0, 1), (0, 2), (1, 2))


class MeshError(ValueError):
    """Raised when a mesh violates a structural invariant."""


class DegenerateElementError(ArithmeticError):
    """Raised when an element has a (near) zero-length edge or averaged edge."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True, eq=False)
class Mesh:
    """Hex8 mesh: coordinates, connectivity, boundary facets and node sets.

    Parameters
    ----------
    nodes : (n, 3) float array
    elements : (m, 8) int array
    boundary_facets : (k, 4) int array, outward oriented quads
    node_sets : dict of name -> int array of node indices
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_facets: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))
    node_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=np.float64).reshape(-1, 3)
        elements = np.array(self.elements, dtype=np.int64).reshape(-1, 8)
        facets = np.array(self.boundary_facets, dtype=np.int64).reshape(-1, 4)
        sets = {str(k): np.array(v, dtype=np.int64).ravel() for k, v in self.node_sets.items()}
        n = len(nodes)
        for e, conn in enumerate(elements):
            bad = conn[(conn < 0) | (conn >= n)]
            if bad.size:
                raise MeshError(f"element {e} references node {bad[0]} but mesh has {n} nodes")
            if len(np.unique(conn)) != 8:
                raise MeshError(f"element {e} has repeated node indices {conn.tolist()}")
        used = np.zeros(n, dtype=bool)
        used[elements.ravel()] = True
        for f, conn in enumerate(facets):
            bad = conn[(conn < 0) | (conn >= n)]
            if bad.size:
                raise MeshError(f"facet {f} references node {bad[0]} but mesh has {n} nodes")
            if not used[conn].all():
                raise MeshError(f"facet {f} references node {conn[~used[conn]][0]} not used by any element")
        for name, idx in sets.items():
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise MeshError(f"node set {name!r} references an invalid node index")
        for arr in (nodes, elements, facets):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "boundary_facets", facets)
        object.__setattr__(self, "node_sets", sets)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def with_nodes(self, nodes):
        """Same topology, new coordinates."""
        return Mesh(nodes, self.elements, self.boundary_facets, self.node_sets)

    def node_set(self, name):
        """Indices of a named node set; ``"*"`` means every node."""
        if name == "*":
            return np.arange(self.n_nodes)
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(f"unknown node set {name!r}; have {sorted(self.node_sets)}") from None

    def facets_in_set(self, name):
        """Indices of boundary facets whose four nodes all lie in the node set."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.node_set(name)] = True
        return np.flatnonzero(mask[self.boundary_facets].all(axis=1))

    def element_coords(self, nodes=None):
        x = self.nodes if nodes is None else np.asarray(nodes, dtype=np.float64)
        return x[self.elements]

    def centroids(self, nodes=None):
        return self.element_coords(nodes).mean(axis=1)

    def diameter(self):
        if self.n_nodes == 0:
            return 0.0
        return float(np.linalg.norm(self.nodes.max(axis=0) - self.nodes.min(axis=0)))


def boundary_facets_from_elements(elements):
    """Exterior quad faces of a hex mesh, oriented outward.

    A face is exterior when no other element shares its node set.
    """
    elements = np.asarray(elements, dtype=np.int64).reshape(-1, 8)
    faces = elements[:, HEX_FACES].reshape(-1, 4)
    keys = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return faces[counts[inverse.ravel()] == 1]


@dataclass(frozen=True)
class ElementEdgeFrame:
    """The 12 edge vectors of one element and their direction averages.

    ``v[i, j]`` is edge ``j`` of parametric direction ``i``; ``v_bar[i]`` is
    the mean of ``v[i, :]``.
    """

    v: np.ndarray
    v_bar: np.ndarray

    @classmethod
    def from_coords(cls, x):
        x = np.asarray(x, dtype=np.float64).reshape(8, 3)
        v = x[HEX_EDGES[..., 1]] - x[HEX_EDGES[..., 0]]
        return cls(v, v.mean(axis=1))

    def outgoing(self, node, direction):
        """Edge vector of ``direction`` pointing away from ``node``."""
        j, sign = NODE_EDGES[node, direction]
        return sign * self.v[direction, j]


def edge_vectors(xe):
    """Edge vectors for a batch of elements, shape (m, 3, 4, 3)."""
    xe = np.asarray(xe, dtype=np.float64)
    return xe[:, HEX_EDGES[..., 1]] - xe[:, HEX_EDGES[..., 0]]


def element_edge_frame(mesh, e, nodes=None):
    """Edge frame of element ``e`` on the current (or given) coordinates."""
    if not 0 <= e < mesh.n_elements:
        raise IndexError(f"element index {e} out of range for {mesh.n_elements} elements")
    x = mesh.nodes if nodes is None else np.asarray(nodes)
    return ElementEdgeFrame.from_coords(x[mesh.elements[e]])


def averaged_edge_lengths(mesh, nodes=None):
    """Norm of each element's averaged edge vector, shape (m, 3)."""
    v = edge_vectors(mesh.element_coords(nodes))
    return np.linalg.norm(v.mean(axis=2), axis=-1)


def node_angle_cosines(xe):
    """Cosines of the 24 included angles per element, shape (m, 8, 3).

    Angles are measured between edge vectors pointing away from the node,
    for the direction pairs in ``ANGLE_PAIRS``.  Zero-length edges give NaN.
    """
    v = edge_vectors(xe)
    out = np.empty((len(v), 8, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        for n in range(8):
            vecs = [NODE_EDGES[n, i, 1] * v[:, i, NODE_EDGES[n, i, 0]] for i in range(3)]
            for k, (a, b) in enumerate(ANGLE_PAIRS):
                va, vb = vecs[a], vecs[b]
                denom = np.linalg.norm(va, axis=1) * np.linalg.norm(vb, axis=1)
                out[:, n, k] = np.einsum("ij,ij->i", va, vb) / denom
    return out


def facet_normals(x, facets):
    """Unit normal of each quad facet at its parametric center."""
    q = np.asarray(x)[np.asarray(facets)]
    # bilinear map derivatives at the center
    a1 = 0.5 * (q[:, 1] + q[:, 2] - q[:, 0] - q[:, 3])
    a2 = 0.5 * (q[:, 2] + q[:, 3] - q[:, 0] - q[:, 1])
    n = np.cross(a1, a2)
    norm = np.linalg.norm(n, axis=1)
    if np.any(norm == 0.0):
        raise DegenerateElementError(f"facet {int(np.argmin(norm))} has zero area")
    return n / norm[:, None]


class NormalError(ValueError):
    """Averaged nodal normal vanishes; the node must be pinned."""

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = tuple(int(n) for n in nodes)


def extract_boundary_frame(mesh, facet_set, nodes=None, allow_zero=False):
    """Averaged unit normal per node of a facet set.

    Returns ``(node_ids, normals)``.  The normal of a node is the normalized
    sum of the unit normals of its adjacent facets.  If the sum vanishes
    (opposing facets at a slit) a :class:`NormalError` is raised, unless
    ``allow_zero`` in which case a zero vector is returned for that node.
    """
    x = mesh.nodes if nodes is None else np.asarray(nodes)
    facets = mesh.boundary_facets[np.asarray(facet_set, dtype=np.int64)]
    fn = facet_normals(x, facets)
    node_ids = np.unique(facets)
    local = np.searchsorted(node_ids, facets)
    acc = np.zeros((len(node_ids), 3))
    np.add.at(acc, local.ravel(), np.repeat(fn, 4, axis=0))
    norm = np.linalg.norm(acc, axis=1)
    zero = norm < 1e-12
    if zero.any() and not allow_zero:
        bad = node_ids[zero]
        raise NormalError(f"averaged normal vanishes at node(s) {bad.tolist()}; pin them", bad)
    normals = np.zeros_like(acc)
    normals[~zero] = acc[~zero] / norm[~zero, None]
    return node_ids, normals


#: 2-point Gauss rule on [-1, 1]
GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def gauss_points(mesh, nodes=None):
    """Physical coordinates of the 2x2x2 Gauss points, shape (m*8, 3)."""
    xe = mesh.element_coords(nodes)
    pts = []
    for t in GAUSS2:
        for s in GAUSS2:
            for r in GAUSS2:
                xi = (np.array([r, s, t]) + 1.0) / 2.0
                c = HEX_CORNERS
                N = np.prod(np.where(c == 1, xi, 1.0 - xi), axis=1)
                pts.append(np.einsum("k,mkd->md", N, xe))
    return np.stack(pts, axis=1).reshape(-1, 3)
