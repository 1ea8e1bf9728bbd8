"""Seeded mesh generators for the demonstration scenarios.

Every generator is deterministic for a given seed and returns a
:class:`~hexrefit.mesh.Mesh` with named node sets.  ``DEMO_CONFIGS`` holds
a matching refit configuration (JSON-compatible dict) for each demo.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh, boundary_facets_from_elements


def structured_elements(nx, ny, nz):
    """Connectivity of an ``nx * ny * nz`` structured block (x fastest)."""
    idx = np.arange((nx + 1) * (ny + 1) * (nz + 1)).reshape(nz + 1, ny + 1, nx + 1)
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(order="F"), j.ravel(order="F"), k.ravel(order="F")
    corners = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    return np.stack([idx[k + dk, j + dj, i + di] for di, dj, dk in corners], axis=1)


def _block_sets(ijk, n):
    nx, ny, nz = n
    i, j, k = ijk
    sets = {
        "xmin": i == 0, "xmax": i == nx,
        "ymin": j == 0, "ymax": j == ny,
        "zmin": k == 0, "zmax": k == nz,
    }
    faces = np.stack(list(sets.values()))
    on_x = sets["xmin"] | sets["xmax"]
    on_y = sets["ymin"] | sets["ymax"]
    on_z = sets["zmin"] | sets["zmax"]
    sets["boundary"] = faces.any(axis=0)
    sets["sides"] = on_x | on_y
    sets["vertical_edges"] = on_x & on_y
    sets["edges"] = (on_x.astype(int) + on_y + on_z) >= 2
    sets["corners"] = on_x & on_y & on_z
    return {name: np.flatnonzero(m) for name, m in sets.items()}


def block_mesh(nx, ny, nz, lengths=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Regular box of ``nx * ny * nz`` hexahedra with face, edge and corner node sets."""
    lx, ly, lz = lengths
    k, j, i = np.meshgrid(np.arange(nz + 1), np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    nodes = np.stack([i * lx / nx, j * ly / ny, k * lz / nz], axis=1) + np.asarray(origin, dtype=np.float64)
    elements = structured_elements(nx, ny, nz)
    return Mesh(nodes, elements, boundary_facets_from_elements(elements), _block_sets((i, j, k), (nx, ny, nz)))


def unit_cube():
    """A single unit cube element."""
    return block_mesh(1, 1, 1)


def random_partition(n, rng, strength=0.6):
    """Monotone partition of [0, 1] into ``n`` cells of random relative size."""
    w = rng.uniform(1.0 - strength, 1.0 + strength, size=n)
    return np.concatenate([[0.0], np.cumsum(w) / w.sum()])


def distorted_grid(n=40, size=2.0, thickness=None, seed=0, strength=0.6):
    """Planar grid of ``n * n * 1`` skewed hexahedra.

    The four edges of the square are divided at independent random
    positions; node (i, j) is the intersection of the straight line joining
    the i-th divisions of the bottom and top edges with the line joining the
    j-th divisions of the left and right edges.  Mismatched divisions yield
    sheared, unequal quads.
    """
    rng = np.random.default_rng(seed)
    bottom, top, left, right = (size * random_partition(n, rng, strength) for _ in range(4))
    # x = b + (t - b) y / s  and  y = l + (r - l) x / s, solved per node
    B, L = np.meshgrid(bottom, left, indexing="xy")
    T, R = np.meshgrid(top, right, indexing="xy")
    a = (T - B) / size
    b = (R - L) / size
    x = (B + a * L) / (1.0 - a * b)
    y = L + b * x
    h = size / n if thickness is None else thickness
    xy = np.stack([x.ravel(), y.ravel()], axis=1)
    nodes = np.concatenate([np.c_[xy, np.zeros(len(xy))], np.c_[xy, np.full(len(xy), h)]])
    elements = structured_elements(n, n, 1)
    k, j, i = np.meshgrid(np.arange(2), np.arange(n + 1), np.arange(n + 1), indexing="ij")
    return Mesh(nodes, elements, boundary_facets_from_elements(elements), _block_sets((i.ravel(), j.ravel(), k.ravel()), (n, n, 1)))


def jittered_grid(n=8, size=1.0, seed=3, amplitude=0.3, twist=1.2):
    """Heavily distorted cube grid for incrementation tests.

    Interior nodes of a regular ``n^3`` grid are twisted about the vertical
    axis by up to ``twist`` radians and randomly moved by ``amplitude``
    times the spacing; boundary nodes stay put.
    """
    rng = np.random.default_rng(seed)
    mesh = block_mesh(n, n, n, (size, size, size))
    x = mesh.nodes.copy()
    interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.node_set("boundary"))
    c = 0.5 * size
    p = x[interior] - c
    # bump vanishing on the boundary
    bump = np.prod(np.sin(np.pi * x[interior] / size), axis=1)
    ang = twist * bump
    cs, sn = np.cos(ang), np.sin(ang)
    x[interior, 0] = c + cs * p[:, 0] - sn * p[:, 1]
    x[interior, 1] = c + sn * p[:, 0] + cs * p[:, 1]
    x[interior] += amplitude * (size / n) * rng.uniform(-1.0, 1.0, size=(len(interior), 3))
    return mesh.with_nodes(x)


def pyramid(nx=7, ny=3, nz=2, taper=0.35, seed=None, jitter=0.0):
    """Truncated pyramid of ``nx * ny * nz`` hexahedra on three symmetry planes.

    Built from a block of unit cubes whose x and y coordinates shrink
    linearly with height, so side faces lean inward and no element is a
    cube.  Node sets ``x0``, ``y0`` and ``z0`` hold the nodes on the
    planes carrying roller supports.
    """
    mesh = block_mesh(nx, ny, nz, (nx, ny, nz))
    x = mesh.nodes.copy()
    s = 1.0 - taper * x[:, 2] / nz
    x[:, 0] *= s
    x[:, 1] *= s
    if jitter:
        rng = np.random.default_rng(seed)
        x += jitter * rng.uniform(-1.0, 1.0, size=x.shape)
        for name, c in (("xmin", 0), ("ymin", 1), ("zmin", 2)):
            x[mesh.node_set(name), c] = 0.0
    sets = dict(mesh.node_sets)
    sets["x0"], sets["y0"], sets["z0"] = sets["xmin"], sets["ymin"], sets["zmin"]
    return Mesh(x, mesh.elements, mesh.boundary_facets, sets)


def sheared_block(nx=50, ny=10, nz=5, dims=(1.0, 0.25, 0.125), amplitude=0.03, power=3.0):
    """Thin block whose top layer is dragged sideways.

    The top face (``y = H``) is displaced tangentially by
    ``u_x = A sin^2(pi x / L) sin(pi z / W) (y / H)^p``, which mimics a tool
    sweeping the surface: boundary-layer elements become sheared while the
    surface itself stays planar.  Node set ``top`` is the sheared face,
    ``fixed_boundary`` every other boundary node plus the top-face rim.
    """
    L, H, W = dims
    mesh = block_mesh(nx, ny, nz, dims)
    x = mesh.nodes.copy()
    ux = amplitude * np.sin(np.pi * x[:, 0] / L) ** 2 * np.sin(np.pi * x[:, 2] / W) * (x[:, 1] / H) ** power
    x[:, 0] += ux
    sets = dict(mesh.node_sets)
    top = sets["ymax"]
    rim = np.intersect1d(top, sets["edges"])
    sets["top"] = top
    sets["top_rim"] = rim
    sets["fixed_boundary"] = np.union1d(np.setdiff1d(sets["boundary"], top), rim)
    return Mesh(x, mesh.elements, mesh.boundary_facets, sets)


def boundary_layer_elements(mesh, nodeset="top"):
    """Elements with at least one node in ``nodeset``."""
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[mesh.node_set(nodeset)] = True
    return np.flatnonzero(mask[mesh.elements].any(axis=1))


DEMO_CONFIGS = {
    "distorted-grid": {
        "eps_E": 1e-2,
        "eps_A": 1e-2,
        "eps_m": 2e8,
        "targets": {"type": "uniform"},
        "dirichlet": [{"nodeset": "*", "dofs": "z"}, {"nodeset": "vertical_edges", "dofs": "xyz"}],
        "sliding": [{"nodeset": "sides", "sharp_angle": 60.0}],
    },
    "localized-grid": {
        "eps_E": 1e-2,
        "eps_A": 1e-2,
        "eps_m": 2e8,
        "targets": {"type": "localized", "l_r0": 0.025, "center": [1.0, 1.0, 0.0], "c": 0.1, "variant": "point"},
        "dirichlet": [{"nodeset": "*", "dofs": "z"}, {"nodeset": "vertical_edges", "dofs": "xyz"}],
        "sliding": [{"nodeset": "sides", "sharp_angle": 60.0}],
    },
    "pyramid": {
        "eps_E": 1e-2,
        "eps_A": 1e-2,
        "targets": {"type": "uniform", "lengths": [1.0, 1.0, 1.0]},
        "dirichlet": [{"nodeset": "x0", "dofs": "x"}, {"nodeset": "y0", "dofs": "y"}, {"nodeset": "z0", "dofs": "z"}],
    },
    "sheared-block": {
        "eps_E": 1e-2,
        "eps_A": 1e-2,
        "eps_m": 1e11,
        "targets": {"type": "uniform"},
        "dirichlet": [{"nodeset": "fixed_boundary", "dofs": "xyz"}],
        "sliding": [{"nodeset": "top", "sharp_angle": 60.0}],
    },
    "jittered-grid": {
        "eps_E": 1e-2,
        "eps_A": 1e-2,
        "targets": {"type": "uniform"},
        "dirichlet": [{"nodeset": "boundary", "dofs": "xyz"}],
    },
}


def make_demo(name, seed=0):
    """Mesh for a named demo; returns ``(mesh, config_dict)``."""
    builders = {
        "distorted-grid": lambda: distorted_grid(seed=seed),
        "localized-grid": lambda: distorted_grid(seed=seed),
        "pyramid": lambda: pyramid(),
        "sheared-block": lambda: sheared_block(),
        "jittered-grid": lambda: jittered_grid(seed=seed if seed else 3),
    }
    if name not in builders:
        raise KeyError(f"unknown demo {name!r}; choose from {sorted(builders)}")
    import copy

    return builders[name](), copy.deepcopy(DEMO_CONFIGS[name])
