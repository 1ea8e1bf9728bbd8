import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hexrefit import io
from hexrefit.demos import distorted_grid, pyramid
from hexrefit.io import MeshFormatError, parse_native
from hexrefit.quality import quality_report


def _same_mesh(a, b, sets=True):
    assert_array_equal(a.nodes, b.nodes)
    assert_array_equal(a.elements, b.elements)
    assert_array_equal(np.sort(a.boundary_facets, axis=1)[np.lexsort(np.sort(a.boundary_facets, axis=1).T)],
                       np.sort(b.boundary_facets, axis=1)[np.lexsort(np.sort(b.boundary_facets, axis=1).T)])
    if sets:
        assert set(a.node_sets) == set(b.node_sets)
        for k in a.node_sets:
            assert_array_equal(a.node_sets[k], b.node_sets[k])


def test_native_roundtrip_is_bit_exact(tmp_path):
    m = distorted_grid(n=5, seed=4)
    p = tmp_path / "g.mesh"
    io.save_mesh(m, p, comments=["seed 4"])
    back = io.load_mesh(p)
    _same_mesh(m, back)
    assert io.header_comments(p) == ["seed 4"]


def test_vtk_roundtrip(tmp_path):
    m = pyramid()
    p = tmp_path / "p.vtk"
    io.save_mesh(m, p, fmt="vtk", cell_data={"skew": quality_report(m).skewness})
    back = io.load_mesh(p)
    _same_mesh(m, back, sets=False)


def test_native_parse_errors():
    with pytest.raises(MeshFormatError):
        parse_native("NOT A MESH\n")
    good = "MESHFIT v1\nNODES 1\n0 0 0\n"
    with pytest.raises(MeshFormatError):
        parse_native(good + "HEX8 1\n0 0 0\n")


def test_quality_csv_roundtrip(tmp_path):
    rep = quality_report(pyramid())
    p = tmp_path / "q.csv"
    io.save_quality_csv(rep, p)
    back = io.load_quality_csv(p)
    assert_array_equal(back["skewness"], rep.skewness)
    assert_array_equal(back["mean_edge"], rep.mean_edge)


def test_field_csv_roundtrip(tmp_path, rng):
    pts = rng.standard_normal((7, 3))
    s = rng.standard_normal(7)
    T = rng.standard_normal((7, 3, 3))
    io.save_field_csv(tmp_path / "s.csv", pts, s)
    io.save_field_csv(tmp_path / "t.csv", pts, T)
    p1, s1 = io.load_field_csv(tmp_path / "s.csv")
    p2, T2 = io.load_field_csv(tmp_path / "t.csv")
    assert_array_equal(p1, pts)
    assert_array_equal(s1, s)
    assert_array_equal(T2, T)
