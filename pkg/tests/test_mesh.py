import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutstokes.geometry import classify_elements, disk
from cutstokes.mesh import (
    MacroPartition,
    build_macro_partition,
    extract_active_mesh,
    generate_structured_mesh,
    write_mesh_vtk,
)


def test_counts_n2():
    m = generate_structured_mesh(2)
    assert len(m.vertices) == 9
    assert m.n_elements == 8
    assert len(m.faces) == 16


def test_rejects_n1():
    with pytest.raises(ValueError):
        generate_structured_mesh(1)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 20), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_tiling_and_orientation(n, w, h):
    m = generate_structured_mesh(n, ((-w, -h), (w, h)))
    a = m.areas()
    assert np.all(a > 0)
    assert abs(a.sum() - 4 * w * h) <= 1e-14 * 4 * w * h * n
    assert m.h_T.max() / m.h_T.min() <= 2.0


def test_faces_conforming_n4():
    m = generate_structured_mesh(4)
    fe = m.face_elements
    x = m.vertices[m.faces]
    on_box = np.all(np.isclose(x[:, :, 0], -1), axis=1) | np.all(np.isclose(x[:, :, 0], 1), axis=1)
    on_box |= np.all(np.isclose(x[:, :, 1], -1), axis=1) | np.all(np.isclose(x[:, :, 1], 1), axis=1)
    assert np.all(fe[~on_box, 1] >= 0)
    assert np.all(fe[on_box, 1] == -1)
    assert np.all(fe[~on_box, 0] < fe[~on_box, 1])
    # local face k is opposite local vertex k
    for t in range(m.n_elements):
        for k in range(3):
            assert m.triangles[t, k] not in m.faces[m.element_faces[t, k]]


def test_active_mesh_sets_n16():
    m = generate_structured_mesh(16)
    g = disk()
    cl = classify_elements(m, g)
    act = extract_active_mesh(m, cl)
    assert set(act.cut_elements) | set(act.interior_elements) == set(act.active_elements)
    assert not set(act.cut_elements) & set(act.interior_elements)
    fe = m.face_elements[act.interior_faces_cut]
    assert np.all(np.isin(fe, act.cut_elements))
    phi = g(m.vertices[m.triangles[act.cut_elements]])
    assert np.all(phi.min(axis=1) < 0) and np.all(phi.max(axis=1) > 0)
    area = m.areas()
    assert area[act.interior_elements].sum() < np.pi / 4 < area[act.active_elements].sum()
    assert act.h == 1.0 / np.sqrt(len(np.unique(m.triangles[act.active_elements])))
    # mesh boundary faces have exactly one active neighbour
    nb = act.element_index[m.face_elements[act.mesh_boundary_faces]] >= 0
    assert np.all(nb.sum(axis=1) == 1)


def test_h_halves_under_refinement():
    hs, hT = [], []
    for n in (16, 32, 64, 128):
        m = generate_structured_mesh(n)
        hs.append(extract_active_mesh(m, classify_elements(m, disk())).h)
        hT.append(m.h_T.max())
    assert np.allclose(np.array(hT[:-1]) / np.array(hT[1:]), 2.0, rtol=1e-14)
    ratios = np.array(hs[:-1]) / np.array(hs[1:])
    # 1/sqrt(N) carries a perimeter term in N, so it approaches 2 from below
    assert np.all(np.diff(ratios) > 0)
    assert np.all(np.abs(ratios[1:] - 2) < 0.1)


def test_empty_active_mesh_is_an_error():
    m = generate_structured_mesh(4)
    cl = classify_elements(m, disk(center=(5.0, 5.0), radius=0.5))
    with pytest.raises(ValueError):
        extract_active_mesh(m, cl)


def test_macro_partition_reference_triangle():
    # the three triangles of a tiny mesh with one active element
    m = generate_structured_mesh(2, ((0.0, 0.0), (2.0, 2.0)))
    labels = np.full(m.n_elements, 2)
    e = 0  # (0,0), (1,0), (1,1)
    labels[e] = 0

    class L:
        pass

    cl = L()
    cl.labels = labels
    act = extract_active_mesh(m, cl)
    part = build_macro_partition(m, act)
    p = m.vertices[m.triangles[e]]
    assert np.allclose(part.x_T[0], p.mean(axis=0), atol=1e-15)
    # all faces are on the active-mesh boundary: midpoints
    for k in range(3):
        a, b = p[(k + 1) % 3], p[(k + 2) % 3]
        assert np.allclose(part.x_F[0, k], 0.5 * (a + b), atol=1e-15)


def test_macro_partition_shared_faces(disc16):
    mesh, active, part = disc16.mesh, disc16.active, disc16.partition
    fe = mesh.face_elements[active.interior_faces_active]
    rT = active.element_index[fe[:, 0]]
    rS = active.element_index[fe[:, 1]]
    f = active.interior_faces_active
    kT = np.argmax(mesh.element_faces[fe[:, 0]] == f[:, None], axis=1)
    kS = np.argmax(mesh.element_faces[fe[:, 1]] == f[:, None], axis=1)
    xT = part.x_F[rT, kT]
    xS = part.x_F[rS, kS]
    assert np.array_equal(xT, xS)
    # on the segment between the barycenters and strictly inside the face
    a = mesh.vertices[mesh.faces[f, 0]]
    b = mesh.vertices[mesh.faces[f, 1]]
    t = np.einsum("ij,ij->i", xT - a, b - a) / np.einsum("ij,ij->i", b - a, b - a)
    assert np.all((t > 0) & (t < 1))
    c1, c2 = part.x_T[rT], part.x_T[rS]
    cross = (c2 - c1)[:, 0] * (xT - c1)[:, 1] - (c2 - c1)[:, 1] * (xT - c1)[:, 0]
    assert np.abs(cross).max() < 1e-15
    # sub-triangles tile each element
    sa = part.sub_areas()
    assert np.all(sa > 0)
    assert np.allclose(sa.sum(axis=1), mesh.areas()[part.elements], rtol=1e-14, atol=0)
    assert MacroPartition.sub_triangles.shape == (6, 3)


def test_mesh_vtk_roundtrip(tmp_path):
    m = generate_structured_mesh(3)
    path = tmp_path / "mesh.vtk"
    write_mesh_vtk(path, m, cell_data={"id": np.arange(m.n_elements)})
    text = path.read_text().split("\n")
    assert text[0].startswith("# vtk DataFile")
    assert f"POLYGONS {m.n_elements} {4 * m.n_elements}" in text
    i = text.index("LOOKUP_TABLE default")
    assert [float(v) for v in text[i + 1 : i + 1 + m.n_elements]] == list(range(m.n_elements))
