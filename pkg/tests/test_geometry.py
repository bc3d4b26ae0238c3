import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutstokes.clipping import clip_triangles
from cutstokes.geometry import (
    CUT,
    EXTERIOR,
    INTERIOR,
    LevelSetGeometry,
    MeshTooCoarseError,
    build_boundary_quadrature,
    build_cut_quadrature,
    build_full_quadrature,
    classify_elements,
    disk,
    triangle_rule,
)
from cutstokes.mesh import BackgroundMesh, _face_topology, build_macro_partition, extract_active_mesh, generate_structured_mesh


def single_triangle_mesh(tri):
    tri = np.asarray(tri, dtype=float)
    triangles = np.array([[0, 1, 2]])
    faces, fe, ef = _face_topology(triangles, 3)
    h = np.linalg.norm(tri[[1, 2, 0]] - tri[[2, 0, 1]], axis=1).max()
    return BackgroundMesh(tri, triangles, faces, fe, ef, np.array([h]), ((0, 0), (1, 1)))


def affine_levelset(tri, values):
    """Level set that is affine and takes ``values`` at the corners of ``tri``."""
    A = np.column_stack([np.asarray(tri), np.ones(3)])
    coef = np.linalg.solve(A, np.asarray(values, dtype=float))
    return LevelSetGeometry(lambda x: np.asarray(x) @ coef[:2] + coef[2], lambda x: np.tile(coef[:2], (len(x), 1)))


def study(n):
    mesh = generate_structured_mesh(n)
    geom = disk()
    cl = classify_elements(mesh, geom)
    active = extract_active_mesh(mesh, cl)
    part = build_macro_partition(mesh, active)
    return mesh, geom, cl, active, part


def test_disk_levelset_is_distance():
    g = disk()
    x = np.array([[0.3, 0.4], [0.0, 0.0], [1.0, -1.0]])
    assert np.allclose(g(x), np.linalg.norm(x, axis=1) - 0.5, atol=0, rtol=0)
    assert np.allclose(g.grad(x[[0, 2]]), x[[0, 2]] / np.linalg.norm(x[[0, 2]], axis=1)[:, None])


def test_generic_levelset_uses_finite_differences():
    g = LevelSetGeometry(lambda x: np.sum(np.asarray(x) ** 2, axis=-1) - 0.25)
    x = np.array([[0.3, 0.1]])
    assert np.allclose(g.grad(x), 2 * x, atol=1e-7)
    p = g.project(np.array([[0.4, 0.3]]))
    assert abs(g(p)[0]) < 1e-13


def test_every_element_has_one_label():
    mesh, _, cl, _, _ = study(16)
    counts = cl.counts()
    assert sum(counts.values()) == mesh.n_elements
    assert np.all(cl.inside_fraction[cl.labels == INTERIOR] == 1.0)
    assert np.all(cl.inside_fraction[cl.labels == EXTERIOR] == 0.0)
    f = cl.inside_fraction[cl.labels == CUT]
    assert np.all((f > 0) & (f < 1))
    assert cl[int(np.flatnonzero(cl.labels == CUT)[0])].label == "cut"


def test_area_from_fractions_n16():
    mesh, _, cl, _, _ = study(16)
    area = np.sum(cl.inside_fraction * mesh.areas())
    assert abs(area - np.pi / 4) < 2e-2


def test_interior_element_fully_inside():
    mesh, geom, cl, _, _ = study(16)
    e = np.flatnonzero(np.all(geom(mesh.vertices[mesh.triangles]) < -0.05, axis=1))[0]
    assert cl[e].label == "interior"
    assert cl[e].inside_area_fraction == 1.0


@pytest.mark.parametrize("key", ["clip_reference", "clip_skew"])
def test_cut_fraction_matches_clipping_oracle(oracles, key):
    o = oracles[key]
    mesh = single_triangle_mesh(o["triangle"])
    cl = classify_elements(mesh, affine_levelset(o["triangle"], o["phi"]))
    assert cl.labels[0] == CUT
    assert abs(cl.inside_fraction[0] - o["exact"]) < 1e-12
    # the dense-sampling estimate is an independent sanity check on the exact value
    assert abs(o["sampled"] - o["exact"]) < 2e-3


def test_tangent_vertex_uses_barycenter_rule():
    tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    mesh = single_triangle_mesh(tri)
    # zero at vertex 0, positive elsewhere: only a touching point, no area inside
    cl = classify_elements(mesh, affine_levelset(tri, [0.0, 0.2, 0.3]))
    assert cl.labels[0] == EXTERIOR
    cl = classify_elements(mesh, affine_levelset(tri, [0.0, -0.2, -0.3]))
    assert cl.labels[0] == INTERIOR


def test_double_crossing_is_rejected():
    # the circle pokes through the edge y = 1, 0 < x < 1 between two outside vertices
    mesh = generate_structured_mesh(2)
    geom = disk(center=(0.3, 0.55), radius=0.5)
    with pytest.raises(MeshTooCoarseError):
        classify_elements(mesh, geom)


@pytest.mark.parametrize("order", [2, 3, 4, 6, 8])
def test_triangle_rule_exactness(order):
    pts, w = triangle_rule(order)
    assert np.all(w > 0)
    for a in range(order + 1):
        for b in range(order + 1 - a):
            # int_{ref} x^a y^b = a! b! / (a + b + 2)!
            from math import factorial

            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert abs(np.dot(w, pts[:, 0] ** a * pts[:, 1] ** b) - exact) < 1e-14


def test_cut_quadrature_invariants():
    mesh, geom, cl, active, part = study(16)
    q = build_cut_quadrature(part, cl, order=2)
    assert np.all(q.weights > 0)
    assert np.all(geom(q.points) <= 1e-12)
    sums = np.bincount(q.elements, q.weights, minlength=mesh.n_elements)
    interior = active.interior_elements
    assert np.allclose(sums[interior], mesh.areas()[interior], rtol=1e-12, atol=0)
    cut = active.cut_elements
    assert np.all(q.fragments[cut] > 0)
    assert np.allclose(sums[cut], cl.inside_fraction[cut] * mesh.areas()[cut], rtol=1e-10)


def test_interior_polynomial_exact():
    mesh, _, cl, active, part = study(8)
    e = active.interior_elements[0]
    for order in (2, 4):
        q = build_full_quadrature(part, order, elements=np.array([e]))
        x, y = q.points.T
        p = mesh.vertices[mesh.triangles[e]]
        # exact integral of x^2 y^2 over the triangle by a high-order reference rule
        ref_pts, ref_w = triangle_rule(12)
        e1, e2 = p[1] - p[0], p[2] - p[0]
        X = p[0] + ref_pts[:, :1] * e1 + ref_pts[:, 1:] * e2
        det = abs(e1[0] * e2[1] - e1[1] * e2[0])
        exact = det * np.dot(ref_w, X[:, 0] ** order)
        assert abs(q.integrate(x**order) - exact) <= 1e-12 * abs(exact) + 1e-16


def test_quadrature_rejects_low_order():
    mesh, geom, cl, _, part = study(8)
    with pytest.raises(ValueError):
        build_cut_quadrature(part, cl, order=1)
    with pytest.raises(ValueError):
        build_boundary_quadrature(mesh, geom, cl, order=1)


def test_disk_moment_integrals():
    errs = []
    for n in (16, 32, 64):
        mesh, geom, cl, active, part = study(n)
        q = build_cut_quadrature(part, cl, order=2)
        errs.append(abs(q.integrate(np.sum(q.points**2, axis=1)) - np.pi / 32))
    assert errs[-1] < 1e-4
    assert np.polyfit(np.log([2 / 16, 2 / 32, 2 / 64]), np.log(errs), 1)[0] > 1.9


def test_boundary_quadrature_invariants():
    mesh, geom, cl, _, _ = study(16)
    bq = build_boundary_quadrature(mesh, geom, cl)
    assert np.all(bq.weights > 0)
    assert np.allclose(np.linalg.norm(bq.normals, axis=1), 1.0, atol=1e-12)
    assert np.all(np.abs(geom(bq.points)) <= 1e-12)
    eps = 1e-6
    assert np.all(geom(bq.points + eps * bq.normals) > geom(bq.points))
    assert abs(bq.weights.sum() - np.pi) < 1e-3
    assert np.all(np.abs(bq.integrate(bq.normals)) < 1e-8)


def test_boundary_x2_moment_converges():
    errs = []
    for n in (16, 32, 64):
        mesh, geom, cl, _, _ = study(n)
        bq = build_boundary_quadrature(mesh, geom, cl)
        errs.append(abs(bq.integrate(bq.points[:, 0] ** 2) - np.pi / 8))
    assert np.polyfit(np.log([2 / 16, 2 / 32, 2 / 64]), np.log(errs), 1)[0] > 1.9


def test_segment_lengths_match_exact_arcs(oracles):
    mesh, geom, cl, active, _ = study(16)
    bq = build_boundary_quadrature(mesh, geom, cl, n_sub=16)
    rows = oracles["arcs_n16"]
    cen = mesh.centroids()[active.cut_elements]
    from conftest import match_rows

    idx = match_rows(cen, [r["centroid"] for r in rows])
    length = np.bincount(bq.elements, bq.weights, minlength=mesh.n_elements)[active.cut_elements]
    exact = np.array([r["length"] for r in rows])
    # projected polyline with 16 pieces per element: chord error well below 1e-5
    assert np.abs(length[idx] - exact).max() < 5e-6
    assert len(rows) == len(active.cut_elements)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-1.0, 1.0).filter(lambda v: abs(v) > 1e-3), min_size=3, max_size=3),
)
def test_clipped_area_never_exceeds_triangle(values):
    tri = np.array([[[0.0, 0.0], [1.0, 0.0], [0.2, 0.9]]])
    frags, parent = clip_triangles(tri, np.array([values]))
    area = 0.0
    for f in frags:
        d1, d2 = f[1] - f[0], f[2] - f[0]
        a = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
        assert a >= -1e-15
        area += a
    full = 0.45
    neg = sum(v <= 0 for v in values)
    if neg == 0:
        assert area == 0.0
    elif neg == 3:
        assert abs(area - full) < 1e-14
    else:
        assert 0 < area < full
    # complementary clip covers the rest
    frags2, _ = clip_triangles(tri, -np.array([values]))
    area2 = sum(0.5 * abs((f[1] - f[0])[0] * (f[2] - f[0])[1] - (f[1] - f[0])[1] * (f[2] - f[0])[0]) for f in frags2)
    assert abs(area + area2 - full) < 1e-13
