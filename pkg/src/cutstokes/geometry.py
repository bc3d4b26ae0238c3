"""Level-set geometry, element classification and quadrature on cut cells.

Inside an element the interface is represented by the chord between the two
edge roots of the level set; area integrals are taken over the element
clipped by that chord.  Boundary integrals use a finer polyline whose nodes
are projected onto the exact zero level set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .clipping import clip_triangles

__all__ = [
    "LevelSetGeometry",
    "ElementClassification",
    "Classification",
    "CutQuadrature",
    "BoundaryQuadrature",
    "MeshTooCoarseError",
    "disk",
    "classify_elements",
    "triangle_rule",
    "build_cut_quadrature",
    "build_full_quadrature",
    "build_boundary_quadrature",
]

INTERIOR, CUT, EXTERIOR = 0, 1, 2
_LABEL_NAMES = {INTERIOR: "interior", CUT: "cut", EXTERIOR: "exterior"}


class MeshTooCoarseError(ValueError):
    """The interface crosses an element in a way the chord model cannot represent."""


@dataclass(frozen=True)
class LevelSetGeometry:
    """Domain ``{phi < 0}`` with boundary ``{phi = 0}``.

    ``gradient`` may be omitted, in which case central differences are used.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    kind: str = "generic-callable"
    center: Optional[tuple] = None
    radius: Optional[float] = None

    def __call__(self, x) -> np.ndarray:
        return self.phi(np.asarray(x, dtype=float))

    def grad(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.gradient is not None:
            return self.gradient(x)
        eps = 1e-7
        ex = np.array([eps, 0.0])
        ey = np.array([0.0, eps])
        gx = (self.phi(x + ex) - self.phi(x - ex)) / (2 * eps)
        gy = (self.phi(x + ey) - self.phi(x - ey)) / (2 * eps)
        return np.column_stack([gx, gy])

    def normal(self, x) -> np.ndarray:
        g = self.grad(x)
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def project(self, x, tol=1e-14, max_iter=50) -> np.ndarray:
        """Map points near the interface onto ``phi = 0``."""
        x = np.array(np.atleast_2d(x), dtype=float)
        if self.kind == "analytic-disk":
            c = np.asarray(self.center, dtype=float)
            d = x - c
            return c + self.radius * d / np.linalg.norm(d, axis=1, keepdims=True)
        for _ in range(max_iter):
            f = self.phi(x)
            if np.all(np.abs(f) <= tol):
                break
            g = self.grad(x)
            x = x - (f / np.einsum("ij,ij->i", g, g))[:, None] * g
        return x


def disk(center=(0.0, 0.0), radius=0.5) -> LevelSetGeometry:
    c = np.asarray(center, dtype=float)
    r = float(radius)

    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - c, axis=-1) - r

    def gradient(x):
        d = np.atleast_2d(x) - c
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    return LevelSetGeometry(phi, gradient, "analytic-disk", (float(c[0]), float(c[1])), r)


class ElementClassification(NamedTuple):
    element_id: int
    label: str
    inside_area_fraction: float


@dataclass(frozen=True)
class Classification:
    """Element labels plus the interface chord of every cut element.

    ``labels`` uses 0 = interior, 1 = cut, 2 = exterior.  For cut elements
    ``chords[e]`` holds the two edge roots and ``chord_normals[e]`` the unit
    normal of the chord pointing out of the domain; rows of other elements are
    NaN.
    """

    labels: np.ndarray
    inside_fraction: np.ndarray
    chords: np.ndarray
    chord_normals: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, e) -> ElementClassification:
        return ElementClassification(
            int(e), _LABEL_NAMES[int(self.labels[e])], float(self.inside_fraction[e])
        )

    def counts(self) -> dict:
        return {name: int(np.sum(self.labels == k)) for k, name in _LABEL_NAMES.items()}

    def chord_level(self, elements, x) -> np.ndarray:
        """Signed distance of ``x[i]`` to the chord of ``elements[i]``."""
        return np.einsum("ij,ij->i", x - self.chords[elements, 0], self.chord_normals[elements])


def _bisect(geom: LevelSetGeometry, a, b, fa, tol) -> np.ndarray:
    """Roots of ``phi`` on segments ``[a, b]`` where the sign changes.

    Bisection runs until the bracket reaches rounding level, which implies
    ``|phi| <= tol``; stopping on ``tol`` alone would leave O(sqrt(tol))
    position errors where an edge is tangent to the interface.
    """
    lo = np.array(a, dtype=float)
    hi = np.array(b, dtype=float)
    flo = np.array(fa, dtype=float)
    tol = np.broadcast_to(tol, (len(lo),))
    width = 4.0 * np.finfo(float).eps * max(1.0, float(np.abs(lo).max(initial=0.0)), float(np.abs(hi).max(initial=0.0)))
    exact = np.zeros(len(lo), dtype=bool)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = geom(mid)
        hit = fm == 0.0
        lo[hit] = hi[hit] = mid[hit]
        exact |= hit
        same = (np.sign(fm) == np.sign(flo)) & ~exact
        lo[same] = mid[same]
        flo[same] = fm[same]
        other = ~same & ~exact
        hi[other] = mid[other]
        if np.all(np.linalg.norm(hi - lo, axis=1) <= width):
            break
    mid = 0.5 * (lo + hi)
    assert np.all(np.abs(geom(mid)) <= tol), "edge root above tolerance"
    return mid


def classify_elements(mesh, geom: LevelSetGeometry) -> Classification:
    """Label every background element interior, cut or exterior."""
    tri = mesh.triangles
    nt = len(tri)
    h = mesh.h_T
    phi_vertex = geom(mesh.vertices)
    _check_single_crossing(mesh, geom, phi_vertex)
    phi_v = phi_vertex[tri]
    bary_out = geom(mesh.centroids()) > 0
    tiny = np.abs(phi_v) < 1e-12 * h[:, None]
    outside = np.where(tiny, bary_out[:, None], phi_v > 0)
    n_out = outside.sum(axis=1)

    labels = np.where(n_out == 0, INTERIOR, np.where(n_out == 3, EXTERIOR, CUT))
    fraction = np.where(labels == INTERIOR, 1.0, 0.0)
    chords = np.full((nt, 2, 2), np.nan)
    normals = np.full((nt, 2), np.nan)

    cut = np.flatnonzero(labels == CUT)
    if len(cut):
        chords[cut], normals[cut] = _cut_chords(mesh, geom, cut, outside[cut])
        p = mesh.vertices[tri[cut]]
        lvl = np.einsum("tkj,tj->tk", p - chords[cut, 0][:, None, :], normals[cut])
        polys, parent = clip_triangles(p, lvl)
        frag_area = _tri_areas(polys)
        area = np.bincount(parent, weights=frag_area, minlength=len(cut))
        fraction[cut] = area / mesh.areas()[cut]

        # degenerate cuts: settle by the barycenter sign
        f = fraction[cut]
        degenerate = (f < 1e-10) | (f > 1.0 - 1e-10)
        if np.any(degenerate):
            d = cut[degenerate]
            labels[d] = np.where(bary_out[d], EXTERIOR, INTERIOR)
            fraction[d] = np.where(bary_out[d], 0.0, 1.0)
            chords[d] = np.nan
            normals[d] = np.nan
    return Classification(labels, fraction, chords, normals)


def _cut_chords(mesh, geom, cut, outside):
    tri = mesh.triangles[cut]
    local = np.array([[1, 2], [2, 0], [0, 1]])
    crosses = outside[:, local[:, 0]] != outside[:, local[:, 1]]
    # mixed vertex signs in a triangle cross exactly two edges
    t_idx, k_idx = np.nonzero(crosses)
    va = tri[t_idx, local[k_idx, 0]]
    vb = tri[t_idx, local[k_idx, 1]]
    lo = np.minimum(va, vb)
    hi = np.maximum(va, vb)
    # orient by global vertex id so neighbours compute bit-identical roots
    a = mesh.vertices[lo]
    b = mesh.vertices[hi]
    tol = 1e-12 * mesh.h_T[cut][t_idx]
    fa, fb = geom(a), geom(b)
    # a vertex on the interface is the root itself; bisecting towards it only
    # resolves a tangential double root to O(sqrt(eps))
    on_a = np.abs(fa) < tol
    on_b = ~on_a & (np.abs(fb) < tol)
    roots = np.where(on_a[:, None], a, np.where(on_b[:, None], b, 0.0))
    rest = ~(on_a | on_b)
    if np.any(rest):
        roots[rest] = _bisect(geom, a[rest], b[rest], fa[rest], tol[rest])
    chords = roots.reshape(len(cut), 2, 2)

    d = chords[:, 1] - chords[:, 0]
    n = np.column_stack([d[:, 1], -d[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    p = mesh.vertices[tri]
    lvl = np.einsum("tkj,tj->tk", p - chords[:, 0][:, None, :], n)
    score = np.where(outside, lvl, -lvl).sum(axis=1)
    n[score < 0] *= -1.0
    return chords, n


def _check_single_crossing(mesh, geom, phi_vertex):
    """Reject meshes where an edge with same-sign ends has an interior root.

    The midpoint sign is used as the probe; the chord model needs every
    edge to be crossed at most once.
    """
    tiny = 1e-12 * mesh.h_T.max()
    a = phi_vertex[mesh.faces[:, 0]]
    b = phi_vertex[mesh.faces[:, 1]]
    mid = geom(0.5 * (mesh.vertices[mesh.faces[:, 0]] + mesh.vertices[mesh.faces[:, 1]]))
    same = (np.sign(a) == np.sign(b)) & (np.abs(a) > tiny) & (np.abs(b) > tiny)
    bad = same & (np.sign(mid) != np.sign(a)) & (np.abs(mid) > tiny)
    if np.any(bad):
        f = int(np.argmax(bad))
        e = int(mesh.face_elements[f, 0])
        raise MeshTooCoarseError(f"interface crosses an edge of element {e} twice; refine the mesh")


def _tri_areas(p) -> np.ndarray:
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def triangle_rule(order: int):
    """Collapsed Gauss product rule on the unit right triangle.

    Returns barycentric-free reference points ``(m, 2)`` and weights summing
    to 1/2; exact for polynomials of total degree ``order``.
    """
    n = max(1, (order + 2) // 2)
    t, wj = roots_jacobi(n, 1.0, 0.0)
    s, wl = roots_legendre(n)
    u = 0.5 * (1.0 + t)
    v = 0.5 * (1.0 + s)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    w = np.outer(wj / 4.0, wl / 2.0).ravel()
    return pts, w


@dataclass(frozen=True)
class CutQuadrature:
    """Flat quadrature over ``T \\cap \\Omega`` for all active elements.

    Point ``i`` lies in sub-triangle ``sub[i]`` of background element
    ``elements[i]``.
    """

    elements: np.ndarray
    sub: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    fragments: np.ndarray  # per background element, number of integration triangles
    order: int

    def for_element(self, e):
        m = self.elements == e
        return self.points[m], self.weights[m]

    def integrate(self, values):
        """Weighted sum over the leading axis; a float for scalar integrands."""
        out = np.tensordot(self.weights, values, axes=1)
        return float(out) if np.ndim(out) == 0 else out

    def element_sums(self, values, n_elements) -> np.ndarray:
        return np.bincount(self.elements, weights=self.weights * values, minlength=n_elements)


def _place_rule(tris, order):
    ref, w = triangle_rule(order)
    a = tris[:, 0]
    e1 = tris[:, 1] - a
    e2 = tris[:, 2] - a
    pts = a[:, None, :] + ref[None, :, 0, None] * e1[:, None, :] + ref[None, :, 1, None] * e2[:, None, :]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    wts = np.abs(det)[:, None] * w[None, :]
    return pts.reshape(-1, 2), wts.ravel(), len(w)


def build_cut_quadrature(partition, classification: Classification, order: int = 2) -> CutQuadrature:
    """Quadrature on every sub-triangle of the macro partition, clipped to the domain."""
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    elems = partition.elements
    labels = classification.labels[elems]
    subv = partition.sub_vertices()  # (na, 6, 3, 2)
    na = len(elems)

    tris = subv.reshape(-1, 3, 2)
    owner = np.repeat(np.arange(na), 6)
    sub_id = np.tile(np.arange(6), na)

    keep = np.repeat(labels == INTERIOR, 6)
    full_tris = tris[keep]
    full_owner = owner[keep]
    full_sub = sub_id[keep]

    cut_rows = np.flatnonzero(np.repeat(labels == CUT, 6))
    if len(cut_rows):
        ctris = tris[cut_rows]
        cel = elems[owner[cut_rows]]
        lvl = np.einsum(
            "tkj,tj->tk", ctris - classification.chords[cel, 0][:, None, :],
            classification.chord_normals[cel],
        )
        frags, parent = clip_triangles(ctris, lvl)
        area = np.abs(_tri_areas(frags))
        scale = np.abs(_tri_areas(ctris))[parent]
        ok = area > 1e-14 * scale
        frags = frags[ok]
        parent = parent[ok]
        frag_owner = owner[cut_rows][parent]
        frag_sub = sub_id[cut_rows][parent]
        all_tris = np.concatenate([full_tris, frags])
        all_owner = np.concatenate([full_owner, frag_owner])
        all_sub = np.concatenate([full_sub, frag_sub])
    else:
        all_tris, all_owner, all_sub = full_tris, full_owner, full_sub

    order_idx = np.lexsort((all_sub, all_owner))
    all_tris = all_tris[order_idx]
    all_owner = all_owner[order_idx]
    all_sub = all_sub[order_idx]

    pts, wts, m = _place_rule(all_tris, order)
    fragments = np.zeros(len(classification.labels), dtype=np.int64)
    np.add.at(fragments, elems[all_owner], 1)
    cut_elems = elems[labels == CUT]
    if len(cut_elems) and np.any(fragments[cut_elems] == 0):
        raise ValueError("cut element has an empty intersection with the domain")
    return CutQuadrature(
        elements=np.repeat(elems[all_owner], m),
        sub=np.repeat(all_sub, m),
        points=pts,
        weights=wts,
        fragments=fragments,
        order=order,
    )


def build_full_quadrature(partition, order: int = 2, elements=None) -> CutQuadrature:
    """Quadrature over whole macro elements, ignoring the interface."""
    elems = partition.elements
    rows = np.arange(len(elems)) if elements is None else np.searchsorted(elems, elements)
    tris = partition.sub_vertices()[rows].reshape(-1, 3, 2)
    owner = np.repeat(elems[rows], 6)
    sub_id = np.tile(np.arange(6), len(rows))
    pts, wts, m = _place_rule(tris, order)
    fragments = np.zeros(partition.n_background, dtype=np.int64)
    fragments[elems[rows]] = 6
    return CutQuadrature(np.repeat(owner, m), np.repeat(sub_id, m), pts, wts, fragments, order)


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Points on the interface with arc-length weights and outward unit normals."""

    elements: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray

    def integrate(self, values):
        """Weighted sum over the leading axis; a float for scalar integrands."""
        out = np.tensordot(self.weights, values, axes=1)
        return float(out) if np.ndim(out) == 0 else out

    def element_sums(self, values, n_elements) -> np.ndarray:
        return np.bincount(self.elements, weights=self.weights * values, minlength=n_elements)


def build_boundary_quadrature(
    mesh, geom: LevelSetGeometry, classification: Classification, order: int = 2, n_sub: int = 4
) -> BoundaryQuadrature:
    """Gauss points on a projected polyline through every cut element."""
    if order < 2:
        raise ValueError("quadrature order must be at least 2")
    cut = np.flatnonzero(classification.labels == CUT)
    chords = classification.chords[cut]
    if np.any(~np.isfinite(chords)):
        raise MeshTooCoarseError("cut element without exactly two edge roots")
    s = np.linspace(0.0, 1.0, n_sub + 1)
    nodes = chords[:, 0, None, :] + s[None, :, None] * (chords[:, 1] - chords[:, 0])[:, None, :]
    inner = geom.project(nodes[:, 1:-1].reshape(-1, 2)).reshape(len(cut), n_sub - 1, 2)
    nodes = np.concatenate([chords[:, :1], inner, chords[:, 1:]], axis=1)

    g, gw = roots_legendre(max(1, (order + 2) // 2))
    g = 0.5 * (g + 1.0)
    gw = 0.5 * gw
    a = nodes[:, :-1]
    b = nodes[:, 1:]
    seg_len = np.linalg.norm(b - a, axis=2)  # (nc, n_sub)
    pts = a[:, :, None, :] + g[None, None, :, None] * (b - a)[:, :, None, :]
    pts = geom.project(pts.reshape(-1, 2))
    wts = (seg_len[:, :, None] * gw[None, None, :]).ravel()
    per_elem = n_sub * len(g)
    return BoundaryQuadrature(
        elements=np.repeat(cut, per_elem),
        points=pts,
        weights=wts,
        normals=geom.normal(pts),
    )
