"""Interpolants and projections used for error reporting and testing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_legendre

from .geometry import build_full_quadrature
from .spaces import evaluate_at, locate_sub_triangle

__all__ = [
    "AnalyticField",
    "clement_interpolate",
    "pi_h",
    "face_flux",
    "pi_T",
    "pi_Gamma",
    "face_normals",
]


@dataclass(frozen=True)
class AnalyticField:
    """Closed-form field evaluated on ``(n, 2)`` point arrays.

    ``value`` returns ``(n,)`` for scalars or ``(n, 2)`` for vectors;
    ``gradient`` returns ``(n, 2)`` or ``(n, 2, 2)`` with ``[:, i, j] = d v_i / d x_j``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    divergence: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return self.value(np.atleast_2d(np.asarray(x, dtype=float)))

    @classmethod
    def constant(cls, c):
        c = np.asarray(c, dtype=float)
        shape = c.shape

        def value(x):
            return np.broadcast_to(c, (len(x),) + shape).copy()

        def gradient(x):
            return np.zeros((len(x),) + shape + (2,))

        return cls(value, gradient, lambda x: np.zeros(len(x)))

    def check_gradient(self, points, eps=1e-6) -> float:
        """Largest relative mismatch between ``gradient`` and central differences."""
        x = np.atleast_2d(points)
        g = self.gradient(x)
        fd = []
        for d in range(2):
            e = np.zeros(2)
            e[d] = eps
            fd.append((self.value(x + e) - self.value(x - e)) / (2 * eps))
        fd = np.stack(fd, axis=-1)
        scale = max(np.abs(g).max(), 1.0)
        return float(np.abs(fd - g).max() / scale)


def clement_interpolate(mesh, active, partition, dofmap, field: AnalyticField, order: int = 6):
    """Vertex values: area-weighted average of element-wise linear L2 projections.

    Returns a ``(n_vertices, 2)`` array in ``dofmap.vertices`` order.
    """
    q = build_full_quadrature(partition, order)
    rows = active.element_index[q.elements]
    tri = partition.nodes[rows, :3]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    rel = q.points - tri[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    l1 = (rel[:, 0] * e2[:, 1] - rel[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * rel[:, 1] - e1[:, 1] * rel[:, 0]) / det
    lam = np.column_stack([1.0 - l1 - l2, l1, l2])

    v = field(q.points)
    na = len(partition.elements)
    load = np.zeros((na, 3, 2))
    np.add.at(load, rows, q.weights[:, None, None] * lam[:, :, None] * v[:, None, :])
    t = partition.nodes[:, :3]
    d1 = t[:, 1] - t[:, 0]
    d2 = t[:, 2] - t[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    # P1 mass matrix on T is |T|/12 (1 + delta_ij); its inverse is (3/|T|)(4 delta_ij - 1)
    minv = (3.0 / area)[:, None, None] * (4.0 * np.eye(3) - 1.0)[None]
    coef = np.einsum("nij,njc->nic", minv, load)  # vertex values of the local projection

    nv = len(dofmap.vertices)
    vid = dofmap.velocity_local[:, :3]
    num = np.zeros((nv, 2))
    den = np.zeros(nv)
    np.add.at(num, vid, area[:, None, None] * coef)
    np.add.at(den, vid, np.broadcast_to(area[:, None], vid.shape))
    return num / den[:, None]


def face_normals(mesh, faces):
    """Unit normals pointing from the lower- to the higher-index neighbour."""
    a = mesh.vertices[mesh.faces[faces, 0]]
    b = mesh.vertices[mesh.faces[faces, 1]]
    t = b - a
    n = np.column_stack([t[:, 1], -t[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    owner = mesh.face_elements[faces, 0]
    towards = 0.5 * (a + b) - mesh.centroids()[owner]
    n[np.einsum("ij,ij->i", n, towards) < 0] *= -1.0
    return n


def _face_points(mesh, active, partition, faces, n_gauss):
    """Gauss points on the two sub-edges ``[a, x_F]``, ``[x_F, b]`` of each face."""
    owner = _active_owner(mesh, active, faces)
    rows = active.element_index[owner]
    k = np.argmax(mesh.element_faces[owner] == faces[:, None], axis=1)
    xF = partition.nodes[rows, 4 + k]
    a = mesh.vertices[mesh.faces[faces, 0]]
    b = mesh.vertices[mesh.faces[faces, 1]]
    g, w = roots_legendre(n_gauss)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    la = np.linalg.norm(xF - a, axis=1)
    lb = np.linalg.norm(b - xF, axis=1)
    pts = np.concatenate(
        [a[:, None] + g[None, :, None] * (xF - a)[:, None], xF[:, None] + g[None, :, None] * (b - xF)[:, None]],
        axis=1,
    )
    wts = np.concatenate([la[:, None] * w[None], lb[:, None] * w[None]], axis=1)
    return pts, wts, rows, k


def _active_owner(mesh, active, faces):
    fe = mesh.face_elements[faces]
    first_active = active.element_index[fe[:, 0]] >= 0
    return np.where(first_active, fe[:, 0], fe[:, 1])


def face_flux(mesh, active, basis, dofmap, velocity, faces=None, n_gauss=5):
    """``int_F u_h . n_F ds`` for a discrete velocity on the given faces."""
    faces = dofmap.faces if faces is None else np.asarray(faces)
    pts, wts, rows, _ = _face_points(mesh, active, basis.partition, faces, n_gauss)
    P = pts.shape[1]
    r = np.repeat(rows, P)
    flat = pts.reshape(-1, 2)
    sub = locate_sub_triangle(basis.partition, r, flat)
    vals, _ = evaluate_at(basis, r, sub, flat)
    c = velocity[dofmap.velocity_local[r]]
    u = np.einsum("mf,mfc->mc", c, vals).reshape(len(faces), P, 2)
    n = face_normals(mesh, faces)
    return np.einsum("fp,fpc,fc->f", wts, u, n)


def pi_h(mesh, active, basis, dofmap, field: AnalyticField, n_gauss: int = 5) -> np.ndarray:
    """Velocity coefficients of the divergence-preserving interpolant.

    Vertex values come from :func:`clement_interpolate`; each face coefficient
    is chosen so that the normal flux through the face matches that of the
    field.
    """
    verts = clement_interpolate(mesh, active, basis.partition, dofmap, field)
    nv = len(dofmap.vertices)
    faces = dofmap.faces
    pts, wts, rows, k = _face_points(mesh, active, basis.partition, faces, n_gauss)
    n = face_normals(mesh, faces)
    vals = field(pts.reshape(-1, 2)).reshape(pts.shape)
    exact = np.einsum("fp,fpc,fc->f", wts, vals, n)

    ia = np.searchsorted(dofmap.vertices, mesh.faces[faces, 0])
    ib = np.searchsorted(dofmap.vertices, mesh.faces[faces, 1])
    length = np.linalg.norm(mesh.vertices[mesh.faces[faces, 1]] - mesh.vertices[mesh.faces[faces, 0]], axis=1)
    linear = 0.5 * length * np.einsum("fc,fc->f", verts[ia] + verts[ib], n)
    # the global bubble equals (its value at x_F) times the hat of x_F on F
    bubble_at_xF = basis.nodal[rows, 4 + k, 6 + k]
    bubble_flux = 0.5 * length * np.einsum("fc,fc->f", bubble_at_xF, n)
    assert np.all(bubble_flux > 0), "face bubble with non-positive flux"

    coeffs = np.empty(dofmap.n_velocity)
    coeffs[:nv] = verts[:, 0]
    coeffs[nv : 2 * nv] = verts[:, 1]
    coeffs[2 * nv :] = (exact - linear) / bubble_flux
    return coeffs


def pi_T(active, cut_quadrature, field: AnalyticField) -> np.ndarray:
    """Element values ``|T|^{-1} int_{T cap Omega} p dx`` on active elements."""
    mesh = active.mesh
    sums = cut_quadrature.element_sums(field(cut_quadrature.points), mesh.n_elements)
    return sums[active.active_elements] / mesh.areas()[active.active_elements]


def pi_Gamma(active, boundary_quadrature, field: AnalyticField) -> np.ndarray:
    """Mean of a vector field over ``Gamma cap T`` for every cut element.

    Returns ``(n_cut, 2)``.
    """
    bq = boundary_quadrature
    cut = active.cut_elements
    n = active.mesh.n_elements
    length = np.bincount(bq.elements, weights=bq.weights, minlength=n)[cut]
    if np.any(length <= 0):
        raise ValueError("cut element without boundary quadrature")
    v = field(bq.points)
    out = np.column_stack([bq.element_sums(v[:, c], n)[cut] for c in range(v.shape[1])])
    return out / length[:, None]
