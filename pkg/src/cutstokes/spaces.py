"""Divergence-conforming composite velocity space and the scalar spaces.

Each active element carries nine velocity functions: the two components of
the three vertex hats and one face bubble per edge.  All of them are linear
on the six sub-triangles of the macro partition, so they are stored as
nodal values on the seven partition nodes plus a constant gradient per
sub-triangle.  The face bubbles are assembled with their global sign already
applied, so local tables describe global basis functions restricted to the
element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MacroElementBasis",
    "DofMap",
    "FieldCoefficients",
    "build_basis",
    "build_face_bubble",
    "build_dofmap",
    "locate_sub_triangle",
    "eval_velocity",
    "evaluate_at",
    "continuity_audit",
]

N_LOCAL = 9


def _barycentric_gradients(p):
    """Gradients of the barycentric coordinates of triangles ``p`` (..., 3, 2)."""
    e1 = p[..., 1, :] - p[..., 0, :]
    e2 = p[..., 2, :] - p[..., 0, :]
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    g1 = np.stack([e2[..., 1], -e2[..., 0]], axis=-1) / det[..., None]
    g2 = np.stack([-e1[..., 1], e1[..., 0]], axis=-1) / det[..., None]
    return np.stack([-g1 - g2, g1, g2], axis=-2)


def build_face_bubble(nodes, k: int, sign=1.0):
    """Nodal values of the face bubble of local face ``k``.

    Parameters
    ----------
    nodes : (..., 7, 2) partition nodes ``v0, v1, v2, x_T, x_F0, x_F1, x_F2``
    k : local face index (face opposite vertex ``k``)
    sign : global orientation factor

    Returns
    -------
    values : (..., 7, 2) vector values at the nodes; the function is the
        continuous piecewise-linear interpolant of these on the partition
    alpha : (...,) the constant divergence on the element (before ``sign``)
    """
    nodes = np.asarray(nodes, dtype=float)
    x_T = nodes[..., 3, :]
    x_F = nodes[..., 4 + k, :]
    opposite = nodes[..., k, :]
    dist = np.linalg.norm(x_F - x_T, axis=-1)
    values = np.zeros(nodes.shape)
    sign = np.asarray(sign, dtype=float)[..., None]
    values[..., 4 + k, :] = sign * (x_F - x_T) / dist[..., None]
    values[..., 3, :] = sign * (x_T - opposite) / (3.0 * dist[..., None])
    return values, 1.0 / (3.0 * dist)


@dataclass(frozen=True)
class MacroElementBasis:
    """Per-element tables of the nine local velocity functions.

    Attributes
    ----------
    elements : (na,) background ids
    nodal : (na, 7, 9, 2) values at the partition nodes
    grads : (na, 6, 9, 2, 2) ``grads[e, s, f, c]`` is the gradient of
        component ``c`` of function ``f`` on sub-triangle ``s``
    div : (na, 9) divergence of each function on the element
    area : (na,) element areas
    face_sign : (na, 3) orientation factor applied to the bubbles
    """

    elements: np.ndarray
    partition: object
    nodal: np.ndarray
    grads: np.ndarray
    div: np.ndarray
    area: np.ndarray
    face_sign: np.ndarray

    def sub_nodal(self) -> np.ndarray:
        """(na, 6, 3, 9, 2) values at the corners of every sub-triangle."""
        return self.nodal[:, self.partition.sub_triangles]


def build_basis(mesh, active, partition) -> MacroElementBasis:
    elems = partition.elements
    na = len(elems)
    nodes = partition.nodes
    faces = mesh.element_faces[elems]
    face_sign = np.where(mesh.face_elements[faces, 0] == elems[:, None], 1.0, -1.0)

    # barycentric coordinates of the seven nodes in T
    tri = nodes[:, :3]
    grad_bary = _barycentric_gradients(tri)  # (na, 3, 2)
    rel = nodes - tri[:, None, 0, :]
    lam = np.einsum("nkd,nid->nki", rel, grad_bary[:, 1:, :])
    lam = np.concatenate([1.0 - lam.sum(axis=2, keepdims=True), lam], axis=2)  # (na, 7, 3)

    nodal = np.zeros((na, 7, N_LOCAL, 2))
    nodal[:, :, 0:3, 0] = lam
    nodal[:, :, 3:6, 1] = lam
    for k in range(3):
        vals, _ = build_face_bubble(nodes, k, face_sign[:, k])
        nodal[:, :, 6 + k, :] = vals

    sub = partition.sub_triangles
    subp = nodes[:, sub]  # (na, 6, 3, 2)
    gb = _barycentric_gradients(subp)  # (na, 6, 3, 2)
    sub_vals = nodal[:, sub]  # (na, 6, 3, 9, 2)
    grads = np.einsum("nsvfc,nsvd->nsfcd", sub_vals, gb)
    div = np.trace(grads[:, 0], axis1=2, axis2=3)
    area = mesh.areas()[elems]
    return MacroElementBasis(elems, partition, nodal, grads, div, area, face_sign)


@dataclass(frozen=True)
class DofMap:
    """Global numbering of velocity, pressure and multiplier unknowns.

    Velocity unknowns are ordered ``[u_x at vertices, u_y at vertices, face
    bubbles]``; then one pressure per active element; then the multiplier
    (``n_mult_components`` values per cut element, component-major).
    """

    vertices: np.ndarray
    faces: np.ndarray
    velocity_local: np.ndarray  # (na, 9) global velocity dof of each local function
    n_velocity: int
    n_pressure: int
    n_multiplier: int
    n_mult_components: int

    @property
    def pressure_offset(self) -> int:
        return self.n_velocity

    @property
    def multiplier_offset(self) -> int:
        return self.n_velocity + self.n_pressure

    @property
    def total(self) -> int:
        return self.n_velocity + self.n_pressure + self.n_multiplier

    def blocks(self) -> dict:
        p0 = self.pressure_offset
        m0 = self.multiplier_offset
        return {"velocity": slice(0, p0), "pressure": slice(p0, m0), "multiplier": slice(m0, self.total)}

    def split(self, x):
        b = self.blocks()
        return FieldCoefficients(x[b["velocity"]], x[b["pressure"]], x[b["multiplier"]])


@dataclass
class FieldCoefficients:
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.velocity, self.pressure, self.multiplier])


def build_dofmap(mesh, active, n_mult_components: int = 2) -> DofMap:
    elems = active.active_elements
    verts = active.active_vertices
    faces = active.all_faces_active
    nv = len(verts)
    vid = np.searchsorted(verts, mesh.triangles[elems])
    fid = np.searchsorted(faces, mesh.element_faces[elems])
    loc = np.concatenate([vid, nv + vid, 2 * nv + fid], axis=1)
    return DofMap(
        vertices=verts,
        faces=faces,
        velocity_local=loc,
        n_velocity=2 * nv + len(faces),
        n_pressure=len(elems),
        n_multiplier=n_mult_components * len(active.cut_elements),
        n_mult_components=n_mult_components,
    )


def locate_sub_triangle(partition, rows, points, tol=1e-10):
    """Sub-triangle index containing each point of the given partition rows.

    Ties on shared edges go to the lowest sub-triangle index; points slightly
    outside the element go to the nearest sub-triangle.
    """
    subp = partition.nodes[rows][:, partition.sub_triangles]  # (m, 6, 3, 2)
    gb = _barycentric_gradients(subp)
    rel = points[:, None, :] - subp[:, :, 0, :]
    lam12 = np.einsum("msd,msid->msi", rel, gb[:, :, 1:, :])
    lam = np.concatenate([1.0 - lam12.sum(axis=2, keepdims=True), lam12], axis=2)
    worst = lam.min(axis=2)
    inside = worst >= -tol
    first = np.argmax(inside, axis=1)
    nearest = np.argmax(worst, axis=1)
    return np.where(inside.any(axis=1), first, nearest)


def evaluate_at(basis: MacroElementBasis, rows, sub, points):
    """Values and gradients of the nine local functions at points.

    Returns ``(values (m, 9, 2), grads (m, 9, 2, 2))``.
    """
    sub_tri = basis.partition.sub_triangles
    corner = basis.partition.nodes[rows, sub_tri[sub, 0]]
    v0 = basis.nodal[rows, sub_tri[sub, 0]]
    g = basis.grads[rows, sub]
    values = v0 + np.einsum("mfcd,md->mfc", g, points - corner)
    return values, g


def eval_velocity(basis, dofmap, velocity, element_id, point):
    """Value, gradient and divergence of a discrete velocity at one point.

    Raises ``ValueError`` when the point is outside the element.
    """
    rows = np.searchsorted(basis.elements, [element_id])
    if rows[0] >= len(basis.elements) or basis.elements[rows[0]] != element_id:
        raise ValueError(f"element {element_id} is not active")
    x = np.asarray(point, dtype=float).reshape(1, 2)
    tri = basis.partition.nodes[rows[0], :3]
    lam = np.linalg.solve(np.vstack([tri.T, np.ones(3)]), np.r_[x[0], 1.0])
    if lam.min() < -1e-12:
        raise ValueError(f"point {tuple(x[0])} is outside element {element_id}")
    sub = locate_sub_triangle(basis.partition, rows, x)
    vals, grads = evaluate_at(basis, rows, sub, x)
    c = velocity[dofmap.velocity_local[rows[0]]]
    value = np.einsum("f,fc->c", c, vals[0])
    grad = np.einsum("f,fcd->cd", c, grads[0])
    div = float(np.dot(c, basis.div[rows[0]]))
    return value, grad, div


def continuity_audit(mesh, active, basis, dofmap, points_per_subedge: int = 5) -> float:
    """Largest jump of any global basis function across interior active faces.

    Faces on the boundary of the active mesh have no neighbour and are skipped.
    """
    faces = active.interior_faces_active
    if len(faces) == 0:
        return 0.0
    fe = mesh.face_elements[faces]
    rT = active.element_index[fe[:, 0]]
    rS = active.element_index[fe[:, 1]]
    xF = basis.partition.nodes[rT, 4 + np.argmax(mesh.element_faces[fe[:, 0]] == faces[:, None], axis=1)]
    a = mesh.vertices[mesh.faces[faces, 0]]
    b = mesh.vertices[mesh.faces[faces, 1]]
    t = (np.arange(points_per_subedge) + 0.5) / points_per_subedge
    t = np.r_[0.0, t, 1.0]
    pts = np.concatenate(
        [a[:, None] + t[None, :, None] * (xF - a)[:, None], xF[:, None] + t[None, :, None] * (b - xF)[:, None]],
        axis=1,
    )  # (nf, P, 2)
    P = pts.shape[1]
    flat = pts.reshape(-1, 2)

    def side(rows):
        r = np.repeat(rows, P)
        sub = locate_sub_triangle(basis.partition, r, flat)
        vals, _ = evaluate_at(basis, r, sub, flat)
        return vals.reshape(len(rows), P, N_LOCAL, 2)

    vT = side(rT)
    vS = side(rS)
    gT = dofmap.velocity_local[rT]
    gS = dofmap.velocity_local[rS]
    match = (gT[:, :, None] == gS[:, None, :]).astype(float)  # (nf, 9, 9)
    jump_T = vT - np.einsum("fij,fpjc->fpic", match, vS)
    unmatched_S = 1.0 - match.sum(axis=1)  # functions of S with no partner in T
    jump_S = vS * unmatched_S[:, None, :, None]
    return float(max(np.abs(jump_T).max(), np.abs(jump_S).max()))
