"""Background triangulation, active-mesh extraction and the macro-element partition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BackgroundMesh",
    "ActiveMesh",
    "MacroPartition",
    "generate_structured_mesh",
    "extract_active_mesh",
    "build_macro_partition",
    "write_mesh_vtk",
]


@dataclass(frozen=True)
class BackgroundMesh:
    """Conforming triangulation of a rectangular box.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    faces : (nf, 2) int array of vertex ids, sorted within each row
    face_elements : (nf, 2) int array ``(T, T')`` with ``T < T'``; ``T' = -1``
        on the box boundary
    element_faces : (nt, 3) int array; local face ``k`` is opposite local vertex ``k``
    h_T : (nt,) element diameters
    box : ``((xmin, ymin), (xmax, ymax))``
    """

    vertices: np.ndarray
    triangles: np.ndarray
    faces: np.ndarray
    face_elements: np.ndarray
    element_faces: np.ndarray
    h_T: np.ndarray
    box: tuple

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)


def _face_topology(triangles: np.ndarray, n_vertices: int):
    nt = len(triangles)
    # local face k is opposite local vertex k
    local = np.array([[1, 2], [2, 0], [0, 1]])
    edges = np.sort(triangles[:, local].reshape(-1, 2), axis=1)
    key = edges[:, 0] * n_vertices + edges[:, 1]
    uniq, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    faces = edges[first]
    element_faces = inverse.reshape(nt, 3)

    owner = np.repeat(np.arange(nt), 3)
    face_elements = np.full((len(uniq), 2), -1, dtype=np.int64)
    order = np.lexsort((owner, inverse))
    inv_sorted = inverse[order]
    own_sorted = owner[order]
    starts = np.r_[0, np.flatnonzero(np.diff(inv_sorted)) + 1]
    counts = np.diff(np.r_[starts, len(inv_sorted)])
    if np.any(counts > 2):
        raise ValueError("non-manifold edge in triangulation")
    face_elements[inv_sorted[starts], 0] = own_sorted[starts]
    two = counts == 2
    face_elements[inv_sorted[starts[two]], 1] = own_sorted[starts[two] + 1]
    return faces, face_elements, element_faces


def generate_structured_mesh(n: int, box=((-1.0, -1.0), (1.0, 1.0))) -> BackgroundMesh:
    """Split an ``n x n`` grid on ``box`` into ``2 n^2`` right triangles.

    Every square is cut along its lower-left to upper-right diagonal.
    """
    if n < 2:
        raise ValueError("need at least 2 divisions per side")
    (x0, y0), (x1, y1) = box
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    faces, face_elements, element_faces = _face_topology(triangles, len(vertices))
    p = vertices[triangles]
    edge_len = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
    return BackgroundMesh(
        vertices=vertices,
        triangles=triangles,
        faces=faces,
        face_elements=face_elements,
        element_faces=element_faces,
        h_T=edge_len.max(axis=1),
        box=((float(x0), float(y0)), (float(x1), float(y1))),
    )


@dataclass(frozen=True)
class ActiveMesh:
    """Element and face sets of the active mesh.

    ``active_elements`` is the set of background elements meeting the
    physical domain; it splits into ``cut_elements`` and
    ``interior_elements``.  Face sets hold background face ids.
    """

    mesh: BackgroundMesh
    active_elements: np.ndarray
    cut_elements: np.ndarray
    interior_elements: np.ndarray
    all_faces_active: np.ndarray
    interior_faces_active: np.ndarray
    interior_faces_cut: np.ndarray
    mesh_boundary_faces: np.ndarray
    active_vertices: np.ndarray
    h: float
    # background element id -> position in active_elements (-1 if inactive)
    element_index: np.ndarray = field(repr=False)
    cut_index: np.ndarray = field(repr=False)

    @property
    def n_active(self) -> int:
        return len(self.active_elements)

    def ghost_faces(self) -> np.ndarray:
        """Faces of cut elements that are not on the mesh-domain boundary."""
        fe = self.mesh.face_elements[self.interior_faces_active]
        touches_cut = (self.cut_index[fe[:, 0]] >= 0) | (self.cut_index[fe[:, 1]] >= 0)
        return self.interior_faces_active[touches_cut]


def extract_active_mesh(mesh: BackgroundMesh, classification) -> ActiveMesh:
    """Collect the active, cut and interior sets from an element labelling."""
    labels = classification.labels
    active = np.flatnonzero(labels != 2)
    if len(active) == 0:
        raise ValueError("no element meets the domain; check geometry and box")
    cut = np.flatnonzero(labels == 1)
    interior = np.flatnonzero(labels == 0)

    element_index = np.full(mesh.n_elements + 1, -1, dtype=np.int64)
    element_index[active] = np.arange(len(active))
    cut_index = np.full(mesh.n_elements + 1, -1, dtype=np.int64)
    cut_index[cut] = np.arange(len(cut))
    # index -1 (no neighbour) maps to the trailing sentinel slot

    fe = mesh.face_elements
    a0 = element_index[fe[:, 0]] >= 0
    a1 = element_index[fe[:, 1]] >= 0
    all_faces_active = np.flatnonzero(a0 | a1)
    interior_faces_active = np.flatnonzero(a0 & a1)
    mesh_boundary_faces = np.flatnonzero(a0 ^ a1)
    c0 = cut_index[fe[:, 0]] >= 0
    c1 = cut_index[fe[:, 1]] >= 0
    interior_faces_cut = np.flatnonzero(c0 & c1)

    active_vertices = np.unique(mesh.triangles[active])
    h = 1.0 / np.sqrt(len(active_vertices))
    return ActiveMesh(
        mesh=mesh,
        active_elements=active,
        cut_elements=cut,
        interior_elements=interior,
        all_faces_active=all_faces_active,
        interior_faces_active=interior_faces_active,
        interior_faces_cut=interior_faces_cut,
        mesh_boundary_faces=mesh_boundary_faces,
        active_vertices=active_vertices,
        h=float(h),
        element_index=element_index,
        cut_index=cut_index,
    )


@dataclass(frozen=True)
class MacroPartition:
    """Six-triangle split of every active element.

    Attributes
    ----------
    elements : (na,) background element ids
    x_T : (na, 2) barycenters
    x_F : (na, 3, 2) face points, local face ``k`` opposite vertex ``k``
    nodes : (na, 7, 2) the points ``v0, v1, v2, x_T, x_F0, x_F1, x_F2``
    sub_triangles : (6, 3) node indices into ``nodes``; sub-triangles ``2k``
        and ``2k+1`` split the part of the element next to face ``k``
    n_background : number of background elements
    """

    elements: np.ndarray
    x_T: np.ndarray
    x_F: np.ndarray
    nodes: np.ndarray
    n_background: int

    sub_triangles = np.array(
        [[3, 1, 4], [3, 4, 2], [3, 2, 5], [3, 5, 0], [3, 0, 6], [3, 6, 1]]
    )

    def sub_vertices(self) -> np.ndarray:
        """(na, 6, 3, 2) coordinates of the sub-triangle corners."""
        return self.nodes[:, self.sub_triangles]

    def sub_areas(self) -> np.ndarray:
        p = self.sub_vertices()
        d1 = p[:, :, 1] - p[:, :, 0]
        d2 = p[:, :, 2] - p[:, :, 0]
        return 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])


def _segment_face_point(xa, xb, p0, p1):
    """Intersection of segment ``[xa, xb]`` with the line through ``p0, p1``."""
    d = xb - xa
    e = p1 - p0
    r = p0 - xa
    den = d[:, 0] * e[:, 1] - d[:, 1] * e[:, 0]
    s = (r[:, 0] * e[:, 1] - r[:, 1] * e[:, 0]) / den
    t = (r[:, 0] * d[:, 1] - r[:, 1] * d[:, 0]) / den
    return p0 + t[:, None] * e, s, t


def build_macro_partition(mesh: BackgroundMesh, active: ActiveMesh) -> MacroPartition:
    """Place ``x_T`` and ``x_F`` for every active element.

    On a face shared by two active elements ``x_F`` is where the segment
    joining the two barycenters crosses the face, so both sides agree.  On
    faces of the mesh-domain boundary it is the face midpoint.
    """
    elems = active.active_elements
    tri = mesh.triangles[elems]
    verts = mesh.vertices[tri]
    x_T = verts.mean(axis=1)
    bary = mesh.centroids()

    faces = mesh.faces
    fe = mesh.face_elements
    face_point = 0.5 * (mesh.vertices[faces[:, 0]] + mesh.vertices[faces[:, 1]])
    shared = active.interior_faces_active
    if len(shared):
        p0 = mesh.vertices[faces[shared, 0]]
        p1 = mesh.vertices[faces[shared, 1]]
        xa = bary[fe[shared, 0]]
        xb = bary[fe[shared, 1]]
        pt, s, t = _segment_face_point(xa, xb, p0, p1)
        inside = (s > 0) & (s < 1) & (t > 0) & (t < 1)
        assert np.all(inside), "barycenter segment misses the shared face"
        # compute once per face so both sides see bit-identical coordinates
        face_point[shared] = pt

    x_F = face_point[mesh.element_faces[elems]]
    nodes = np.concatenate([verts, x_T[:, None, :], x_F], axis=1)
    return MacroPartition(
        elements=elems, x_T=x_T, x_F=x_F, nodes=nodes, n_background=mesh.n_elements
    )


def write_mesh_vtk(path, mesh: BackgroundMesh, elements=None, cell_data=None) -> None:
    """Dump triangles as legacy ASCII VTK POLYDATA."""
    tris = mesh.triangles if elements is None else mesh.triangles[elements]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nbackground mesh\nASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {len(mesh.vertices)} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.16e} {y:.16e} 0\n")
        fh.write(f"POLYGONS {len(tris)} {4 * len(tris)}\n")
        for a, b, c in tris:
            fh.write(f"3 {a} {b} {c}\n")
        if cell_data:
            fh.write(f"CELL_DATA {len(tris)}\n")
            for name, values in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in np.asarray(values, dtype=float):
                    fh.write(f"{v:.16e}\n")
