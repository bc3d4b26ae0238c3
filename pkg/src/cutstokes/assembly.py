"""Bilinear and linear forms of both boundary treatments.

Block conventions for the Lagrange multiplier formulation, rows = test,
columns = trial::

    [ A + s      -B^T    C^T    ] [u]   [ l(v)            ]
    [ B           0      0      ] [p] = [ 0               ]
    [ -C          0      g J    ] [l]   [ -int u_G . mu   ]

with ``B[q, v] = b_h(q, v)`` over whole active elements and
``C[mu, v] = int_Gamma v . mu``.  The Nitsche variant replaces the vector
multiplier by one scalar per cut element.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import CUT

__all__ = [
    "SaddleSystem",
    "assemble_a",
    "assemble_b_h",
    "assemble_c",
    "assemble_j",
    "assemble_curl_stab",
    "assemble_coriolis",
    "assemble_rhs",
    "assemble_nitsche_boundary",
    "assemble_normal_coupling",
    "assemble_ghost_penalty",
    "build_lagrange_system",
    "build_nitsche_system",
]


@dataclass
class SaddleSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    block_ranges: dict
    formulation: str
    parameters: dict = field(default_factory=dict)

    def block(self, row: str, col: str):
        r = self.block_ranges[row]
        c = self.block_ranges[col]
        return self.matrix[r, :][:, c]


def _scatter(local, dofs_row, dofs_col, shape):
    """Sum per-element dense blocks into a sparse matrix."""
    n, a, b = local.shape
    rows = np.broadcast_to(dofs_row[:, :, None], (n, a, b)).ravel()
    cols = np.broadcast_to(dofs_col[:, None, :], (n, a, b)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()


def _sub_weights(disc, quadrature):
    """Quadrature weight mass per (active row, sub-triangle)."""
    rows = disc.rows(quadrature.elements)
    w = np.zeros((len(disc.partition.elements), 6))
    np.add.at(w, (rows, quadrature.sub), quadrature.weights)
    return w


def assemble_a(disc, quadrature=None):
    """``int_Omega grad u : grad v`` over the cut quadrature.

    Gradients are constant on each sub-triangle, so only the measure of its
    part inside the domain enters.
    """
    q = disc.cut_quadrature if quadrature is None else quadrature
    w = _sub_weights(disc, q)
    G = disc.basis.grads
    local = np.einsum("ns,nsacd,nsbcd->nab", w, G, G)
    loc = disc.dofmap.velocity_local
    n = disc.dofmap.n_velocity
    return _scatter(local, loc, loc, (n, n))


def assemble_b_h(disc):
    """``B[q, v] = (q, div v)`` integrated over whole active elements."""
    basis = disc.basis
    vals = basis.div * basis.area[:, None]
    na = len(basis.elements)
    rows = np.broadcast_to(np.arange(na)[:, None], vals.shape)
    return sp.coo_matrix(
        (vals.ravel(), (rows.ravel(), disc.dofmap.velocity_local.ravel())),
        shape=(na, disc.dofmap.n_velocity),
    ).tocsr()


def _boundary_basis(disc):
    bq = disc.boundary_quadrature
    rows, vals, grads = disc.basis_at(bq.elements, bq.points)
    return bq, rows, vals, grads


def assemble_c(disc):
    """``C[mu, v] = int_Gamma v . mu`` for piecewise-constant vector ``mu``.

    Multiplier rows are component-major: ``x`` components of all cut
    elements first, then ``y``.
    """
    bq, rows, vals, _ = _boundary_basis(disc)
    nc = len(disc.active.cut_elements)
    cidx = disc.active.cut_index[bq.elements]
    dofs = disc.dofmap.velocity_local[rows]  # (m, 9)
    mats = []
    for c in range(2):
        data = bq.weights[:, None] * vals[:, :, c]
        r = np.broadcast_to((c * nc + cidx)[:, None], dofs.shape)
        mats.append(sp.coo_matrix((data.ravel(), (r.ravel(), dofs.ravel())), shape=(2 * nc, disc.dofmap.n_velocity)))
    return (mats[0] + mats[1]).tocsr()


def _face_lengths(mesh, faces):
    return np.linalg.norm(mesh.vertices[mesh.faces[faces, 1]] - mesh.vertices[mesh.faces[faces, 0]], axis=1)


def assemble_j(disc, n_components: int = 2):
    """Jump penalty ``sum_F h_F |F| [mu] . [w]`` over faces between cut elements.

    ``h_F`` is the mean diameter of the two neighbours.
    """
    mesh = disc.mesh
    active = disc.active
    faces = active.interior_faces_cut
    fe = mesh.face_elements[faces]
    nc = len(active.cut_elements)
    weight = 0.5 * (mesh.h_T[fe[:, 0]] + mesh.h_T[fe[:, 1]]) * _face_lengths(mesh, faces)
    iT = active.cut_index[fe[:, 0]]
    iS = active.cut_index[fe[:, 1]]
    rows, cols, data = [], [], []
    for c in range(n_components):
        a = c * nc + iT
        b = c * nc + iS
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        data += [weight, weight, -weight, -weight]
    n = n_components * nc
    return sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()


def assemble_curl_stab(disc):
    """``sum_{T cut} h_T^2 (curl u, curl v)_T`` over whole cut elements."""
    basis = disc.basis
    labels = disc.classification.labels[basis.elements]
    G = basis.grads
    curl = G[:, :, :, 1, 0] - G[:, :, :, 0, 1]  # (na, 6, 9)
    w = disc.partition.sub_areas() * (disc.mesh.h_T[basis.elements] ** 2)[:, None]
    w[labels != CUT] = 0.0
    local = np.einsum("ns,nsa,nsb->nab", w, curl, curl)
    loc = disc.dofmap.velocity_local
    n = disc.dofmap.n_velocity
    return _scatter(local, loc, loc, (n, n))


def assemble_coriolis(disc, omega: float, quadrature=None):
    """``(2 omega e_z x u, v)_Omega``; skew-symmetric."""
    loc = disc.dofmap.velocity_local
    n = disc.dofmap.n_velocity
    if omega == 0.0:
        return sp.csr_matrix((n, n))
    q = disc.cut_quadrature if quadrature is None else quadrature
    rows, vals, _ = disc.basis_at(q.elements, q.points, q.sub)
    # e_z x u = (-u_y, u_x)
    rot = np.stack([-vals[:, :, 1], vals[:, :, 0]], axis=-1)
    per_pt = 2.0 * omega * q.weights[:, None, None] * np.einsum("pac,pbc->pab", vals, rot)
    local = np.zeros((len(disc.partition.elements), 9, 9))
    np.add.at(local, rows, per_pt)
    return _scatter(local, loc, loc, (n, n))


def assemble_rhs(disc, f=None, u_gamma=None, n_mult_components: int = 2):
    """Velocity load ``int f . v`` and multiplier data ``-int u_G . mu``."""
    nu = disc.dofmap.n_velocity
    rhs_u = np.zeros(nu)
    if f is not None:
        q = disc.cut_quadrature
        rows, vals, _ = disc.basis_at(q.elements, q.points, q.sub)
        fv = f(q.points)
        contrib = q.weights[:, None] * np.einsum("pfc,pc->pf", vals, fv)
        np.add.at(rhs_u, disc.dofmap.velocity_local[rows].ravel(), contrib.ravel())
    nc = len(disc.active.cut_elements)
    rhs_m = np.zeros(n_mult_components * nc)
    if u_gamma is not None:
        bq = disc.boundary_quadrature
        g = u_gamma(bq.points)
        cidx = disc.active.cut_index[bq.elements]
        if n_mult_components == 2:
            for c in range(2):
                rhs_m[c * nc : (c + 1) * nc] = -np.bincount(cidx, weights=bq.weights * g[:, c], minlength=nc)
        else:
            gn = np.einsum("pc,pc->p", g, bq.normals)
            rhs_m[:] = -np.bincount(cidx, weights=bq.weights * gn, minlength=nc)
    return rhs_u, rhs_m


def _assemble_blocks(blocks, sizes):
    """Stack a dict ``{(i, j): matrix}`` into one sparse matrix."""
    grid = [[blocks.get((i, j)) for j in range(len(sizes))] for i in range(len(sizes))]
    for i, s in enumerate(sizes):
        if grid[i][i] is None:
            grid[i][i] = sp.csr_matrix((s, s))
    return sp.bmat(grid, format="csr")


def _ranges(sizes):
    names = ["velocity", "pressure", "multiplier"]
    out, start = {}, 0
    for name, s in zip(names, sizes):
        out[name] = slice(start, start + s)
        start += s
    return out


def build_lagrange_system(disc, f=None, u_gamma=None, gamma=1.0, curl_weight=1.0, omega=0.0) -> SaddleSystem:
    """Stabilized Lagrange multiplier system for ``(u_h, p_h, lambda_h)``."""
    if disc.dofmap.n_mult_components != 2:
        disc = disc.with_multiplier_components(2)
    A = assemble_a(disc)
    if curl_weight:
        A = A + curl_weight * assemble_curl_stab(disc)
    if omega:
        A = A + assemble_coriolis(disc, omega)
    B = assemble_b_h(disc)
    C = assemble_c(disc)
    J = assemble_j(disc, 2)
    sizes = (A.shape[0], B.shape[0], C.shape[0])
    K = _assemble_blocks(
        {(0, 0): A, (0, 1): -B.T, (1, 0): B, (0, 2): C.T, (2, 0): -C, (2, 2): gamma * J},
        sizes,
    )
    assert K.shape == (disc.dofmap.total, disc.dofmap.total)
    rhs_u, rhs_m = assemble_rhs(disc, f, u_gamma, 2)
    rhs = np.concatenate([rhs_u, np.zeros(sizes[1]), rhs_m])
    params = {"gamma": gamma, "curl_weight": curl_weight, "omega": omega}
    return SaddleSystem(K, rhs, _ranges(sizes), "lagrange", params)


def assemble_nitsche_boundary(disc, gamma0: float):
    """Symmetric Nitsche terms ``-<d_n u, v> - <d_n v, u> + gamma0/h_T <u, v>``."""
    bq, rows, vals, grads = _boundary_basis(disc)
    dn = np.einsum("pfcd,pd->pfc", grads, bq.normals)  # (grad v)^T n per function
    pen = gamma0 / disc.mesh.h_T[bq.elements]
    per_pt = bq.weights[:, None, None] * (
        -np.einsum("pac,pbc->pab", vals, dn)
        - np.einsum("pac,pbc->pab", dn, vals)
        + pen[:, None, None] * np.einsum("pac,pbc->pab", vals, vals)
    )
    local = np.zeros((len(disc.partition.elements), 9, 9))
    np.add.at(local, rows, per_pt)
    loc = disc.dofmap.velocity_local
    n = disc.dofmap.n_velocity
    return _scatter(local, loc, loc, (n, n))


def assemble_normal_coupling(disc):
    """``R[w, v] = int_Gamma w (v . n)`` for one scalar per cut element."""
    bq, rows, vals, _ = _boundary_basis(disc)
    nc = len(disc.active.cut_elements)
    cidx = disc.active.cut_index[bq.elements]
    dofs = disc.dofmap.velocity_local[rows]
    data = bq.weights[:, None] * np.einsum("pfc,pc->pf", vals, bq.normals)
    r = np.broadcast_to(cidx[:, None], dofs.shape)
    return sp.coo_matrix((data.ravel(), (r.ravel(), dofs.ravel())), shape=(nc, disc.dofmap.n_velocity)).tocsr()


def _face_side_subs(mesh, elem, faces, vertex):
    """Sub-triangle of ``elem`` adjacent to ``faces`` next to global ``vertex``."""
    k = np.argmax(mesh.element_faces[elem] == faces[:, None], axis=1)
    first = mesh.triangles[elem, (k + 1) % 3]
    return np.where(first == vertex, 2 * k, 2 * k + 1)


def assemble_ghost_penalty(disc, faces=None):
    """``sum_F h_F int_F [grad u] : [grad v]`` on faces of cut elements.

    Faces on the boundary of the active mesh are excluded.  Each face is
    split at ``x_F``; on both halves the one-sided gradients are constant.
    """
    mesh = disc.mesh
    active = disc.active
    faces = active.ghost_faces() if faces is None else faces
    fe = mesh.face_elements[faces]
    rT = active.element_index[fe[:, 0]]
    rS = active.element_index[fe[:, 1]]
    hF = 0.5 * (mesh.h_T[fe[:, 0]] + mesh.h_T[fe[:, 1]])
    kT = np.argmax(mesh.element_faces[fe[:, 0]] == faces[:, None], axis=1)
    xF = disc.partition.nodes[rT, 4 + kT]
    G = disc.basis.grads
    loc = disc.dofmap.velocity_local
    dofs = np.concatenate([loc[rT], loc[rS]], axis=1)
    local = np.zeros((len(faces), 18, 18))
    for end in range(2):
        vertex = mesh.faces[faces, end]
        length = np.linalg.norm(mesh.vertices[vertex] - xF, axis=1)
        sT = _face_side_subs(mesh, fe[:, 0], faces, vertex)
        sS = _face_side_subs(mesh, fe[:, 1], faces, vertex)
        jump = np.concatenate([G[rT, sT], -G[rS, sS]], axis=1)  # (nf, 18, 2, 2)
        local += (hF * length)[:, None, None] * np.einsum("facd,fbcd->fab", jump, jump)
    n = disc.dofmap.n_velocity
    return _scatter(local, dofs, dofs, (n, n))


def build_nitsche_system(
    disc, f=None, u_gamma=None, gamma0=10.0, gamma1=0.1, gamma2=0.1, curl_weight=1.0, omega=0.0
) -> SaddleSystem:
    """Nitsche system for ``(u_h, p_h, rho_h)`` with scalar boundary pressure ``rho_h``."""
    if disc.dofmap.n_mult_components != 1:
        disc = disc.with_multiplier_components(1)
    A = assemble_a(disc) + assemble_nitsche_boundary(disc, gamma0)
    if gamma2:
        A = A + gamma2 * assemble_ghost_penalty(disc)
    if curl_weight:
        A = A + curl_weight * assemble_curl_stab(disc)
    if omega:
        A = A + assemble_coriolis(disc, omega)
    B = assemble_b_h(disc)
    R = assemble_normal_coupling(disc)
    J = assemble_j(disc, 1)
    sizes = (A.shape[0], B.shape[0], R.shape[0])
    K = _assemble_blocks(
        {(0, 0): A, (0, 1): -B.T, (1, 0): B, (0, 2): R.T, (2, 0): -R, (2, 2): gamma1 * J},
        sizes,
    )
    rhs_u, rhs_m = assemble_rhs(disc, f, u_gamma, 1)
    if u_gamma is not None:
        bq, rows, vals, grads = _boundary_basis(disc)
        g = u_gamma(bq.points)
        dn = np.einsum("pfcd,pd->pfc", grads, bq.normals)
        pen = gamma0 / disc.mesh.h_T[bq.elements]
        contrib = bq.weights[:, None] * (
            -np.einsum("pfc,pc->pf", dn, g) + pen[:, None] * np.einsum("pfc,pc->pf", vals, g)
        )
        np.add.at(rhs_u, disc.dofmap.velocity_local[rows].ravel(), contrib.ravel())
    rhs = np.concatenate([rhs_u, np.zeros(sizes[1]), rhs_m])
    params = {"gamma0": gamma0, "gamma1": gamma1, "gamma2": gamma2, "curl_weight": curl_weight, "omega": omega}
    return SaddleSystem(K, rhs, _ranges(sizes), "nitsche", params)
