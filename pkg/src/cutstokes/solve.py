"""Direct solution, pressure extension, divergence diagnostics and error norms."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import build_cut_quadrature, build_full_quadrature
from .spaces import FieldCoefficients

log = logging.getLogger(__name__)

__all__ = [
    "SolverError",
    "ErrorReport",
    "solve_direct",
    "relative_residual",
    "extend_pressure",
    "nearest_interior",
    "compute_divergence_field",
    "compute_errors",
    "h1_norm_mesh_domain",
    "convergence_rates",
    "fitted_rate",
]


class SolverError(RuntimeError):
    """Factorization failed or the solution misses the residual target."""


def relative_residual(system, x) -> float:
    r = system.matrix @ x - system.rhs
    scale = max(np.linalg.norm(system.rhs), 1e-300)
    return float(np.linalg.norm(r) / scale)


def solve_direct(system, tol: float = 1e-9, refine: int = 3, pivot_tol: float = 1e3 * np.finfo(float).eps):
    """Sparse LU with partial pivoting plus a few refinement sweeps.

    The factorization is rejected as numerically singular when the smallest
    to largest ``|U_ii|`` ratio falls below ``pivot_tol``; a consistent
    right-hand side can otherwise hide a null space behind a small residual.

    Returns ``(FieldCoefficients, relative residual)``.
    """
    K = sp.csc_matrix(system.matrix)
    zero_rows = np.flatnonzero(np.diff(sp.csr_matrix(K).indptr) == 0)
    if len(zero_rows):
        raise SolverError(f"matrix is singular: {len(zero_rows)} empty rows (first {zero_rows[0]})")
    try:
        lu = spla.splu(K, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    diag_u = np.abs(lu.U.diagonal())
    pivot_ratio = diag_u.min() / diag_u.max()
    if not pivot_ratio >= pivot_tol:
        raise SolverError(
            f"matrix is numerically singular: smallest/largest pivot ratio {pivot_ratio:.3e} below {pivot_tol:.1e}"
        )
    b = system.rhs
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite solution; smallest/largest pivot ratio {pivot_ratio:.3e}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        res = float(np.linalg.norm(K @ x))
    else:
        for _ in range(refine):
            r = b - K @ x
            if np.linalg.norm(r) <= 1e-14 * bnorm:
                break
            x = x + lu.solve(r)
        res = relative_residual(system, x)
    log.debug("direct solve: n=%d residual=%.3e pivot ratio=%.3e", K.shape[0], res, pivot_ratio)
    if not res <= tol:
        raise SolverError(f"relative residual {res:.3e} above {tol:.1e}; pivot ratio {pivot_ratio:.3e}")
    r = system.block_ranges
    return FieldCoefficients(x[r["velocity"]], x[r["pressure"]], x[r["multiplier"]]), res


def nearest_interior(active):
    """Map every cut element to the interior element with the closest centroid.

    Ties go to the lower element index.  Returns background ids aligned with
    ``active.cut_elements``.
    """
    interior = active.interior_elements
    if len(interior) == 0:
        raise ValueError("no uncut element to extend the pressure from")
    cen = active.mesh.centroids()
    ci = cen[interior]
    tol = 1e-12 * float(active.mesh.h_T.max())
    out = np.empty(len(active.cut_elements), dtype=np.int64)
    for start in range(0, len(out), 256):
        cc = cen[active.cut_elements[start : start + 256]]
        d = np.linalg.norm(cc[:, None, :] - ci[None, :, :], axis=2)
        best = d.min(axis=1, keepdims=True)
        out[start : start + 256] = interior[np.argmax(d <= best + tol, axis=1)]
    return out


def extend_pressure(pressure, active, areas=None):
    """Mean-free pressure with cut elements overwritten by their interior neighbour.

    ``pressure`` is indexed like ``active.active_elements``.  The mean uses
    whole-element areas over the active mesh.
    """
    pressure = np.asarray(pressure, dtype=float)
    if areas is None:
        areas = active.mesh.areas()[active.active_elements]
    mean = np.dot(areas, pressure) / areas.sum()
    out = pressure - mean
    src = nearest_interior(active)
    cut_rows = active.element_index[active.cut_elements]
    out[cut_rows] = pressure[active.element_index[src]] - mean
    return out


def compute_divergence_field(disc, velocity):
    """Element divergences on the active mesh and their largest magnitude."""
    div = disc.divergence(velocity)
    return div, float(np.abs(div).max()) if len(div) else 0.0


def h1_norm_mesh_domain(disc, velocity) -> float:
    """``||u_h||_{H^1(Omega_T)}`` over whole active elements."""
    q = build_full_quadrature(disc.partition, 2)
    u, g = disc.velocity_at(velocity, q.elements, q.points, q.sub)
    return float(np.sqrt(q.integrate(np.sum(u**2, axis=1) + np.sum(g**2, axis=(1, 2)))))


@dataclass
class ErrorReport:
    h: float
    e_u_L2: float
    e_u_H1: float
    e_u_H1_semi: float
    e_p_interior: float
    e_p_extended: float
    e_lambda_L2Gamma: float
    div_max: float
    u_h1_mesh: float = 0.0
    residual: float = 0.0
    n_dofs: int = 0
    rates: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("rates")
        return d


def compute_errors(disc, solution: FieldCoefficients, exact, order: int = 8, residual: float = 0.0) -> ErrorReport:
    """Velocity, pressure and multiplier errors against an exact solution.

    ``exact`` needs ``u``, ``grad_u`` and ``p``; the multiplier reference is
    ``-(grad u)^T n + p n`` with the quadrature normals.  Vector multipliers
    are compared componentwise; a scalar multiplier is compared with ``p``.
    """
    q = build_cut_quadrature(disc.partition, disc.classification, order)
    uh, guh = disc.velocity_at(solution.velocity, q.elements, q.points, q.sub)
    du = exact.u(q.points) - uh
    dg = exact.grad_u(q.points) - guh
    l2 = q.integrate(np.sum(du**2, axis=1))
    semi = q.integrate(np.sum(dg**2, axis=(1, 2)))

    active = disc.active
    p_ext = extend_pressure(solution.pressure, active)
    rows = active.element_index[q.elements]
    e_ext = q.integrate((exact.p(q.points) - p_ext[rows]) ** 2)

    qi = build_full_quadrature(disc.partition, order, elements=active.interior_elements)
    ri = active.element_index[qi.elements]
    e_int = qi.integrate((exact.p(qi.points) - p_ext[ri]) ** 2)

    bq = disc.boundary_quadrature
    nc = len(active.cut_elements)
    cidx = active.cut_index[bq.elements]
    n = bq.normals
    if len(solution.multiplier) == 2 * nc:
        lam = -np.einsum("pij,pj->pi", exact.grad_u(bq.points), n) + exact.p(bq.points)[:, None] * n
        lam_h = np.column_stack([solution.multiplier[cidx], solution.multiplier[nc + cidx]])
        e_lam = bq.integrate(np.sum((lam - lam_h) ** 2, axis=1))
    else:
        e_lam = bq.integrate((exact.p(bq.points) - solution.multiplier[cidx]) ** 2)

    _, div_max = compute_divergence_field(disc, solution.velocity)
    return ErrorReport(
        h=disc.h,
        e_u_L2=float(np.sqrt(l2)),
        e_u_H1=float(np.sqrt(l2 + semi)),
        e_u_H1_semi=float(np.sqrt(semi)),
        e_p_interior=float(np.sqrt(e_int)),
        e_p_extended=float(np.sqrt(e_ext)),
        e_lambda_L2Gamma=float(np.sqrt(e_lam)),
        div_max=div_max,
        u_h1_mesh=h1_norm_mesh_domain(disc, solution.velocity),
        residual=residual,
        n_dofs=disc.dofmap.total,
    )


RATE_KEYS = ("e_u_L2", "e_u_H1", "e_u_H1_semi", "e_p_interior", "e_p_extended", "e_lambda_L2Gamma")


def convergence_rates(reports, keys=RATE_KEYS):
    """``log2(e_prev / e_next)`` between consecutive refinements for each key."""
    out = {}
    for k in keys:
        e = np.array([getattr(r, k) for r in reports])
        out[k] = list(np.log2(e[:-1] / e[1:]))
    return out


def fitted_rate(h, e) -> float:
    """Least-squares slope of ``log e`` against ``log h``."""
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])
