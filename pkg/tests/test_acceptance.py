"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line (shown even
without ``-s``) and then asserts the same condition.
"""

import numpy as np
import pytest

from cutstokes.assembly import (
    assemble_coriolis,
    assemble_curl_stab,
    assemble_ghost_penalty,
    assemble_j,
    build_lagrange_system,
)
from cutstokes.discretization import Discretization
from cutstokes.experiments import RunConfig, run_convergence, run_coriolis
from cutstokes.geometry import disk
from cutstokes.interpolation import _face_points, face_flux, face_normals, pi_h
from cutstokes.solve import fitted_rate, solve_direct
from cutstokes.spaces import build_face_bubble, continuity_audit, evaluate_at, locate_sub_triangle

SIZES = (16, 32, 64, 128)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {number}: {detail}"

    return emit


@pytest.fixture(scope="module")
def lagrange_study(tmp_path_factory):
    cfg = RunConfig(sizes=SIZES, output=str(tmp_path_factory.mktemp("lagrange")), vtk=False)
    return run_convergence(cfg)


@pytest.fixture(scope="module")
def nitsche_study(tmp_path_factory):
    cfg = RunConfig(sizes=SIZES, formulation="nitsche", output=str(tmp_path_factory.mktemp("nitsche")), vtk=False)
    return run_convergence(cfg)


def test_criterion_1_element(disc16, oracles, verdict):
    d = disc16
    rng = np.random.default_rng(11)
    na = d.active.n_active
    rows = np.repeat(np.arange(na), 20)
    u = rng.random((len(rows), 2))
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    tri = d.partition.nodes[rows, :3]
    pts = tri[:, 0] + u[:, :1] * (tri[:, 1] - tri[:, 0]) + u[:, 1:] * (tri[:, 2] - tri[:, 0])
    sub = locate_sub_triangle(d.partition, rows, pts)
    _, g = evaluate_at(d.basis, rows, sub, pts)
    div = np.trace(g, axis1=2, axis2=3).reshape(na, 20, 9)  # every local function
    spread = np.ptp(div, axis=1).max()

    # closed form alpha = (1/3) / |x_F - x_T| for every bubble of the mesh
    nodes = d.partition.nodes
    closed = (1.0 / 3.0) / np.linalg.norm(nodes[:, 4:7] - nodes[:, 3:4], axis=2)
    measured = np.abs(div[:, 0, 6:9])
    closed_err = np.abs(measured - closed).max() / closed.max()

    ref = np.array([[0, 0], [1, 0], [0, 1], [1 / 3, 1 / 3], [0.5, 0.5], [0, 0.5], [0.5, 0]], dtype=float)
    _, alpha = build_face_bubble(ref, 0)
    fd_err = np.abs(alpha - np.array(oracles["alpha_reference"]["fd_per_sub"])).max()
    ok = spread <= 1e-12 and fd_err <= 1e-8 and closed_err <= 1e-12
    verdict(1, ok, f"divergence spread {spread:.1e} (<= 1e-12), alpha vs finite differences {fd_err:.1e} (<= 1e-8), "
                   f"closed form on n=16 {closed_err:.1e}")


def test_criterion_2_conformity(disc16, verdict):
    jump = continuity_audit(disc16.mesh, disc16.active, disc16.basis, disc16.dofmap)
    verdict(2, jump <= 1e-12, f"max jump {jump:.1e} on n=16 (<= 1e-12)")


def test_criterion_3_interpolant(disc16, exact, verdict):
    d = disc16
    field = exact.velocity_field()
    coef = pi_h(d.mesh, d.active, d.basis, d.dofmap, field)
    faces = d.dofmap.faces
    got = face_flux(d.mesh, d.active, d.basis, d.dofmap, coef, faces)
    pts, wts, _, _ = _face_points(d.mesh, d.active, d.partition, faces, 12)
    vals = field(pts.reshape(-1, 2)).reshape(pts.shape)
    want = np.einsum("fp,fpc,fc->f", wts, vals, face_normals(d.mesh, faces))
    flux_err = np.abs(got - want).max()
    div = np.abs(d.divergence(coef)).max()
    verdict(3, flux_err <= 1e-12 and div <= 1e-11,
            f"face flux mismatch {flux_err:.1e} (<= 1e-12), max divergence {div:.1e} (<= 1e-11)")


def test_criterion_4_geometry(verdict):
    area_err, perim_err, hs = [], [], []
    for n in SIZES:
        d = Discretization.structured(n, disk())
        area_err.append(abs(d.cut_quadrature.weights.sum() - np.pi / 4))
        perim_err.append(abs(d.boundary_quadrature.weights.sum() - np.pi))
        hs.append(2.0 / n)
    sa, sp_ = fitted_rate(hs, area_err), fitted_rate(hs, perim_err)
    ia = np.log2(np.array(area_err[:-1]) / area_err[1:])
    ip = np.log2(np.array(perim_err[:-1]) / perim_err[1:])
    verdict(4, sa >= 1.9 and sp_ >= 1.9,
            f"log-log slope area {sa:.2f}, perimeter {sp_:.2f} (>= 1.9); intervals area "
            f"{np.round(ia, 2).tolist()}, perimeter {np.round(ip, 2).tolist()}")


def test_criterion_5_convergence(lagrange_study, verdict):
    r = lagrange_study[-1].rates
    last = {k: r[k][-1] for k in ("e_u_H1", "e_u_L2", "e_p_interior", "e_lambda_L2Gamma", "e_p_extended")}
    ok = (
        0.85 <= last["e_u_H1"] <= 1.3
        and last["e_u_L2"] >= 1.9
        and 0.8 <= last["e_p_interior"] <= 1.4
        and 0.8 <= last["e_lambda_L2Gamma"] <= 1.4
        and 0.8 <= last["e_p_extended"] <= 1.4
    )
    verdict(5, ok, "last-interval rates " + ", ".join(f"{k} {v:.3f}" for k, v in last.items()))


def test_criterion_6_pointwise_divergence(lagrange_study, verdict):
    ratios = [rep.div_max / rep.u_h1_mesh for rep in lagrange_study]
    verdict(6, max(ratios) <= 1e-8,
            "div_max / |u_h|_H1(Omega_T) per mesh " + ", ".join(f"{q:.1e}" for q in ratios) + " (<= 1e-8)")


def test_criterion_7_coriolis(tmp_path, verdict):
    cfg = RunConfig(output=str(tmp_path), vtk=False)
    rows = run_coriolis(cfg)
    uy = np.array([r.uy_L2 for r in rows])
    om = [r.omega for r in rows]
    at_rest = uy[0] <= 1e-3 * rows[0].ux_L2
    monotone = bool(np.all(np.diff(uy) > 0))
    growth = uy[om.index(10000.0)] / uy[om.index(100.0)]
    ok = at_rest and monotone and growth >= 10 and om == [0.0, 100.0, 1000.0, 10000.0]
    verdict(7, ok, f"n={cfg.coriolis_n} |u_y| " + ", ".join(f"{v:.3e}" for v in uy)
            + f" at omega {om}; |u_x| {rows[0].ux_L2:.3f}; growth 100 -> 10000 x{growth:.1f} (>= 10)")


def test_criterion_8_structure(disc16, exact, verdict):
    d = disc16
    system = build_lagrange_system(d, exact.f, exact.u)
    skew = sum(
        (system.block(a, b) + system.block(b, a).T).count_nonzero()
        for a, b in (("velocity", "pressure"), ("velocity", "multiplier"))
    )

    def min_eig(M):
        M = M.toarray()
        return np.linalg.eigvalsh(0.5 * (M + M.T)).min() / max(np.abs(M).max(), 1e-300)

    psd = {
        "j": min_eig(assemble_j(d, 2)),
        "curl": min_eig(assemble_curl_stab(d)),
        "ghost": min_eig(assemble_ghost_penalty(d)),
    }
    K = assemble_coriolis(d, 1000.0)
    x = np.random.default_rng(5).standard_normal(K.shape[0])
    cor = abs(x @ K @ x) / (abs(K).max() * (x @ x))
    _, res = solve_direct(system)
    ok = skew == 0 and min(psd.values()) >= -1e-10 and cor <= 1e-10 and res <= 1e-9
    verdict(8, ok, f"skew mismatch entries {skew}, min scaled eigenvalue "
                   + ", ".join(f"{k} {v:.1e}" for k, v in psd.items())
                   + f", Coriolis x'Kx {cor:.1e}, residual {res:.1e} (<= 1e-9)")


def test_criterion_9_nitsche(nitsche_study, verdict):
    rates = nitsche_study[-1].rates["e_u_H1"]
    hs = [r.h for r in nitsche_study]
    fit = fitted_rate(hs, [r.e_u_H1 for r in nitsche_study])
    res = max(r.residual for r in nitsche_study)
    verdict(9, rates[-1] >= 0.85 and res <= 1e-9,
            f"e_u_H1 rates {np.round(rates, 3).tolist()} (last >= 0.85), fitted vs reported h {fit:.3f}, "
            f"max residual {res:.1e}")
