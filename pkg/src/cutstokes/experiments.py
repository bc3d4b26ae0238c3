"""Run configuration and the end-to-end experiment drivers."""

from __future__ import annotations

import csv
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .assembly import build_lagrange_system, build_nitsche_system
from .discretization import Discretization
from .geometry import LevelSetGeometry, disk
from .problems import boundary_driven, coriolis_reference
from .solve import (
    RATE_KEYS,
    SolverError,
    compute_divergence_field,
    compute_errors,
    convergence_rates,
    extend_pressure,
    fitted_rate,
    solve_direct,
)
from .vtk import write_fields_vtk

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentError",
    "RunConfig",
    "load_config",
    "run_convergence",
    "run_coriolis",
    "run_solve",
]

ERROR_COLUMNS = (
    "n", "h", "e_u_L2", "e_u_H1", "e_u_H1_semi", "e_p_interior", "e_p_extended",
    "e_lambda_L2Gamma", "div_max", "u_h1_mesh", "residual", "n_dofs",
)


class ConfigError(ValueError):
    """Invalid run configuration."""


class ExperimentError(RuntimeError):
    """A run failed; the message names the mesh size or omega involved."""


@dataclass(frozen=True)
class RunConfig:
    """Every knob of an experiment; all fields have working defaults.

    The TOML layout groups the fields into tables::

        [geometry]  kind, center, radius
        [mesh]      box, sizes
        [method]    formulation, gamma, gamma0, gamma1, gamma2, curl_weight, omega
        [coriolis]  n, omegas
        [output]    directory, vtk
    """

    kind: str = "disk"
    center: tuple = (0.0, 0.0)
    radius: float = 0.5
    box: tuple = ((-1.0, -1.0), (1.0, 1.0))
    sizes: tuple = (16, 32, 64, 128)
    formulation: str = "lagrange"
    gamma: float = 1.0
    gamma0: float = 10.0
    gamma1: float = 0.1
    gamma2: float = 0.1
    curl_weight: float = 1.0
    omega: float = 0.0
    coriolis_n: int = 64
    omegas: tuple = (0.0, 100.0, 1000.0, 10000.0)
    output: str = "results"
    vtk: bool = True

    TABLES = {
        "geometry": ("kind", "center", "radius"),
        "mesh": ("box", "sizes"),
        "method": ("formulation", "gamma", "gamma0", "gamma1", "gamma2", "curl_weight", "omega"),
        "coriolis": ("n", "omegas"),
        "output": ("directory", "vtk"),
    }
    ALIASES = {("coriolis", "n"): "coriolis_n", ("output", "directory"): "output"}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        kw = {}
        for table, values in data.items():
            if table not in cls.TABLES or not isinstance(values, dict):
                raise ConfigError(f"unknown config table [{table}]")
            for key, value in values.items():
                if key not in cls.TABLES[table]:
                    raise ConfigError(f"unknown key '{key}' in [{table}]")
                kw[cls.ALIASES.get((table, key), key)] = value
        for name in ("center", "sizes", "omegas"):
            if name in kw:
                kw[name] = tuple(kw[name])
        if "box" in kw:
            kw["box"] = tuple(tuple(float(c) for c in corner) for corner in kw["box"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.kind != "disk":
            raise ConfigError(f"unsupported geometry kind '{self.kind}'")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if self.formulation not in ("lagrange", "nitsche"):
            raise ConfigError(f"formulation must be 'lagrange' or 'nitsche', got '{self.formulation}'")
        sizes = np.asarray(self.sizes)
        if len(sizes) == 0 or np.any(sizes < 1) or np.any(np.diff(sizes) <= 0):
            raise ConfigError(f"mesh sizes must be positive and strictly increasing, got {list(self.sizes)}")
        for name in ("gamma", "gamma0", "gamma1", "gamma2", "curl_weight", "omega"):
            if getattr(self, name) < 0:
                raise ConfigError(f"parameter {name} must be >= 0")
        om = np.asarray(self.omegas, dtype=float)
        if len(om) == 0 or np.any(om < 0) or np.any(np.diff(om) <= 0):
            raise ConfigError("omegas must be nonnegative and strictly increasing")
        if self.coriolis_n < 1:
            raise ConfigError("coriolis n must be positive")
        (x0, y0), (x1, y1) = self.box
        if not (x0 < x1 and y0 < y1):
            raise ConfigError("box corners must be (lower-left, upper-right)")

    def geometry(self) -> LevelSetGeometry:
        return disk(self.center, self.radius)

    def with_updates(self, **kw) -> "RunConfig":
        cfg = replace(self, **kw)
        cfg.validate()
        return cfg

    def as_tables(self) -> dict:
        """Inverse of :meth:`from_dict`."""
        back = {v: k for k, v in self.ALIASES.items()}
        out = {}
        for f in fields(self):
            table, key = back.get(f.name, (None, f.name))
            if table is None:
                table = next(t for t, keys in self.TABLES.items() if f.name in keys)
            value = getattr(self, f.name)
            out.setdefault(table, {})[key] = [list(v) for v in value] if f.name == "box" else (
                list(value) if isinstance(value, tuple) else value
            )
        return out


def load_config(path=None) -> RunConfig:
    """Read a TOML config; ``None`` or an empty file gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return RunConfig.from_dict(data)


def build_system(disc, cfg: RunConfig, f, u_gamma, omega=None):
    """Assemble the configured formulation; returns ``(system, disc)``.

    The returned discretization carries the multiplier layout of the system.
    """
    omega = cfg.omega if omega is None else omega
    if cfg.formulation == "lagrange":
        system = build_lagrange_system(disc, f, u_gamma, cfg.gamma, cfg.curl_weight, omega)
        return system, disc.with_multiplier_components(2)
    system = build_nitsche_system(
        disc, f, u_gamma, cfg.gamma0, cfg.gamma1, cfg.gamma2, cfg.curl_weight, omega
    )
    return system, disc.with_multiplier_components(1)


def _solve_case(cfg, n, exact, omega=None, label=None):
    label = label or f"n={n}"
    try:
        disc = Discretization.structured(n, cfg.geometry(), cfg.box)
        system, disc = build_system(disc, cfg, exact.f, exact.u, omega)
        solution, res = solve_direct(system)
    except (SolverError, ValueError) as exc:
        raise ExperimentError(f"{label}: {exc}") from exc
    return disc, solution, res


def _errors(disc, solution, exact, res, n):
    try:
        return compute_errors(disc, solution, exact, residual=res)
    except ValueError as exc:
        raise ExperimentError(f"n={n}: {exc}") from exc


def _multiplier_per_element(disc, solution):
    """Multiplier as a per-active-element field, zero off the cut elements."""
    active = disc.active
    na = len(active.active_elements)
    nc = len(active.cut_elements)
    rows = active.element_index[active.cut_elements]
    m = solution.multiplier
    if len(m) == 2 * nc:
        out = np.zeros((na, 2))
        out[rows] = np.column_stack([m[:nc], m[nc:]])
    else:
        out = np.zeros(na)
        out[rows] = m
    return out


def _dump_fields(path, disc, solution, title):
    div, _ = compute_divergence_field(disc, solution.velocity)
    cells = {
        "pressure": solution.pressure,
        "extended_pressure": extend_pressure(solution.pressure, disc.active),
        "divergence": div,
        "multiplier": _multiplier_per_element(disc, solution),
        "classification": disc.classification.labels[disc.partition.elements],
    }
    write_fields_vtk(path, disc, solution.velocity, cells, title)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def run_convergence(cfg: RunConfig, outdir=None, exact=None):
    """Mesh-refinement study for the boundary-driven problem.

    Writes ``errors.csv`` (one row per mesh then a ``rate`` row with the
    last-interval rates), ``rates.csv`` (every interval plus a fitted slope)
    and the finest-mesh fields.  Returns the list of error reports.
    """
    exact = boundary_driven() if exact is None else exact
    outdir = Path(cfg.output if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    reports = []
    for n in cfg.sizes:
        disc, solution, res = _solve_case(cfg, n, exact)
        report = _errors(disc, solution, exact, res, n)
        reports.append(report)
        log.info("n=%d h=%.4f H1=%.3e L2=%.3e div=%.1e", n, report.h, report.e_u_H1, report.e_u_L2, report.div_max)
        if cfg.vtk and n == cfg.sizes[-1]:
            _dump_fields(outdir / f"fields_n{n}.vtk", disc, solution, f"{cfg.formulation} n={n}")

    rates = convergence_rates(reports) if len(reports) > 1 else {k: [] for k in RATE_KEYS}
    for r in reports:
        r.rates = rates
    with open(outdir / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS)
        for n, r in zip(cfg.sizes, reports):
            row = r.row()
            w.writerow([n] + [_fmt(row[c]) for c in ERROR_COLUMNS[1:]])
        w.writerow(["rate", ""] + [_fmt(rates[c][-1]) if c in rates and rates[c] else "" for c in ERROR_COLUMNS[2:]])
    with open(outdir / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        intervals = [f"{a}-{b}" for a, b in zip(cfg.sizes[:-1], cfg.sizes[1:])]
        w.writerow(["quantity"] + intervals + ["last", "fitted"])
        h = [r.h for r in reports]
        for k in RATE_KEYS:
            e = [getattr(r, k) for r in reports]
            fit = fitted_rate(h, e) if len(e) > 1 and min(e) > 0 else float("nan")
            last = rates[k][-1] if rates[k] else float("nan")
            w.writerow([k] + [_fmt(v) for v in rates[k]] + [_fmt(last), _fmt(fit)])
    return reports


@dataclass
class CoriolisRow:
    omega: float
    uy_L2: float
    ux_L2: float
    uy_max_gamma: float
    residual: float


def run_coriolis(cfg: RunConfig, omegas=None, outdir=None, n=None):
    """Uniform boundary flow under increasing rotation.

    For each omega the system is solved with ``u = (1, 0)`` on the boundary
    and no body force; the exact velocity does not depend on omega, so any
    ``u_y`` is discretization error.  Writes ``coriolis.csv`` and one field
    file per omega.
    """
    omegas = cfg.omegas if omegas is None else tuple(omegas)
    cfg = cfg.with_updates(omegas=omegas)
    n = cfg.coriolis_n if n is None else n
    outdir = Path(cfg.output if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for om in omegas:
        exact = coriolis_reference(om)
        disc, solution, res = _solve_case(cfg, n, exact, omega=om, label=f"omega={om:g}, n={n}")
        q = disc.cut_quadrature
        u, _ = disc.velocity_at(solution.velocity, q.elements, q.points, q.sub)
        bq = disc.boundary_quadrature
        ub, _ = disc.velocity_at(solution.velocity, bq.elements, bq.points)
        row = CoriolisRow(
            omega=float(om),
            uy_L2=float(np.sqrt(q.integrate(u[:, 1] ** 2))),
            ux_L2=float(np.sqrt(q.integrate(u[:, 0] ** 2))),
            uy_max_gamma=float(np.abs(ub[:, 1]).max()),
            residual=res,
        )
        rows.append(row)
        log.info("omega=%g |u_y|=%.3e max|u_y| on boundary=%.3e", om, row.uy_L2, row.uy_max_gamma)
        if cfg.vtk:
            _dump_fields(outdir / f"fields_omega{om:g}.vtk", disc, solution, f"coriolis omega={om:g}")
    with open(outdir / "coriolis.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "uy_L2", "ux_L2", "uy_max_gamma", "residual"])
        for r in rows:
            w.writerow([_fmt(r.omega), _fmt(r.uy_L2), _fmt(r.ux_L2), _fmt(r.uy_max_gamma), _fmt(r.residual)])
    return rows


def run_solve(cfg: RunConfig, n: int, outdir=None, exact=None):
    """One solve of the boundary-driven problem with a field dump.

    Returns ``(discretization, solution, error report)``.
    """
    exact = boundary_driven() if exact is None else exact
    outdir = Path(cfg.output if outdir is None else outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    disc, solution, res = _solve_case(cfg, n, exact)
    report = _errors(disc, solution, exact, res, n)
    with open(outdir / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS)
        row = report.row()
        w.writerow([n] + [_fmt(row[c]) for c in ERROR_COLUMNS[1:]])
    if cfg.vtk:
        _dump_fields(outdir / f"fields_n{n}.vtk", disc, solution, f"{cfg.formulation} n={n}")
    return disc, solution, report
