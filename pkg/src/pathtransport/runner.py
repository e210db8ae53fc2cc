"""Batch execution of scenario configs with CSV and JSON-sidecar output.

Rows are written in grid order with 17-significant-digit formatting, so a
rerun of the same config produces a byte-identical CSV; run metadata
(including wall time and a timestamp) lives only in the JSON sidecar.
On a module failure the rows computed so far are flushed and the error
names the grid point.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ScenarioConfig, config_hash
from .curves import analytic_congruence, curve_from_expressions, integrate_geodesic
from .deviation import (
    basic_equation_residual,
    deviation_identity_residual,
    deviation_vector,
    deviation_vector_matrix_form,
    equation_of_motion_rhs,
    integrate_geodesic_deviation,
    lambda_factor,
)
from .displacement import composition_residual, displacement_vector
from .errors import ConfigError, GeometryError
from .expressions import compile_expression, parse_expression
from .geometry import expression_vector_field
from .oracles import fd_second_deviation, fit_order, two_geodesic_separation
from .scenarios import ForcedFamily, forced_family_scenario, geodesic_scenario
from .transport import (
    compose_check,
    euclidean_transport_law,
    parallel_transport_law,
    transport_matrix,
)

OUTPUT_ENV_VAR = "PATHTRANSPORT_OUTPUT"


@dataclass
class RunRecord:
    """Result of one scenario run: rows, evidence and where they were written."""

    scenario_hash: str
    version: str
    task: str
    header: list
    rows: list
    wall_time_s: float = 0.0
    oracle_evidence: dict = field(default_factory=dict)
    csv_path: str | None = None
    json_path: str | None = None


class ScenarioRunError(RuntimeError):
    """A module operation failed at a specific grid point."""

    def __init__(self, grid_value, cause):
        super().__init__(f"failure at grid value {grid_value!r}: {cause}")
        self.grid_value = grid_value
        self.cause = cause


def _fmt(value) -> str:
    return f"{float(value):.17g}"


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _grid_values(grid):
    start, stop, count = grid["start"], grid["stop"], grid["count"]
    if count == 1:
        return [start]
    return [start + (stop - start) * k / (count - 1) for k in range(count)]


def _rows(grid_values, compute):
    for gv in grid_values:
        try:
            yield compute(gv)
        except (GeometryError, ValueError) as err:
            raise ScenarioRunError(gv, err) from err


def _build_curve(spec, m, step):
    if "point" in spec:
        return curve_from_expressions(spec["point"], spec["interval"], var="t")
    return integrate_geodesic(
        m,
        np.asarray(spec["x0"], dtype=float),
        np.asarray(spec["v0"], dtype=float),
        spec["interval"],
        step=step,
        initial_parameter=spec.get("initial_parameter"),
    )


def _law(cfg: ScenarioConfig, m, step):
    if cfg.transport == "parallel":
        return parallel_transport_law(m, step)
    return euclidean_transport_law(step)


def _run_transport(cfg, m, law, params, evidence):
    curve = _build_curve(params["curve"], m, law.integrator_step)
    s = params["s"]
    header = ["t"]
    header += [f"H_{i}{j}" for i in range(m.dim) for j in range(m.dim)]
    header += ["residual_compose"]

    def compute(t):
        H = transport_matrix(law, curve, s, t).H
        res = compose_check(law, curve, s, 0.5 * (s + t), t)
        return [t] + [H[i, j] for i in range(m.dim) for j in range(m.dim)] + [res]

    return header, _rows(_grid_values(params["grid"]), compute)


def _run_displacement(cfg, m, law, params, evidence):
    curve = _build_curve(params["curve"], m, law.integrator_step)
    s = params["s"]
    panels = cfg.integrator.quad_panels
    tangent_s = curve.tangent_at(s)
    header = ["t"] + [f"d_{i}" for i in range(m.dim)]
    header += ["residual_infinitesimal", "residual_composition"]

    def compute(t):
        d = displacement_vector(law, curve, s, t, panels).vector.components
        res_inf = float(np.max(np.abs(d - (t - s) * tangent_s)))
        res_comp = (
            composition_residual(law, curve, s, t, 0.5 * (s + t), panels) if t != s else 0.0
        )
        return [t] + list(d) + [res_inf, res_comp]

    return header, _rows(_grid_values(params["grid"]), compute)


def _run_deviation(cfg, m, law, params, evidence):
    step = law.integrator_step
    x1 = _build_curve(params["x1"], m, step)
    x2 = _build_curve(params["x2"], m, step)
    x = _build_curve(params["x"], m, step) if "x" in params else None
    scn = geodesic_scenario(m, x1, x2, x, shooting_tol=1e-12)
    panels = cfg.integrator.quad_panels
    header = ["s"] + [f"h_{i}" for i in range(m.dim)] + ["residual_matrix_form"]

    def compute(s):
        h = deviation_vector(law, scn, s, panels).components
        h_alt = deviation_vector_matrix_form(law, scn, s, panels, check=False).components
        return [s] + list(h) + [float(np.max(np.abs(h - h_alt)))]

    return header, _rows(_grid_values(params["grid"]), compute)


def _run_jacobi(cfg, m, law, params, evidence):
    step = law.integrator_step
    grid = params["grid"]
    x0 = np.asarray(params["x0"], dtype=float)
    v0 = np.asarray(params["v0"], dtype=float)
    h0 = np.asarray(params["h0"], dtype=float)
    dh0 = np.asarray(params["dh0"], dtype=float)
    base = integrate_geodesic(m, x0, v0, (grid["start"], grid["stop"]), step=step)
    states = integrate_geodesic_deviation(
        m, base, h0, dh0, (grid["start"], grid["stop"]), step=step
    )
    du = states[1].u - states[0].u if len(states) > 1 else 1.0
    g0 = m.gamma_at(x0)
    dv_off = dh0 - np.einsum("ikj,k,j->i", g0, v0, h0)
    header = ["u"] + [f"h_{i}" for i in range(m.dim)] + ["h_norm", "residual_separation"]

    def compute(t):
        idx = min(max(int(round((t - grid["start"]) / du)), 0), len(states) - 1)
        state = states[idx]
        norm = float(np.linalg.norm(state.h))
        if state.u > grid["start"]:
            oracle = two_geodesic_separation(m, base, h0, dv_off, state.u, 1e-4, step=step)
            res = float(np.max(np.abs(state.h - oracle.value)))
            evidence[f"separation@{state.u:.6g}"] = {
                "bound": oracle.bound,
                "report": oracle.report.to_dict(),
            }
        else:
            res = 0.0
        return [state.u] + list(state.h) + [norm, res]

    return header, _rows(_grid_values(grid), compute)


def _run_equation_of_motion(cfg, m, law, params, evidence):
    fam_spec = params["family"]
    chi = curve_from_expressions(fam_spec["chi"], fam_spec["r_interval"], var="r")
    n = m.dim
    phi_fns = [compile_expression(parse_expression(e, ("r",)), ("r",)) for e in fam_spec["phi"]]
    var_order = tuple(f"x{i + 1}" for i in range(n)) + ("s", "r")
    force_fns = [
        compile_expression(parse_expression(e, var_order), var_order) for e in fam_spec["force"]
    ]

    def phi(r):
        return np.array([f(r) for f in phi_fns], dtype=float)

    def force(s, r, point):
        args = tuple(point) + (s, r)
        return np.array([f(*args) for f in force_fns], dtype=float)

    family = ForcedFamily(
        m, chi, phi, force, tuple(fam_spec["s_interval"]), step=fam_spec["step"]
    )
    scn = forced_family_scenario(
        m, family, fam_spec["r_prime"], fam_spec["r_dprime"], shooting_tol=1e-12
    )
    panels = cfg.integrator.quad_panels or 16
    h_fd = cfg.integrator.fd_step
    header = ["s"]
    header += [f"lhs_{i}" for i in range(n)] + [f"rhs_{i}" for i in range(n)] + ["residual"]

    def compute(s):
        lhs_est = fd_second_deviation(scn, law, s, max(h_fd, 1e-3), quad_panels=panels)
        rhs = equation_of_motion_rhs(law, scn, s, force, h_fd=h_fd, quad_panels=panels)
        res = float(np.max(np.abs(lhs_est.value - rhs)))
        evidence[f"second_rate@{s:.6g}"] = {
            "bound": lhs_est.bound,
            "report": lhs_est.report.to_dict(),
        }
        return [s] + list(lhs_est.value) + list(rhs) + [res]

    return header, _rows(_grid_values(params["grid"]), compute)


def _builtin_congruence(kind, m, f_const):
    def tau(u):
        return u if f_const == 0.0 else (math.exp(f_const * u) - 1.0) / f_const

    if kind == "flat_shifted":
        if not m.name.startswith("euclidean:2"):
            raise ConfigError("flat_shifted congruence needs manifold euclidean:2", key="congruence")

        def y(u, v):
            return np.array([v + 0.3 * tau(u), tau(u) + 0.2 * v])

        return analytic_congruence(y, (-1.0, 2.0), (-1.0, 2.0))
    if kind == "sphere_meridians":
        if not m.name.startswith("sphere2"):
            raise ConfigError("sphere_meridians congruence needs manifold sphere2", key="congruence")

        def y(u, v):
            return np.array([0.9 + 0.5 * tau(u), v])

        return analytic_congruence(y, (-0.5, 1.5), (-1.0, 2.0))
    raise ConfigError(f"unknown congruence kind {kind!r}", key="congruence.kind")


def _run_identity_check(cfg, m, law, params, evidence):
    if params["check"] == "basic_equation":
        U = expression_vector_field(m.dim, params["fields"]["U"])
        xi = expression_vector_field(m.dim, params["fields"]["xi"])
        header = ["fd_step", "point_index", "residual"]
        pairs = [
            (p_idx, step_fd)
            for p_idx in range(len(params["points"]))
            for step_fd in params["fd_steps"]
        ]
        errors_by_point = {}

        def compute(pair):
            p_idx, step_fd = pair
            res = basic_equation_residual(
                m, U, xi, np.asarray(params["points"][p_idx]), h_fd=step_fd
            )
            errors_by_point.setdefault(p_idx, []).append(res)
            if len(errors_by_point[p_idx]) == len(params["fd_steps"]):
                report = fit_order(params["fd_steps"], errors_by_point[p_idx])
                evidence[f"basic_equation_order@point{p_idx}"] = report.to_dict()
            return [step_fd, p_idx, res]

        return header, _rows(pairs, compute)

    cong_spec = params["congruence"]
    f_const = cong_spec["f_constant"]
    g_const = cong_spec["g_constant"]
    cong = _builtin_congruence(cong_spec["kind"], m, f_const)
    f = None if f_const == 0.0 else (lambda u: f_const)
    g = None if g_const == 0.0 else (lambda u, v: g_const)
    v1, v2 = cong_spec["v1"], cong_spec["v2"]
    lam_closed = (
        (v2 - v1) if g_const == 0.0 else (1.0 - math.exp(-g_const * (v2 - v1))) / g_const
    )
    header = ["fd_step", "u", "residual", "residual_lambda"]
    pairs = [(u, step_fd) for u in cong_spec["u_values"] for step_fd in params["fd_steps"]]
    errors_by_u = {}

    def compute(pair):
        u, step_fd = pair
        res = deviation_identity_residual(m, cong, u, v1, f=f, g=g, v2=v2, h_fd=step_fd)
        lam = lambda_factor(g or (lambda uu, vv: 0.0), u, v1, v2)[0]
        errors_by_u.setdefault(u, []).append(res)
        if len(errors_by_u[u]) == len(params["fd_steps"]):
            report = fit_order(params["fd_steps"], errors_by_u[u])
            evidence[f"deviation_identity_order@u{u:.6g}"] = report.to_dict()
        return [step_fd, u, res, abs(lam - lam_closed)]

    return header, _rows(pairs, compute)


_RUNNERS = {
    "transport": _run_transport,
    "displacement": _run_displacement,
    "deviation": _run_deviation,
    "jacobi": _run_jacobi,
    "equation_of_motion": _run_equation_of_motion,
    "identity_check": _run_identity_check,
}


def resolve_output_dir(cfg: ScenarioConfig, output_dir=None) -> str:
    return str(
        output_dir or cfg.output_path or os.environ.get(OUTPUT_ENV_VAR) or os.getcwd()
    )


def run_scenario(cfg: ScenarioConfig, output_dir=None, write: bool = True) -> RunRecord:
    """Execute a validated config over its grid and write CSV plus sidecar."""
    m = cfg.build_manifold()
    law = _law(cfg, m, cfg.integrator.step)
    started = time.perf_counter()
    evidence = {}
    header, row_iter = _RUNNERS[cfg.task](cfg, m, law, cfg.params, evidence)
    rows = []
    failure = None
    try:
        for row in row_iter:
            rows.append(row)
    except ScenarioRunError as err:
        failure = err

    record = RunRecord(
        scenario_hash=config_hash(cfg.raw),
        version=__version__,
        task=cfg.task,
        header=header,
        rows=rows,
        wall_time_s=time.perf_counter() - started,
        oracle_evidence=evidence,
    )
    if write:
        out_dir = resolve_output_dir(cfg, output_dir)
        os.makedirs(out_dir, exist_ok=True)
        record.csv_path = os.path.join(out_dir, f"{cfg.name}.csv")
        with open(record.csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv_text(record.header, record.rows))
        record.json_path = os.path.join(out_dir, f"{cfg.name}.json")
        sidecar = {
            "scenario_hash": record.scenario_hash,
            "toolkit_version": record.version,
            "task": record.task,
            "manifold": cfg.manifold_name,
            "transport": cfg.transport,
            "row_count": len(record.rows),
            "wall_time_s": record.wall_time_s,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "oracle_evidence": record.oracle_evidence,
            "error": str(failure) if failure else None,
        }
        with open(record.json_path, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if failure is not None:
        raise failure
    return record
