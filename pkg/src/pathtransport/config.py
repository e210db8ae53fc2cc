"""Scenario configuration files.

Configs are TOML (JSON is accepted interchangeably; files ending in
``.json`` or starting with ``{`` parse as JSON).  Every key is validated
and unknown keys are rejected.  Curves are given either as coordinate
expressions in one parameter or as initial data to integrate; forces and
fields are expression lists over the chart coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

from .catalog import builtin_names, make_manifold
from .errors import ConfigError, ExpressionError
from .expressions import parse_expression

TASKS = (
    "transport",
    "displacement",
    "deviation",
    "jacobi",
    "equation_of_motion",
    "identity_check",
)

_TOP_KEYS = {"manifold", "transport", "task", "integrator", "output", "grid", "curve",
             "curves", "fields", "forces", "family", "congruence", "margin", "name"}
_INTEGRATOR_KEYS = {"step", "quad_panels", "fd_step"}
_OUTPUT_KEYS = {"path", "format"}
_GRID_KEYS = {"start", "stop", "count"}
_CURVE_KEYS = {"point", "interval", "x0", "v0", "kind", "initial_parameter"}


@dataclass
class IntegratorParams:
    step: float = 1e-3
    quad_panels: int | None = None
    fd_step: float = 1e-4


@dataclass
class ScenarioConfig:
    """Validated scenario description plus the canonical raw mapping."""

    name: str
    manifold_name: str
    transport: str
    task: str
    integrator: IntegratorParams
    params: dict
    output_path: str | None
    output_format: str
    margin: float
    raw: dict = field(repr=False, default_factory=dict)

    def build_manifold(self):
        return make_manifold(self.manifold_name, margin=self.margin)


def _require(condition, message, key=None):
    if not condition:
        raise ConfigError(message, key=key)


def _check_keys(mapping, allowed, where):
    for k in mapping:
        if k not in allowed:
            raise ConfigError(
                f"unknown key {k!r} (allowed: {', '.join(sorted(allowed))})", key=where
            )


def _positive(value, key):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError("must be a number", key=key) from None
    _require(out > 0, "must be positive", key=key)
    return out


def _check_expressions(exprs, variables, key):
    _require(isinstance(exprs, (list, tuple)) and exprs, "must be a non-empty list", key=key)
    for i, e in enumerate(exprs):
        try:
            parse_expression(str(e), variables)
        except ExpressionError as err:
            raise ConfigError(f"bad expression {e!r}: {err}", key=f"{key}[{i}]") from None


def _validate_grid(grid, key="grid"):
    _require(isinstance(grid, dict), "must be a table with start/stop/count", key=key)
    _check_keys(grid, _GRID_KEYS, key)
    for want in ("start", "stop", "count"):
        _require(want in grid, f"missing {want!r}", key=key)
    count = grid["count"]
    _require(isinstance(count, int) and count >= 1, "count must be a positive integer", key=key)
    return {"start": float(grid["start"]), "stop": float(grid["stop"]), "count": count}


def _validate_curve(spec, dim, key):
    _require(isinstance(spec, dict), "must be a curve table", key=key)
    _check_keys(spec, _CURVE_KEYS, key)
    _require("interval" in spec, "missing 'interval'", key=key)
    interval = spec["interval"]
    _require(
        isinstance(interval, (list, tuple)) and len(interval) == 2,
        "interval must be [a, b]",
        key=f"{key}.interval",
    )
    out = {"interval": [float(interval[0]), float(interval[1])]}
    if "point" in spec:
        _check_expressions(spec["point"], ("t",), f"{key}.point")
        _require(
            dim is None or len(spec["point"]) == dim,
            f"need {dim} coordinate expressions",
            key=f"{key}.point",
        )
        out["point"] = [str(e) for e in spec["point"]]
    else:
        for want in ("x0", "v0"):
            _require(want in spec, "parametric curves need 'point', integrated ones 'x0'/'v0'", key=key)
            vec = spec[want]
            _require(
                isinstance(vec, (list, tuple)) and (dim is None or len(vec) == dim),
                f"must be a length-{dim} vector",
                key=f"{key}.{want}",
            )
            out[want] = [float(v) for v in vec]
        out["kind"] = spec.get("kind", "geodesic")
        _require(out["kind"] in ("geodesic",), "only 'geodesic' initial-value curves here", key=f"{key}.kind")
        if "initial_parameter" in spec:
            out["initial_parameter"] = float(spec["initial_parameter"])
    return out


def _manifold_dim(name):
    base = name.partition(":")[0]
    if base == "euclidean":
        param = name.partition(":")[2]
        return int(param) if param else 3
    return 2


def _validate_task(task, data, dim):
    params = {}
    if task == "transport":
        _check_keys(data, {"curve", "s", "grid"}, "task")
        _require("curve" in data, "transport task needs a curve", key="curve")
        params["curve"] = _validate_curve(data["curve"], dim, "curve")
        params["s"] = float(data.get("s", params["curve"]["interval"][0]))
        params["grid"] = _validate_grid(data.get("grid", {}), "grid")
    elif task == "displacement":
        _check_keys(data, {"curve", "s", "grid"}, "task")
        _require("curve" in data, "displacement task needs a curve", key="curve")
        params["curve"] = _validate_curve(data["curve"], dim, "curve")
        params["s"] = float(data.get("s", params["curve"]["interval"][0]))
        params["grid"] = _validate_grid(data.get("grid", {}), "grid")
    elif task == "deviation":
        _check_keys(data, {"curves", "grid"}, "task")
        curves = data.get("curves")
        _require(isinstance(curves, dict), "deviation task needs a [curves] table", key="curves")
        _check_keys(curves, {"x1", "x2", "x"}, "curves")
        for label in ("x1", "x2"):
            _require(label in curves, f"missing curve {label!r}", key="curves")
            params[label] = _validate_curve(curves[label], dim, f"curves.{label}")
        if "x" in curves:
            params["x"] = _validate_curve(curves["x"], dim, "curves.x")
        params["grid"] = _validate_grid(data.get("grid", {}), "grid")
    elif task == "jacobi":
        _check_keys(data, {"x0", "v0", "h0", "dh0", "grid"}, "task")
        for want in ("x0", "v0", "h0", "dh0"):
            vec = data.get(want)
            _require(
                isinstance(vec, (list, tuple)) and len(vec) == dim,
                f"jacobi task needs length-{dim} vector {want!r}",
                key=want,
            )
            params[want] = [float(v) for v in vec]
        params["grid"] = _validate_grid(data.get("grid", {}), "grid")
    elif task == "equation_of_motion":
        _check_keys(data, {"family", "grid"}, "task")
        fam = data.get("family")
        _require(isinstance(fam, dict), "equation_of_motion needs a [family] table", key="family")
        _check_keys(
            fam,
            {"chi", "phi", "force", "r_interval", "s_interval", "r_prime", "r_dprime", "step"},
            "family",
        )
        for want in ("chi", "phi", "force"):
            _require(want in fam, f"missing {want!r}", key="family")
        _check_expressions(fam["chi"], ("r",), "family.chi")
        _check_expressions(fam["phi"], ("r",), "family.phi")
        coord_vars = tuple(f"x{i + 1}" for i in range(dim)) + ("s", "r")
        _check_expressions(fam["force"], coord_vars, "family.force")
        r_int = fam.get("r_interval", [-0.5, 1.5])
        s_int = fam.get("s_interval", [0.0, 1.0])
        params["family"] = {
            "chi": [str(e) for e in fam["chi"]],
            "phi": [str(e) for e in fam["phi"]],
            "force": [str(e) for e in fam["force"]],
            "r_interval": [float(r_int[0]), float(r_int[1])],
            "s_interval": [float(s_int[0]), float(s_int[1])],
            "r_prime": float(fam.get("r_prime", 0.0)),
            "r_dprime": float(fam.get("r_dprime", 1.0)),
            "step": _positive(fam.get("step", 1e-2), "family.step"),
        }
        params["grid"] = _validate_grid(data.get("grid", {}), "grid")
    elif task == "identity_check":
        _check_keys(data, {"check", "fields", "points", "fd_steps", "congruence"}, "task")
        check = data.get("check", "basic_equation")
        _require(
            check in ("basic_equation", "nonaffine_deviation"),
            "check must be 'basic_equation' or 'nonaffine_deviation'",
            key="check",
        )
        params["check"] = check
        coord_vars = tuple(f"x{i + 1}" for i in range(dim))
        if check == "basic_equation":
            fields = data.get("fields")
            _require(isinstance(fields, dict), "identity_check needs a [fields] table", key="fields")
            _check_keys(fields, {"U", "xi"}, "fields")
            for want in ("U", "xi"):
                _require(want in fields, f"missing field {want!r}", key="fields")
                _check_expressions(fields[want], coord_vars, f"fields.{want}")
            params["fields"] = {k: [str(e) for e in fields[k]] for k in ("U", "xi")}
            points = data.get("points")
            _require(
                isinstance(points, (list, tuple)) and points,
                "identity_check needs a list of points",
                key="points",
            )
            params["points"] = [[float(c) for c in p] for p in points]
            for p in params["points"]:
                _require(len(p) == dim, f"points must have length {dim}", key="points")
        else:
            cong = data.get("congruence")
            _require(isinstance(cong, dict), "nonaffine check needs a [congruence] table", key="congruence")
            _check_keys(cong, {"kind", "v1", "v2", "u_values", "f_constant", "g_constant"}, "congruence")
            kind = cong.get("kind", "flat_shifted")
            _require(kind in ("flat_shifted", "sphere_meridians"), "unknown congruence kind", key="congruence.kind")
            params["congruence"] = {
                "kind": kind,
                "v1": float(cong.get("v1", 0.0)),
                "v2": float(cong.get("v2", 0.4)),
                "u_values": [float(u) for u in cong.get("u_values", [0.5])],
                "f_constant": float(cong.get("f_constant", 0.0)),
                "g_constant": float(cong.get("g_constant", 0.0)),
            }
        steps = data.get("fd_steps", [1e-3, 5e-4, 2.5e-4])
        _require(
            isinstance(steps, (list, tuple)) and len(steps) >= 3,
            "fd_steps must list at least three decreasing steps",
            key="fd_steps",
        )
        params["fd_steps"] = [_positive(s, "fd_steps") for s in steps]
    else:  # pragma: no cover - guarded by caller
        raise ConfigError(f"unknown task {task!r}", key="task")
    return params


def validate_config(data: dict, name: str = "scenario") -> ScenarioConfig:
    """Validate a raw mapping into a ScenarioConfig; reject unknown keys."""
    _require(isinstance(data, dict), "config must be a table", key="<root>")
    _check_keys(data, _TOP_KEYS, "<root>")
    manifold_name = data.get("manifold")
    _require(isinstance(manifold_name, str), "missing manifold name", key="manifold")
    base = manifold_name.partition(":")[0]
    known_bases = {n.partition(":")[0] for n in builtin_names()}
    if base not in known_bases:
        raise ConfigError(
            f"unknown manifold {manifold_name!r}; catalog: {', '.join(builtin_names())}",
            key="manifold",
        )
    transport = data.get("transport", "parallel")
    _require(transport in ("parallel", "euclidean"), "must be 'parallel' or 'euclidean'", key="transport")
    task = data.get("task")
    _require(task in TASKS, f"task must be one of {', '.join(TASKS)}", key="task")

    integ = data.get("integrator", {})
    _require(isinstance(integ, dict), "must be a table", key="integrator")
    _check_keys(integ, _INTEGRATOR_KEYS, "integrator")
    integrator = IntegratorParams(
        step=_positive(integ.get("step", 1e-3), "integrator.step"),
        quad_panels=(
            None
            if "quad_panels" not in integ
            else int(integ["quad_panels"])
        ),
        fd_step=_positive(integ.get("fd_step", 1e-4), "integrator.fd_step"),
    )
    if integrator.quad_panels is not None:
        _require(integrator.quad_panels >= 1, "must be >= 1", key="integrator.quad_panels")

    out = data.get("output", {})
    _require(isinstance(out, dict), "must be a table", key="output")
    _check_keys(out, _OUTPUT_KEYS, "output")
    output_format = out.get("format", "csv")
    _require(output_format == "csv", "only 'csv' output ships", key="output.format")

    margin = _positive(data.get("margin", 1e-3), "margin")

    dim = _manifold_dim(manifold_name)
    task_data = {
        k: v
        for k, v in data.items()
        if k not in {"manifold", "transport", "task", "integrator", "output", "margin", "name"}
    }
    params = _validate_task(task, task_data, dim)

    return ScenarioConfig(
        name=str(data.get("name", name)),
        manifold_name=manifold_name,
        transport=transport,
        task=task,
        integrator=integrator,
        params=params,
        output_path=out.get("path"),
        output_format=output_format,
        margin=margin,
        raw=data,
    )


def load_config(path) -> ScenarioConfig:
    """Read and validate a TOML or JSON scenario file."""
    path = str(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    stripped = blob.lstrip()
    try:
        if path.endswith(".json") or stripped.startswith(b"{"):
            data = json.loads(blob.decode("utf-8"))
        else:
            data = _toml.loads(blob.decode("utf-8"))
    except (json.JSONDecodeError, _toml.TOMLDecodeError, UnicodeDecodeError) as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    import os

    name = os.path.splitext(os.path.basename(path))[0]
    return validate_config(data, name=name)


def config_hash(data: dict) -> str:
    """Order-independent digest of a raw config mapping."""
    import hashlib

    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
