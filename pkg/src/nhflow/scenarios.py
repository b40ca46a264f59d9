"""Scenario configuration, execution and export.

A scenario is a JSON document describing a system, a bracket scheme, a
potential, controller parameters, the integrators to run and the checks to
apply. See ``docs/config.md`` in the repository for the schema.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Annotated, Callable, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import diagnostics as dg
from .control import ControllerParams
from .integrators import (
    CLASSICAL,
    GRADIENT_FLOW,
    PI_EPSILON,
    SolverSettings,
    Trajectory,
    integrate_classical,
    integrate_gradient_flow,
    integrate_pi_eps,
)
from .potentials import (
    WORKSPACES,
    ConfigurationError,
    Potential,
    Workspace,
    disc_workspace,
    make_artificial_khatib,
    make_artificial_ratio,
    make_navigation_potential,
    make_power_potential,
    make_tracking_potential,
)
from .system import (
    SYSTEMS,
    BracketScheme,
    ControlSystem,
    RankDegeneracyError,
    check_rank_condition,
    fully_actuated,
    fully_actuated_scheme,
)

log = logging.getLogger(__name__)

INTEGRATORS = (PI_EPSILON, CLASSICAL, GRADIENT_FLOW)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# -- curves ----------------------------------------------------------------

class PolyTerm(_Strict):
    poly: list[float]


class AbsTerm(_Strict):
    abs: dict[Literal["scale", "shift"], float]


Term = Union[PolyTerm, AbsTerm]


class ComponentCurve(_Strict):
    """Each state component is a sum of ``poly`` and ``abs`` terms in ``t``."""

    type: Literal["components"] = "components"
    components: list[list[Term]]


class NamedCurve(_Strict):
    """A tabulated planar curve ``scale * c(time_scale * t)``.

    With ``feasible`` the third component is the tangent heading, making the
    curve a solution of the unicycle for the matching feedforward controls.
    """

    type: Literal["named"] = "named"
    name: str
    scale: float = 1.0
    time_scale: float = 1.0
    feasible: bool = False


CurveSpec = Annotated[Union[ComponentCurve, NamedCurve], Field(discriminator="type")]


# -- potentials ------------------------------------------------------------

class DiscSpec(_Strict):
    center: list[float]
    radius: float = Field(gt=0)


class WorkspaceSpec(_Strict):
    boundary: DiscSpec
    obstacles: list[DiscSpec] = []


class PowerSpec(_Strict):
    type: Literal["power"]
    x_star: list[float]
    p: Literal[2, 4] = 2


class TrackingSpec(_Strict):
    type: Literal["tracking"]
    curve: CurveSpec


class NavigationSpec(_Strict):
    type: Literal["navigation"]
    workspace: Union[str, WorkspaceSpec]
    x_star: list[float]
    K: int = Field(4, ge=1)


class KhatibSpec(_Strict):
    type: Literal["artificial_khatib"]
    workspace: Union[str, WorkspaceSpec]
    x_star: list[float]
    K: float = Field(gt=0)
    xi_level: float = Field(gt=0)


class RatioSpec(_Strict):
    type: Literal["artificial_ratio"]
    workspace: Union[str, WorkspaceSpec]
    x_star: list[float]
    K: float = Field(gt=0)


PotentialSpec = Annotated[
    Union[PowerSpec, TrackingSpec, NavigationSpec, KhatibSpec, RatioSpec], Field(discriminator="type")
]


# -- checks ----------------------------------------------------------------

class _Check(_Strict):
    report_only: bool = False


class EnvelopeCheck(_Check):
    type: Literal["exponential_envelope", "polynomial_envelope"]
    tol_abs: float = dg.TOL_ABS
    tol_rel: float = dg.TOL_REL
    gamma_star: Optional[float] = None


class DescentCheck(_Check):
    type: Literal["sampled_descent"]
    floor: float = 1e-4


class TubeCheck(_Check):
    type: Literal["tube_attraction"]
    rho: float = Field(gt=0)
    min_dwell: float = 1.0


class ObstacleCheck(_Check):
    type: Literal["obstacle_run"]
    tol: float = Field(gt=0)


class RankCheck(_Check):
    type: Literal["rank_condition"]


class OrderCheck(_Check):
    type: Literal["order_test"]
    eps_list: list[float] = [0.1, 0.05, 0.025, 0.0125]
    min_slope: float = 1.4


class FeedforwardCheck(_Check):
    type: Literal["feedforward_comparison"]
    report_only: bool = True


class SpuriousCheck(_Check):
    type: Literal["spurious_critical_points"]
    report_only: bool = True
    grad_tol: float = 1e-6


class CompareCheck(_Check):
    type: Literal["compare"]
    report_only: bool = True
    a: Literal["pi_epsilon", "classical", "gradient_flow"] = PI_EPSILON
    b: Literal["pi_epsilon", "classical", "gradient_flow"] = GRADIENT_FLOW


CheckSpec = Annotated[
    Union[EnvelopeCheck, DescentCheck, TubeCheck, ObstacleCheck, RankCheck, OrderCheck, FeedforwardCheck,
          SpuriousCheck, CompareCheck],
    Field(discriminator="type"),
]


# -- top level -------------------------------------------------------------

class SystemSpec(_Strict):
    name: str
    n: Optional[int] = Field(None, ge=1)


class SchemeSpec(_Strict):
    s1: list[int]
    s2: list[tuple[int, int]] = []
    kappa: Optional[list[int]] = None


class ParamsSpec(_Strict):
    gamma: float = Field(gt=0)
    epsilon: float = Field(gt=0)
    feedforward: bool = False
    cond_limit: float = Field(1e8, gt=1)


class InitialSpec(_Strict):
    x0: list[float]
    t0: float = 0.0


class SolverSpec(_Strict):
    substeps_per_period: int = Field(64, ge=20)
    integrators: list[Literal["pi_epsilon", "classical", "gradient_flow"]] = [PI_EPSILON]


class OutputSpec(_Strict):
    csv_prefix: Optional[str] = None
    summary: Optional[str] = None


class ScenarioConfig(_Strict):
    name: str
    description: str = ""
    system: SystemSpec
    scheme: Optional[SchemeSpec] = None
    potential: PotentialSpec
    params: ParamsSpec
    initial: InitialSpec
    horizon: float = Field(gt=0)
    solver: SolverSpec = SolverSpec()
    checks: list[CheckSpec] = []
    outputs: OutputSpec = OutputSpec()

    @field_validator("solver")
    @classmethod
    def _nonempty_integrators(cls, v):
        if not v.integrators:
            raise ValueError("at least one integrator is required")
        return v

    @model_validator(mode="after")
    def _cross_references(self):
        sys, scheme = resolve_system(self.system, self.scheme)
        n = sys.n
        if len(self.initial.x0) != n:
            raise ValueError(f"initial.x0 has {len(self.initial.x0)} entries, system {self.system.name!r} has n={n}")
        x_star = getattr(self.potential, "x_star", None)
        if x_star is not None and len(x_star) != n:
            raise ValueError(f"potential.x_star has {len(x_star)} entries, system has n={n}")
        if isinstance(self.potential, TrackingSpec):
            curve = resolve_curve(self.potential.curve)
            dim = np.asarray(curve(self.initial.t0)).size
            if dim != n:
                raise ValueError(f"potential.curve has {dim} components, system has n={n}")
            if self.params.feedforward and curve.feedforward is None:
                raise ValueError("params.feedforward requires a feasible named curve")
        elif self.params.feedforward:
            raise ValueError("params.feedforward is only defined for tracking potentials")
        ws = getattr(self.potential, "workspace", None)
        if ws is not None:
            resolve_workspace(ws)
        return self

    @property
    def summary_name(self) -> str:
        return self.outputs.summary or f"{self.name}_summary.json"

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with dotted-path overrides, e.g. ``{"params.gamma": 2.0}``; revalidated."""
        data = self.model_dump(mode="json")
        for path, value in changes.items():
            node = data
            *head, last = path.split(".")
            for key in head:
                node = node[key]
            node[last] = value
        return ScenarioConfig.model_validate(data)


# -- resolution ------------------------------------------------------------

def resolve_system(spec: SystemSpec, scheme_spec: Optional[SchemeSpec]) -> tuple[ControlSystem, BracketScheme]:
    if spec.name == "fully_actuated":
        if spec.n is None:
            raise ValueError("system.n is required for fully_actuated")
        sys, default = fully_actuated(spec.n), fully_actuated_scheme(spec.n)
    elif spec.name in SYSTEMS:
        if spec.n is not None:
            raise ValueError(f"system.n is not a parameter of {spec.name!r}")
        make_sys, make_scheme = SYSTEMS[spec.name]
        sys, default = make_sys(), make_scheme()
    else:
        raise ValueError(f"unknown system {spec.name!r}; known: {sorted(SYSTEMS) + ['fully_actuated']}")
    if scheme_spec is None:
        return sys, default
    scheme = BracketScheme(scheme_spec.s1, scheme_spec.s2, scheme_spec.kappa)
    try:
        scheme.validate(sys)
    except ValueError as exc:
        raise ValueError(f"scheme.s1/scheme.s2: {exc}") from None
    return sys, scheme


def resolve_workspace(spec) -> Workspace:
    if isinstance(spec, str):
        if spec not in WORKSPACES:
            raise ValueError(f"unknown workspace {spec!r}; known: {sorted(WORKSPACES)}")
        return disc_workspace(WORKSPACES[spec])
    return disc_workspace(spec.model_dump())


@dataclass(frozen=True)
class CurveTable:
    s: np.ndarray
    columns: dict
    period: float
    winding: float

    def __call__(self, name: str, s):
        sw = np.mod(s, self.period)
        v = np.interp(sw, self.s, self.columns[name])
        if name == "heading":
            v = v + self.winding * np.floor_divide(s, self.period)
        return v


@lru_cache(maxsize=None)
def curve_table(name: str) -> CurveTable:
    try:
        ref = resources.files("nhflow") / "data" / f"{name}.csv"
        text = ref.read_text()
    except (FileNotFoundError, OSError):
        raise ValueError(f"unknown curve {name!r}") from None
    rows = list(csv.reader(io.StringIO(text)))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    cols = {h: data[:, i] for i, h in enumerate(header)}
    s = cols.pop("s")
    period = float(s[-1] - s[0])
    winding = float(cols["heading"][-1] - cols["heading"][0]) if "heading" in cols else 0.0
    return CurveTable(s, cols, period, winding)


NAMED_CURVES = ("cat_lookalike",)


class Curve:
    """Reference curve ``t -> R^n`` with optional feedforward controls."""

    def __init__(self, fn: Callable[[float], np.ndarray], feedforward: Optional[Callable[[float], np.ndarray]] = None,
                 label: str = ""):
        self._fn = fn
        self.feedforward = feedforward
        self.label = label

    def __call__(self, t) -> np.ndarray:
        return self._fn(t)


def _term_fn(term):
    if isinstance(term, PolyTerm):
        coeffs = list(reversed(term.poly))
        return lambda t: float(np.polyval(coeffs, t)) if coeffs else 0.0
    scale = term.abs.get("scale", 1.0)
    shift = term.abs.get("shift", 0.0)
    return lambda t: scale * abs(t - shift)


def resolve_curve(spec) -> Curve:
    if isinstance(spec, ComponentCurve):
        comps = [[_term_fn(term) for term in comp] for comp in spec.components]
        if not comps:
            raise ValueError("curve needs at least one component")
        return Curve(lambda t: np.array([sum(f(t) for f in comp) for comp in comps], dtype=float), label="components")

    if spec.name not in NAMED_CURVES:
        raise ValueError(f"unknown curve {spec.name!r}; known: {list(NAMED_CURVES)}")
    tab = curve_table(spec.name)
    a, k = spec.scale, spec.time_scale

    if not spec.feasible:
        def fn(t):
            s = k * t
            return np.array([a * tab("c1", s), a * tab("c2", s), 0.0])
        return Curve(fn, label=f"{spec.name} (tabulated substitute)")

    def fn(t):
        s = k * t
        return np.array([a * tab("c1", s), a * tab("c2", s), tab("heading", s)])

    def ff(t):
        s = k * t
        speed = a * k * math.hypot(tab("dc1", s), tab("dc2", s))
        return np.array([speed, k * tab("dheading", s)])

    return Curve(fn, ff, label=f"{spec.name} feasible (tabulated substitute)")


def build_potential(spec) -> Potential:
    if isinstance(spec, PowerSpec):
        return make_power_potential(spec.x_star, spec.p)
    if isinstance(spec, TrackingSpec):
        return make_tracking_potential(resolve_curve(spec.curve))
    ws = resolve_workspace(spec.workspace)
    if isinstance(spec, NavigationSpec):
        return make_navigation_potential(ws, spec.x_star, spec.K)
    if isinstance(spec, KhatibSpec):
        return make_artificial_khatib(spec.x_star, ws, spec.K, spec.xi_level)
    return make_artificial_ratio(spec.x_star, ws, spec.K)


# -- loading ---------------------------------------------------------------

def bundled_configs() -> list[str]:
    root = resources.files("nhflow") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read_config_text(path) -> tuple[str, str]:
    p = Path(path)
    if p.exists():
        return p.read_text(), str(p)
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if p.parent == Path(".") and name in bundled_configs():
        return (resources.files("nhflow") / "scenarios" / f"{name}.json").read_text(), f"<bundled:{name}>"
    raise ConfigurationError(f"config file not found: {path}")


def _format_validation(exc: ValidationError, source: str) -> str:
    lines = [f"invalid config {source}:"]
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_format_validation(exc, source)) from None


def load_config(path) -> ScenarioConfig:
    """Load and validate a scenario file; bare bundled names like ``unicycle_stab_exp`` are accepted."""
    text, source = _read_config_text(path)
    return parse_config(text, source)


# -- running ---------------------------------------------------------------

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trajectories: dict = field(default_factory=dict)
    reports: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(r.passed is False for r in self.reports)

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        return 1 if self.failed else 0


@dataclass
class Built:
    sys: ControlSystem
    scheme: BracketScheme
    potential: Potential
    params: ControllerParams
    settings: SolverSettings
    x0: np.ndarray
    t0: float
    curve: Optional[Curve] = None


def build(config: ScenarioConfig, substeps: Optional[int] = None) -> Built:
    sys, scheme = resolve_system(config.system, config.scheme)
    curve = None
    if isinstance(config.potential, TrackingSpec):
        curve = resolve_curve(config.potential.curve)
        potential = make_tracking_potential(curve)
    else:
        potential = build_potential(config.potential)
    ff = curve.feedforward if (curve is not None and config.params.feedforward) else None
    params = ControllerParams(config.params.gamma, config.params.epsilon, ff, config.params.cond_limit)
    S = substeps or config.solver.substeps_per_period
    settings = SolverSettings(config.horizon, S)
    return Built(sys, scheme, potential, params, settings, np.asarray(config.initial.x0, dtype=float),
                 config.initial.t0, curve)


def integrate(b: Built, kind: str) -> Trajectory:
    if kind == PI_EPSILON:
        return integrate_pi_eps(b.sys, b.scheme, b.potential, b.params, b.x0, b.t0, b.settings)
    if kind == CLASSICAL:
        return integrate_classical(b.sys, b.scheme, b.potential, b.params, b.x0, b.t0, b.settings)
    return integrate_gradient_flow(b.potential, b.params.gamma, b.x0, b.t0, b.settings, b.params.epsilon)


def _primary(result: ScenarioResult) -> Optional[Trajectory]:
    for kind in INTEGRATORS:
        if kind in result.trajectories:
            return result.trajectories[kind]
    return None


def _run_check(check, b: Built, config: ScenarioConfig, result: ScenarioResult) -> dg.Report:
    traj = _primary(result)
    if check.type in ("exponential_envelope", "polynomial_envelope"):
        if b.potential.envelope is None:
            warnings.warn(f"{check.type} skipped: potential {b.potential.kind!r} has no envelope constants", stacklevel=2)
            return dg.Report(check.type, None, {"skipped": "no envelope constants"})
        spec = dg.EnvelopeSpec.from_potential(b.potential, check.gamma_star or b.params.gamma)
        fn = dg.check_exponential_envelope if check.type == "exponential_envelope" else dg.check_polynomial_envelope
        return fn(traj, b.potential.x_star, spec, b.params, check.tol_abs, check.tol_rel)
    if check.type == "sampled_descent":
        return dg.check_sampled_descent(traj, b.potential.lower_bound or 0.0, check.floor)
    if check.type == "tube_attraction":
        if b.curve is None:
            raise ConfigurationError("tube_attraction needs a tracking potential")
        env = b.potential.envelope
        return dg.check_tube_attraction(traj, b.curve, check.rho, check.min_dwell,
                                        (env.omega11, env.omega12, env.v1, env.v2))
    if check.type == "obstacle_run":
        if b.potential.workspace is None:
            raise ConfigurationError("obstacle_run needs a workspace potential")
        return dg.check_obstacle_run(traj, b.potential.workspace, b.potential.x_star, check.tol)
    if check.type == "rank_condition":
        samples = [(x, t) for t, x, _ in zip(*traj.samples())]
        rep = check_rank_condition(b.sys, b.scheme, samples, b.params.cond_limit)
        d = rep.to_dict()
        return dg.Report("rank_condition", rep.passed, {k: v for k, v in d.items() if k not in ("check", "passed")})
    if check.type == "order_test":
        return dg.order_test_one_step(b.sys, b.scheme, b.potential, b.params.gamma, b.x0, b.t0, check.eps_list,
                                      check.min_slope, b.settings.substeps_per_period)
    if check.type == "feedforward_comparison":
        return _feedforward_comparison(b, config)
    if check.type == "spurious_critical_points":
        return dg.check_spurious_critical_points(traj, b.potential, b.potential.x_star, check.grad_tol)
    if check.type == "compare":
        missing = [k for k in (check.a, check.b) if k not in result.trajectories]
        if missing:
            raise ConfigurationError(f"compare needs integrators {missing} in solver.integrators")
        return dg.compare_trajectories(result.trajectories[check.a], result.trajectories[check.b])
    raise ConfigurationError(f"unknown check {check.type!r}")


def _tracking_excursion(traj: Trajectory, curve: Curve) -> dict:
    d = np.array([np.linalg.norm(x[:2] - curve(t)[:2]) for t, x in zip(traj.times, traj.states)])
    half = traj.times >= traj.times[0] + 0.5 * (traj.times[-1] - traj.times[0])
    return {"max_planar_error_second_half": float(d[half].max()), "mean_planar_error_second_half": float(d[half].mean())}


def _feedforward_comparison(b: Built, config: ScenarioConfig) -> dg.Report:
    if b.curve is None or b.curve.feedforward is None:
        raise ConfigurationError("feedforward_comparison needs a feasible tracking curve")
    with_ff = replace(b.params, feedforward=b.curve.feedforward)
    without = replace(b.params, feedforward=None)
    ta = integrate_pi_eps(b.sys, b.scheme, b.potential, with_ff, b.x0, b.t0, b.settings)
    tb = integrate_pi_eps(b.sys, b.scheme, b.potential, without, b.x0, b.t0, b.settings)
    ea, eb = _tracking_excursion(ta, b.curve), _tracking_excursion(tb, b.curve)
    return dg.Report("feedforward_comparison", None, {
        "with_feedforward": ea,
        "without_feedforward": eb,
        "reduced": ea["mean_planar_error_second_half"] < eb["mean_planar_error_second_half"],
    })


def run_scenario(config: ScenarioConfig, substeps: Optional[int] = None, with_checks: bool = True) -> ScenarioResult:
    """Run every requested integrator, then every declared check.

    Failures of individual integrators or checks are recorded in
    ``result.errors`` and the remaining items still run.
    """
    result = ScenarioResult(config)
    b = build(config, substeps)
    for kind in config.solver.integrators:
        try:
            result.trajectories[kind] = integrate(b, kind)
        except (RankDegeneracyError, ConfigurationError, ValueError, ArithmeticError) as exc:
            log.warning("%s integration failed: %s", kind, exc)
            result.errors.append({"item": kind, "error": str(exc)})
    if not with_checks:
        return result
    for check in config.checks:
        if _primary(result) is None and check.type not in ("order_test", "feedforward_comparison"):
            result.errors.append({"item": check.type, "error": "no trajectory available"})
            continue
        try:
            rep = _run_check(check, b, config, result)
        except (RankDegeneracyError, ConfigurationError, ValueError, ArithmeticError) as exc:
            result.errors.append({"item": check.type, "error": str(exc)})
            continue
        if check.report_only:
            rep = dg.Report(rep.check, None, {**rep.metrics, "would_pass": rep.passed})
        result.reports.append(rep)
    return result


# -- export ----------------------------------------------------------------

def _fmt(v: float) -> str:
    return "%.17g" % v


def emit_csv(traj: Trajectory, path) -> Path:
    """Write ``t, x1..xn, P, u1..um`` with 17 significant digits (no ``u`` columns for gradient flow)."""
    if len(traj) == 0:
        raise ValueError("cannot export an empty trajectory")
    n = traj.states.shape[1]
    header = ["t"] + [f"x{i}" for i in range(1, n + 1)] + ["P"]
    U = traj.controls
    if U is not None:
        header += [f"u{k}" for k in range(1, U.shape[1] + 1)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(traj)):
            row = [traj.times[i], *traj.states[i], traj.potential_values[i]]
            if U is not None:
                row += list(U[i])
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path) -> dict:
    """Inverse of :func:`emit_csv`: column name -> float array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array(rows[1:], dtype=float)
    return {h: data[:, i] for i, h in enumerate(rows[0])}


def summary_document(result: Optional[ScenarioResult] = None, reports=None, extra: Optional[dict] = None) -> dict:
    reports = reports if reports is not None else (result.reports if result else [])
    doc = {"checks": [r.to_dict() for r in reports]}
    if result is not None:
        doc = {
            "scenario": result.config.name,
            "passed": not result.failed and not result.errors,
            "checks": doc["checks"],
            "errors": result.errors,
            "trajectories": {
                k: {"rows": len(t), "final_state": t.final_state.tolist(), "exit": t.exit}
                for k, t in result.trajectories.items()
            },
        }
    if extra:
        doc.update(extra)
    return dg._jsonable(doc)


def emit_summary(reports, path, result: Optional[ScenarioResult] = None, extra: Optional[dict] = None) -> Path:
    doc = summary_document(result, list(reports), extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path
