"""Closed-loop encounter simulation.

The loop runs the dynamics and heading control at ``dt_control`` (100 Hz
by default) and the COLREGs decision maker every ``dt_decision`` (1 Hz).
Each control step does:

    geometry -> [decision cycle: risk, decide, update state]
             -> waypoint advance -> LOS + CTE + COLAV heading -> PD control
             -> dynamics step for both vessels

Scenario files are JSON; see ``README.md`` for the schema.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .colregs import (
    DECISION_LOG_COLUMNS,
    Decision,
    DecisionState,
    HeadingReference,
    Role,
    Thresholds,
    decision_log_row,
    rule_citation,
    rule_decide,
    update_state,
)
from .control import ControllerGains, control
from .dynamics import NumericalError, VesselParams, VesselState, step
from .guidance import (
    GuidanceParams,
    Route,
    WaypointReached,
    advance_waypoint,
    colav_offset,
    cte_correction,
    desired_heading,
    los_heading,
    path_frame,
)
from .llm import ChatClient, LlmConfig, PromptTemplate, client_for, decide
from .risk import RiskKnees, ZmfKnees, relative_geometry, risk_index

log = logging.getLogger(__name__)

DECIDERS = ("rule", "llm", "mock")
COLLISION_RANGE = 50.0

TRAJECTORY_COLUMNS = (
    "time",
    "own_x",
    "own_y",
    "own_heading",
    "own_yaw_rate",
    "own_speed",
    "target_x",
    "target_y",
    "target_heading",
    "target_speed",
    "psi_d",
    "psi_los",
    "psi_cte",
    "psi_colav",
    "u_c",
)


class ScenarioError(Exception):
    """Base class for scenario problems; ``category`` names the diagnostic kind."""

    category = "scenario"


class ScenarioNotFound(ScenarioError):
    category = "missing-file"


class ScenarioSyntaxError(ScenarioError):
    category = "syntax"


class ScenarioValidationError(ScenarioError):
    category = "invalid"

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SimulationError(RuntimeError):
    """Numerical blow-up during a run."""

    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"simulation aborted at step {step_index}: {cause}")
        self.step_index = step_index


@dataclass(frozen=True)
class TargetMotion:
    """Constant course and speed for the target ship."""

    heading: float
    speed: float


@dataclass(frozen=True)
class ScenarioConfig:
    own_route: Route
    target_initial: VesselState
    name: str = "scenario"
    description: str = ""
    own_speed_cmd: float = 16.0
    own_initial: VesselState | None = None
    vessel_params: VesselParams = VesselParams()
    guidance_params: GuidanceParams = GuidanceParams()
    gains: ControllerGains = ControllerGains()
    thresholds: Thresholds = Thresholds()
    zmf_knees: RiskKnees = RiskKnees()
    heading_reference: HeadingReference = HeadingReference.VERBATIM
    decider: str = "rule"
    llm: LlmConfig = LlmConfig()
    mock_fixture: Path | None = None
    concurrent: bool = False
    seed: int = 0
    duration: float = 300.0
    dt_control: float = 0.01
    dt_decision: float = 1.0
    collision_range: float = COLLISION_RANGE

    def __post_init__(self):
        if self.decider not in DECIDERS:
            raise ScenarioValidationError("decider", f"must be one of {DECIDERS}, got {self.decider!r}")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ScenarioValidationError("duration", "must be a finite value >= 0")
        if not self.dt_control > 0:
            raise ScenarioValidationError("dt_control", "must be > 0")
        if not self.dt_decision > 0:
            raise ScenarioValidationError("dt_decision", "must be > 0")
        ratio = self.dt_decision / self.dt_control
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ScenarioValidationError(
                "dt_decision", f"{self.dt_decision} is not an integer multiple of dt_control {self.dt_control}"
            )
        steps = self.duration / self.dt_control
        if abs(steps - round(steps)) > 1e-6:
            raise ScenarioValidationError("duration", "must be a whole number of control steps")
        if not self.own_speed_cmd >= 0:
            raise ScenarioValidationError("own.speed", "must be >= 0")
        if self.target_initial.speed < 0:
            raise ScenarioValidationError("target.speed", "must be >= 0")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ScenarioValidationError("seed", "must be an integer")

    @property
    def n_steps(self) -> int:
        return round(self.duration / self.dt_control)

    @property
    def steps_per_decision(self) -> int:
        return round(self.dt_decision / self.dt_control)

    @property
    def target_motion(self) -> TargetMotion:
        return TargetMotion(self.target_initial.heading, self.target_initial.speed)

    def own_start(self) -> VesselState:
        if self.own_initial is not None:
            return self.own_initial
        wp0 = self.own_route.waypoints[0]
        return VesselState(wp0.x, wp0.y, self.own_route.leg_heading, 0.0, self.own_speed_cmd, 0.0)

    def own_params(self) -> VesselParams:
        return self.vessel_params.with_speed(self.own_speed_cmd)

    def target_params(self) -> VesselParams:
        return replace(self.vessel_params, sigma_omega=0.0).with_speed(self.target_initial.speed)


# --------------------------------------------------------------------------- loading


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ScenarioValidationError(key, "must be an object")
    return value


def _build(cls, data: dict, prefix: str, converters: dict | None = None):
    """Instantiate a dataclass from a JSON object, naming the offending field on error."""
    converters = converters or {}
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ScenarioValidationError(f"{prefix}.{key}", "unknown field")
    kwargs = {}
    for key, value in data.items():
        try:
            kwargs[key] = converters[key](value) if key in converters else value
        except (TypeError, ValueError) as exc:
            raise ScenarioValidationError(f"{prefix}.{key}", str(exc)) from None
    try:
        return cls(**kwargs)
    except ScenarioValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(prefix, str(exc)) from None


def _knees(value: Any) -> ZmfKnees:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ValueError("knees must be a [lower, upper] pair")
    return ZmfKnees(float(value[0]), float(value[1]))


def _number(raw: dict, key: str, prefix: str, default: float | None = None) -> float:
    if key not in raw:
        if default is None:
            raise ScenarioValidationError(f"{prefix}.{key}", "required field missing")
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioValidationError(f"{prefix}.{key}", f"must be a finite number, got {value!r}")
    return float(value)


def _vessel_state(raw: dict, prefix: str) -> VesselState:
    allowed = {"x", "y", "heading_deg", "speed", "yaw_rate", "disturbance"}
    for key in raw:
        if key not in allowed:
            raise ScenarioValidationError(f"{prefix}.{key}", "unknown field")
    return VesselState(
        _number(raw, "x", prefix),
        _number(raw, "y", prefix),
        math.radians(_number(raw, "heading_deg", prefix)),
        _number(raw, "yaw_rate", prefix, 0.0),
        _number(raw, "speed", prefix),
        _number(raw, "disturbance", prefix, 0.0),
    )


_TOP_LEVEL = {
    "name", "description", "duration", "seed", "decider", "dt_control", "dt_decision",
    "own", "target", "vessel", "guidance", "controller", "thresholds", "risk_knees",
    "colregs", "llm", "mock_fixture", "concurrent", "collision_range",
}


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ScenarioValidationError("<root>", "scenario must be a JSON object")
    for key in raw:
        if key not in _TOP_LEVEL:
            raise ScenarioValidationError(key, "unknown field")

    own = _section(raw, "own")
    if "route" not in own:
        raise ScenarioValidationError("own.route", "required field missing")
    try:
        route = Route.from_points(own["route"])
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError("own.route", str(exc)) from None
    for key in own:
        if key not in {"route", "speed", "initial"}:
            raise ScenarioValidationError(f"own.{key}", "unknown field")
    own_speed = _number(own, "speed", "own", 16.0)
    own_initial = _vessel_state(own["initial"], "own.initial") if "initial" in own else None

    if "target" not in raw:
        raise ScenarioValidationError("target", "required field missing")
    target = _vessel_state(_section(raw, "target"), "target")

    vessel = _build(VesselParams, _section(raw, "vessel"), "vessel")
    guidance = _build(GuidanceParams, _section(raw, "guidance"), "guidance", {"range_knees": _knees})
    gains = _build(ControllerGains, _section(raw, "controller"), "controller")
    thresholds = _build(Thresholds, _section(raw, "thresholds"), "thresholds")
    knees = _build(
        RiskKnees, _section(raw, "risk_knees"), "risk_knees",
        {"d_cpa": _knees, "t_cpa": _knees, "range": _knees},
    )
    colregs = _section(raw, "colregs")
    for key in colregs:
        if key != "heading_reference":
            raise ScenarioValidationError(f"colregs.{key}", "unknown field")
    try:
        reference = HeadingReference(colregs.get("heading_reference", "verbatim"))
    except ValueError:
        raise ScenarioValidationError(
            "colregs.heading_reference", "must be 'verbatim' or 'reciprocal'"
        ) from None
    llm = _build(LlmConfig, _section(raw, "llm"), "llm")

    fixture = raw.get("mock_fixture")
    if fixture is not None:
        fixture = Path(fixture)
        if base_dir is not None and not fixture.is_absolute():
            fixture = base_dir / fixture

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ScenarioValidationError("seed", f"must be an integer, got {seed!r}")

    return ScenarioConfig(
        own_route=route,
        target_initial=target,
        name=str(raw.get("name", "scenario")),
        description=str(raw.get("description", "")),
        own_speed_cmd=own_speed,
        own_initial=own_initial,
        vessel_params=vessel,
        guidance_params=guidance,
        gains=gains,
        thresholds=thresholds,
        zmf_knees=knees,
        heading_reference=reference,
        decider=raw.get("decider", "rule"),
        llm=llm,
        mock_fixture=fixture,
        concurrent=bool(raw.get("concurrent", False)),
        seed=seed,
        duration=_number(raw, "duration", "<root>", 300.0),
        dt_control=_number(raw, "dt_control", "<root>", 0.01),
        dt_decision=_number(raw, "dt_decision", "<root>", 1.0),
        collision_range=_number(raw, "collision_range", "<root>", COLLISION_RANGE),
    )


def bundled_scenarios() -> list[str]:
    files = resources.files("colregs_sim").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def resolve_scenario(name_or_path: str | Path) -> Path:
    """A path on disk, or the name of a bundled scenario (with or without ``.json``)."""
    path = Path(name_or_path)
    if path.exists():
        return path
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    if str(path.parent) in ("", ".") and stem in bundled_scenarios():
        return Path(str(resources.files("colregs_sim").joinpath("scenarios", f"{stem}.json")))
    return path


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = resolve_scenario(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioNotFound(f"scenario file not found: {path}") from None
    except OSError as exc:
        raise ScenarioNotFound(f"cannot read scenario {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioSyntaxError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw, base_dir=Path(path).parent)


# --------------------------------------------------------------------------- running


def _fmt6(value: float) -> str:
    text = f"{value:.6f}"
    return "0.000000" if text == "-0.000000" else text


@dataclass
class TrajectoryLog:
    """Per-step trajectory rows (floats) and per-cycle decision rows (text)."""

    rows: list[tuple[float, ...]] = field(default_factory=list)
    decision_rows: list[tuple[str, ...]] = field(default_factory=list)
    step_risk: list[float] = field(default_factory=list)
    sources: list[str] = field(default_factory=list)
    discrepancies: list[dict] = field(default_factory=list)
    cycle_active: list[bool] = field(default_factory=list)
    waypoints: list[tuple[float, float]] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        idx = TRAJECTORY_COLUMNS.index(name)
        return np.array([row[idx] for row in self.rows])

    def trajectory_csv(self) -> str:
        lines = [",".join(TRAJECTORY_COLUMNS)]
        lines.extend(",".join(_fmt6(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def decisions_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(DECISION_LOG_COLUMNS)
        writer.writerows(self.decision_rows)
        return buf.getvalue()


@dataclass
class SummaryMetrics:
    min_range: float
    min_dcpa_during_encounter: float | None
    max_risk: float
    give_way_initiations: int
    action_transitions: int
    final_cross_track: float
    collision: bool
    first_turn: str | None = None
    fallback_decisions: int = 0
    discrepancies: int = 0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _mode(state: DecisionState) -> str:
    return state.action.role.value if state.active else "none"


class _Decider:
    """Wraps the configured decision source behind one ``__call__``."""

    def __init__(self, config: ScenarioConfig, client: ChatClient | None):
        self.config = config
        self.client = client
        self.template = PromptTemplate.for_thresholds(config.thresholds)
        if config.decider != "rule" and client is None:
            self.client = client_for(config.decider, config.llm, config.mock_fixture)

    def __call__(self, geometry, risk, state):
        c = self.config
        if c.decider == "rule":
            return rule_decide(geometry, risk, state, c.thresholds, c.heading_reference), "rule", None
        outcome = decide(
            geometry, risk, state, self.template, c.llm, self.client, c.thresholds, c.heading_reference
        )
        return outcome.decision, outcome.source, outcome.discrepancy


def run(config: ScenarioConfig, client: ChatClient | None = None) -> tuple[TrajectoryLog, SummaryMetrics]:
    """Simulate one encounter. ``client`` overrides the chat client built from the config."""
    decider = _Decider(config, client)
    vp = config.own_params()
    tp = config.target_params()
    gp = config.guidance_params
    knees = config.zmf_knees
    dt = config.dt_control
    n = config.n_steps
    per = config.steps_per_decision

    if vp.sigma_omega > 0:
        noise = np.random.default_rng(config.seed).standard_normal(n) * vp.sigma_omega
    else:
        noise = np.zeros(n)

    own = config.own_start()
    tgt = config.target_initial
    route = config.own_route
    state = DecisionState()
    out = TrajectoryLog(waypoints=[(w.x, w.y) for w in route.waypoints])

    min_range = math.inf
    min_dcpa = math.inf
    max_risk = 0.0
    initiations = 0
    transitions = 0
    first_turn = None
    current_risk = 0.0
    cross_track = 0.0

    pool = concurrent.futures.ThreadPoolExecutor(max_workers=1) if config.concurrent else None
    pending = None

    try:
        for k in range(n + 1):
            t = k * dt
            try:
                geometry = relative_geometry(own, tgt)
            except ValueError as exc:
                raise SimulationError(k, exc) from None
            min_range = min(min_range, geometry.range)

            if k % per == 0:
                cycle = k // per
                risk = risk_index(geometry, knees.d_cpa, knees.t_cpa, knees.range)
                if pool is None:
                    decision, source, discrepancy = decider(geometry, risk, state)
                else:
                    decision, source, discrepancy, pending = _concurrent_cycle(
                        pool, pending, decider, geometry, risk, state
                    )
                previous = state
                state = update_state(state, decision, cycle)
                if _mode(state) != _mode(previous):
                    transitions += 1
                if state.active and not previous.active and state.action.role is Role.GIVE_WAY:
                    initiations += 1
                    first_turn = first_turn or state.action.turn.value
                if state.active:
                    min_dcpa = min(min_dcpa, geometry.d_cpa)
                current_risk = risk.risk
                max_risk = max(max_risk, risk.risk)
                out.decision_rows.append(decision_log_row(cycle, t, decision, geometry, risk))
                out.sources.append(source)
                out.cycle_active.append(state.active)
                if discrepancy:
                    out.discrepancies.append({"cycle": cycle, "time": round(t, 6), "message": discrepancy})

            pos = own.position
            route = advance_waypoint(route, pos, gp.acceptance_radius)
            try:
                los = los_heading(pos, route.active)
            except WaypointReached:
                los = route.leg_heading
            frame = path_frame(pos, route.previous, route.active)
            cross_track = frame.cross_track
            cte = cte_correction(frame, gp.mu)
            turn_sign = state.action.turn_sign if state.active else 0
            colav = colav_offset(geometry.range, geometry.bearing, turn_sign, gp)
            psi_d = desired_heading(los, cte, colav)
            u_c = control(psi_d, own.heading, own.yaw_rate, config.gains, vp.u_c_max)

            out.rows.append(
                (t, own.x_pos, own.y_pos, own.heading, own.yaw_rate, own.speed,
                 tgt.x_pos, tgt.y_pos, tgt.heading, tgt.speed,
                 psi_d, los, cte, colav, u_c)
            )
            out.step_risk.append(current_risk)

            if k < n:
                try:
                    own = step(own, u_c, vp, dt, float(noise[k]))
                    tgt = step(tgt, 0.0, tp, dt, 0.0)
                except NumericalError as exc:
                    raise SimulationError(k, exc) from None
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)

    metrics = SummaryMetrics(
        min_range=min_range,
        min_dcpa_during_encounter=None if math.isinf(min_dcpa) else min_dcpa,
        max_risk=max_risk,
        give_way_initiations=initiations,
        action_transitions=transitions,
        final_cross_track=cross_track,
        collision=min_range < config.collision_range,
        first_turn=first_turn,
        fallback_decisions=sum(s == "fallback" for s in out.sources),
        discrepancies=len(out.discrepancies),
    )
    return out, metrics


def _concurrent_cycle(pool, pending, decider, geometry, risk, state):
    """Overlap the model query with control stepping.

    A query submitted at one decision boundary is applied at the next
    boundary if it has finished; otherwise the previous decision is reused
    for this cycle. The applied decision is always a complete snapshot.
    """
    reused = rule_decide(geometry, risk, state, decider.config.thresholds, decider.config.heading_reference)
    result = None
    if pending is not None and pending.done():
        result = pending.result()
        pending = None
    if pending is None:
        pending = pool.submit(decider, geometry, risk, state)
    if result is None:
        decision = _hold(state, reused)
        return decision, "pending", None, pending
    decision, source, discrepancy = result
    return decision, source, discrepancy, pending


def _hold(state: DecisionState, reused: Decision) -> Decision:
    """Decision that keeps the latched state unchanged for a missed cycle."""
    if not state.active:
        return Decision(reused.situation, reused.action, reused.rule_citation,
                        "Awaiting model answer; no active encounter.", engaged=False)
    return Decision(state.situation, state.action, rule_citation(state.situation, state.action),
                    "Awaiting model answer; latched action kept.")


# --------------------------------------------------------------------------- outputs


def emit_outputs(log_: TrajectoryLog, metrics: SummaryMetrics, out_dir: str | Path, name: str = "") -> dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "trajectory": out / "trajectory.csv",
            "decisions": out / "decisions.csv",
            "summary": out / "summary.json",
            "plot": out / "trajectory.svg",
        }
        paths["trajectory"].write_text(log_.trajectory_csv(), encoding="utf-8")
        paths["decisions"].write_text(log_.decisions_csv(), encoding="utf-8")
        summary = {"scenario": name, **metrics.to_dict(), "discrepancy_records": log_.discrepancies}
        paths["summary"].write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        from .plotting import plot_trajectory

        plot_trajectory(log_, paths["plot"], title=name)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc
    return paths
