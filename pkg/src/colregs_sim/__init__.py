"""COLREGs-aware encounter simulator for autonomous surface vessels."""

from .colregs import (
    Decision,
    DecisionState,
    ManeuverAction,
    Situation,
    Thresholds,
    classify,
    determine_role,
    rule_decide,
    update_state,
)
from .control import ControllerGains, control
from .dynamics import VesselParams, VesselState, saturate, step
from .guidance import GuidanceParams, Route, Waypoint
from .risk import EncounterGeometry, RiskBreakdown, RiskKnees, ZmfKnees, relative_geometry, risk_index, zmf
from .scenario import ScenarioConfig, emit_outputs, load_scenario, run

__version__ = "0.1.0"

__all__ = [
    "ControllerGains",
    "Decision",
    "DecisionState",
    "EncounterGeometry",
    "GuidanceParams",
    "ManeuverAction",
    "RiskBreakdown",
    "RiskKnees",
    "Route",
    "ScenarioConfig",
    "Situation",
    "Thresholds",
    "VesselParams",
    "VesselState",
    "Waypoint",
    "ZmfKnees",
    "classify",
    "control",
    "determine_role",
    "emit_outputs",
    "load_scenario",
    "relative_geometry",
    "risk_index",
    "rule_decide",
    "run",
    "saturate",
    "step",
    "update_state",
    "zmf",
]
