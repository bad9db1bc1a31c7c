"""COLREGs encounter classification, role assignment and the latched encounter state.

:func:`rule_decide` is the deterministic decision function. The simulator
uses it directly, and it is also the fallback for the LLM decider.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

from .angles import wrap_to_180
from .risk import EncounterGeometry, RiskBreakdown

log = logging.getLogger(__name__)

HEAD_ON_LIMIT_DEG = 6.0
OVERTAKING_LIMIT_DEG = 112.0
STARBOARD_SECTOR_DEG = 112.5
OVERTAKE_BOW_SECTOR_DEG = 45.0


class Situation(str, enum.Enum):
    HEAD_ON = "head_on"
    OVERTAKING = "overtaking"
    CROSSING = "crossing"

    @property
    def label(self) -> str:
        return {"head_on": "Head-on", "overtaking": "Overtaking", "crossing": "Crossing"}[self.value]


class Role(str, enum.Enum):
    STAND_ON = "stand_on"
    GIVE_WAY = "give_way"


class Turn(str, enum.Enum):
    PORT = "port"
    STARBOARD = "starboard"
    NONE = "none"


class HeadingReference(str, enum.Enum):
    """How the wrapped relative heading is fed to the classifier.

    ``verbatim`` classifies ``wrap(psi_TS - psi_OS)`` directly.
    ``reciprocal`` shifts it by 180 deg first, which puts reciprocal
    courses in the head-on band.
    """

    VERBATIM = "verbatim"
    RECIPROCAL = "reciprocal"


@dataclass(frozen=True)
class ManeuverAction:
    role: Role = Role.STAND_ON
    turn: Turn = Turn.NONE

    def __post_init__(self):
        if self.role is Role.STAND_ON and self.turn is not Turn.NONE:
            raise ValueError("a stand-on action cannot carry a turn")

    @property
    def turn_sign(self) -> int:
        return {Turn.STARBOARD: 1, Turn.PORT: -1, Turn.NONE: 0}[self.turn]

    @property
    def label(self) -> str:
        if self.role is Role.STAND_ON:
            return "Stand-on"
        if self.turn is Turn.NONE:
            return "Give-way"
        return f"Give-way, turn {self.turn.value}"


STAND_ON = ManeuverAction()
GIVE_WAY_STARBOARD = ManeuverAction(Role.GIVE_WAY, Turn.STARBOARD)


@dataclass(frozen=True)
class Thresholds:
    """Critical values; ``risk`` starts an encounter, ``risk - hysteresis_risk`` may end it."""

    risk: float = 0.75
    range: float = 1000.0
    d_cpa: float = 250.0
    t_cpa: float = 60.0
    hysteresis_risk: float = 0.2

    def __post_init__(self):
        for name in ("risk", "range", "d_cpa", "t_cpa", "hysteresis_risk"):
            if not getattr(self, name) > 0:
                raise ValueError(f"threshold {name} must be > 0")
        if self.risk > 1.0:
            raise ValueError("risk threshold must be <= 1")
        if not self.hysteresis_risk < self.risk:
            raise ValueError("hysteresis_risk must be below the risk threshold")

    @property
    def release_risk(self) -> float:
        return self.risk - self.hysteresis_risk


@dataclass(frozen=True)
class DecisionState:
    """Latched encounter memory: situation, action, turning flag and the
    decision cycle at which the give-way manoeuvre began."""

    situation: Situation | None = None
    action: ManeuverAction = STAND_ON
    turning: bool = False
    initiation_index: int | None = None
    active: bool = False

    @property
    def status_text(self) -> str:
        if not self.active:
            return "no active encounter; following route"
        if self.action.role is Role.GIVE_WAY:
            return (
                f"give-way ({self.situation.label}), turning {self.action.turn.value}"
                f" since decision cycle {self.initiation_index}"
            )
        return f"stand-on ({self.situation.label}), holding course and speed"


@dataclass(frozen=True)
class Decision:
    """Output of one decision cycle.

    ``engaged`` is True when the decision belongs to an active encounter
    (initiation or hold) and False for quiescence or release.
    """

    situation: Situation
    action: ManeuverAction
    rule_citation: str
    reasoning: str
    engaged: bool = True

    @property
    def turn_sign(self) -> int:
        return self.action.turn_sign if self.engaged else 0


def classify(relative_heading_deg: float) -> Situation:
    """Map a wrapped relative heading in degrees to an encounter class.

    Bands are closed and checked in order, so +-6 deg is head-on and
    +-112 deg is overtaking.
    """
    magnitude = abs(relative_heading_deg)
    if magnitude <= HEAD_ON_LIMIT_DEG:
        return Situation.HEAD_ON
    if magnitude <= OVERTAKING_LIMIT_DEG:
        return Situation.OVERTAKING
    return Situation.CROSSING


def classifier_input_deg(
    geometry: EncounterGeometry, reference: HeadingReference = HeadingReference.VERBATIM
) -> float:
    psi_rel = math.degrees(geometry.relative_heading)
    if HeadingReference(reference) is HeadingReference.RECIPROCAL:
        psi_rel += 180.0
    return wrap_to_180(psi_rel)


def determine_role(
    situation: Situation,
    bearing: float,
    own_speed: float,
    target_speed: float,
    closing: bool,
) -> ManeuverAction:
    bearing_deg = math.degrees(bearing)
    if situation is Situation.CROSSING:
        if 0.0 < bearing_deg <= STARBOARD_SECTOR_DEG:
            return GIVE_WAY_STARBOARD
        return STAND_ON
    if situation is Situation.HEAD_ON:
        return GIVE_WAY_STARBOARD
    ahead = abs(bearing_deg) <= OVERTAKE_BOW_SECTOR_DEG
    if ahead and own_speed > target_speed and closing:
        return GIVE_WAY_STARBOARD
    return STAND_ON


_CITATIONS = {
    (Situation.CROSSING, Role.GIVE_WAY): "Rule 15",
    (Situation.CROSSING, Role.STAND_ON): "Rule 17",
    (Situation.HEAD_ON, Role.GIVE_WAY): "Rule 14",
    (Situation.HEAD_ON, Role.STAND_ON): "Rule 17",
    (Situation.OVERTAKING, Role.GIVE_WAY): "Rule 13",
    (Situation.OVERTAKING, Role.STAND_ON): "Rule 17",
}
NO_ENCOUNTER_CITATION = "Rule 7"


def rule_citation(situation: Situation, action: ManeuverAction, engaged: bool = True) -> str:
    if not engaged:
        return NO_ENCOUNTER_CITATION
    return _CITATIONS[(situation, action.role)]


def _role_reason(situation: Situation, action: ManeuverAction, bearing_deg: float) -> str:
    side = "starboard" if bearing_deg > 0 else "port"
    if situation is Situation.CROSSING:
        if action.role is Role.GIVE_WAY:
            return (
                f"Target bears {bearing_deg:.2f} deg on the starboard side, so own vessel must keep"
                " out of the way (Rule 15); altering course to starboard to pass astern."
            )
        return (
            f"Target bears {bearing_deg:.2f} deg on the {side} side; the target must give way,"
            " so own vessel keeps course and speed and monitors the risk (Rule 17)."
        )
    if situation is Situation.HEAD_ON:
        return "Head-on encounter; both vessels alter course to starboard under Rule 14."
    if action.role is Role.GIVE_WAY:
        return (
            "Own vessel is overtaking a slower target ahead and must keep clear under Rule 13;"
            " turn starboard to pass."
        )
    return "Target is not being overtaken by own vessel; keep course and speed under Rule 17."


def encounter_gate(geometry: EncounterGeometry, risk: RiskBreakdown, state: DecisionState, thresholds: Thresholds) -> bool:
    """True when the cycle belongs to an encounter (new or continuing)."""
    if not state.active:
        return risk.risk >= thresholds.risk
    released = risk.risk < thresholds.release_risk and (
        geometry.t_cpa <= 0.0 or geometry.range_rate > 0.0
    )
    return not released


def rule_decide(
    geometry: EncounterGeometry,
    risk: RiskBreakdown,
    state: DecisionState,
    thresholds: Thresholds,
    heading_reference: HeadingReference = HeadingReference.VERBATIM,
) -> Decision:
    psi_rel = classifier_input_deg(geometry, heading_reference)
    bearing_deg = math.degrees(geometry.bearing)
    engaged = encounter_gate(geometry, risk, state, thresholds)

    if not engaged:
        if state.active:
            reasoning = (
                f"Risk {risk.risk:.2f} below release level {thresholds.release_risk:.2f} and"
                " target past CPA; encounter resolved, resuming waypoint tracking."
            )
        else:
            reasoning = (
                f"Risk {risk.risk:.2f} below threshold {thresholds.risk:.2f}; no manoeuvre"
                " required, following route."
            )
        return Decision(classify(psi_rel), STAND_ON, NO_ENCOUNTER_CITATION, reasoning, engaged=False)

    if state.active:
        situation, action = state.situation, state.action
        reasoning = (
            f"Encounter in progress; holding {action.label.lower()} as latched at encounter"
            f" start (risk {risk.risk:.2f}). " + _role_reason(situation, action, bearing_deg)
        )
    else:
        situation = classify(psi_rel)
        action = determine_role(
            situation, geometry.bearing, geometry.own_speed, geometry.target_speed, geometry.closing
        )
        reasoning = (
            f"{situation.label} situation (relative heading {psi_rel:.2f} deg) with risk"
            f" {risk.risk:.2f} at or above {thresholds.risk:.2f}. "
            + _role_reason(situation, action, bearing_deg)
        )
    return Decision(situation, action, rule_citation(situation, action), reasoning)


def is_legal_transition(state: DecisionState, decision: Decision) -> bool:
    if not state.active or not decision.engaged:
        return True
    return decision.situation is state.situation and decision.action == state.action


def update_state(state: DecisionState, decision: Decision, cycle_index: int) -> DecisionState:
    """Apply one decision to the latched state.

    Illegal transitions (a different situation or action while an
    encounter is active) are rejected: the state is returned unchanged
    and the discrepancy is logged.
    """
    if not is_legal_transition(state, decision):
        log.warning(
            "cycle %d: rejected transition %s/%s -> %s/%s",
            cycle_index,
            state.situation.value,
            state.action.label,
            decision.situation.value,
            decision.action.label,
        )
        return state
    if not decision.engaged:
        return DecisionState() if state.active else state
    if state.active:
        return state
    giving_way = decision.action.role is Role.GIVE_WAY
    return DecisionState(
        situation=decision.situation,
        action=decision.action,
        turning=giving_way,
        initiation_index=cycle_index if giving_way else None,
        active=True,
    )


DECISION_LOG_COLUMNS = (
    "cycle",
    "time",
    "situation",
    "action",
    "turn",
    "risk",
    "range",
    "d_cpa",
    "t_cpa",
    "rule",
    "reasoning",
)


def _fmt2(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"


def decision_log_row(
    cycle: int, time: float, decision: Decision, geometry: EncounterGeometry, risk: RiskBreakdown
) -> tuple[str, ...]:
    """One decisions.csv row; telemetry at 2 decimals."""
    if decision.engaged:
        action = "Give-way" if decision.action.role is Role.GIVE_WAY else "Stand-on"
    else:
        action = "None"
    return (
        str(cycle),
        f"{time:.2f}",
        decision.situation.value,
        action,
        decision.action.turn.value if decision.engaged else Turn.NONE.value,
        _fmt2(risk.risk),
        _fmt2(geometry.range),
        _fmt2(geometry.d_cpa),
        _fmt2(geometry.t_cpa),
        decision.rule_citation,
        decision.reasoning,
    )
