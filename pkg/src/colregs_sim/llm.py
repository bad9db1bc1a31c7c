"""LLM-backed COLREGs decision maker.

The model receives a structured maritime prompt (bearing map, rule
constraints, decision parameters and the current telemetry) over the
OpenAI-compatible chat-completions protocol and must answer with three
labelled fields::

    SITUATION: crossing
    ACTION: Give-way, turn starboard
    REASONING: ...

Every failure (transport, timeout, unparseable answer) falls back to
:func:`colregs_sim.colregs.rule_decide`, and answers that contradict the
latched encounter state are overridden. The vessel therefore always has
a legal decision.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol, Sequence

from .colregs import (
    Decision,
    DecisionState,
    HeadingReference,
    ManeuverAction,
    Role,
    Situation,
    Thresholds,
    Turn,
    classifier_input_deg,
    encounter_gate,
    rule_citation,
    rule_decide,
)
from .risk import EncounterGeometry, RiskBreakdown

log = logging.getLogger(__name__)

SYSTEM_ROLE = (
    "You are the collision-avoidance decision maker of an autonomous surface vessel."
    " Follow the COLREGs strictly and answer only in the requested format."
)

BEARING_MAP_TEXT = """\
Relative heading interpretation (psi_rel = target heading - own heading, degrees in (-180, 180]):
- Head-on: -6 <= psi_rel <= 6
- Overtaking: -112 <= psi_rel <= 112 (and not head-on)
- Crossing: otherwise
Apply the cases in this order."""

RULE_CONSTRAINTS_TEXT = """\
Rule 13 (overtaking): a vessel overtaking another keeps out of the way; the overtaking vessel gives way, normally passing to starboard.
Rule 14 (head-on): both vessels alter course to starboard so that each passes on the port side of the other.
Rule 15 (crossing): the vessel which has the other on her own starboard side keeps out of the way and avoids crossing ahead.
Rule 16 (give-way): take early and substantial action to keep well clear.
Rule 17 (stand-on): keep course and speed while the other vessel is required to give way.
Once an encounter has started, keep the same situation and action until the risk has cleared."""

DECISION_PARAMS_TEMPLATE = """\
Critical thresholds: Risk >= {risk:.2f}, Range <= {range:.0f} m, D_CPA <= {d_cpa:.0f} m, T_CPA <= {t_cpa:.0f} s.
Respond with exactly three lines and nothing else:
SITUATION: <head-on | overtaking | crossing>
ACTION: <Stand-on | Give-way, turn starboard | Give-way, turn port>
REASONING: <one paragraph citing the governing rule>"""


class LlmError(RuntimeError):
    """Transport or protocol failure talking to the chat endpoint."""


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class PromptTemplate:
    bearing_map_text: str = BEARING_MAP_TEXT
    rule_constraints_text: str = RULE_CONSTRAINTS_TEXT
    decision_params_text: str = DECISION_PARAMS_TEMPLATE.format(**vars(Thresholds()))

    @classmethod
    def for_thresholds(cls, thresholds: Thresholds) -> "PromptTemplate":
        return cls(decision_params_text=DECISION_PARAMS_TEMPLATE.format(**vars(thresholds)))

    def __post_init__(self):
        for name in ("bearing_map_text", "rule_constraints_text", "decision_params_text"):
            if not getattr(self, name).strip():
                raise ValueError(f"prompt template section {name} is empty")


@dataclass(frozen=True)
class LlmConfig:
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4"
    temperature: float = 0.2
    timeout: float = 5.0
    max_retries: int = 2
    api_key_env_var: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env_var)


@dataclass(frozen=True)
class ExplainableAction:
    situation: Situation
    action: ManeuverAction
    reasoning: str

    def __post_init__(self):
        if not self.reasoning.strip():
            raise ValueError("reasoning must be non-empty")


@dataclass(frozen=True)
class DecisionContext:
    """Inputs of one decision cycle, handed to mock clients only."""

    geometry: EncounterGeometry
    risk: RiskBreakdown
    state: DecisionState
    thresholds: Thresholds
    heading_reference: HeadingReference = HeadingReference.VERBATIM


@dataclass(frozen=True)
class DeciderOutcome:
    decision: Decision
    source: str  # "llm" or "fallback"
    latency: float
    raw_response: str = ""
    discrepancy: str | None = None
    error: str | None = None


class ChatClient(Protocol):
    def complete(self, request: dict, timeout: float, context: DecisionContext | None = None) -> dict:
        """Send one chat-completions request body, return the response body."""


# --------------------------------------------------------------------------- prompt


def _fixed(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"non-finite telemetry value {value!r}")
    return f"{value:.2f}"


def build_prompt(
    geometry: EncounterGeometry,
    risk: RiskBreakdown,
    state: DecisionState,
    template: PromptTemplate,
    heading_reference: HeadingReference = HeadingReference.VERBATIM,
) -> str:
    """Render the full decision prompt.

    Numbers are printed with two decimals, so the text depends only on
    the telemetry and stays free of injected content. An infinite
    ``t_cpa`` (no relative motion) is printed as a sentence. Any other
    non-finite value raises ``ValueError``.
    """
    psi_rel = classifier_input_deg(geometry, heading_reference)
    if geometry.t_cpa == math.inf:
        t_cpa = "n/a (no relative motion)"
    else:
        t_cpa = f"{_fixed(geometry.t_cpa)} s"
    telemetry = "\n".join(
        [
            f"Relative heading (psi_rel): {_fixed(psi_rel)} deg",
            f"Risk: {_fixed(risk.risk)}",
            f"D_CPA: {_fixed(geometry.d_cpa)} m",
            f"Range: {_fixed(geometry.range)} m",
            f"T_CPA: {t_cpa}",
            f"Target bearing (starboard positive): {_fixed(math.degrees(geometry.bearing))} deg",
            f"Current manoeuvre status: {state.status_text}",
        ]
    )
    return "\n\n".join(
        [
            "## Bearing interpretation\n" + template.bearing_map_text,
            "## Rule constraints\n" + template.rule_constraints_text,
            "## Decision parameters\n" + template.decision_params_text,
            "## Current encounter\n" + telemetry,
        ]
    )


def build_request(prompt: str, config: LlmConfig) -> dict:
    return {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": SYSTEM_ROLE},
            {"role": "user", "content": prompt},
        ],
        "temperature": config.temperature,
    }


def extract_content(body: Any) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise LlmError(f"malformed chat-completions response: {exc!r}") from exc
    if not isinstance(content, str):
        raise LlmError("response content is not text")
    return content


def completion_body(content: str, model: str = "mock") -> dict:
    """Wrap text in a minimal chat-completions response body."""
    return {
        "object": "chat.completion",
        "model": model,
        "choices": [
            {"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}
        ],
    }


# --------------------------------------------------------------------------- parsing

_LABEL_RE = re.compile(
    r"(?:^|\n|/)[ \t>*#-]*(SITUATION|ACTION|REASONING)[ \t*]*:", re.IGNORECASE
)
_SITUATION_WORDS = {
    Situation.HEAD_ON: re.compile(r"head[\s_-]*on"),
    Situation.OVERTAKING: re.compile(r"overtak"),
    Situation.CROSSING: re.compile(r"cross"),
}


def _fields(text: str) -> dict[str, str]:
    matches = list(_LABEL_RE.finditer(text))
    found: dict[str, str] = {}
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        key = m.group(1).upper()
        if key not in found:
            found[key] = text[m.end():end].strip(" \t\r\n/*")
    return found


def _parse_situation(value: str, raw: str) -> Situation:
    lowered = value.lower()
    hits = [s for s, pattern in _SITUATION_WORDS.items() if pattern.search(lowered)]
    if len(hits) != 1:
        raise ParseError(f"cannot identify a single situation in {value!r}", raw)
    return hits[0]


def _parse_action(value: str, raw: str) -> ManeuverAction:
    lowered = value.lower()
    give = re.search(r"give[\s_-]*way", lowered) is not None
    stand = re.search(r"stand[\s_-]*on", lowered) is not None
    starboard = "starboard" in lowered
    port = re.search(r"\bport\b", lowered) is not None
    if give == stand:
        raise ParseError(f"action must be exactly one of stand-on/give-way: {value!r}", raw)
    if stand:
        if starboard or port:
            raise ParseError(f"stand-on cannot carry a turn: {value!r}", raw)
        return ManeuverAction()
    if starboard and port:
        raise ParseError(f"conflicting turn directions: {value!r}", raw)
    # a bare give-way defaults to the starboard alteration COLREGs prefer
    return ManeuverAction(Role.GIVE_WAY, Turn.PORT if port else Turn.STARBOARD)


def parse_response(text: str) -> ExplainableAction:
    if not text or not text.strip():
        raise ParseError("empty response", text)
    fields = _fields(text)
    for key in ("SITUATION", "ACTION", "REASONING"):
        if not fields.get(key):
            raise ParseError(f"missing {key} field", text)
    return ExplainableAction(
        situation=_parse_situation(fields["SITUATION"], text),
        action=_parse_action(fields["ACTION"], text),
        reasoning=" ".join(fields["REASONING"].split()),
    )


def format_response(situation: Situation, action: ManeuverAction, reasoning: str) -> str:
    """Inverse of :func:`parse_response`, used by the mocks."""
    return f"SITUATION: {situation.label.lower()}\nACTION: {action.label}\nREASONING: {reasoning}"


# --------------------------------------------------------------------------- clients


class HttpChatClient:
    """Chat-completions client over HTTP (OpenAI-compatible)."""

    def __init__(self, endpoint_url: str, api_key: str | None = None, transport=None):
        import httpx

        self.endpoint_url = endpoint_url
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, transport=transport)

    @classmethod
    def from_config(cls, config: LlmConfig, transport=None) -> "HttpChatClient":
        return cls(config.endpoint_url, config.api_key, transport=transport)

    def complete(self, request: dict, timeout: float, context: DecisionContext | None = None) -> dict:
        import httpx

        try:
            response = self._client.post(self.endpoint_url, json=request, timeout=timeout)
            response.raise_for_status()
            return response.json()
        except (httpx.HTTPError, json.JSONDecodeError) as exc:
            raise LlmError(f"{type(exc).__name__}: {exc}") from exc

    def close(self):
        self._client.close()


class ScriptedChatClient:
    """Replays canned response bodies in order.

    Each entry is either a full response body (dict), a bare content
    string, or a control entry ``{"status": 503}`` (transport failure) /
    ``{"delay": 2.0, "body": ...}`` (slow answer). After the list runs out
    the last entry repeats.
    """

    def __init__(self, responses: Sequence[Any]):
        if not responses:
            raise ValueError("a scripted client needs at least one response")
        self.responses = list(responses)
        self.requests: list[dict] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChatClient":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, list):
            raise ValueError(f"{path}: mock fixture must be a JSON list of response bodies")
        return cls(data)

    def complete(self, request: dict, timeout: float, context: DecisionContext | None = None) -> dict:
        with self._lock:
            index = min(len(self.requests), len(self.responses) - 1)
            self.requests.append(request)
        entry = self.responses[index]
        if isinstance(entry, dict) and ("status" in entry or "delay" in entry):
            if "delay" in entry:
                time.sleep(float(entry["delay"]))
            if "status" in entry:
                raise LlmError(f"mock endpoint returned HTTP {entry['status']}")
            entry = entry.get("body", "")
        if isinstance(entry, str):
            return completion_body(entry)
        return entry


class EchoRuleChatClient:
    """Mock that answers exactly what :func:`rule_decide` would decide."""

    def __init__(self):
        self.requests: list[dict] = []

    def complete(self, request: dict, timeout: float, context: DecisionContext | None = None) -> dict:
        if context is None:
            raise LlmError("echo mock needs the decision context")
        self.requests.append(request)
        d = rule_decide(context.geometry, context.risk, context.state, context.thresholds, context.heading_reference)
        return completion_body(format_response(d.situation, d.action, d.reasoning))


# --------------------------------------------------------------------------- decider

_pool: concurrent.futures.ThreadPoolExecutor | None = None
_pool_lock = threading.Lock()


def _executor() -> concurrent.futures.ThreadPoolExecutor:
    global _pool
    with _pool_lock:
        if _pool is None:
            _pool = concurrent.futures.ThreadPoolExecutor(max_workers=4, thread_name_prefix="llm")
        return _pool


def _query(client: ChatClient, request: dict, config: LlmConfig, context: DecisionContext) -> dict:
    future = _executor().submit(client.complete, request, config.timeout, context)
    try:
        body = future.result(timeout=config.timeout)
    except concurrent.futures.TimeoutError as exc:
        raise LlmError(f"no answer within {config.timeout} s") from exc
    return body


def decide(
    geometry: EncounterGeometry,
    risk: RiskBreakdown,
    state: DecisionState,
    template: PromptTemplate,
    config: LlmConfig,
    client: ChatClient,
    thresholds: Thresholds = Thresholds(),
    heading_reference: HeadingReference = HeadingReference.VERBATIM,
) -> DeciderOutcome:
    """One LLM decision cycle with consistency guard and rule fallback. Never raises."""
    started = time.perf_counter()
    context = DecisionContext(geometry, risk, state, thresholds, heading_reference)
    fallback = rule_decide(geometry, risk, state, thresholds, heading_reference)

    try:
        request = build_request(build_prompt(geometry, risk, state, template, heading_reference), config)
    except ValueError as exc:
        return DeciderOutcome(fallback, "fallback", time.perf_counter() - started, error=str(exc))

    raw = ""
    errors = []
    parsed = None
    for attempt in range(config.max_retries + 1):
        try:
            raw = extract_content(_query(client, request, config, context))
            parsed = parse_response(raw)
            break
        except (LlmError, ParseError) as exc:
            errors.append(f"attempt {attempt + 1}: {exc}")
            log.info("LLM attempt %d failed: %s", attempt + 1, exc)
        except Exception as exc:  # a broken client must not stop the vessel
            errors.append(f"attempt {attempt + 1}: unexpected {type(exc).__name__}: {exc}")
            log.warning("LLM client raised unexpectedly: %r", exc)

    latency = time.perf_counter() - started
    if parsed is None:
        return DeciderOutcome(fallback, "fallback", latency, raw, error="; ".join(errors))

    decision, discrepancy = _guard(parsed, geometry, risk, state, thresholds, fallback)
    if discrepancy:
        log.warning("LLM decision overridden: %s", discrepancy)
    return DeciderOutcome(decision, "llm", latency, raw, discrepancy=discrepancy)


def _guard(
    parsed: ExplainableAction,
    geometry: EncounterGeometry,
    risk: RiskBreakdown,
    state: DecisionState,
    thresholds: Thresholds,
    rule_decision: Decision,
) -> tuple[Decision, str | None]:
    """Reconcile the model's answer with the encounter gate and the latched state."""
    engaged = encounter_gate(geometry, risk, state, thresholds)
    proposal = f"{parsed.situation.value}/{parsed.action.label}"

    if not engaged:
        if parsed.action.role is Role.GIVE_WAY:
            return rule_decision, (
                f"model proposed {proposal} outside an active encounter"
                f" (risk {risk.risk:.2f}); no manoeuvre taken"
            )
        return (
            Decision(parsed.situation, parsed.action, rule_citation(parsed.situation, parsed.action, False),
                     parsed.reasoning, engaged=False),
            None,
        )

    if not state.active:
        return (
            Decision(parsed.situation, parsed.action, rule_citation(parsed.situation, parsed.action),
                     parsed.reasoning),
            None,
        )

    if parsed.situation is state.situation and parsed.action == state.action:
        return (
            Decision(state.situation, state.action, rule_citation(state.situation, state.action),
                     parsed.reasoning),
            None,
        )
    return rule_decision, (
        f"model proposed {proposal} while latched"
        f" {state.situation.value}/{state.action.label}; latched action kept"
    )


def client_for(kind: str, config: LlmConfig, fixture: str | Path | None = None) -> ChatClient:
    """Build the client for a decider kind: ``llm`` (HTTP) or ``mock``.

    A mock without a fixture echoes the rule-based decisions.
    """
    if kind == "llm":
        return HttpChatClient.from_config(config)
    if kind == "mock":
        return ScriptedChatClient.from_file(fixture) if fixture else EchoRuleChatClient()
    raise ValueError(f"no chat client for decider kind {kind!r}")


__all__ = [
    "ChatClient",
    "DeciderOutcome",
    "DecisionContext",
    "EchoRuleChatClient",
    "ExplainableAction",
    "HttpChatClient",
    "LlmConfig",
    "LlmError",
    "ParseError",
    "PromptTemplate",
    "ScriptedChatClient",
    "build_prompt",
    "build_request",
    "client_for",
    "decide",
    "extract_content",
    "format_response",
    "parse_response",
]
