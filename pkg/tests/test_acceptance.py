"""Acceptance suite. Each test carries ``@pytest.mark.criterion(n)`` and the
conftest prints one PASS/FAIL line per criterion at the end of the run."""

import csv
import io
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from colregs_sim.colregs import (
    GIVE_WAY_STARBOARD,
    STAND_ON,
    DecisionState,
    Situation,
    Thresholds,
    classify,
    rule_decide,
)
from colregs_sim.dynamics import VesselParams, VesselState, step
from colregs_sim.llm import EchoRuleChatClient, ScriptedChatClient
from colregs_sim.risk import RiskKnees, relative_geometry, risk_index
from colregs_sim.scenario import bundled_scenarios, emit_outputs, load_scenario, run

from snapshots import GIVE_WAY_SNAPSHOT, STAND_ON_SNAPSHOT, snapshot, snapshot_geometry

KNEES = RiskKnees()
THRESHOLDS = Thresholds()
DT = 0.01

GIVE_WAY_TEXT = "SITUATION: crossing\nACTION: Give-way, turn starboard\nREASONING: Target on the starboard bow, Rule 15."
STAND_ON_TEXT = "SITUATION: crossing\nACTION: Stand-on\nREASONING: Keep course and speed, Rule 17."


def random_pair(rng):
    own = VesselState(0.0, 0.0, rng.uniform(-math.pi, math.pi), 0.0, rng.uniform(0.0, 25.0))
    target = VesselState(
        *rng.uniform(-6000.0, 6000.0, 2), rng.uniform(-math.pi, math.pi), 0.0, rng.uniform(0.0, 25.0)
    )
    return own, target


# --------------------------------------------------------------------------- 1


@pytest.mark.criterion(1)
def test_risk_normalization():
    rng = np.random.default_rng(1)
    pairs = [random_pair(rng) for _ in range(10_000)]
    # include the degenerate cases: parallel equal-speed, both stopped, very close
    pairs[0] = (VesselState(0, 0, 0.2, 0, 10), VesselState(300, 300, 0.2, 0, 10))
    pairs[1] = (VesselState(0, 0, 0, 0, 0), VesselState(5, 5, 1, 0, 0))
    pairs[2] = (VesselState(0, 0, 0, 0, 10), VesselState(1e-3, 0, math.pi, 0, 10))
    started = time.perf_counter()
    for own, target in pairs:
        g = relative_geometry(own, target)
        b = risk_index(g, KNEES.d_cpa, KNEES.t_cpa, KNEES.range)
        assert 0.0 <= b.risk <= 1.0
        for f in (b.f_dcpa, b.f_tcpa, b.f_range):
            assert 0.0 <= f <= 1.0
        assert abs(b.risk - (b.f_dcpa + b.f_tcpa + b.f_range) / 3.0) <= 1e-12
    assert time.perf_counter() - started < 5.0


# --------------------------------------------------------------------------- 2


@pytest.mark.criterion(2)
def test_cpa_matches_brute_force():
    rng = np.random.default_rng(2)
    started = time.perf_counter()
    checked = 0
    while checked < 1000:
        own, target = random_pair(rng)
        g = relative_geometry(own, target)
        if not (0.0 < g.t_cpa < 1000.0):
            continue
        steps = int(math.ceil((g.t_cpa * 1.5 + 10.0) / DT))
        t = np.arange(steps + 1) * DT
        ovx, ovy = own.velocity
        tvx, tvy = target.velocity
        dx = target.x_pos - own.x_pos + (tvx - ovx) * t
        dy = target.y_pos - own.y_pos + (tvy - ovy) * t
        ranges = np.hypot(dx, dy)
        i = int(np.argmin(ranges))
        d_bf, t_bf = float(ranges[i]), float(t[i])
        assert abs(g.d_cpa - d_bf) <= max(0.01 * d_bf, 1.0), (own, target)
        assert abs(g.t_cpa - t_bf) <= max(0.01 * t_bf, 0.1), (own, target)
        checked += 1
    assert time.perf_counter() - started < 60.0


# --------------------------------------------------------------------------- 3


@pytest.mark.criterion(3)
def test_step_responses_match_closed_form():
    params = VesselParams()
    u_c = 10.0
    s = VesselState()
    n = round(100.0 / DT)
    r = np.empty(n)
    u = np.empty(n)
    for k in range(n):
        s = step(s, u_c, params, DT, 0.0)
        r[k], u[k] = s.yaw_rate, s.speed
    t = np.arange(1, n + 1) * DT
    r_exact = params.k_psi * u_c * (1.0 - np.exp(-t / params.t_psi))
    u_exact = params.k_u * params.thrust_cmd * (1.0 - np.exp(-t / params.t_u))
    assert np.max(np.abs(r - r_exact) / r_exact) < 1e-3
    assert np.max(np.abs(u - u_exact) / u_exact) < 1e-3


# --------------------------------------------------------------------------- 4, 5


@pytest.mark.criterion(4)
@pytest.mark.parametrize("bearing", [1.0, 20.0, 45.0, 90.0, 112.5])
def test_give_way_snapshot(bearing):
    geometry, risk = snapshot(GIVE_WAY_SNAPSHOT, bearing)
    d = rule_decide(geometry, risk, DecisionState(), THRESHOLDS)
    assert d.engaged
    assert d.situation is Situation.CROSSING
    assert d.action == GIVE_WAY_STARBOARD


@pytest.mark.criterion(5)
@pytest.mark.parametrize("bearing", [-1.0, -20.0, -45.0, -90.0, -135.0])
def test_stand_on_snapshot(bearing):
    geometry, risk = snapshot(STAND_ON_SNAPSHOT, bearing)
    assert risk.risk >= THRESHOLDS.risk
    d = rule_decide(geometry, risk, DecisionState(), THRESHOLDS)
    assert d.engaged
    assert d.situation is Situation.CROSSING
    assert d.action == STAND_ON


# --------------------------------------------------------------------------- 6


@pytest.mark.criterion(6)
@pytest.mark.parametrize("reference", [GIVE_WAY_SNAPSHOT, STAND_ON_SNAPSHOT])
def test_risk_calibration(reference):
    expected, t_cpa, d_cpa, range_, psi_rel = reference
    g = snapshot_geometry(t_cpa, d_cpa, range_, psi_rel, 30.0)
    b = risk_index(g, KNEES.d_cpa, KNEES.t_cpa, KNEES.range)
    assert abs(b.risk - expected) <= 0.05


# --------------------------------------------------------------------------- 7


def timed_run(name, **changes):
    config = replace(load_scenario(name), **changes)
    assert config.decider == "rule"
    assert config.vessel_params.sigma_omega == 0.0
    started = time.perf_counter()
    log, metrics = run(config)
    assert time.perf_counter() - started < 10.0
    return config, log, metrics


@pytest.mark.criterion(7)
def test_crossing_give_way_scenario():
    _, _, m = timed_run("crossing_giveway")
    assert m.give_way_initiations == 1
    assert m.first_turn == "starboard"
    assert not m.collision
    assert abs(m.final_cross_track) < 20.0


@pytest.mark.criterion(7)
def test_head_on_scenario():
    _, log, m = timed_run("head_on")
    assert m.first_turn == "starboard"
    assert not m.collision
    # the commanded avoidance offset is to starboard whenever it is non-zero
    colav = log.column("psi_colav")
    assert colav.max() > 0.0 and colav.min() >= 0.0


@pytest.mark.criterion(7)
def test_overtaking_scenario():
    _, _, m = timed_run("overtaking")
    assert m.action_transitions <= 2
    assert not m.collision


@pytest.mark.criterion(7)
def test_crossing_stand_on_scenario():
    config, log, m = timed_run("crossing_standon")
    assert m.give_way_initiations == 0
    assert any(log.cycle_active), "scenario never entered an encounter"
    per = config.steps_per_decision
    heading = log.column("own_heading")
    track = config.own_route.leg_heading
    window = [
        k for k in range(len(heading)) if log.cycle_active[min(k // per, len(log.cycle_active) - 1)]
    ]
    deviation = np.degrees(np.abs(np.angle(np.exp(1j * (heading[window] - track)))))
    assert deviation.max() < 5.0


# --------------------------------------------------------------------------- 8


def oracle_class(deg):
    if -6.0 <= deg <= 6.0:
        return Situation.HEAD_ON
    if -112.0 <= deg <= 112.0:
        return Situation.OVERTAKING
    return Situation.CROSSING


@pytest.mark.criterion(8)
def test_classification_sweep():
    for k in range(-17999, 18001):
        deg = k / 100.0
        assert classify(deg) is oracle_class(deg), deg


@pytest.mark.criterion(8)
@pytest.mark.parametrize(
    "deg, expected",
    [
        (6.0, Situation.HEAD_ON),
        (-6.0, Situation.HEAD_ON),
        (112.0, Situation.OVERTAKING),
        (-112.0, Situation.OVERTAKING),
        (math.nextafter(6.0, 7.0), Situation.OVERTAKING),
        (math.nextafter(-6.0, -7.0), Situation.OVERTAKING),
        (math.nextafter(112.0, 113.0), Situation.CROSSING),
        (math.nextafter(-112.0, -113.0), Situation.CROSSING),
        (6.01, Situation.OVERTAKING),
        (-6.01, Situation.OVERTAKING),
        (112.01, Situation.CROSSING),
        (-112.01, Situation.CROSSING),
        (math.nextafter(6.0, 0.0), Situation.HEAD_ON),
        (math.nextafter(112.0, 0.0), Situation.OVERTAKING),
    ],
)
def test_classification_boundaries(deg, expected):
    assert classify(deg) is expected


# --------------------------------------------------------------------------- 9


@pytest.mark.criterion(9)
@pytest.mark.parametrize("name", ["crossing_giveway", "head_on", "overtaking", "crossing_standon"])
def test_echo_mock_is_byte_identical(name, tmp_path):
    config = load_scenario(name)
    rule_paths = emit_outputs(*run(config), tmp_path / "rule", name=name)
    mock_paths = emit_outputs(*run(replace(config, decider="mock"), client=EchoRuleChatClient()), tmp_path / "mock", name=name)
    for kind in ("trajectory", "decisions"):
        assert rule_paths[kind].read_bytes() == mock_paths[kind].read_bytes()


@pytest.mark.criterion(9)
def test_garbage_mock_falls_back():
    config = load_scenario("crossing_giveway")
    rule_log, _ = run(config)
    log, metrics = run(replace(config, decider="mock"), client=ScriptedChatClient(["The sea is calm today."]))
    assert log.sources and all(s == "fallback" for s in log.sources)
    assert metrics.fallback_decisions == len(log.decision_rows)
    assert log.trajectory_csv() == rule_log.trajectory_csv()


@pytest.mark.criterion(9)
def test_contradiction_mock_keeps_latch(tmp_path):
    config = load_scenario("crossing_giveway")
    rule_log, _ = run(config)
    start = rule_log.cycle_active.index(True)
    # quiet until the encounter opens, agree for three cycles, then contradict
    fixture = [STAND_ON_TEXT] * start + [GIVE_WAY_TEXT] * 3 + [STAND_ON_TEXT]
    log, metrics = run(replace(config, decider="mock"), client=ScriptedChatClient(fixture))

    rows = list(csv.DictReader(io.StringIO(log.decisions_csv())))
    assert rows[start]["action"] == "Give-way"
    contradicted = start + 3
    assert log.cycle_active[contradicted]
    assert rows[contradicted]["action"] == "Give-way"
    assert rows[contradicted]["turn"] == "starboard"
    assert metrics.discrepancies >= 1
    assert log.discrepancies[0]["cycle"] == contradicted
    assert "latched action kept" in log.discrepancies[0]["message"]
    assert metrics.give_way_initiations == 1
    assert log.trajectory_csv() == rule_log.trajectory_csv()

    summary = emit_outputs(log, metrics, tmp_path, name=config.name)["summary"].read_text()
    assert "latched action kept" in summary


# --------------------------------------------------------------------------- 10


@pytest.mark.criterion(10)
@pytest.mark.parametrize("name", bundled_scenarios())
def test_replay_determinism(name, tmp_path):
    config = load_scenario(name)
    first = emit_outputs(*run(config), tmp_path / "a", name=name)["trajectory"].read_bytes()
    second = emit_outputs(*run(config), tmp_path / "b", name=name)["trajectory"].read_bytes()
    assert first == second


@pytest.mark.criterion(10)
def test_replay_determinism_with_disturbance(tmp_path):
    config = load_scenario("crossing_giveway")
    config = replace(config, vessel_params=VesselParams(sigma_omega=0.05), seed=11)
    first = run(config)[0].trajectory_csv()
    second = run(config)[0].trajectory_csv()
    assert first == second
