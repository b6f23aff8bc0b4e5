"""Region geometry, disturbed stepping, schedule timing, and the run loop."""

import math

import numpy as np
import pytest

from adaptalloc import (
    AnnularSector,
    Annulus,
    Disk,
    DisturbanceRegion,
    Rect,
    RobotClass,
    RobotModel,
    ScheduleEvent,
    SimulationError,
    actual_step,
    load_scenario,
    mu_effective,
    run_scenario,
    summarize,
    write_trace,
)

DRIFT = """
name: drift
dt: 0.1
t_final: 6.0
gamma: {form: Linear, gain: 2.0}
robots:
  - {id: 0, class: Ground, position: [0.0, 0.0]}
tasks:
  - {id: 0, goal: [0.15, 0.0]}
spec_init:
  - [1.0]
global: {l: 100.0}
"""


def _ground(position):
    return RobotModel.at(0, RobotClass.GROUND, position)


def test_disk_contains():
    d = Disk(center=(0.0, 0.0), radius=1.0)
    assert d.contains(np.array([0.5, 0.5]))
    assert d.contains(np.array([1.0, 0.0]))  # boundary included
    assert not d.contains(np.array([1.01, 0.0]))
    assert d.heading_ok(np.zeros(2))


def test_annulus_contains():
    a = Annulus(center=(0.0, 0.0), r_in=0.5, r_out=1.0)
    assert not a.contains(np.array([0.2, 0.0]))
    assert a.contains(np.array([0.7, 0.0]))
    assert not a.contains(np.array([1.2, 0.0]))


def test_annular_sector_heading_gate():
    # band around the goal that only blocks eastbound motion
    s = AnnularSector(
        center=(0.0, 0.0), r_in=0.1, r_out=1.0, angle_from=-0.3, angle_to=0.3
    )
    p = np.array([-0.5, 0.0])
    assert s.contains(p)
    assert s.heading_ok(np.array([0.2, 0.0]))       # eastbound: gated
    assert not s.heading_ok(np.array([-0.2, 0.0]))  # reverse: free
    assert not s.heading_ok(np.zeros(2))            # no heading, never applies


def test_annular_sector_wrapped_arc():
    # arc crossing the pi branch cut
    s = AnnularSector(
        center=(0.0, 0.0), r_in=0.1, r_out=1.0, angle_from=3.0, angle_to=-3.0
    )
    assert s.heading_ok(np.array([math.cos(3.1), math.sin(3.1)]))
    assert s.heading_ok(np.array([-1.0, 0.0]))  # heading pi
    assert not s.heading_ok(np.array([math.cos(2.9), math.sin(2.9)]))


def test_rect_contains():
    r = Rect(min_corner=(-1.0, -0.5), max_corner=(1.0, 0.5))
    assert r.contains(np.array([0.0, 0.0]))
    assert r.contains(np.array([1.0, 0.5]))
    assert not r.contains(np.array([1.1, 0.0]))


def test_geometry_validation():
    with pytest.raises(ValueError):
        Disk(center=(0.0, 0.0), radius=0.0)
    with pytest.raises(ValueError):
        Annulus(center=(0.0, 0.0), r_in=1.0, r_out=0.5)
    with pytest.raises(ValueError):
        Rect(min_corner=(1.0, 0.0), max_corner=(0.0, 1.0))
    with pytest.raises(ValueError):
        DisturbanceRegion(
            name="bad",
            geometry=Disk(center=(0, 0), radius=1.0),
            affected_classes={RobotClass.GROUND},
            mu=1.5,
        )


def test_mu_effective_takes_minimum():
    disk = Disk(center=(0.0, 0.0), radius=1.0)
    regions = [
        DisturbanceRegion("a", disk, {RobotClass.GROUND}, mu=0.5),
        DisturbanceRegion("b", disk, {RobotClass.GROUND}, mu=0.2),
        DisturbanceRegion("c", disk, {RobotClass.GROUND}, mu=0.0, active=False),
        DisturbanceRegion("d", disk, {RobotClass.AERIAL}, mu=0.0),
    ]
    u = np.array([0.1, 0.0])
    p = np.zeros(2)
    assert mu_effective(regions, RobotClass.GROUND, p, u) == 0.2
    assert mu_effective(regions, RobotClass.AERIAL, p, u) == 0.0
    assert mu_effective([], RobotClass.GROUND, p, u) == 1.0


def test_actual_step_free_motion():
    rob = _ground((0.1, 0.2))
    out = actual_step(rob, np.array([0.2, -0.1]), [], 0.5)
    assert np.max(np.abs(out - np.array([0.2, 0.15]))) <= 1e-15


def test_actual_step_blocked_inside():
    region = DisturbanceRegion(
        "mud", Disk(center=(0.0, 0.0), radius=1.0), {RobotClass.GROUND}, mu=0.0
    )
    rob = _ground((0.0, 0.0))
    out = actual_step(rob, np.array([0.2, 0.0]), [region], 0.1)
    assert np.array_equal(out, np.array([0.0, 0.0]))


def test_actual_step_stops_at_boundary():
    # destination inside the dead region, robot still outside: no entry
    region = DisturbanceRegion(
        "mud", Disk(center=(0.5, 0.0), radius=0.4), {RobotClass.GROUND}, mu=0.0
    )
    rob = _ground((0.09, 0.0))
    out = actual_step(rob, np.array([0.2, 0.0]), [region], 0.1)
    assert np.array_equal(out, rob.x_act)


def test_actual_step_partial_mu_and_immunity():
    region = DisturbanceRegion(
        "mud", Disk(center=(0.0, 0.0), radius=1.0), {RobotClass.GROUND}, mu=0.5
    )
    u = np.array([0.2, 0.0])
    slow = actual_step(_ground((0.0, 0.0)), u, [region], 0.1)
    assert np.max(np.abs(slow - np.array([0.01, 0.0]))) <= 1e-15
    aerial = RobotModel.at(1, RobotClass.AERIAL, (0.0, 0.0))
    free = actual_step(aerial, u, [region], 0.1)
    assert np.max(np.abs(free - np.array([0.02, 0.0]))) <= 1e-15


def test_schedule_event_step_boundary():
    assert ScheduleEvent(time=30.0, region="r").step(0.05) == 600
    assert ScheduleEvent(time=1.0, region="r").step(0.3) == 4
    assert ScheduleEvent(time=0.3, region="r").step(0.1) == 3
    assert ScheduleEvent(time=0.0, region="r").step(0.1) == 0


def test_robot_model_at_copies_position():
    p = np.array([0.1, 0.2])
    rob = RobotModel.at(0, RobotClass.GROUND, p)
    p[0] = 9.9
    assert rob.x_act[0] == 0.1
    assert np.array_equal(rob.x_act, rob.x_sim)
    assert np.array_equal(rob.u_last, np.zeros(2))


def test_run_free_drift_completes():
    sc = load_scenario(DRIFT)
    recs = run_scenario(sc)
    assert len(recs) == 60
    assert [r.k for r in recs] == list(range(60))
    assert all(abs(r.t - r.k * 0.1) < 1e-12 for r in recs)
    # undisturbed: nominal and actual coincide bitwise at every step
    for r in recs:
        assert np.array_equal(r.x_act, r.x_sim)
    # eastbound monotone approach, never faster than the velocity budget
    for a, b in zip(recs, recs[1:]):
        assert b.x_act[0, 0] >= a.x_act[0, 0]
        assert np.max(np.abs(b.x_act - a.x_act)) <= 0.2 * 0.1 + 1e-12
    m = summarize(recs)
    assert m.tasks_completed == 1
    assert m.completion_steps[0] is not None and m.completion_steps[0] <= 30
    assert m.reassignments == 0
    assert m.occupancy == 0.0
    # recorded per-task cost matches the recorded positions
    goal = np.array([0.15, 0.0])
    for r in recs[::10]:
        assert abs(r.v[0, 0] - np.sum((r.x_act[0] - goal) ** 2)) < 1e-12


def test_run_no_completion_short_horizon():
    sc = load_scenario(DRIFT.replace("t_final: 6.0", "t_final: 1.0"))
    recs = run_scenario(sc)
    m = summarize(recs)
    assert m.tasks_completed == 0
    assert m.completion_steps == (None,)
    assert m.completion_times == (None,)


def test_run_schedule_applies_at_boundary_never_earlier():
    doc = """
name: gate
dt: 0.1
t_final: 0.8
robots:
  - {id: 0, class: Ground, position: [0.0, 0.0]}
tasks:
  - {id: 0, goal: [0.5, 0.0]}
spec_init:
  - [1.0]
regions:
  - name: field
    shape: Disk
    center: [0.25, 0.0]
    radius: 0.6
    affected_classes: [Ground]
    mu: 0.0
    active: false
schedule:
  - {time: 0.3, region: field, active: true}
"""
    recs = run_scenario(load_scenario(doc))
    # the event lands on step 3: motion into step 3 is still free, motion
    # into step 4 is the first one the activated region can stop
    assert recs[3].x_act[0, 0] > recs[2].x_act[0, 0]
    assert np.array_equal(recs[4].x_act, recs[3].x_act)
    assert np.array_equal(recs[-1].x_act, recs[3].x_act)


def test_run_zero_robots_gives_empty_trace():
    doc = """
name: empty
robots: []
tasks: []
spec_init: []
"""
    assert run_scenario(load_scenario(doc)) == []


def test_run_determinism_bitwise():
    import io

    sc1 = load_scenario(DRIFT)
    sc2 = load_scenario(DRIFT)
    b1, b2 = io.StringIO(), io.StringIO()
    write_trace(run_scenario(sc1), b1, sc1)
    write_trace(run_scenario(sc2), b2, sc2)
    assert b1.getvalue() == b2.getvalue()


def test_run_wraps_allocator_failure_with_step():
    doc = """
name: doomed
dt: 0.1
t_final: 1.0
robots:
  - {id: 0, class: Ground, position: [1.5, 0.0]}
tasks:
  - {id: 0, goal: [-1.5, 0.0]}
  - {id: 1, goal: [1.5, 0.0]}
spec_init:
  - [1.0, 1.0]
"""
    with pytest.raises(SimulationError) as exc:
        run_scenario(load_scenario(doc))
    assert exc.value.step == 0
    assert "step 0" in str(exc.value)


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize([])
