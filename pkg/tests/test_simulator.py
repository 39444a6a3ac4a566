import csv
import math

import numpy as np
import pytest

from slipid.dynamics import GaitParams, SimState, SingleSupport, total_energy, touchdown_condition
from slipid.simulator import (
    BracketError,
    GaitFailure,
    InitialConditions,
    locate_event,
    rk4_step,
    simulate,
    write_csv,
)


def test_rk4_free_fall_is_exact():
    # negligible stiffness: pure ballistic motion, polynomial of degree 2
    p = GaitParams(1.0, 1e-200, 0.7)
    s = SimState(0.0, 0.0, 5.0, 1.0, 2.0, SingleSupport(0.0))
    h = 0.01
    for _ in range(100):
        s = rk4_step(s, p, h)
    t = s.t
    assert s.y == pytest.approx(5.0 + 2.0 * t - 0.5 * p.g * t * t, abs=1e-13)
    assert s.vy == pytest.approx(2.0 - p.g * t, abs=1e-13)
    assert s.x == pytest.approx(t, abs=1e-14)


def test_rk4_rejects_nonpositive_step():
    p = GaitParams(70, 9000, 0.7)
    s = SimState(0.0, 0.0, 0.7, 1.0, 0.0, SingleSupport(0.0))
    with pytest.raises(ValueError):
        rk4_step(s, p, 0.0)


def _arc(h, duration=1.0):
    p = GaitParams(70, 9000, 0.7)
    s = SimState(0.0, 0.0, 0.69, 0.9, 0.0, SingleSupport(0.0))
    for _ in range(int(round(duration / h))):
        s = rk4_step(s, p, h)
    return np.array([s.x, s.y, s.vx, s.vy])


def test_rk4_fourth_order():
    ref = _arc(1e-5)
    e1 = np.max(np.abs(_arc(0.02) - ref))
    e2 = np.max(np.abs(_arc(0.01) - ref))
    assert 13.0 < e1 / e2 < 19.0


def test_locate_linear_condition():
    p = GaitParams(70, 9000, 0.7)
    s = SimState(2.0, 0.0, 0.7, 1.0, 0.0, SingleSupport(0.0))
    h = 1e-3
    mid = s.t + h / 2

    t_star, s_star = locate_event(s, p, h, lambda st, _: mid - st.t)
    assert abs(t_star - mid) < 1e-9
    assert s_star.t == t_star


def test_locate_touchdown_on_descending_arc():
    p = GaitParams(70, 9000, 0.7, math.radians(69))
    # ballistic-ish descent just above the surface
    y_td = p.l0 * math.sin(p.alpha0)
    s = SimState(0.0, 0.05, y_td + 0.0004, 0.9, -0.8, SingleSupport(0.0))
    t_star, s_star = locate_event(s, p, 1e-3, touchdown_condition)
    assert abs(s_star.y - y_td) < 1e-8
    assert 0 < t_star < 1e-3


def test_locate_without_crossing():
    p = GaitParams(70, 9000, 0.7)
    s = SimState(0.0, 0.0, 0.7, 1.0, 0.0, SingleSupport(0.0))
    with pytest.raises(BracketError):
        locate_event(s, p, 1e-3, touchdown_condition)


def test_sample_count(walker):
    p, ic = walker
    traj = simulate(p, ic, duration=15.0, output_dt=0.1)
    assert len(traj) == 151 == len(traj.ys)
    assert traj.times[-1] == pytest.approx(15.0)


def test_trajectory_invariants(walker):
    p, ic = walker
    traj = simulate(p, ic)
    assert np.all(traj.ys > 0)
    assert traj.xs[0] == ic.x0 and traj.ys[0] == p.l0 - ic.y_offset
    times = [t for t, _ in traj.events]
    assert all(a < b for a, b in zip(times, times[1:]))
    contact = [kind for _, kind in traj.events if kind != "apex"]
    assert contact[0] == "touchdown"
    assert all(a != b for a, b in zip(contact, contact[1:]))
    assert np.max(traj.ys) < p.l0 + ic.v0**2 / (2 * p.g) + p.l0
    # phase at each output sample agrees with the event log
    for j, phase in enumerate(traj.phases):
        t = j * traj.dt
        last = [kind for te, kind in traj.events if te <= t and kind != "apex"]
        expected = "DS" if last and last[-1] == "touchdown" else "SS"
        assert phase == expected


def test_energy_conserved(walker):
    p, ic = walker
    traj = simulate(p, ic, internal_h=1e-3)
    assert traj.energy_drift < 1e-6
    e = np.array([total_energy(s, p) for s in traj.states()])
    assert np.max(np.abs(e - e[0])) / e[0] <= traj.energy_drift * (1 + 1e-9)
    finer = simulate(p, ic, internal_h=5e-4)
    assert traj.energy_drift / finer.energy_drift >= 8.0


def test_equal_ratio_subjects_move_identically():
    ic = InitialConditions(0.05, 0.0)
    a = simulate(GaitParams(60, 8000, 0.7), ic)
    b = simulate(GaitParams(75, 10000, 0.7), ic)
    assert np.max(np.abs(a.xs - b.xs)) < 1e-9
    assert np.max(np.abs(a.ys - b.ys)) < 1e-9


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_scaled_subject_moves_identically(walker, c):
    p, ic = walker
    a = simulate(p, ic)
    b = simulate(p.scaled(c), ic)
    assert max(np.max(np.abs(a.xs - b.xs)), np.max(np.abs(a.ys - b.ys))) < 1e-9


def test_deterministic(walker):
    p, ic = walker
    a, b = simulate(p, ic), simulate(p, ic)
    assert a.xs.tobytes() == b.xs.tobytes() and a.ys.tobytes() == b.ys.tobytes()
    assert a.events == b.events


def test_failures_carry_kind_and_time():
    # too slow to vault over the stance leg
    with pytest.raises(GaitFailure) as exc:
        simulate(GaitParams(70, 9000, 0.7, math.radians(69)), InitialConditions(0, 0, 1.2))
    assert exc.value.kind in ("reversal", "fall") and 0 < exc.value.t < 15
    # apex already below the touchdown surface: no touchdown, falls over
    with pytest.raises(GaitFailure) as exc:
        simulate(GaitParams(70, 9000, 0.7, math.radians(69)), InitialConditions(0, 0.05, 0.9))
    assert exc.value.kind == "fall"


def test_argument_validation(walker):
    p, ic = walker
    with pytest.raises(ValueError):
        simulate(p, ic, duration=0)
    with pytest.raises(ValueError):
        simulate(p, ic, output_dt=0.1, internal_h=0.2)
    with pytest.raises(ValueError):
        InitialConditions(0, 0, -1)
    with pytest.raises(ValueError):
        InitialConditions(0, 0.8, 1).initial_state(p)


def test_csv_export(walker, tmp_path):
    p, ic = walker
    traj = simulate(p, ic)
    path = tmp_path / "traj.csv"
    write_csv(traj, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x", "y", "vx", "vy", "phase"]
    assert len(rows) == 152
    assert {r[5] for r in rows[1:]} == {"SS", "DS"}
    # 17 significant digits reproduce the doubles exactly
    assert np.array([float(r[1]) for r in rows[1:]]).tobytes() == traj.xs.tobytes()
    assert np.array([float(r[2]) for r in rows[1:]]).tobytes() == traj.ys.tobytes()
