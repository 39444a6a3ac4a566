"""Fixed-step RK4 integration of the walker with event localization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _kernel
from .dynamics import (
    GaitParams,
    SimState,
    SingleSupport,
    decode_phase,
    encode_phase,
)

DEFAULT_V0 = 0.9
DEFAULT_DURATION = 15.0
DEFAULT_OUTPUT_DT = 0.1
DEFAULT_INTERNAL_H = 1e-3
DEFAULT_EVENT_TOL = 1e-12
MAX_EVENTS = 20000

EVENT_NAMES = {_kernel.TOUCHDOWN: "touchdown", _kernel.TAKEOFF: "takeoff", _kernel.APEX: "apex"}


class NumericalBlowupError(ArithmeticError):
    pass


class BracketError(ValueError):
    """The event condition does not change sign over the bracket."""


class GaitFailure(Exception):
    """The simulated motion stopped being a walking gait.

    ``kind`` is one of ``"fall"``, ``"reversal"``, ``"blowup"`` or
    ``"event-overflow"``; ``t`` is the time at which it was detected.
    """

    def __init__(self, kind: str, t: float):
        super().__init__(f"gait failure ({kind}) at t={t:.6g} s")
        self.kind = kind
        self.t = t


_FAILURE_KINDS = {
    _kernel.FALL: "fall",
    _kernel.REVERSAL: "reversal",
    _kernel.BLOWUP: "blowup",
    _kernel.EVENT_OVERFLOW: "event-overflow",
}


@dataclass(frozen=True)
class InitialConditions:
    """Start at apex above a vertical stance leg.

    ``y_offset`` is the spring compression at apex, so ``y(0) = l0 - y_offset``.
    """

    x0: float = 0.0
    y_offset: float = 0.0
    v0: float = DEFAULT_V0

    def __post_init__(self):
        if self.v0 <= 0:
            raise ValueError(f"v0 must be positive, got {self.v0!r}")
        if self.y_offset < 0:
            raise ValueError(f"y_offset must be non-negative, got {self.y_offset!r}")

    def initial_state(self, p: GaitParams) -> SimState:
        if not self.y_offset < p.l0:
            raise ValueError(f"y_offset {self.y_offset!r} must be below l0 {p.l0!r}")
        return SimState(0.0, self.x0, p.l0 - self.y_offset, self.v0, 0.0, SingleSupport(self.x0))


@dataclass
class Trajectory:
    dt: float
    xs: np.ndarray
    ys: np.ndarray
    params: GaitParams
    init: InitialConditions
    events: list[tuple[float, str]]
    energy_drift: float
    # per-sample (x, y, vx, vy, n_legs, fp_a, fp_b) as produced by the kernel
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.xs)) * self.dt

    @property
    def vxs(self) -> np.ndarray:
        return self.samples[:, 2]

    @property
    def vys(self) -> np.ndarray:
        return self.samples[:, 3]

    @property
    def phases(self) -> list[str]:
        return ["SS" if n == 1 else "DS" for n in self.samples[:, 4]]

    def states(self) -> list[SimState]:
        return [
            SimState(j * self.dt, *map(float, row[:4]), decode_phase(row[4], row[5], row[6]))
            for j, row in enumerate(self.samples)
        ]

    def __len__(self):
        return len(self.xs)


def n_samples(duration: float, dt: float) -> int:
    return int(math.floor(duration / dt + 1e-9)) + 1


def rk4_step(s: SimState, p: GaitParams, h: float) -> SimState:
    """One classical RK4 step with the phase held fixed."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    n_legs, fa, fb = encode_phase(s.phase)
    x, y, vx, vy = _kernel.rk4(s.x, s.y, s.vx, s.vy, n_legs, fa, fb, p.rho, p.l0, p.g, h)
    if not all(math.isfinite(v) for v in (x, y, vx, vy)):
        raise NumericalBlowupError(f"non-finite state after step at t={s.t}")
    return replace(s, t=s.t + h, x=x, y=y, vx=vx, vy=vy)


def locate_event(
    s: SimState,
    p: GaitParams,
    h: float,
    condition: Callable[[SimState, GaitParams], float],
    direction: str = "down",
    tol: float = DEFAULT_EVENT_TOL,
) -> tuple[float, SimState]:
    """Bisect the step fraction until the time bracket is below ``tol``.

    ``direction="down"`` looks for ``condition`` going from positive to
    non-positive, ``"up"`` for negative to non-negative.  The returned state
    is on the far side of the crossing, integrated from ``s`` in one partial
    RK4 step.
    """
    sign = {"down": 1.0, "up": -1.0}[direction]

    def f(state):
        return sign * condition(state, p)

    end = rk4_step(s, p, h)
    if not (f(s) > 0.0 and f(end) <= 0.0):
        raise BracketError(f"no {direction}ward crossing in [{s.t}, {s.t + h}]")
    lo, hi = 0.0, 1.0
    best = end
    while (hi - lo) * h >= tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        trial = rk4_step(s, p, mid * h)
        if f(trial) > 0.0:
            lo = mid
        else:
            hi, best = mid, trial
    return best.t, best


def simulate(
    p: GaitParams,
    ic: InitialConditions,
    duration: float = DEFAULT_DURATION,
    output_dt: float = DEFAULT_OUTPUT_DT,
    internal_h: float = DEFAULT_INTERNAL_H,
    event_tol: float = DEFAULT_EVENT_TOL,
) -> Trajectory:
    """Simulate a walk from apex and sample it every ``output_dt`` seconds.

    Raises :class:`GaitFailure` when the CoM reaches the ground, stops moving
    forward, or the state stops being finite.
    """
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    if not 0 < internal_h <= output_dt:
        raise ValueError(f"need 0 < internal_h <= output_dt, got {internal_h!r}, {output_dt!r}")
    s0 = ic.initial_state(p)
    n_out = n_samples(duration, output_dt)
    status, t_end, samples, ev_t, ev_kind, n_ev, drift = _kernel.simulate_kernel(
        p.rho, p.l0, p.alpha0, p.g, s0.x, s0.y, s0.vx,
        n_out, output_dt, internal_h, event_tol, MAX_EVENTS,
    )
    if status != _kernel.OK:
        raise GaitFailure(_FAILURE_KINDS[status], float(t_end))
    events = [(float(ev_t[i]), EVENT_NAMES[int(ev_kind[i])]) for i in range(n_ev)]
    return Trajectory(
        dt=output_dt,
        xs=samples[:, 0].copy(),
        ys=samples[:, 1].copy(),
        params=p,
        init=ic,
        events=events,
        energy_drift=float(drift),
        samples=samples,
    )


def write_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "vx", "vy", "phase"])
        phases = traj.phases
        for j in range(len(traj)):
            w.writerow([
                f"{j * traj.dt:.17g}", f"{traj.xs[j]:.17g}", f"{traj.ys[j]:.17g}",
                f"{traj.vxs[j]:.17g}", f"{traj.vys[j]:.17g}", phases[j],
            ])
