"""Three-phase compliant-leg (bipedal spring-mass) walking dynamics.

Global frame: ``x`` is the CoM horizontal position, ``y`` its height, and
every stance leg is a massless linear spring from a ground foot point
``(fp, 0)`` to the CoM.  Each leg pulls or pushes along its own axis with
coefficient ``k * (l0 / |leg| - 1)``, so the CoM acceleration is

    a = sum_i (c_i / m) * (x - fp_i, y) - (0, g)

over the one or two legs in contact.  Dividing by ``m`` leaves only
``rho = k / m`` in the equations, which is why ``m`` and ``k`` cannot be
told apart from CoM motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

from . import _kernel

DEFAULT_ALPHA0 = math.radians(60.0)
DEFAULT_G = 10.0


class SingularLegError(ValueError):
    """A stance leg has zero length."""


class TransitionError(ValueError):
    """A phase transition was requested in a state that does not allow it."""


@dataclass(frozen=True)
class GaitParams:
    m: float
    k: float
    l0: float
    alpha0: float = DEFAULT_ALPHA0
    g: float = DEFAULT_G

    def __post_init__(self):
        for name in ("m", "k", "l0", "g"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not 0.0 < self.alpha0 < 0.5 * math.pi:
            raise ValueError(f"alpha0 must lie in (0, pi/2), got {self.alpha0!r}")

    @property
    def rho(self) -> float:
        return self.k / self.m

    def reduced(self) -> ReducedParams:
        return ReducedParams(rho=self.rho, l0=self.l0)

    def scaled(self, c: float) -> GaitParams:
        """Same subject with mass and stiffness both multiplied by ``c``."""
        return replace(self, m=c * self.m, k=c * self.k)


@dataclass(frozen=True)
class ReducedParams:
    """The identifiable combination: stiffness-to-mass ratio and rest length."""

    rho: float
    l0: float

    def __post_init__(self):
        if not (self.rho > 0 and self.l0 > 0):
            raise ValueError(f"rho and l0 must be positive, got {self.rho!r}, {self.l0!r}")


@dataclass(frozen=True)
class SingleSupport:
    fp: float

    @property
    def feet(self) -> tuple[float, ...]:
        return (self.fp,)

    @property
    def tag(self) -> str:
        return "SS"


@dataclass(frozen=True)
class DoubleSupport:
    fp_back: float
    fp_front: float

    def __post_init__(self):
        if not self.fp_back < self.fp_front:
            raise ValueError(f"fp_back must be behind fp_front, got {self.fp_back!r} >= {self.fp_front!r}")

    @property
    def feet(self) -> tuple[float, ...]:
        return (self.fp_back, self.fp_front)

    @property
    def step_length(self) -> float:
        return self.fp_front - self.fp_back

    @property
    def tag(self) -> str:
        return "DS"


Phase = Union[SingleSupport, DoubleSupport]


@dataclass(frozen=True)
class SimState:
    t: float
    x: float
    y: float
    vx: float
    vy: float
    phase: Phase

    def leg_lengths(self) -> tuple[float, ...]:
        return tuple(math.hypot(self.x - fp, self.y) for fp in self.phase.feet)


def encode_phase(phase: Phase) -> tuple[int, float, float]:
    """Phase as the ``(n_legs, fa, fb)`` triple used by the compiled kernel."""
    if isinstance(phase, SingleSupport):
        return 1, phase.fp, 0.0
    return 2, phase.fp_back, phase.fp_front


def decode_phase(n_legs: int, fa: float, fb: float) -> Phase:
    if int(n_legs) == 1:
        return SingleSupport(float(fa))
    return DoubleSupport(float(fa), float(fb))


def spring_coeff(k: float, l0: float, leg: tuple[float, float]) -> float:
    """Leg force per unit extension-vector length, ``k * (l0/|leg| - 1)``.

    Positive when the leg is compressed.  ``leg`` points from the foot to
    the CoM.
    """
    length = math.hypot(leg[0], leg[1])
    if length == 0.0:
        raise SingularLegError("stance leg has zero length")
    return k * (l0 / length - 1.0)


def derivatives(s: SimState, p: GaitParams) -> tuple[float, float]:
    """CoM acceleration ``(ax, ay)`` for the current phase."""
    for length in s.leg_lengths():
        if length == 0.0:
            raise SingularLegError(f"stance leg has zero length at t={s.t}")
    n_legs, fa, fb = encode_phase(s.phase)
    return _kernel.accel(s.x, s.y, n_legs, fa, fb, p.rho, p.l0, p.g)


def touchdown_condition(s: SimState, p: GaitParams) -> float:
    """Height above the touchdown surface ``y = l0 sin(alpha0)``.

    Touchdown fires where this crosses zero on the way down (``vy < 0``).
    """
    return s.y - p.l0 * math.sin(p.alpha0)


def apply_touchdown(s: SimState, p: GaitParams, atol: float = 1e-8) -> SimState:
    if not isinstance(s.phase, SingleSupport):
        raise TransitionError("touchdown requires single support")
    if s.vy >= 0.0:
        raise TransitionError(f"touchdown requires a descending CoM, got vy={s.vy!r}")
    if abs(touchdown_condition(s, p)) > atol:
        raise TransitionError(f"state is not on the touchdown surface (residual {touchdown_condition(s, p):.3g} m)")
    front = s.x + p.l0 * math.cos(p.alpha0)
    return replace(s, phase=DoubleSupport(s.phase.fp, front))


def takeoff_condition(s: SimState, p: GaitParams) -> float:
    """Trailing-leg length minus rest length; takeoff fires on an upward crossing."""
    if not isinstance(s.phase, DoubleSupport):
        raise TransitionError("takeoff condition is only defined in double support")
    return math.hypot(s.x - s.phase.fp_back, s.y) - p.l0


def apply_takeoff(s: SimState, p: GaitParams | None = None, atol: float = 1e-8) -> SimState:
    """Drop the trailing leg.

    When ``p`` is given, the trailing leg must be at rest length within ``atol``.
    """
    if not isinstance(s.phase, DoubleSupport):
        raise TransitionError("takeoff requires double support")
    if p is not None and abs(takeoff_condition(s, p)) > atol:
        raise TransitionError(f"trailing leg is not at rest length (residual {takeoff_condition(s, p):.3g} m)")
    return replace(s, phase=SingleSupport(s.phase.fp_front))


def total_energy(s: SimState, p: GaitParams) -> float:
    """Kinetic + gravitational + spring energy in joules."""
    e = 0.5 * p.m * (s.vx**2 + s.vy**2) + p.m * p.g * s.y
    for length in s.leg_lengths():
        e += 0.5 * p.k * (p.l0 - length) ** 2
    return e
