"""Compiled inner loop for the compliant-leg walker.

Everything here works on plain floats so numba can compile it.  The public,
typed API lives in :mod:`slipid.dynamics` and :mod:`slipid.simulator`; those
modules call into the functions below so that there is exactly one
implementation of the equations of motion.

State layout used throughout: ``(x, y, vx, vy)`` plus a phase encoded as
``n_legs`` (1 = single support, 2 = double support), ``fa`` (stance foot in
single support, trailing foot in double support) and ``fb`` (leading foot,
ignored in single support).  Dynamics depend on ``rho = k / m`` only.
"""

import math

import numpy as np
from numba import njit

# status codes returned by simulate_kernel
OK = 0
FALL = 1
REVERSAL = 2
BLOWUP = 3
EVENT_OVERFLOW = 4

# event kinds
TOUCHDOWN = 0
TAKEOFF = 1
APEX = 2

# crossing functions used by the bisection, all oriented "pre > 0, post <= 0"
_F_TOUCHDOWN = 0
_F_TAKEOFF = 1
_F_APEX = 2


@njit(cache=True)
def accel(x, y, n_legs, fa, fb, rho, l0, g):
    lx = x - fa
    length = math.sqrt(lx * lx + y * y)
    c = rho * (l0 / length - 1.0)
    ax = c * lx
    ay = c * y
    if n_legs == 2:
        lx = x - fb
        length = math.sqrt(lx * lx + y * y)
        c = rho * (l0 / length - 1.0)
        ax += c * lx
        ay += c * y
    return ax, ay - g


@njit(cache=True)
def rk4(x, y, vx, vy, n_legs, fa, fb, rho, l0, g, h):
    a1x, a1y = accel(x, y, n_legs, fa, fb, rho, l0, g)
    hh = 0.5 * h
    x2 = x + hh * vx
    y2 = y + hh * vy
    vx2 = vx + hh * a1x
    vy2 = vy + hh * a1y
    a2x, a2y = accel(x2, y2, n_legs, fa, fb, rho, l0, g)
    x3 = x + hh * vx2
    y3 = y + hh * vy2
    vx3 = vx + hh * a2x
    vy3 = vy + hh * a2y
    a3x, a3y = accel(x3, y3, n_legs, fa, fb, rho, l0, g)
    x4 = x + h * vx3
    y4 = y + h * vy3
    vx4 = vx + h * a3x
    vy4 = vy + h * a3y
    a4x, a4y = accel(x4, y4, n_legs, fa, fb, rho, l0, g)
    s = h / 6.0
    return (
        x + s * (vx + 2.0 * vx2 + 2.0 * vx3 + vx4),
        y + s * (vy + 2.0 * vy2 + 2.0 * vy3 + vy4),
        vx + s * (a1x + 2.0 * a2x + 2.0 * a3x + a4x),
        vy + s * (a1y + 2.0 * a2y + 2.0 * a3y + a4y),
    )


@njit(cache=True)
def specific_energy(x, y, vx, vy, n_legs, fa, fb, rho, l0, g):
    """Mechanical energy per unit mass."""
    e = 0.5 * (vx * vx + vy * vy) + g * y
    d = l0 - math.sqrt((x - fa) ** 2 + y * y)
    e += 0.5 * rho * d * d
    if n_legs == 2:
        d = l0 - math.sqrt((x - fb) ** 2 + y * y)
        e += 0.5 * rho * d * d
    return e


@njit(cache=True)
def _crossing(kind, x, y, vy, fa, l0, y_td):
    if kind == _F_TOUCHDOWN:
        return y - y_td
    if kind == _F_TAKEOFF:
        return l0 - math.sqrt((x - fa) ** 2 + y * y)
    return vy


@njit(cache=True)
def bisect(kind, x, y, vx, vy, n_legs, fa, fb, rho, l0, g, y_td, h, tol):
    """Locate a crossing inside a step of length ``h``.

    The crossing function is positive at the start of the step and
    non-positive at ``h``.  Returns the step fraction of the post-crossing
    bracket end together with the state there.
    """
    lo = 0.0
    hi = 1.0
    bx, by, bvx, bvy = rk4(x, y, vx, vy, n_legs, fa, fb, rho, l0, g, h)
    while (hi - lo) * h >= tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        mx, my, mvx, mvy = rk4(x, y, vx, vy, n_legs, fa, fb, rho, l0, g, mid * h)
        if _crossing(kind, mx, my, mvy, fa, l0, y_td) > 0.0:
            lo = mid
        else:
            hi = mid
            bx, by, bvx, bvy = mx, my, mvx, mvy
    return hi, bx, by, bvx, bvy


@njit(cache=True)
def _status_of(x, y, vx, vy):
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(vx) and math.isfinite(vy)):
        return BLOWUP
    if y <= 0.0:
        return FALL
    if vx <= 0.0:
        return REVERSAL
    return OK


@njit(cache=True)
def simulate_kernel(rho, l0, alpha0, g, x0, y0, v0, n_out, dt, h, tol, max_events):
    """Integrate one gait.

    Returns ``(status, fail_time, samples, ev_t, ev_kind, n_events, drift)``
    where ``samples`` has one row per output instant holding
    ``(x, y, vx, vy, n_legs, fa, fb)``.
    """
    samples = np.full((n_out, 7), np.nan)
    ev_t = np.zeros(max_events)
    ev_kind = np.zeros(max_events, dtype=np.int64)
    n_ev = 0

    y_td = l0 * math.sin(alpha0)
    reach = l0 * math.cos(alpha0)

    t = 0.0
    x, y, vx, vy = x0, y0, v0, 0.0
    n_legs = 1
    fa = x0
    fb = 0.0

    e0 = specific_energy(x, y, vx, vy, n_legs, fa, fb, rho, l0, g)
    drift = 0.0

    samples[0, 0] = x
    samples[0, 1] = y
    samples[0, 2] = vx
    samples[0, 3] = vy
    samples[0, 4] = n_legs
    samples[0, 5] = fa
    samples[0, 6] = fb
    j = 1
    while j < n_out:
        t_target = j * dt
        remaining = t_target - t
        full = remaining <= h * (1.0 + 1e-9)
        hs = remaining if full else h
        nx, ny, nvx, nvy = rk4(x, y, vx, vy, n_legs, fa, fb, rho, l0, g, hs)

        # at most one phase event per step; the step is cut at the event
        kind = -1
        if n_legs == 1:
            if y - y_td > 0.0 and ny - y_td <= 0.0 and nvy < 0.0:
                kind = _F_TOUCHDOWN
        else:
            if _crossing(_F_TAKEOFF, x, y, vy, fa, l0, y_td) > 0.0 and (
                _crossing(_F_TAKEOFF, nx, ny, nvy, fa, l0, y_td) <= 0.0
            ):
                kind = _F_TAKEOFF

        frac = 1.0
        if kind >= 0:
            frac, nx, ny, nvx, nvy = bisect(kind, x, y, vx, vy, n_legs, fa, fb, rho, l0, g, y_td, hs, tol)

        status = _status_of(nx, ny, nvx, nvy)
        if status != OK:
            return status, t + frac * hs, samples, ev_t, ev_kind, n_ev, drift

        if n_legs == 1 and vy > 0.0 and nvy <= 0.0:
            if n_ev >= max_events:
                return EVENT_OVERFLOW, t, samples, ev_t, ev_kind, n_ev, drift
            fa_apex, _, _, _, _ = bisect(_F_APEX, x, y, vx, vy, n_legs, fa, fb, rho, l0, g, y_td, frac * hs, tol)
            ev_t[n_ev] = t + fa_apex * frac * hs
            ev_kind[n_ev] = APEX
            n_ev += 1

        reached = full and frac == 1.0
        if reached:
            t = t_target
        else:
            t = t + frac * hs
        x, y, vx, vy = nx, ny, nvx, nvy

        if kind >= 0:
            if n_ev >= max_events:
                return EVENT_OVERFLOW, t, samples, ev_t, ev_kind, n_ev, drift
            ev_t[n_ev] = t
            if kind == _F_TOUCHDOWN:
                n_legs = 2
                fb = x + reach
                ev_kind[n_ev] = TOUCHDOWN
            else:
                n_legs = 1
                fa = fb
                fb = 0.0
                ev_kind[n_ev] = TAKEOFF
            n_ev += 1

        e = specific_energy(x, y, vx, vy, n_legs, fa, fb, rho, l0, g)
        dev = abs(e - e0) / abs(e0)
        if dev > drift:
            drift = dev

        if reached:
            samples[j, 0] = x
            samples[j, 1] = y
            samples[j, 2] = vx
            samples[j, 3] = vy
            samples[j, 4] = n_legs
            samples[j, 5] = fa
            samples[j, 6] = fb
            j += 1

    return OK, t, samples, ev_t, ev_kind, n_ev, drift
