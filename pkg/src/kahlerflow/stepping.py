"""Adaptive one-step time integration with step-doubling error control.

The driver is agnostic to the state representation (a list of float arrays)
and to the one-step kernel.  Error is estimated by Richardson comparison of
one full step against two half steps; the more accurate two-half-step result
is the one accepted.  Kernels signal an unusable trial step by raising one of
the recoverable errors, which the driver answers by halving the step.
"""

from __future__ import annotations

import numpy as np

from .errors import LinearSolveFailure, NewtonDivergence, PositivityLost, StepFailure

DT_MIN = 1e-12

_RECOVERABLE = (PositivityLost, LinearSolveFailure, NewtonDivergence, FloatingPointError)


def rk4_advance(rhs, t, ys, h):
    """Classical 4-stage explicit Runge-Kutta step."""
    k1 = rhs(t, ys)
    k2 = rhs(t + 0.5 * h, [y + 0.5 * h * k for y, k in zip(ys, k1)])
    k3 = rhs(t + 0.5 * h, [y + 0.5 * h * k for y, k in zip(ys, k2)])
    k4 = rhs(t + h, [y + h * k for y, k in zip(ys, k3)])
    return [
        y + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for y, a, b, c, d in zip(ys, k1, k2, k3, k4)
    ]


def _sup_diff(ya, yb) -> float:
    return max(
        (float(np.max(np.abs(a - b))) if a.size else 0.0 for a, b in zip(ya, yb)),
        default=0.0,
    )


def adaptive_step(one_step, order, t, ys, h_try, tol, dt_max, t_cap=None, guard=None):
    """Advance one accepted step.

    Parameters
    ----------
    one_step : callable(t, ys, h) -> ys'
        Single-step kernel of the given order; may raise a recoverable error.
    order : int
        Classical order p; the doubling estimate divides by 2**p - 1.
    guard : callable(t, ys) -> bool, optional
        Post-step admissibility check (positivity margin); a False verdict
        rejects and halves.

    Returns (t_new, ys_new, h_used, h_next, est_error).
    """
    denom = 2.0**order - 1.0
    h = min(h_try, dt_max)
    if t_cap is not None:
        h = min(h, t_cap - t)
    if h <= 0:
        raise StepFailure(f"no room to step at t={t}")
    while True:
        if h < DT_MIN:
            raise StepFailure(
                f"time step underflow at t={t:.6g}: stiffness blow-up or "
                "loss of positivity"
            )
        try:
            y_full = one_step(t, ys, h)
            y_half = one_step(t + 0.5 * h, one_step(t, ys, 0.5 * h), 0.5 * h)
        except _RECOVERABLE:
            h *= 0.5
            continue
        est = _sup_diff(y_full, y_half) / denom
        if not np.isfinite(est):
            h *= 0.5
            continue
        if guard is not None and not guard(t + h, y_half):
            h *= 0.5
            continue
        if est > tol:
            shrink = max(0.1, 0.9 * (tol / est) ** (1.0 / (order + 1)))
            h *= min(shrink, 0.9)
            continue
        if est > 0:
            grow = min(5.0, 0.9 * (tol / est) ** (1.0 / (order + 1)))
            h_next = h * max(1.0, grow)
        else:
            h_next = h * 5.0
        # local extrapolation: the doubling estimate cancels the leading
        # error term of the half-step result
        y_acc = [yh + (yh - yf) / denom for yf, yh in zip(y_full, y_half)]
        return t + h, y_acc, h, min(h_next, dt_max), est
