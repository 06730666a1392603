"""Exact homothety reductions for Einstein and Ricci-flat factors.

On a factor carrying a fixed negatively curved Einstein metric (Ric = -g,
so R = -dim with the complex trace convention) or a fixed flat metric, the
flow acts by a scalar coefficient with closed-form dynamics:

    normalized:    a(t) = 1 + (a0 - 1) e^{-t}   (Einstein)
                   b(t) = b0 e^{-t}             (flat)
    unnormalized:  a(s) = a0 + s,  b(s) = b0.

The factor's potential relative to the reference family is spatially
constant; its closed form (used only for potential-level monitors) is

    c(t) = dim * [log a(t) + e^{-t}((a0-1) log(e^t + a0 - 1) - a0 log a0)],

which solves dc/dt = dim log a - c with c(0) = 0, and u = dc/dt + c =
dim log a(t).  Flat factors have c identically zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OptimalityFailure, ToleranceExceeded
from .model import KIND_NEGATIVE_KE, KIND_RICCI_FLAT
from .stepping import adaptive_step, rk4_advance


def coefficient(factor, t: float, normalized: bool = True) -> float:
    """Homothety coefficient of one exact factor at clock value ``t``."""
    if factor.kind == KIND_NEGATIVE_KE:
        return 1.0 + (factor.a0 - 1.0) * math.exp(-t) if normalized else factor.a0 + t
    if factor.kind == KIND_RICCI_FLAT:
        return factor.a0 * math.exp(-t) if normalized else factor.a0
    raise ValueError("torus PDE factors have no homothety coefficient")


def exact_coefficients(t: float, factors, normalized: bool = True) -> list:
    """Coefficients for every exact factor in model order."""
    return [coefficient(f, t, normalized) for f in factors if not f.is_pde]


def trace_chi_exact(t: float, factors, normalized: bool = True) -> float:
    """tr_omega(chi): each Einstein factor contributes dim / coefficient."""
    out = 0.0
    for f in factors:
        if f.kind == KIND_NEGATIVE_KE:
            out += f.dim / coefficient(f, t, normalized)
    return out


def scalar_exact(t: float, factors, normalized: bool = True) -> float:
    """Scalar curvature of the exact part: -dim/a per Einstein factor."""
    return -trace_chi_exact(t, factors, normalized)


def _ke_potential(dim: int, a0: float, t: float) -> tuple:
    # c(t), dc/dt, u on the normalized clock
    a = 1.0 + (a0 - 1.0) * math.exp(-t)
    log_a = math.log(a)
    # log(e^t + a0 - 1) = t + log a(t)
    c = dim * (log_a + math.exp(-t) * ((a0 - 1.0) * (t + log_a) - a0 * math.log(a0)))
    u = dim * log_a
    return c, u - c, u


def exact_potential_parts(t: float, factors, normalized: bool = True) -> tuple:
    """Spatially constant (phi, phi_rate, u) contributions of exact factors.

    On the unnormalized clock the potential picks up the (1+s) rescaling and
    the rate slot holds d(phi~)/ds which coincides with u.
    """
    phi = rate = u = 0.0
    for f in factors:
        if f.is_pde or f.kind == KIND_RICCI_FLAT:
            continue
        if normalized:
            c, cdot, uf = _ke_potential(f.dim, f.a0, t)
        else:
            tn = math.log1p(t)
            c_n, _, uf = _ke_potential(f.dim, f.a0, tn)
            c = (1.0 + t) * c_n
            cdot = uf
        phi += c
        rate += cdot
        u += uf
    return phi, rate, u


def scalar_total(t: float, factors, normalized: bool = True, pde_r_fields=None):
    """Total scalar curvature: exact constant plus optional PDE factor fields."""
    const = scalar_exact(t, factors, normalized)
    return (const, list(pde_r_fields) if pde_r_fields is not None else [])


@dataclass
class OptimalityReport:
    s_values: np.ndarray
    m_values: np.ndarray
    c_lower: float
    c_upper: float


def optimality_check(factors, s_max: float, num: int = 200) -> OptimalityReport:
    """Floor check for (1+s) * max |R| along the unnormalized flow.

    Requires at least one Einstein factor.  Samples a log-spaced s grid and
    reports the observed band [c, C]; raises OptimalityFailure if the band
    floor degenerates towards zero inside the sampled range.
    """
    if not any(f.kind == KIND_NEGATIVE_KE for f in factors):
        raise ValueError("optimality check needs at least one Einstein factor")
    s = np.concatenate([[0.0], np.logspace(-2, math.log10(s_max), num - 1)])
    m = np.array([(1.0 + si) * abs(scalar_exact(si, factors, normalized=False)) for si in s])
    c_lower = float(np.min(m))
    c_upper = float(np.max(m))
    if c_lower <= 1e-8 or m[-1] <= 1e-8:
        raise OptimalityFailure(
            f"rescaled curvature floor degenerated: min {c_lower:.3e}"
        )
    return OptimalityReport(s_values=s, m_values=m, c_lower=c_lower, c_upper=c_upper)


@dataclass
class OdeValidationReport:
    t_end: float
    sup_error: float
    steps: int


def _coefficient_rhs(factors, normalized: bool):
    kinds = [f.kind for f in factors if not f.is_pde]

    def rhs(t, ys):
        out = []
        for kind, y in zip(kinds, ys):
            if kind == KIND_NEGATIVE_KE:
                out.append(1.0 - y if normalized else np.ones_like(y))
            else:
                out.append(-y if normalized else np.zeros_like(y))
        return out

    return rhs


def ode_vs_closed_form(
    factors, t_end: float, normalized: bool = True, tol: float = 1e-12
) -> OdeValidationReport:
    """Integrate the coefficient ODEs with the flow's RK machinery and compare
    against the closed forms; the sup error over all accepted times must stay
    within 1e-10 out to t_end = 20."""
    exacts = [f for f in factors if not f.is_pde]
    if not exacts:
        raise ValueError("needs exact factors")
    rhs = _coefficient_rhs(factors, normalized)

    def one_step(t, ys, h):
        return rk4_advance(rhs, t, ys, h)

    t = 0.0
    ys = [np.array([f.a0]) for f in exacts]
    h = 1e-3
    sup_err = 0.0
    steps = 0
    while t < t_end - 1e-14:
        t, ys, _, h, _ = adaptive_step(
            one_step, 4, t, ys, h, tol, dt_max=0.5, t_cap=t_end
        )
        steps += 1
        for f, y in zip(exacts, ys):
            sup_err = max(sup_err, abs(float(y[0]) - coefficient(f, t, normalized)))
    if sup_err > 1e-10:
        raise ToleranceExceeded(
            f"coefficient ODE error {sup_err:.3e} exceeds 1e-10 at t_end={t_end}"
        )
    return OdeValidationReport(t_end=t_end, sup_error=sup_err, steps=steps)
