"""Newton solver for the elliptic comparison family and its interpolant.

For a torus PDE factor of complex dimension d and parameter s >= 0 the
comparison equation is

    det(e^{-s} g0 + Hess psi) = e^{psi} e^{-d s} c_omega,

solved by damped Newton on F(psi) = log det(e^{-s} g0 + Hess psi) - psi -
log(e^{-d s} c_omega).  Each correction solves the linearization
(Lap_{g_psi} - 1) delta = -F with a preconditioned Krylov iteration; a
positivity failure during a trial update triggers damping, never outright
failure.  Uniqueness of the solution makes a warm start from the previous
parameter in a sweep both safe and cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolation, NewtonDivergence, PositivityLost
from .geometry import (
    MetricField,
    ScalarField,
    complex_hessian,
    integrate,
    positivity_margin,
)
from .linsolve import solve_shifted_laplacian
from .model import ModelSpec
from .reductions import tree_max, tree_min

RESIDUAL_TOL = 1e-10
MAX_NEWTON = 50
KRYLOV_RTOL = 1e-12


@dataclass
class EllipticSolution:
    s: float
    psi: np.ndarray
    residual: float
    iterations: int
    residual_trace: list = field(default_factory=list)

    def quadratic_ratios(self) -> list:
        """kappa_q candidates e_{k+1} / e_k^2 over the convergent tail."""
        out = []
        tr = self.residual_trace
        for a, b in zip(tr[:-1], tr[1:]):
            if b > 1e-15 and a < 1.0:
                out.append(b / a**2)
        return out


def _pde_factor(model: ModelSpec):
    if not model.pde_factors:
        raise ValueError("model has no PDE factor")
    return model.pde_factors[0]


def _residual(grid, g0_mat, psi, s, factor, rhs_log):
    m = MetricField(grid, math.exp(-s) * g0_mat + complex_hessian(ScalarField(grid, psi)).mat)
    me = m.min_eig()
    idx = np.unravel_index(np.argmin(me), me.shape)
    if me[idx] <= 0.0:
        raise PositivityLost(me[idx], idx)
    det = m.det()
    return grid.dealias(np.log(det)) - psi - rhs_log, m


def solve_psi(
    s: float,
    model: ModelSpec,
    initial_guess: np.ndarray | None = None,
    rhs_density: np.ndarray | None = None,
) -> EllipticSolution:
    """Solve the comparison equation at parameter s on the model's PDE factor.

    ``rhs_density`` overrides the default e^{-d s} c_omega right-hand density
    (used for manufactured-solution testing); it multiplies e^{psi}.
    """
    if s < 0:
        raise ValueError("parameter s must be nonnegative")
    factor = _pde_factor(model)
    grid = factor.grid
    g0 = model.background_metric(factor)
    if rhs_density is None:
        rhs_log = factor.dim * (-s) + math.log(factor.c_omega)
        rhs_log = np.full(grid.shape, rhs_log)
    else:
        rhs_log = np.log(np.asarray(rhs_density, dtype=np.float64))

    psi = (
        np.zeros(grid.shape)
        if initial_guess is None
        else np.array(initial_guess, dtype=np.float64).copy()
    )
    trace = []
    f_val, metric = _residual(grid, g0.mat, psi, s, factor, rhs_log)
    res = tree_max(np.abs(f_val))
    trace.append(res)
    for it in range(1, MAX_NEWTON + 1):
        if res <= RESIDUAL_TOL:
            return EllipticSolution(
                s=s, psi=psi, residual=res, iterations=it - 1, residual_trace=trace
            )
        inv = metric.inv()
        delta = solve_shifted_laplacian(
            grid, inv, alpha=1.0, beta=1.0, rhs=-f_val, rtol=KRYLOV_RTOL
        )
        damping = 1.0
        while damping >= 2.0**-20:
            psi_try = psi + damping * delta
            try:
                f_try, m_try = _residual(grid, g0.mat, psi_try, s, factor, rhs_log)
            except PositivityLost:
                damping *= 0.5
                continue
            r_try = tree_max(np.abs(f_try))
            if r_try < res:
                psi, f_val, metric, res = psi_try, f_try, m_try, r_try
                trace.append(res)
                break
            damping *= 0.5
        else:
            raise NewtonDivergence(
                f"damping exhausted at s={s}, residual {res:.3e}"
            )
    raise NewtonDivergence(f"no convergence after {MAX_NEWTON} iterations at s={s}")


def solve_sweep(model: ModelSpec, s_values, rhs_density=None) -> dict:
    """Warm-started sweep over sorted parameters; returns {s: solution}."""
    out = {}
    guess = None
    for s in sorted(s_values):
        sol = solve_psi(s, model, initial_guess=guess, rhs_density=rhs_density)
        out[s] = sol
        guess = sol.psi
    return out


@dataclass
class AprioriReport:
    s: float
    sup_psi: float
    sup_bound: float
    integral_lhs: float
    integral_rhs: float
    integral_rel_err: float


def apriori_bound_check(sol: EllipticSolution, model: ModelSpec) -> AprioriReport:
    """Maximum-principle ceiling and the integrated normalization identity.

    (i)  sup psi <= sup log(reference volume ratio) + 1e-8;
    (ii) int e^{psi} Omega equals the reference class volume, relatively to
         1e-10 (quadrature accuracy).
    """
    factor = _pde_factor(model)
    grid = factor.grid
    g0 = model.background_metric(factor)
    s = sol.s
    # reference ratio omega_s^d e^{d s} / Omega = det(g0) / c_omega on a torus
    ratio = g0.det() / factor.c_omega
    sup_bound = tree_max(np.log(ratio))
    sup_psi = tree_max(sol.psi)
    if sup_psi > sup_bound + 1e-8:
        raise BoundViolation("sup psi exceeds the maximum-principle ceiling",
                             sup_psi - sup_bound)
    lhs = integrate(ScalarField(grid, np.exp(sol.psi) * factor.c_omega))
    rhs = integrate(ScalarField(grid, g0.det()))
    rel = abs(lhs / rhs - 1.0)
    return AprioriReport(
        s=s, sup_psi=sup_psi, sup_bound=sup_bound,
        integral_lhs=lhs, integral_rhs=rhs, integral_rel_err=rel,
    )


def _smooth_sigma(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def bump_rho(t) -> float | np.ndarray:
    """C-infinity transition: 1 on [0, 1/3], 0 on [2/3, 1], monotone between.

    rho(t) = sigma(x) / (sigma(x) + sigma(1-x)) with x = 3*(2/3 - t) clamped
    to [0, 1] and sigma(x) = exp(-1/x) for x > 0, else 0.
    """
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("bump argument must lie in [0, 1]")
    x = np.clip((2.0 / 3.0 - arr) * 3.0, 0.0, 1.0)
    num = _smooth_sigma(x)
    den = num + _smooth_sigma(1.0 - x)
    out = num / den
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def build_interpolant(t: float, solutions: dict) -> np.ndarray:
    """Bump-weighted blend of the two bracketing comparison solutions:

        Phi(., t) = rho(t - m) psi_{m+1} + (1 - rho(t - m)) psi_{m+2}

    for t in [m, m+1], m a nonnegative integer."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = int(math.floor(t + 1e-12))
    frac = min(max(t - m, 0.0), 1.0)
    lo, hi = m + 1, m + 2
    if lo not in solutions or hi not in solutions:
        raise KeyError(f"missing bracketing solutions s={lo}, s={hi}")
    w = bump_rho(frac)
    psi_lo = solutions[lo].psi if isinstance(solutions[lo], EllipticSolution) else solutions[lo]
    psi_hi = solutions[hi].psi if isinstance(solutions[hi], EllipticSolution) else solutions[hi]
    return w * psi_lo + (1.0 - w) * psi_hi
