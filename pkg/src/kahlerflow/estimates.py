"""Monitor quantities: u = phi_rate + phi, curvature via the trace identity,
the bounded functionals, and stabilization verdicts over trajectories.

Exact-factor contributions to potential-level quantities are spatially
constant and bookkept separately from the grid fields, so spatial derivatives
of u only ever see the PDE factor fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import homothety
from .errors import InequalityViolation
from .geometry import (
    MetricField,
    ScalarField,
    complex_hessian,
    gradient_norm_g,
    integrate,
    laplacian_g,
    positivity_margin,
    scalar_curvature_direct,
)
from .model import KIND_NEGATIVE_KE, ModelSpec, MonitorRecord
from .reductions import tree_max, tree_min


def evolving_metric(g0: MetricField, phi: np.ndarray, t: float, normalized: bool) -> MetricField:
    """Metric at clock value t: e^{-t} g0 + Hess(phi) (normalized clock) or
    g0 + Hess(phi) (unnormalized clock)."""
    hess = complex_hessian(ScalarField(g0.grid, phi))
    scale = math.exp(-t) if normalized else 1.0
    return MetricField(g0.grid, scale * g0.mat + hess.mat)


def state_metrics(state, model: ModelSpec, normalized: bool = True) -> list:
    return [
        evolving_metric(g0, phi, state.t, normalized)
        for g0, phi in zip(model.background_metrics(), state.phis)
    ]


def u_field(state, model: ModelSpec, normalized: bool = True):
    """Per-PDE-factor u fields plus the exact-factor constant offset.

    On the normalized clock u = phi_rate + phi; on the unnormalized clock the
    rate field itself plays that role.
    """
    if state.phidots is None and state.phis:
        raise ValueError("phi_rate cache is empty; evaluate the flow rhs first")
    if normalized:
        fields = [phi + pd for phi, pd in zip(state.phis, state.phidots or [])]
    else:
        fields = [pd.copy() for pd in (state.phidots or [])]
    _, _, u_const = homothety.exact_potential_parts(state.t, model.factors, normalized)
    return fields, u_const


def choose_A(u) -> float:
    """Bound shift A = floor(sup u) + 2, guaranteeing A - u >= 1."""
    if isinstance(u, ScalarField):
        sup_u = tree_max(u.values)
    elif isinstance(u, np.ndarray):
        sup_u = tree_max(u)
    else:
        sup_u = float(u)
    return float(math.floor(sup_u) + 2.0)


def trace_chi(state, model: ModelSpec, normalized: bool = True) -> float:
    """tr_omega(chi): zero from torus factors, dim/coefficient from Einstein
    factors; spatially constant for every supported model."""
    return homothety.trace_chi_exact(state.t, model.factors, normalized)


def scalar_from_u(state, model: ModelSpec, normalized: bool = True):
    """Scalar curvature via R = -Lap u - tr_omega(chi).

    Returns (per-PDE-factor fields, constant part); the total at a point is
    the sum of the factor fields plus the constant.
    """
    fields, _ = u_field(state, model, normalized)
    metrics = state_metrics(state, model, normalized)
    r_fields = [
        -laplacian_g(ScalarField(g.grid, u), g).values for u, g in zip(fields, metrics)
    ]
    return r_fields, -trace_chi(state, model, normalized)


def scalex_cross_error(state, model: ModelSpec, normalized: bool = True) -> float:
    """sup |R_from_u - R_direct| over PDE factors (exact parts cancel)."""
    fields, _ = u_field(state, model, normalized)
    metrics = state_metrics(state, model, normalized)
    worst = 0.0
    for u, g in zip(fields, metrics):
        r_u = -laplacian_g(ScalarField(g.grid, u), g).values
        r_d = scalar_curvature_direct(g).values
        worst = max(worst, tree_max(np.abs(r_u - r_d)))
    return worst


def volume_identity_error(state, model: ModelSpec, normalized: bool = True) -> float:
    """Relative defect of the integrated flow identity per PDE factor.

    The evolving volume measure integrates to the class volume, so
    int e^{phi_rate + phi} * Omega equals int det(g0) factor-wise on either
    clock; returns the worst relative deviation.
    """
    fields, _ = u_field(state, model, normalized)
    worst = 0.0
    for factor, g0, u in zip(model.pde_factors, model.background_metrics(), fields):
        lhs = integrate(ScalarField(factor.grid, np.exp(u) * factor.c_omega))
        rhs = integrate(ScalarField(factor.grid, g0.det()))
        worst = max(worst, abs(lhs / rhs - 1.0))
    return worst


def functional_suite(
    state,
    model: ModelSpec,
    A: float | None = None,
    interp: np.ndarray | None = None,
    normalized: bool = True,
    workers: int = 1,
) -> MonitorRecord:
    """Evaluate every monitor at the state's clock value.

    ``interp`` is the elliptic comparison field on the (single) PDE factor
    grid; when omitted the barrier gap is marked absent.  ``A`` is reused
    when it still satisfies A - sup u >= 1, otherwise recomputed.
    """
    t = state.t
    factors = model.factors
    phi_c, rate_c, u_c = homothety.exact_potential_parts(t, factors, normalized)
    trchi = homothety.trace_chi_exact(t, factors, normalized)

    u_fields, _ = u_field(state, model, normalized)
    metrics = state_metrics(state, model, normalized)

    sup_phi = phi_c + sum(tree_max(p) for p in state.phis)
    inf_phi = phi_c + sum(tree_min(p) for p in state.phis)
    sup_rate = rate_c + sum(tree_max(p) for p in (state.phidots or []))
    inf_rate = rate_c + sum(tree_min(p) for p in (state.phidots or []))
    sup_u = u_c + sum(tree_max(u) for u in u_fields)
    inf_u = u_c + sum(tree_min(u) for u in u_fields)

    grad_fields = [
        gradient_norm_g(ScalarField(g.grid, u), g).values for u, g in zip(u_fields, metrics)
    ]
    lap_fields = [
        laplacian_g(ScalarField(g.grid, u), g).values for u, g in zip(u_fields, metrics)
    ]
    sup_grad = sum(tree_max(gf) for gf in grad_fields) if grad_fields else 0.0
    sup_neg_lap = sum(tree_max(-lf) for lf in lap_fields) if lap_fields else 0.0
    sup_r = sum(tree_max(-lf) for lf in lap_fields) - trchi
    inf_r = sum(tree_min(-lf) for lf in lap_fields) - trchi

    margins = [positivity_margin(g) for g in metrics]
    margins += [
        homothety.coefficient(f, t, normalized) for f in model.exact_factors
    ]
    margin = min(margins)

    sup_h_grad = sup_k = sup_h_schwarz = inf_m_vol = None
    a_used = None
    if normalized:
        a_used = A
        if a_used is None or a_used - sup_u < 1.0:
            a_used = choose_A(sup_u)
        npde = len(state.phis)
        if npde == 0:
            sup_h_grad = trchi
            sup_k = 0.0
        elif npde == 1:
            denom = a_used - (u_fields[0] + u_c)
            sup_h_grad = tree_max(grad_fields[0] / denom) + trchi
            sup_k = tree_max((-lap_fields[0] + 4.0 * grad_fields[0]) / denom)
        if trchi > 0.0:
            if npde == 0:
                sup_h_schwarz = math.log(trchi) - a_used * inf_phi
            elif npde == 1:
                field = math.log(trchi) - a_used * (state.phis[0] + phi_c)
                sup_h_schwarz = tree_max(field)
        if interp is not None and npde == 1:
            m_vol = state.phidots[0] + 2.0 * state.phis[0] - interp
            inf_m_vol = tree_min(m_vol) + rate_c + 2.0 * phi_c

    rec = MonitorRecord(
        t=t if normalized else math.log1p(t),
        s=None if normalized else t,
        sup_phi=sup_phi,
        inf_phi=inf_phi,
        sup_phidot=sup_rate,
        inf_phidot=inf_rate,
        sup_u=sup_u,
        inf_u=inf_u,
        sup_trchi=trchi,
        sup_grad_u=sup_grad,
        sup_neg_lap_u=sup_neg_lap,
        sup_r=sup_r,
        inf_r=inf_r,
        sup_h_grad=sup_h_grad,
        sup_k=sup_k,
        sup_h_schwarz=sup_h_schwarz,
        inf_m_vol=inf_m_vol,
        margin=margin,
        a_bound=a_used,
    )
    rec.validate()
    return rec


# ---------------------------------------------------------------------------
# trajectory-level verdicts


@dataclass
class Verdict:
    name: str
    passed: bool
    margin: float
    detail: str = ""


def no_late_growth(ts: np.ndarray, vals: np.ndarray, slack: float = 0.01) -> Verdict:
    """Max over the late half must not exceed the early-half max plus slack."""
    ts = np.asarray(ts)
    vals = np.asarray(vals)
    half = ts[-1] / 2.0
    early = vals[ts <= half]
    late = vals[ts > half]
    if late.size == 0:
        return Verdict("no_late_growth", True, math.inf, "no late samples")
    gap = float(np.max(late) - np.max(early))
    return Verdict("no_late_growth", gap <= slack, slack - gap,
                   f"late max - early max = {gap:.3e}")


def no_late_decay(ts: np.ndarray, vals: np.ndarray, slack: float = 0.01) -> Verdict:
    """Min over the late half must not fall below the early-half min minus slack."""
    ts = np.asarray(ts)
    vals = np.asarray(vals)
    half = ts[-1] / 2.0
    early = vals[ts <= half]
    late = vals[ts > half]
    if late.size == 0:
        return Verdict("no_late_decay", True, math.inf, "no late samples")
    gap = float(np.min(early) - np.min(late))
    return Verdict("no_late_decay", gap <= slack, slack - gap,
                   f"early min - late min = {gap:.3e}")


def upper_bound_stabilizes(
    ts: np.ndarray, vals: np.ndarray, window: float = 2.0, slack: float = 0.01
) -> Verdict:
    """sup over all t must not exceed the max over the initial window + slack."""
    ts = np.asarray(ts)
    vals = np.asarray(vals)
    head = vals[ts <= window]
    if head.size == 0:
        head = vals[:1]
    gap = float(np.max(vals) - np.max(head))
    return Verdict("upper_stabilizes", gap <= slack, slack - gap,
                   f"overall max - early max = {gap:.3e}")


def lower_bound_stabilizes(
    ts: np.ndarray, vals: np.ndarray, window: float = 2.0, slack: float = 0.01
) -> Verdict:
    """inf over all t must not fall below the min over the initial window - slack."""
    ts = np.asarray(ts)
    vals = np.asarray(vals)
    head = vals[ts <= window]
    if head.size == 0:
        head = vals[:1]
    gap = float(np.min(head) - np.min(vals))
    return Verdict("lower_stabilizes", gap <= slack, slack - gap,
                   f"early min - overall min = {gap:.3e}")


def running_max_before(
    ts: np.ndarray, vals: np.ndarray, t_cut: float = 5.0, slack: float = 0.01
) -> Verdict:
    """sup |vals| over all t bounded by its running max before t_cut + slack."""
    ts = np.asarray(ts)
    vals = np.abs(np.asarray(vals))
    head = vals[ts <= t_cut]
    if head.size == 0:
        head = vals[:1]
    gap = float(np.max(vals) - np.max(head))
    return Verdict("bounded_by_early_max", gap <= slack, slack - gap,
                   f"overall max - pre-cut max = {gap:.3e}")


@dataclass
class SchwarzReport:
    min_slack: float
    samples: int


def schwarz_inequality_check(traj, model: ModelSpec, c_const: float = 0.0) -> SchwarzReport:
    """Trace inequality on exact models, gradient and Laplacian terms zero:

        d/dt tr_omega(chi) <= tr_omega(chi) + c_const * tr_omega(chi)^2

    sample-by-sample, with the left side from the coefficient closed forms and
    the right side from the recorded trace."""
    if not traj.normalized:
        raise ValueError("the trace inequality is checked on the normalized clock")
    if model.kappa == 0:
        raise ValueError("needs a model with collapsed directions (kappa > 0)")
    min_slack = math.inf
    count = 0
    for rec in traj.records:
        lhs = 0.0
        for f in model.factors:
            if f.kind == KIND_NEGATIVE_KE:
                a = homothety.coefficient(f, rec.t, normalized=True)
                # d/dt (d/a) = d (a - 1) / a^2 on the normalized clock
                lhs += f.dim * (a - 1.0) / a**2
        rhs = rec.sup_trchi + c_const * rec.sup_trchi**2
        slack = rhs - lhs
        min_slack = min(min_slack, slack)
        count += 1
        if slack < -1e-12:
            raise InequalityViolation(
                f"trace inequality violated at t={rec.t:.6g}: "
                f"lhs={lhs:.6e} > rhs={rhs:.6e}"
            )
    return SchwarzReport(min_slack=min_slack, samples=count)


def scalex_record_deviation(traj) -> float:
    """Record-level consistency of R with -Lap u - tr chi (constant trace)."""
    worst = 0.0
    for rec in traj.records:
        worst = max(worst, abs(rec.sup_r - (rec.sup_neg_lap_u - rec.sup_trchi)))
    return worst
