"""Scenario configuration, seeded initial data, scenario execution, and
decay-rate fitting.

Configs are JSON with an explicit schema version.  Band-limited random data
is drawn mode-by-mode in a fixed order from a seeded generator and scaled so
the metric positivity margin clears its floor; the margin calibration runs on
a fixed reference grid so the same seed gives the same analytic initial data
at every run resolution.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonpositiveValues
from .geometry import MetricField, ScalarField, TorusGrid, complex_hessian, positivity_margin
from .model import (
    KIND_NEGATIVE_KE,
    KIND_RICCI_FLAT,
    KIND_TORUS,
    FactorSpec,
    FlowConfig,
    ModelSpec,
)

SCHEMA_VERSION = 1
CALIBRATION_N = 128  # fixed reference grid for margin calibration
ENV_OUT = "KAHLERFLOW_OUT"


def output_root() -> str:
    return os.environ.get(ENV_OUT, os.path.join(os.getcwd(), "out"))


# ---------------------------------------------------------------------------
# band-limited fields


def modes_field(grid: TorusGrid, modes) -> np.ndarray:
    """Sum of amp * cos(kx x + ky y + phase) terms, exact at grid points.

    ``modes`` rows are [kx, ky, amp] or [kx, ky, amp, phase]; only complex
    dimension 1 factors carry mode lists.
    """
    if grid.dim != 1:
        raise ConfigError("mode lists are only supported on 1-dimensional factors")
    x, y = grid.coords()
    out = np.zeros(grid.shape)
    for row in modes:
        kx, ky, amp = int(row[0]), int(row[1]), float(row[2])
        phase = float(row[3]) if len(row) > 3 else 0.0
        out = out + amp * np.cos(kx * x + ky * y + phase)
    return out


def random_modes(band: int, rms: float, rng: np.random.Generator) -> list:
    """Seeded Gaussian mode list with |k| <= band, drawn in a fixed order."""
    modes = []
    raw = []
    for kx in range(0, band + 1):
        for ky in range(-band, band + 1):
            if kx == 0 and ky <= 0:
                continue
            if kx * kx + ky * ky > band * band:
                continue
            raw.append((kx, ky))
    raw.sort()
    for kx, ky in raw:
        k2 = kx * kx + ky * ky
        amp = rng.standard_normal() / (1.0 + k2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        modes.append([kx, ky, amp, phase])
    scale = rms / max(1e-300, math.sqrt(sum(0.5 * m[2] ** 2 for m in modes)))
    return [[kx, ky, amp * scale, ph] for kx, ky, amp, ph in modes]


def scale_for_margin(eta_modes, phi_modes, margin_target: float) -> float:
    """Largest scale in (0, 1] keeping the calibration-grid margin at target.

    Evaluated on the fixed reference grid so the resulting initial data is
    independent of the run resolution.
    """
    grid = TorusGrid(1, CALIBRATION_N)
    g0 = MetricField.identity(grid)
    if eta_modes:
        g0 = g0.plus(complex_hessian(ScalarField(grid, modes_field(grid, eta_modes))))
    hess = complex_hessian(ScalarField(grid, modes_field(grid, phi_modes)))

    def margin(scale):
        return positivity_margin(MetricField(grid, g0.mat + scale * hess.mat))

    if margin(1.0) >= margin_target:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if margin(mid) >= margin_target:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    name: str
    model: ModelSpec
    flow: FlowConfig
    seed: int | None
    raw: dict
    csv_path: str | None = None
    summary_path: str | None = None


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _build_field(spec, grid: TorusGrid, rng, eta_modes, margin_floor_default=0.2):
    """Resolve an eta/phi0 field spec: None, {"modes": ...} or {"random_band": ...}."""
    if spec is None:
        return None, []
    if "modes" in spec:
        modes = spec["modes"]
        return modes_field(grid, modes), modes
    if "random_band" in spec:
        _require(rng is not None, "random field data requires a seed")
        band = int(spec["random_band"])
        _require(1 <= band <= min(grid.n // 8, CALIBRATION_N // 8),
                 f"random band must lie in [1, {min(grid.n // 8, CALIBRATION_N // 8)}]")
        rms = float(spec.get("rms", 0.1))
        target = float(spec.get("margin_target", 0.5))
        floor = float(spec.get("margin_floor", margin_floor_default))
        _require(target >= floor, "margin_target must be >= margin_floor")
        modes = random_modes(band, rms, rng)
        scale = scale_for_margin(eta_modes, modes, target)
        modes = [[kx, ky, a * scale, ph] for kx, ky, a, ph in modes]
        vals = modes_field(grid, modes)
        return vals, modes
    raise ConfigError(f"unrecognized field spec {sorted(spec)}")


def parse_config(doc: dict, name: str = "scenario") -> ScenarioConfig:
    _require(isinstance(doc, dict), "config must be a JSON object")
    _require(doc.get("schema_version") == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}")
    seed = doc.get("seed")
    rng = np.random.default_rng(int(seed)) if seed is not None else None

    mdoc = doc.get("model")
    _require(isinstance(mdoc, dict) and "factors" in mdoc, "config needs model.factors")
    factors = []
    margin_floor = None
    for fdoc in mdoc["factors"]:
        kind = fdoc.get("kind")
        _require(kind in (KIND_TORUS, KIND_NEGATIVE_KE, KIND_RICCI_FLAT),
                 f"unknown factor kind {kind!r}")
        dim = int(fdoc.get("dim", 1))
        if kind == KIND_TORUS:
            n = int(fdoc.get("grid_n", 0))
            _require(n >= 8, "torus factor needs grid_n >= 8")
            grid = TorusGrid(dim, n)
            eta_vals, eta_modes = _build_field(fdoc.get("eta"), grid, rng, [])
            phi_vals, _ = _build_field(fdoc.get("phi0"), grid, rng, eta_modes)
            factors.append(FactorSpec(
                kind=KIND_TORUS, dim=dim, grid=grid, eta=eta_vals, phi0=phi_vals,
                c_omega=float(fdoc.get("c_omega", 1.0)),
            ))
            if fdoc.get("phi0") and "random_band" in fdoc["phi0"]:
                margin_floor = float(fdoc["phi0"].get("margin_floor", 0.2))
        else:
            factors.append(FactorSpec(kind=kind, dim=dim, a0=float(fdoc.get("a0", 1.0))))
    model = ModelSpec(factors)

    fdoc = doc.get("flow", {})
    try:
        flow_cfg = FlowConfig(**fdoc)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid flow config: {err}") from err

    # enforce the data margin floor on the run grid
    if margin_floor is not None:
        from .flow import _scaled_margin, initial_state
        st = initial_state(model)
        m = _scaled_margin(0.0, st.phis, model, True)
        _require(m >= margin_floor,
                 f"initial positivity margin {m:.3f} below floor {margin_floor}")

    out = doc.get("output", {})
    return ScenarioConfig(
        name=doc.get("name", name),
        model=model,
        flow=flow_cfg,
        seed=seed,
        raw=doc,
        csv_path=out.get("csv"),
        summary_path=out.get("summary"),
    )


# ---------------------------------------------------------------------------
# scenario execution


def standard_verdicts(traj) -> list:
    """Stabilization verdicts over a trajectory, labeled with the statement
    anchors they check."""
    from . import estimates

    ts = traj.times()
    out = []
    sup_abs_r = np.maximum(np.abs(traj.series("sup_r")), np.abs(traj.series("inf_r")))
    v = estimates.no_late_growth(ts, sup_abs_r)
    out.append({"name": "scalar_curvature_no_late_growth", "anchor": "Thm 4.1",
                "passed": v.passed, "margin": v.margin, "detail": v.detail})
    v = estimates.lower_bound_stabilizes(ts, traj.series("inf_r"))
    out.append({"name": "scalar_curvature_lower_bound", "anchor": "Thm 4.1",
                "passed": v.passed, "margin": v.margin, "detail": v.detail})
    if traj.normalized:
        v = estimates.no_late_growth(ts, traj.series("sup_phidot"))
        out.append({"name": "potential_rate_upper_bound", "anchor": "Lemma 2.1",
                    "passed": v.passed, "margin": v.margin, "detail": v.detail})
        v = estimates.running_max_before(ts, np.maximum(
            np.abs(traj.series("sup_phi")), np.abs(traj.series("inf_phi"))))
        out.append({"name": "potential_bounded_by_early_max", "anchor": "Lemma 2.1",
                    "passed": v.passed, "margin": v.margin, "detail": v.detail})
        v = estimates.no_late_decay(ts, traj.series("inf_phidot"))
        out.append({"name": "potential_rate_lower_bound", "anchor": "Prop 2.2",
                    "passed": v.passed, "margin": v.margin, "detail": v.detail})
        h = traj.series("sup_h_grad")
        if not np.any(np.isnan(h)):
            v = estimates.no_late_growth(ts, h)
            out.append({"name": "gradient_functional_no_late_growth", "anchor": "Sec. 3",
                        "passed": v.passed, "margin": v.margin, "detail": v.detail})
        k = traj.series("sup_k")
        if not np.any(np.isnan(k)):
            v = estimates.no_late_growth(ts, k)
            out.append({"name": "laplacian_functional_no_late_growth", "anchor": "Sec. 3",
                        "passed": v.passed, "margin": v.margin, "detail": v.detail})
        mv = traj.series("inf_m_vol")
        if not np.any(np.isnan(mv)):
            v = estimates.lower_bound_stabilizes(ts, mv)
            out.append({"name": "barrier_gap_lower_bound", "anchor": "Prop 2.2",
                        "passed": v.passed, "margin": v.margin, "detail": v.detail})
        tch = traj.series("sup_trchi")
        if np.all(tch > 0):
            v = estimates.no_late_growth(ts, tch)
            out.append({"name": "reference_trace_no_late_growth", "anchor": "Prop 2.4",
                        "passed": v.passed, "margin": v.margin, "detail": v.detail})
    return out


def run_scenario(config: ScenarioConfig, out_dir: str | None = None):
    """Execute the flow and write the CSV series and JSON summary.

    Returns (trajectory, summary dict, paths).  On a stepping failure the
    partial series is still written, flagged in the summary.
    """
    from . import flow as flow_mod
    from .errors import StepFailure
    from .trajio import config_hash, write_summary_json, write_trajectory_csv

    out_dir = out_dir or output_root()
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, config.csv_path or f"{config.name}.csv")
    sum_path = os.path.join(out_dir, config.summary_path or f"{config.name}.summary.json")

    failed = False
    failure_msg = None
    try:
        traj = flow_mod.run(config.model, config.flow)
    except StepFailure as err:
        traj = err.trajectory
        failed = True
        failure_msg = str(err)
        if traj is None:
            raise

    write_trajectory_csv(traj, csv_path)
    verdicts = standard_verdicts(traj) if traj.records else []
    summary = {
        "schema_version": SCHEMA_VERSION,
        "name": config.name,
        "config_hash": config_hash(config.raw),
        "seed": config.seed,
        "normalized": traj.normalized,
        "failed": failed,
        "failure": failure_msg,
        "n_records": len(traj.records),
        "verdicts": verdicts,
        "constants": {
            "scalex_max_err": traj.meta.get("scalex_max_err"),
            "volume_identity_max_err": traj.meta.get("volume_identity_max_err"),
        },
    }
    write_summary_json(summary, sum_path)
    return traj, summary, (csv_path, sum_path)


# ---------------------------------------------------------------------------
# decay fitting


@dataclass
class DecayFitReport:
    slope: float
    intercept: float
    window: tuple
    residual_rms: float
    count: int


def fit_decay(s_values, r_values, window) -> DecayFitReport:
    """Least-squares slope of log(values) against log(1+s) over the window."""
    s = np.asarray(s_values, dtype=float)
    r = np.asarray(r_values, dtype=float)
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("fit window must have lo < hi")
    sel = (s >= lo) & (s <= hi)
    s, r = s[sel], r[sel]
    if s.size < 10:
        raise ValueError(f"fit window holds {s.size} samples; need at least 10")
    if np.any(r <= 0.0):
        raise NonpositiveValues("decay fit requires strictly positive values")
    x = np.log1p(s)
    y = np.log(r)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return DecayFitReport(
        slope=float(slope),
        intercept=float(intercept),
        window=(lo, hi),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        count=int(s.size),
    )
