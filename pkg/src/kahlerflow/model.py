"""Model, state, configuration and trajectory containers.

A model is an ordered product of factors: periodic PDE factors carrying a
grid, a background potential and a constant volume density, plus exact
factors (negatively curved Einstein or Ricci-flat) represented purely by a
homothety coefficient.  Total complex dimension n and the collapsed dimension
count kappa are derived from the factor kinds, never user-set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import MetricField, ScalarField, TorusGrid, complex_hessian, positivity_margin

KIND_TORUS = "torus_pde"
KIND_NEGATIVE_KE = "negative_ke"
KIND_RICCI_FLAT = "ricci_flat"

EXACT_KINDS = (KIND_NEGATIVE_KE, KIND_RICCI_FLAT)
ALL_KINDS = (KIND_TORUS,) + EXACT_KINDS


@dataclass
class FactorSpec:
    """One factor of a product model.

    Exact kinds carry an initial coefficient ``a0 > 0`` multiplying a fixed
    Einstein/flat background.  Torus PDE factors carry grid data: a background
    metric potential ``eta`` (the flat metric gets ``i d dbar eta`` added), an
    initial flow potential ``phi0`` and the volume constant ``c_omega`` (the
    density is c_omega times the flat cell measure).
    """

    kind: str
    dim: int
    a0: float = 1.0
    grid: TorusGrid | None = None
    eta: np.ndarray | None = None
    phi0: np.ndarray | None = None
    c_omega: float = 1.0

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("factor dimension must be >= 1")
        if self.kind in EXACT_KINDS:
            if not self.a0 > 0:
                raise ValueError("exact factor coefficient a0 must be positive")
        else:
            if self.grid is None:
                raise ValueError("torus factor needs a grid")
            if self.grid.dim != self.dim:
                raise ValueError("torus factor dim must match its grid")
            if not self.c_omega > 0:
                raise ValueError("c_omega must be positive")
            if self.eta is not None and np.asarray(self.eta).shape != self.grid.shape:
                raise ValueError("eta shape does not match grid")
            if self.phi0 is None:
                self.phi0 = np.zeros(self.grid.shape)
            if np.asarray(self.phi0).shape != self.grid.shape:
                raise ValueError("phi0 shape does not match grid")

    @property
    def is_pde(self) -> bool:
        return self.kind == KIND_TORUS


@dataclass
class ModelSpec:
    """Ordered factor list with derived dimensions and cached backgrounds."""

    factors: list

    def __post_init__(self):
        if not self.factors:
            raise ValueError("model needs at least one factor")
        self._g0 = {}
        for i, f in enumerate(self.factors):
            if f.is_pde:
                g0 = MetricField.identity(f.grid)
                if f.eta is not None:
                    g0 = g0.plus(complex_hessian(ScalarField(f.grid, f.eta)))
                if positivity_margin(g0) <= 0:
                    raise ValueError(f"background metric of factor {i} is not positive")
                self._g0[i] = g0
        if not 0 <= self.kappa <= self.n:
            raise ValueError("inconsistent factor dimensions")

    @property
    def n(self) -> int:
        return sum(f.dim for f in self.factors)

    @property
    def kappa(self) -> int:
        """Collapsed (negatively curved) complex dimension count."""
        return sum(f.dim for f in self.factors if f.kind == KIND_NEGATIVE_KE)

    @property
    def pde_factors(self) -> list:
        return [f for f in self.factors if f.is_pde]

    @property
    def exact_factors(self) -> list:
        return [f for f in self.factors if not f.is_pde]

    @property
    def is_pure_exact(self) -> bool:
        return not self.pde_factors

    def background_metric(self, factor: FactorSpec) -> MetricField:
        for i, f in enumerate(self.factors):
            if f is factor:
                return self._g0[i]
        raise KeyError("factor not part of this model")

    def background_metrics(self) -> list:
        return [self._g0[i] for i, f in enumerate(self.factors) if f.is_pde]

    def describe(self) -> dict:
        out = []
        for f in self.factors:
            d = {"kind": f.kind, "dim": f.dim}
            if f.is_pde:
                d["grid_n"] = f.grid.n
                d["c_omega"] = f.c_omega
            else:
                d["a0"] = f.a0
            out.append(d)
        return {"factors": out, "n": self.n, "kappa": self.kappa}


@dataclass
class FlowState:
    """Evolving state: clock value, PDE potentials, exact coefficients.

    ``phidots`` is a cache of the flow right-hand side at the current clock,
    filled by the integrator right before monitors are evaluated.
    """

    t: float
    phis: list
    coeffs: list
    phidots: list | None = None
    dt_next: float | None = None
    margin0: float | None = None
    last_est: float | None = None

    def copy_shallow(self) -> "FlowState":
        return FlowState(
            t=self.t,
            phis=[p.copy() for p in self.phis],
            coeffs=list(self.coeffs),
            phidots=None,
            dt_next=self.dt_next,
            margin0=self.margin0,
            last_est=self.last_est,
        )


@dataclass
class FlowConfig:
    normalized: bool = True
    t_end: float = 1.0
    dt_init: float = 1e-3
    tol: float = 1e-8
    sample_interval: float = 0.1
    sample_times: list | None = None
    land_on_samples: bool = False
    method: str = "rk4"
    dt_max: float = 0.25
    elliptic_comparison: bool = False
    snapshots: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (0 < self.tol <= 1e-2):
            raise ValueError("tolerance must lie in (0, 1e-2]")
        if self.method not in ("rk4", "sdirk2"):
            raise ValueError(f"unknown stepping method {self.method!r}")
        if self.sample_times is None and not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")

    def sample_schedule(self) -> list:
        if self.sample_times is not None:
            ts = sorted(float(t) for t in self.sample_times)
            if ts and ts[0] <= 0:
                raise ValueError("explicit sample times must be positive")
            return ts
        k = int(math.floor(self.t_end / self.sample_interval + 1e-9))
        return [self.sample_interval * (i + 1) for i in range(k)]


@dataclass
class MonitorRecord:
    """One time sample of every monitored quantity.

    Optional entries are ``None`` when the quantity is undefined for the run
    (e.g. the Schwarz functional without collapsed directions, or the barrier
    gap when the elliptic comparison is disabled); they are never zero-filled.
    """

    t: float
    s: float | None
    sup_phi: float
    inf_phi: float
    sup_phidot: float
    inf_phidot: float
    sup_u: float
    inf_u: float
    sup_trchi: float
    sup_grad_u: float
    sup_neg_lap_u: float
    sup_r: float
    inf_r: float
    sup_h_grad: float | None
    sup_k: float | None
    sup_h_schwarz: float | None
    inf_m_vol: float | None
    margin: float
    a_bound: float | None

    def validate(self):
        core = [
            self.t, self.sup_phi, self.inf_phi, self.sup_phidot, self.inf_phidot,
            self.sup_u, self.inf_u, self.sup_trchi, self.sup_grad_u,
            self.sup_neg_lap_u, self.sup_r, self.inf_r, self.margin,
        ]
        if not all(np.isfinite(v) for v in core):
            raise ValueError(f"non-finite monitor record at t={self.t}")
        for lo, hi in [
            (self.inf_phi, self.sup_phi),
            (self.inf_phidot, self.sup_phidot),
            (self.inf_u, self.sup_u),
            (self.inf_r, self.sup_r),
        ]:
            if lo > hi + 1e-12:
                raise ValueError("inf exceeds sup in monitor record")
        if self.a_bound is not None and self.a_bound - self.sup_u < 1.0 - 1e-12:
            raise ValueError("bound shift A violates A - sup u >= 1")


# Fixed CSV column order; first column is t, second s (empty on the
# normalized clock).
CSV_COLUMNS = [
    "t", "s", "sup_phi", "inf_phi", "sup_phidot", "inf_phidot",
    "sup_u", "inf_u", "sup_trchi", "sup_grad_u", "sup_neg_lap_u",
    "sup_r", "inf_r", "sup_h_grad", "sup_k", "sup_h_schwarz",
    "inf_m_vol", "margin", "a_bound",
]


@dataclass
class Trajectory:
    records: list
    normalized: bool
    provenance: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)
    step_trace: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    failed: bool = False

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array(
            [getattr(r, name) if getattr(r, name) is not None else np.nan for r in self.records]
        )

    def validate(self):
        ts = self.times()
        if np.any(np.diff(ts) <= 0):
            raise ValueError("record times must be strictly increasing")
        for r in self.records:
            r.validate()
