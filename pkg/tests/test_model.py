import numpy as np
import pytest

from kahlerflow.geometry import TorusGrid
from kahlerflow.model import (
    KIND_NEGATIVE_KE,
    KIND_RICCI_FLAT,
    KIND_TORUS,
    FactorSpec,
    FlowConfig,
    ModelSpec,
    MonitorRecord,
)


class TestFactorSpec:
    def test_exact_needs_positive_coefficient(self):
        with pytest.raises(ValueError):
            FactorSpec(KIND_NEGATIVE_KE, 1, a0=0.0)

    def test_torus_needs_grid(self):
        with pytest.raises(ValueError):
            FactorSpec(KIND_TORUS, 1)

    def test_torus_dim_must_match_grid(self):
        with pytest.raises(ValueError):
            FactorSpec(KIND_TORUS, 2, grid=TorusGrid(1, 16))

    def test_phi0_defaults_to_zero(self):
        f = FactorSpec(KIND_TORUS, 1, grid=TorusGrid(1, 16))
        assert np.all(f.phi0 == 0.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            FactorSpec("weird", 1)


class TestModelSpec:
    def test_dimensions_derived_from_kinds(self):
        m = ModelSpec([
            FactorSpec(KIND_RICCI_FLAT, 1, a0=1.0),
            FactorSpec(KIND_NEGATIVE_KE, 2, a0=3.0),
            FactorSpec(KIND_TORUS, 1, grid=TorusGrid(1, 16)),
        ])
        assert m.n == 4
        assert m.kappa == 2
        assert len(m.pde_factors) == 1
        assert len(m.exact_factors) == 2

    def test_background_must_be_positive(self):
        grid = TorusGrid(1, 16)
        x = grid.coords()[0]
        eta = 5.0 * np.cos(x) * np.ones(grid.shape)
        with pytest.raises(ValueError):
            ModelSpec([FactorSpec(KIND_TORUS, 1, grid=grid, eta=eta)])

    def test_needs_a_factor(self):
        with pytest.raises(ValueError):
            ModelSpec([])


class TestFlowConfig:
    def test_tolerance_window(self):
        with pytest.raises(ValueError):
            FlowConfig(tol=0.0)
        with pytest.raises(ValueError):
            FlowConfig(tol=0.5)
        FlowConfig(tol=1e-2)

    def test_t_end_positive(self):
        with pytest.raises(ValueError):
            FlowConfig(t_end=0.0)

    def test_method_names(self):
        with pytest.raises(ValueError):
            FlowConfig(method="euler")

    def test_sample_schedule(self):
        cfg = FlowConfig(t_end=1.0, sample_interval=0.25)
        assert cfg.sample_schedule() == [0.25, 0.5, 0.75, 1.0]
        cfg = FlowConfig(t_end=1.0, sample_times=[0.7, 0.3])
        assert cfg.sample_schedule() == [0.3, 0.7]


class TestMonitorRecord:
    def _rec(self, **over):
        base = dict(
            t=0.0, s=None, sup_phi=0.0, inf_phi=0.0, sup_phidot=0.0,
            inf_phidot=0.0, sup_u=0.0, inf_u=0.0, sup_trchi=0.0,
            sup_grad_u=0.0, sup_neg_lap_u=0.0, sup_r=0.0, inf_r=0.0,
            sup_h_grad=None, sup_k=None, sup_h_schwarz=None, inf_m_vol=None,
            margin=1.0, a_bound=2.0,
        )
        base.update(over)
        return MonitorRecord(**base)

    def test_finite_required(self):
        with pytest.raises(ValueError):
            self._rec(sup_r=float("nan")).validate()

    def test_sup_inf_ordering(self):
        with pytest.raises(ValueError):
            self._rec(sup_r=-1.0, inf_r=1.0).validate()

    def test_bound_shift_guarantee(self):
        with pytest.raises(ValueError):
            self._rec(sup_u=1.5, a_bound=2.0).validate()
        self._rec(sup_u=1.0, a_bound=2.0).validate()
