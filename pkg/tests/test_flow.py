import math

import numpy as np
import pytest

from kahlerflow import estimates, flow
from kahlerflow.errors import RescaleOnUnnormalized, StepFailure
from kahlerflow.geometry import TorusGrid
from kahlerflow.model import (
    KIND_NEGATIVE_KE,
    KIND_RICCI_FLAT,
    KIND_TORUS,
    FactorSpec,
    FlowConfig,
    FlowState,
    ModelSpec,
)
from kahlerflow.stepping import rk4_advance


def flat_model(n=16, c_omega=1.0, eta=None, phi0=None):
    grid = TorusGrid(1, n)
    return ModelSpec([FactorSpec(KIND_TORUS, 1, grid=grid, c_omega=c_omega,
                                 eta=eta, phi0=phi0)])


def exact_product(a0=2.0):
    return ModelSpec([FactorSpec(KIND_RICCI_FLAT, 1, a0=1.0),
                      FactorSpec(KIND_NEGATIVE_KE, 1, a0=a0)])


class TestReferenceMetric:
    def test_t_zero_is_background(self):
        m = flat_model()
        [g] = flow.reference_metric(0.0, m)
        assert np.max(np.abs(g.mat[..., 0, 0] - 1.0)) == 0.0

    def test_half_life(self):
        m = flat_model()
        [g] = flow.reference_metric(math.log(2.0), m)
        assert np.max(np.abs(g.mat[..., 0, 0] - 0.5)) <= 1e-15

    def test_degenerate_limit_scale(self):
        # documented degenerate limit; never fed to curvature operations
        m = flat_model()
        [g] = flow.reference_metric(50.0, m)
        assert np.max(np.abs(g.mat)) <= 1e-20


class TestFlowRhs:
    def test_stationary_flat(self):
        m = flat_model()
        st = flow.initial_state(m)
        [rhs] = flow.flow_rhs(st, m)
        assert np.max(np.abs(rhs)) <= 1e-13

    def test_constant_density_offset(self):
        m = flat_model(c_omega=math.e)
        st = flow.initial_state(m)
        [rhs] = flow.flow_rhs(st, m)
        assert np.max(np.abs(rhs + 1.0)) <= 1e-13

    def test_one_mode_initial_rate(self):
        # independent composition: log det(1 + Hess(0.1 cos x)) - 0.1 cos x
        n = 64
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        phi0 = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, phi0=phi0)
        st = flow.initial_state(m)
        [rhs] = flow.flow_rhs(st, m)
        expect = np.log(1.0 - 0.025 * np.cos(x)) - 0.1 * np.cos(x)
        assert np.max(np.abs(rhs - expect)) <= 1e-12


class TestStep:
    def test_stationary_state_dt_grows_to_cap(self):
        m = flat_model()
        cfg = FlowConfig(t_end=10.0, dt_init=1e-3, tol=1e-8, dt_max=0.25)
        st = flow.initial_state(m, cfg)
        for _ in range(5):
            st = flow.step(st, m, cfg)
            assert np.max(np.abs(st.phis[0])) <= 1e-13
        assert st.dt_next == 0.25

    def test_constant_density_closed_form_at_one(self):
        m = flat_model(c_omega=math.e)
        cfg = FlowConfig(t_end=1.0, dt_init=1e-3, tol=1e-9, dt_max=0.1)
        st = flow.initial_state(m, cfg)
        while st.t < 1.0 - 1e-12:
            st = flow.step(st, m, cfg)
        expect = -(1.0 - math.exp(-st.t))
        assert np.max(np.abs(st.phis[0] - expect)) <= cfg.tol

    def test_error_estimate_audited_against_half_step_rerun(self):
        # the self-reported estimate must equal a manual doubling rerun
        n = 32
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        phi0 = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, phi0=phi0)
        cfg = FlowConfig(t_end=0.5, dt_init=2e-3, tol=1e-7, dt_max=0.05)
        st = flow.initial_state(m, cfg)
        for _ in range(6):
            t_prev, phis_prev = st.t, [p.copy() for p in st.phis]
            st = flow.step(st, m, cfg)
            assert st.last_est <= cfg.tol
            h = st.t - t_prev

            def rhs(t, ys):
                return flow._pde_rhs(t, ys, m, True)

            y_full = rk4_advance(rhs, t_prev, phis_prev, h)
            y_mid = rk4_advance(rhs, t_prev, phis_prev, 0.5 * h)
            y_half = rk4_advance(rhs, t_prev + 0.5 * h, y_mid, 0.5 * h)
            est = max(np.max(np.abs(a - b)) for a, b in zip(y_full, y_half)) / 15.0
            assert est == pytest.approx(st.last_est, rel=1e-9, abs=1e-18)

    def test_guard_failure_raises_step_failure(self):
        # inject an inflated starting margin so the 10% guard trips at once
        n = 16
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        phi0 = 0.5 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, phi0=phi0)
        cfg = FlowConfig(t_end=1.0, dt_init=1e-3, tol=1e-8)
        st = flow.initial_state(m, cfg)
        st.margin0 = 1e6
        with pytest.raises(StepFailure):
            flow.step(st, m, cfg)


class TestRun:
    def test_stationary_records_flat(self):
        m = flat_model()
        cfg = FlowConfig(t_end=10.0, dt_init=1e-3, tol=1e-8,
                         sample_interval=0.5, dt_max=0.25)
        traj = flow.run(m, cfg)
        assert not traj.failed
        for rec in traj.records:
            assert abs(rec.sup_r) <= 1e-11
            assert abs(rec.sup_phidot) <= 1e-11

    def test_constant_density_half_life_record(self):
        m = flat_model(c_omega=math.e)
        cfg = FlowConfig(t_end=1.0, dt_init=1e-3, tol=1e-10,
                         sample_times=[math.log(2.0), 1.0],
                         land_on_samples=True, dt_max=0.1)
        traj = flow.run(m, cfg)
        rec = traj.records[1]
        assert rec.t == pytest.approx(math.log(2.0), abs=1e-12)
        assert rec.sup_phi == pytest.approx(-0.5, abs=1e-9)
        assert rec.inf_phi == pytest.approx(-0.5, abs=1e-9)

    def test_determinism_bitwise(self):
        n = 32
        grid = TorusGrid(1, n)
        x, y = grid.coords()
        phi0 = (0.1 * np.cos(x) + 0.03 * np.sin(y)) * np.ones(grid.shape)
        m = flat_model(n=n, phi0=phi0)
        cfg = FlowConfig(t_end=0.5, dt_init=1e-3, tol=1e-7, sample_interval=0.1)
        a = flow.run(m, cfg)
        b = flow.run(m, cfg)
        assert len(a.records) == len(b.records)
        for ra, rb in zip(a.records, b.records):
            for f in ("t", "sup_phi", "inf_phi", "sup_r", "inf_r", "sup_grad_u"):
                assert getattr(ra, f) == getattr(rb, f)

    def test_volume_identity_tracked(self):
        n = 32
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        phi0 = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, phi0=phi0)
        cfg = FlowConfig(t_end=1.0, dt_init=1e-3, tol=1e-8, sample_interval=0.25)
        traj = flow.run(m, cfg)
        assert traj.meta["volume_identity_max_err"] <= 1e-9

    def test_rate_monitors_stabilize_on_constant_density_run(self):
        # phi_rate rises to zero like -e^{-t}: only the late-half monitors can
        # see the saturation, and |phi| needs the t=5 cut (e^{-5} < slack)
        m = flat_model(c_omega=math.e)
        cfg = FlowConfig(t_end=12.0, dt_init=1e-3, tol=1e-9,
                         sample_interval=0.25, dt_max=0.25)
        traj = flow.run(m, cfg)
        ts = traj.times()
        assert estimates.no_late_growth(ts, traj.series("sup_phidot")).passed
        assert estimates.no_late_decay(ts, traj.series("inf_phidot")).passed
        abs_phi = np.maximum(np.abs(traj.series("sup_phi")),
                             np.abs(traj.series("inf_phi")))
        assert estimates.running_max_before(ts, abs_phi).passed


class TestRescale:
    def test_record_map(self):
        m = exact_product(a0=2.0)
        cfg = FlowConfig(t_end=1.0, dt_init=0.01, tol=1e-9,
                         sample_times=[math.log(2.0)], land_on_samples=True)
        traj = flow.run(m, cfg)
        resc = flow.rescale_to_unnormalized(traj)
        r0, r1 = resc.records[0], resc.records[1]
        # t = 0 sample unchanged
        assert r0.s == 0.0
        assert r0.sup_r == traj.records[0].sup_r
        # R(ln 2) = -2/3 maps to R(s=1) = -1/3
        assert traj.records[1].sup_r == pytest.approx(-2.0 / 3.0, abs=1e-12)
        assert r1.s == pytest.approx(1.0, abs=1e-12)
        assert r1.sup_r == pytest.approx(-1.0 / 3.0, abs=1e-12)
        assert r1.sup_trchi == pytest.approx(traj.records[1].sup_trchi / 2.0, abs=1e-12)

    def test_round_trip_against_direct_unnormalized(self):
        n = 16
        m = flat_model(n=n, c_omega=math.e)
        t_samples = [0.2, 0.4, 0.6]
        s_samples = [math.expm1(t) for t in t_samples]
        cfg_n = FlowConfig(normalized=True, t_end=0.6, dt_init=1e-3, tol=1e-9,
                           sample_times=t_samples, land_on_samples=True, dt_max=0.05)
        cfg_u = FlowConfig(normalized=False, t_end=s_samples[-1], dt_init=1e-3,
                           tol=1e-9, sample_times=s_samples, land_on_samples=True,
                           dt_max=0.05)
        resc = flow.rescale_to_unnormalized(flow.run(m, cfg_n))
        direct = flow.run(m, cfg_u)
        for rn, ru in zip(resc.records, direct.records):
            assert rn.s == pytest.approx(ru.s, abs=1e-10)
            assert rn.sup_phi == pytest.approx(ru.sup_phi, abs=1e-8)
            assert rn.sup_r == pytest.approx(ru.sup_r, abs=1e-8)

    def test_rejects_unnormalized_input(self):
        m = exact_product()
        cfg = FlowConfig(normalized=False, t_end=1.0, dt_init=0.01, tol=1e-9,
                         sample_interval=0.5)
        traj = flow.run(m, cfg)
        with pytest.raises(RescaleOnUnnormalized):
            flow.rescale_to_unnormalized(traj)


class TestVolumeSandwich:
    def test_flat_model_constant_one(self):
        m = flat_model()
        rep = flow.volume_sandwich_check(m, np.linspace(0, 5, 11))
        assert rep.c1 == 1.0

    def test_eta_background_constant(self):
        n = 64
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        eta = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, eta=eta)
        rep = flow.volume_sandwich_check(m, np.linspace(0, 10, 21))
        g_eta_min, g_eta_max = 0.975, 1.025
        expect = max(1.0 / g_eta_min, g_eta_max)
        assert rep.c1 == pytest.approx(expect, abs=1e-12)

    def test_t_zero_is_tight(self):
        n = 32
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        eta = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, eta=eta)
        rep = flow.volume_sandwich_check(m, [0.0])
        # equalities up to C1 at the calibration endpoint
        assert 0.0 <= rep.min_upper_slack <= 1e-10 or 0.0 <= rep.min_lower_slack <= 1e-10

    def test_exact_factors_included(self):
        m = ModelSpec([FactorSpec(KIND_NEGATIVE_KE, 1, a0=0.5),
                       FactorSpec(KIND_RICCI_FLAT, 1, a0=2.0)])
        rep = flow.volume_sandwich_check(m, np.linspace(0, 20, 41))
        assert rep.min_upper_slack >= 0.0
        assert rep.min_lower_slack >= 0.0


class TestMixedModel:
    def test_torus_times_einstein_run(self):
        n = 32
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        phi0 = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = ModelSpec([
            FactorSpec(KIND_TORUS, 1, grid=grid, phi0=phi0, c_omega=1.0),
            FactorSpec(KIND_NEGATIVE_KE, 1, a0=2.0),
        ])
        assert m.n == 2 and m.kappa == 1
        cfg = FlowConfig(t_end=2.0, dt_init=1e-3, tol=1e-7,
                         sample_interval=0.25, dt_max=0.1)
        traj = flow.run(m, cfg)
        assert not traj.failed
        assert traj.meta["scalex_max_err"] <= 1e-6
        for rec in traj.records:
            a = 1.0 + math.exp(-rec.t)
            assert rec.sup_trchi == pytest.approx(1.0 / a, abs=1e-14)
            assert rec.sup_h_schwarz is not None
            assert rec.sup_h_grad is not None
            # the collapsed direction shifts R by -1/a relative to the torus part
            assert rec.sup_r <= 0.3 - 1.0 / a + 0.1
        # trace contribution present in the curvature record identity
        dev = max(abs(r.sup_r - (r.sup_neg_lap_u - r.sup_trchi)) for r in traj.records)
        assert dev <= 1e-10


class TestExactRunMatchesOde:
    def test_collapse_history(self):
        m = exact_product(a0=2.0)
        cfg = FlowConfig(t_end=20.0, dt_init=0.05, tol=1e-9,
                         sample_interval=0.5, land_on_samples=True, dt_max=0.25)
        traj = flow.run(m, cfg)
        for rec in traj.records:
            a = 1.0 + math.exp(-rec.t)
            assert rec.sup_r == pytest.approx(-1.0 / a, abs=1e-12)
            assert rec.sup_trchi == pytest.approx(1.0 / a, abs=1e-12)
            assert abs(rec.sup_r + 1.0) <= math.exp(-rec.t) + 1e-14
