import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlerflow import elliptic
from kahlerflow.errors import BoundViolation
from kahlerflow.geometry import MetricField, ScalarField, TorusGrid, complex_hessian
from kahlerflow.model import KIND_TORUS, FactorSpec, ModelSpec


def flat_model(n=64, c_omega=1.0, eta=None):
    grid = TorusGrid(1, n)
    return ModelSpec([FactorSpec(KIND_TORUS, 1, grid=grid, c_omega=c_omega, eta=eta)])


def manufactured_rhs(model, psi_star, s):
    factor = model.pde_factors[0]
    g0 = model.background_metric(factor)
    m = MetricField(
        factor.grid,
        math.exp(-s) * g0.mat + complex_hessian(ScalarField(factor.grid, psi_star)).mat,
    )
    return m.det() * np.exp(-psi_star)


class TestSolvePsi:
    def test_trivial_constants_cancel(self):
        m = flat_model()
        for s in (0.0, 2.5, 7.0):
            sol = elliptic.solve_psi(s, m)
            assert np.max(np.abs(sol.psi)) <= 1e-12
            assert sol.residual <= 1e-10

    def test_constant_density_shift(self):
        m = flat_model(c_omega=math.e)
        for s in (0.0, 4.0):
            sol = elliptic.solve_psi(s, m)
            assert np.max(np.abs(sol.psi + 1.0)) <= 1e-11

    def test_manufactured_recovery(self):
        m = flat_model()
        grid = m.pde_factors[0].grid
        x = grid.coords()[0]
        psi_star = 0.1 * np.cos(x) * np.ones(grid.shape)
        rhs = manufactured_rhs(m, psi_star, 0.5)
        sol = elliptic.solve_psi(0.5, m, rhs_density=rhs)
        assert np.max(np.abs(sol.psi - psi_star)) <= 1e-9

    def test_quadratic_convergence_tail(self):
        m = flat_model()
        grid = m.pde_factors[0].grid
        x = grid.coords()[0]
        psi_star = 0.2 * np.cos(x) * np.ones(grid.shape)
        rhs = manufactured_rhs(m, psi_star, 0.0)
        sol = elliptic.solve_psi(0.0, m, rhs_density=rhs)
        trace = sol.residual_trace
        assert all(b < a for a, b in zip(trace[:-1], trace[1:]))
        ratios = sol.quadratic_ratios()
        assert ratios and all(np.isfinite(r) and r < 1e3 for r in ratios)

    def test_uniqueness_probe(self):
        m = flat_model()
        grid = m.pde_factors[0].grid
        x = grid.coords()[0]
        psi_star = 0.1 * np.cos(x) * np.ones(grid.shape)
        rhs = manufactured_rhs(m, psi_star, 0.5)
        sols = [
            elliptic.solve_psi(0.5, m, initial_guess=np.full(grid.shape, c),
                               rhs_density=rhs).psi
            for c in (0.0, 0.5, -0.5)
        ]
        for i, a in enumerate(sols):
            for b in sols[i + 1:]:
                assert np.max(np.abs(a - b)) <= 1e-9

    def test_rejects_negative_parameter(self):
        with pytest.raises(ValueError):
            elliptic.solve_psi(-1.0, flat_model())


class TestAprioriBounds:
    def test_trivial_model_values(self):
        m = flat_model(n=32)
        rep = elliptic.apriori_bound_check(elliptic.solve_psi(1.0, m), m)
        assert rep.sup_psi == 0.0
        assert rep.sup_bound == 0.0
        assert rep.integral_lhs == pytest.approx((2 * math.pi) ** 2, abs=1e-9)

    def test_manufactured_identity(self):
        n = 64
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        eta = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, eta=eta)
        sol = elliptic.solve_psi(2.0, m)
        rep = elliptic.apriori_bound_check(sol, m)
        assert rep.integral_rel_err <= 1e-10

    def test_sweep_sup_trend_recorded(self):
        n = 64
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        eta = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, eta=eta)
        sweep = elliptic.solve_sweep(m, range(0, 11))
        sups = [float(np.max(np.abs(sweep[s].psi))) for s in range(0, 11)]
        assert all(np.isfinite(v) for v in sups)
        assert all(b <= a + 1e-12 for a, b in zip(sups[:-1], sups[1:]))

    def test_bound_violation_detected(self):
        m = flat_model(n=32)
        sol = elliptic.solve_psi(1.0, m)
        sol.psi = sol.psi + 1.0  # push above the ceiling
        with pytest.raises(BoundViolation):
            elliptic.apriori_bound_check(sol, m)


class TestBump:
    def test_plateau_values(self):
        assert elliptic.bump_rho(0.25) == 1.0
        assert elliptic.bump_rho(0.9) == 0.0
        assert elliptic.bump_rho(0.5) == pytest.approx(0.5, abs=1e-15)

    def test_monotone_on_fine_grid(self):
        t = np.arange(0.0, 1.0 + 1e-9, 1e-3)
        r = elliptic.bump_rho(t)
        assert np.all(np.diff(r) <= 1e-15)
        assert np.all((0.0 <= r) & (r <= 1.0))

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_pairs(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert elliptic.bump_rho(lo) >= elliptic.bump_rho(hi)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            elliptic.bump_rho(1.5)
        with pytest.raises(ValueError):
            elliptic.bump_rho(-0.1)


class TestInterpolant:
    def _sweep(self):
        n = 32
        grid = TorusGrid(1, n)
        x = grid.coords()[0]
        eta = 0.1 * np.cos(x) * np.ones(grid.shape)
        m = flat_model(n=n, eta=eta)
        return m, elliptic.solve_sweep(m, range(1, 8))

    def test_endpoints(self):
        _, sweep = self._sweep()
        # weight 1 at the left edge of each unit interval
        phi = elliptic.build_interpolant(2.0, sweep)
        assert np.array_equal(phi, sweep[3].psi)
        # weight 0 past two thirds
        phi = elliptic.build_interpolant(2.9, sweep)
        assert np.array_equal(phi, sweep[4].psi)

    def test_midpoint_average(self):
        _, sweep = self._sweep()
        phi = elliptic.build_interpolant(2.5, sweep)
        expect = 0.5 * (sweep[3].psi + sweep[4].psi)
        assert np.max(np.abs(phi - expect)) <= 1e-15

    def test_between_solution_envelope(self):
        _, sweep = self._sweep()
        for t in (1.1, 1.37, 1.62, 1.95):
            phi = elliptic.build_interpolant(t, sweep)
            lo = np.minimum(sweep[2].psi, sweep[3].psi)
            hi = np.maximum(sweep[2].psi, sweep[3].psi)
            assert np.all(phi >= lo - 1e-14)
            assert np.all(phi <= hi + 1e-14)

    def test_bounded_by_sweep_sup(self):
        _, sweep = self._sweep()
        cap = max(float(np.max(np.abs(sol.psi))) for sol in sweep.values())
        for t in np.linspace(1.0, 5.9, 40):
            phi = elliptic.build_interpolant(t, sweep)
            assert np.max(np.abs(phi)) <= cap + 1e-14

    def test_missing_bracket(self):
        _, sweep = self._sweep()
        with pytest.raises(KeyError):
            elliptic.build_interpolant(7.5, sweep)
