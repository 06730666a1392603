import math

import numpy as np
import pytest

from kahlerflow.errors import OptimalityFailure
from kahlerflow.homothety import (
    coefficient,
    exact_coefficients,
    exact_potential_parts,
    ode_vs_closed_form,
    optimality_check,
    scalar_exact,
    trace_chi_exact,
)
from kahlerflow.model import (
    KIND_NEGATIVE_KE,
    KIND_RICCI_FLAT,
    FactorSpec,
)


def ke(dim=1, a0=2.0):
    return FactorSpec(kind=KIND_NEGATIVE_KE, dim=dim, a0=a0)


def flat(dim=1, b0=1.0):
    return FactorSpec(kind=KIND_RICCI_FLAT, dim=dim, a0=b0)


class TestCoefficients:
    def test_ke_normalized(self):
        f = ke(a0=2.0)
        assert abs(coefficient(f, math.log(2.0)) - 1.5) <= 1e-15
        assert abs(scalar_exact(math.log(2.0), [f]) + 1.0 / 1.5) <= 1e-15

    def test_flat_normalized(self):
        f = flat(b0=3.0)
        assert abs(coefficient(f, 1.0) - 3.0 / math.e) <= 1e-15
        assert scalar_exact(1.0, [f]) == 0.0

    def test_ke_unnormalized(self):
        f = ke(a0=2.0)
        assert coefficient(f, 8.0, normalized=False) == 10.0
        assert abs(scalar_exact(8.0, [f], normalized=False) + 0.1) <= 1e-15

    def test_order_preserved(self):
        fs = [flat(b0=2.0), ke(a0=4.0)]
        out = exact_coefficients(0.0, fs)
        assert out == [2.0, 4.0]

    def test_exponential_approach(self):
        f = ke(a0=3.0)
        for t in np.linspace(0, 12, 40):
            assert abs(abs(coefficient(f, t) - 1.0) - 2.0 * math.exp(-t)) <= 1e-14

    def test_collapse_limit(self):
        # product of flat and Einstein factors: R -> -kappa
        fs = [flat(), ke(a0=2.0)]
        assert abs(scalar_exact(50.0, fs) + 1.0) <= 1e-12
        assert abs(scalar_exact(0.0, fs) + 0.5) <= 1e-15

    def test_curvature_collapse_rate_bound(self):
        # |R(t) + kappa| <= kappa |a0-1| e^{-t} / min(1, a0) on pure exact models
        for dims, a0s in [((1,), (2.0,)), ((1,), (0.5,)), ((2,), (3.0,))]:
            fs = [ke(dim=d, a0=a) for d, a in zip(dims, a0s)]
            kappa = sum(dims)
            bound_c = kappa * abs(a0s[0] - 1.0) / min(1.0, a0s[0])
            for t in np.linspace(0, 20, 81):
                gap = abs(scalar_exact(t, fs) + kappa)
                assert gap <= bound_c * math.exp(-t) + 1e-14

    def test_trace_chi_endpoint_bound(self):
        # sup_t of tr chi equals max(sum d/a0, kappa) for monotone factors
        for a0s, dims in [((2.0, 4.0), (1, 2)), ((0.5,), (1,)), ((1.0,), (2,))]:
            fs = [ke(dim=d, a0=a) for a, d in zip(a0s, dims)]
            ts = np.linspace(0, 40, 400)
            sup_obs = max(trace_chi_exact(t, fs) for t in ts)
            kappa = sum(dims)
            expect = max(sum(d / a for d, a in zip(dims, a0s)), kappa)
            assert sup_obs <= expect + 1e-12
            assert abs(sup_obs - expect) <= 1e-6 or sup_obs < expect


class TestExactPotential:
    def test_zero_at_start(self):
        phi, rate, u = exact_potential_parts(0.0, [ke(a0=2.0)])
        assert abs(phi) <= 1e-15
        assert abs(u - math.log(2.0)) <= 1e-15
        assert abs(rate - (u - phi)) <= 1e-15

    def test_flat_contributes_nothing(self):
        assert exact_potential_parts(1.3, [flat(b0=5.0)]) == (0.0, 0.0, 0.0)

    def test_rate_is_time_derivative(self):
        # finite-difference audit of dc/dt = dim log a - c
        f = ke(dim=2, a0=3.0)
        h = 1e-6
        for t in (0.2, 1.0, 4.0):
            cm, _, _ = exact_potential_parts(t - h, [f])
            cp, _, _ = exact_potential_parts(t + h, [f])
            _, rate, _ = exact_potential_parts(t, [f])
            assert abs((cp - cm) / (2 * h) - rate) <= 1e-7

    def test_u_is_dim_log_a(self):
        f = ke(dim=2, a0=0.5)
        for t in (0.0, 0.7, 3.0):
            _, _, u = exact_potential_parts(t, [f])
            assert abs(u - 2.0 * math.log(coefficient(f, t))) <= 1e-14

    def test_decay_to_zero(self):
        phi, rate, u = exact_potential_parts(40.0, [ke(a0=2.0)])
        assert abs(phi) <= 1e-12 and abs(u) <= 1e-12

    def test_unnormalized_consistency(self):
        # phi~ = (1+s) phi(log(1+s)); the rate slot equals u
        f = ke(a0=2.0)
        s = 3.0
        t = math.log1p(s)
        phi_n, _, u_n = exact_potential_parts(t, [f])
        phi_u, rate_u, u_u = exact_potential_parts(s, [f], normalized=False)
        assert abs(phi_u - (1 + s) * phi_n) <= 1e-14
        assert abs(u_u - u_n) <= 1e-14
        assert abs(rate_u - u_n) <= 1e-14


class TestRescalingConsistency:
    def test_coefficient_map(self):
        # normalized coefficients pushed through s = e^t - 1, a~ = (1+s) a
        f = ke(a0=2.0)
        for t in np.linspace(0, 9, 50):
            s = math.expm1(t)
            a_norm = coefficient(f, t)
            a_unnorm = coefficient(f, s, normalized=False)
            assert abs((1 + s) * a_norm - a_unnorm) <= 1e-12 * max(1.0, a_unnorm)


class TestOptimality:
    def test_a0_two(self):
        rep = optimality_check([flat(), ke(a0=2.0)], s_max=1e4)
        assert 0.5 - 1e-12 <= rep.c_lower
        assert rep.c_upper < 1.0
        assert np.all(np.diff(rep.m_values) >= -1e-12)

    def test_a0_one(self):
        rep = optimality_check([ke(a0=1.0)], s_max=1e3)
        assert abs(rep.c_lower - 1.0) <= 1e-12
        assert abs(rep.c_upper - 1.0) <= 1e-12

    def test_a0_half(self):
        rep = optimality_check([ke(a0=0.5)], s_max=1e4)
        assert rep.c_upper <= 2.0 + 1e-12
        assert rep.c_lower > 1.0 - 1e-9
        assert np.all(np.diff(rep.m_values) <= 1e-12)

    def test_requires_einstein_factor(self):
        with pytest.raises(ValueError):
            optimality_check([flat()], s_max=10.0)


class TestOdeValidation:
    def test_ke_matches_closed_form(self):
        rep = ode_vs_closed_form([ke(a0=2.0)], t_end=20.0)
        assert rep.sup_error <= 1e-10

    def test_flat_matches(self):
        rep = ode_vs_closed_form([flat(b0=1.0)], t_end=20.0)
        assert rep.sup_error <= 1e-10

    def test_two_factor_mix(self):
        rep = ode_vs_closed_form([flat(b0=2.0), ke(dim=2, a0=4.0)], t_end=20.0)
        assert rep.sup_error <= 1e-10

    def test_unnormalized_trivial(self):
        rep = ode_vs_closed_form([ke(a0=2.0)], t_end=10.0, normalized=False)
        assert rep.sup_error <= 1e-10
