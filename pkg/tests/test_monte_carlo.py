import math

import numpy as np
import pytest

from stochfv import models, monte_carlo, ou_sde
from stochfv.errors import NumericalBlowupError
from stochfv.fv_core import CflStats, SchemeOrder, TimeController
from stochfv.grid import Field, StructuredMesh
from stochfv.monte_carlo import (
    ErrorReport,
    MomentAccumulator,
    SamplePlan,
    SampleRule,
    error_report,
    merge,
    plan_samples,
    run_mc,
)
from stochfv.random_field import SpectralDensity


def mesh1d(n):
    return StructuredMesh((n, 1, 1), (1.0 / n, 1.0, 1.0))


def scalar_setup(n=32, sigma=0.5, t_end=1.0, integrator="milstein"):
    ou = ou_sde.OUFieldParams(theta=20.0, sigma=sigma, mu=0.25, z0=-0.25)
    model = models.ScalarAdvection(mesh1d(n), ou, integrator=integrator)
    ctrl = TimeController.from_target(t_end, 2.0 / n)
    return model, ctrl


class TestAccumulator:
    def test_merge_with_empty_is_identity(self, rng):
        a = MomentAccumulator((3,))
        for _ in range(5):
            a.push(rng.standard_normal(3))
        out = merge(a, MomentAccumulator((3,)))
        np.testing.assert_array_equal(out.mean, a.mean)
        np.testing.assert_array_equal(out.m2, a.m2)
        assert out.count == 5

    def test_hand_merge_value(self):
        a = MomentAccumulator((1,))
        b = MomentAccumulator((1,))
        a.push(np.array([1.0]))
        a.push(np.array([2.0]))
        b.push(np.array([3.0]))
        b.push(np.array([4.0]))
        out = merge(a, b)
        assert out.mean[0] == pytest.approx(2.5, rel=1e-15)
        assert out.variance()[0] == pytest.approx(5.0 / 3.0, rel=1e-14)

    def test_merge_equals_concatenated_stream(self, rng):
        xs = rng.standard_normal((40, 4))
        whole = MomentAccumulator((4,))
        for x in xs:
            whole.push(x)
        a = MomentAccumulator((4,))
        b = MomentAccumulator((4,))
        for x in xs[:17]:
            a.push(x)
        for x in xs[17:]:
            b.push(x)
        out = merge(a, b)
        np.testing.assert_allclose(out.mean, whole.mean, rtol=1e-12)
        np.testing.assert_allclose(out.m2, whole.m2, rtol=1e-12)

    def test_merge_associative_to_tolerance(self, rng):
        chunks = [rng.standard_normal((11, 2)) for _ in range(3)]
        accs = []
        for c in chunks:
            acc = MomentAccumulator((2,))
            for x in c:
                acc.push(x)
            accs.append(acc)
        left = merge(merge(accs[0], accs[1]), accs[2])
        right = merge(accs[0], merge(accs[1], accs[2]))
        np.testing.assert_allclose(left.mean, right.mean, rtol=1e-12)
        np.testing.assert_allclose(left.m2, right.m2, rtol=1e-12)

    def test_variance_nonnegative_and_needs_two(self, rng):
        acc = MomentAccumulator((6,))
        acc.push(rng.standard_normal(6))
        with pytest.raises(ValueError):
            acc.variance()
        for _ in range(50):
            acc.push(rng.standard_normal(6) * 1e-8 + 7.0)
        assert np.all(acc.variance() >= 0.0)

    def test_higher_moments_match_numpy(self, rng):
        xs = rng.standard_normal(500) * 1.7 + 0.3
        acc = MomentAccumulator((1,), higher_moments=True)
        for x in xs:
            acc.push(np.array([x]))
        dev = xs - xs.mean()
        assert acc.central_moment(3)[0] == pytest.approx(np.mean(dev**3), rel=1e-10)
        assert acc.central_moment(4)[0] == pytest.approx(np.mean(dev**4), rel=1e-10)
        # merged higher moments agree with the stream too
        a = MomentAccumulator((1,), higher_moments=True)
        b = MomentAccumulator((1,), higher_moments=True)
        for x in xs[:200]:
            a.push(np.array([x]))
        for x in xs[200:]:
            b.push(np.array([x]))
        out = merge(a, b)
        assert out.central_moment(3)[0] == pytest.approx(np.mean(dev**3), rel=1e-9)
        assert out.central_moment(4)[0] == pytest.approx(np.mean(dev**4), rel=1e-9)


class TestSamplePlan:
    def test_paper_rule_order1(self):
        assert plan_samples(SampleRule("paper", kappa=1.0), 1 / 16, 1) == 256

    def test_paper_rule_order2(self):
        assert plan_samples(SampleRule("paper", kappa=1.0), 1 / 16, 2) == 65536

    def test_explicit_verbatim(self):
        assert plan_samples(SampleRule("explicit", m=100), 1 / 64, 2) == 100

    def test_minimum_two(self):
        with pytest.raises(ValueError):
            SamplePlan(SampleRule("explicit", m=1)).resolve(0.1)


class TestErrorReport:
    def test_equal_fields(self):
        f = Field(mesh1d(8), np.ones((1, 1, 1, 8)))
        rep = error_report(f, f)
        assert rep.absolute == 0.0 and rep.relative_percent == 0.0

    def test_homogeneity_ten_percent(self):
        f = Field(mesh1d(8), np.linspace(1, 2, 8).reshape(1, 1, 1, 8))
        g = Field(mesh1d(8), 1.1 * f.data)
        rep = error_report(g, f, "l2")
        assert rep.relative_percent == pytest.approx(10.0, rel=1e-12)

    def test_zero_reference_flagged(self):
        zero = Field.zeros(mesh1d(8), 1)
        f = Field(mesh1d(8), np.ones((1, 1, 1, 8)))
        rep = error_report(f, zero)
        assert rep.undefined_relative
        assert rep.absolute == pytest.approx(1.0)
        assert math.isnan(rep.relative_percent)


class TestRunMc:
    def test_sigma_zero_degenerate(self):
        model, ctrl = scalar_setup(sigma=0.0)
        plan = SamplePlan(SampleRule("explicit", m=4), base_seed=1)
        res = run_mc(model, SchemeOrder.first_order(), ctrl, plan)
        assert np.max(np.abs(res.variance.data)) <= 1e-14
        single = models.simulate_sample(model, SchemeOrder.first_order(), ctrl, 1, 0,
                                        CflStats())
        np.testing.assert_array_equal(res.mean.data, single)

    def test_two_sample_mean_identity(self):
        model, ctrl = scalar_setup()
        plan = SamplePlan(SampleRule("explicit", m=2), base_seed=9)
        res = run_mc(model, SchemeOrder.first_order(), ctrl, plan)
        u0 = models.simulate_sample(model, SchemeOrder.first_order(), ctrl, 9, 0, CflStats())
        u1 = models.simulate_sample(model, SchemeOrder.first_order(), ctrl, 9, 1, CflStats())
        np.testing.assert_allclose(res.mean.data, 0.5 * (u0 + u1), rtol=3e-16, atol=0)

    def test_bitwise_reproducible_across_thread_counts(self):
        model, ctrl = scalar_setup(n=32, t_end=0.5)
        plan = SamplePlan(SampleRule("explicit", m=96), base_seed=3)
        res1 = run_mc(model, SchemeOrder.first_order(), ctrl, plan, threads=1)
        res2 = run_mc(model, SchemeOrder.first_order(), ctrl, plan, threads=2)
        assert np.array_equal(res1.mean.data, res2.mean.data)
        assert np.array_equal(res1.variance.data, res2.variance.data)

    def test_failed_sample_aborts_with_replay_info(self):
        model, ctrl = scalar_setup(n=32, t_end=0.2, integrator="implicit")

        class Exploding:
            mesh = model.mesh
            components = 1
            coefficient_specs = model.coefficient_specs

            def wave_speed_bound(self, t_end):
                return 0.25

            def run_sample(self, scheme, controller, seed, sample_index, stats):
                if sample_index == 5:
                    raise NumericalBlowupError("boom", t=0.1, cell=3)
                return model.run_sample(scheme, controller, seed, sample_index, stats)

        plan = SamplePlan(SampleRule("explicit", m=8), base_seed=7)
        with pytest.raises(NumericalBlowupError) as exc:
            run_mc(Exploding(), SchemeOrder.first_order(), ctrl, plan)
        assert exc.value.sample == 5 and exc.value.seed == 7

        res = run_mc(Exploding(), SchemeOrder.first_order(), ctrl, plan, skip_failed=True)
        assert res.stats.skipped == [5]
        assert res.stats.samples == 7

    def test_unbiased_identity_model(self):
        # E_M of the identity model approaches the OU closed-form mean
        # within 3 sqrt(V_M/M) per cell
        mesh = mesh1d(8)
        ou = ou_sde.OUFieldParams(theta=2.0, sigma=1.0, mu=0.4, z0=-0.2)
        model = models.IdentityCoefficient(mesh, ou, integrator="exact")
        ctrl = TimeController.from_target(1.0, 0.125)
        plan = SamplePlan(SampleRule("explicit", m=10_000), base_seed=11)
        res = run_mc(model, SchemeOrder.first_order(), ctrl, plan)
        mean_exact, _ = ou_sde.exact_moments(ou, 1.0)
        band = 3.0 * np.sqrt(res.variance.data / plan.resolve(0.125))
        assert np.all(np.abs(res.mean.data - mean_exact) <= band)

    def test_mc_rate_minus_half(self):
        # RMS error over replications vs the closed-form mean; log-log
        # slope in M must sit at -0.5 +- 0.1
        mesh = mesh1d(4)
        ou = ou_sde.OUFieldParams(theta=1.0, sigma=1.0, mu=0.0, z0=1.0)
        model = models.IdentityCoefficient(mesh, ou, integrator="exact")
        ctrl = TimeController.from_target(1.0, 0.25)
        mean_exact, _ = ou_sde.exact_moments(ou, 1.0)
        reps = 48
        ms = [100, 1000, 10000]
        rms = []
        for m in ms:
            errs = []
            for r in range(reps):
                plan = SamplePlan(SampleRule("explicit", m=m), base_seed=1000 + r)
                res = run_mc(model, SchemeOrder.first_order(), ctrl, plan)
                errs.append(np.mean((res.mean.data - mean_exact) ** 2))
            rms.append(math.sqrt(np.mean(errs)))
        slope = np.polyfit(np.log(ms), np.log(rms), 1)[0]
        assert -0.6 <= slope <= -0.4

    def test_error_decomposition_triangle(self):
        # total error <= numerical + statistical parts on the scalar scenario,
        # with the exact pathwise solution of the frozen-coefficient problem
        # (the piecewise-constant path shifts the profile by sum a_l h)
        from stochfv import rng as rng_mod
        from stochfv.models import indicator_cell_averages
        from stochfv.oracle import OracleParams, exact_mean
        from stochfv.ou_sde import scheme_coefficients

        n, m_samples = 64, 200
        model, ctrl = scalar_setup(n=n)
        mesh = model.mesh
        x = mesh.axis_centers(0)
        dx = mesh.spacing[0]
        scheme = SchemeOrder.first_order()
        a, c = scheme_coefficients("milstein", 20.0, 0.5, ctrl.h)

        acc_num = 0.0
        num_field = np.zeros(n)
        path_field = np.zeros(n)
        for s in range(m_samples):
            u_t = models.simulate_sample(model, scheme, ctrl, 2, s, CflStats())[0, 0, 0]
            gen = rng_mod.path_generator(2, s, 0)
            z = -0.25
            shift = 0.0
            noise = gen.standard_normal(ctrl.n_intervals - 1)
            for l in range(ctrl.n_intervals):
                shift += z * ctrl.h
                if l < ctrl.n_intervals - 1:
                    z = 0.25 + a * (z - 0.25) + c * noise[l]
            lo_p = (0.375 + shift) % 1.0
            hi_p = lo_p + 0.25
            exact_path = indicator_cell_averages(mesh, lo_p, hi_p) \
                + indicator_cell_averages(mesh, lo_p - 1.0, hi_p - 1.0)
            num_field += u_t
            path_field += exact_path
        num_field /= m_samples
        path_field /= m_samples

        p = OracleParams(mu=0.25, theta=20.0, sigma=0.5, a0=-0.25, t=1.0)
        truth = exact_mean(p, x)
        eps_total = dx * np.abs(num_field - truth).sum()
        eps_num = dx * np.abs(num_field - path_field).sum()
        eps_mc = dx * np.abs(path_field - truth).sum()
        assert eps_total <= eps_num + eps_mc + 1e-12


class TestIdentityModelCoeffDump:
    def test_run_sample_returns_field_shape(self):
        mesh = StructuredMesh((8, 4, 1), (1 / 8, 1 / 4, 1.0))
        ou = ou_sde.OUFieldParams(theta=1.0, sigma=1.0,
                                  mu=np.zeros((1, 4, 8)), z0=np.zeros((1, 4, 8)))
        model = models.IdentityCoefficient(mesh, ou, SpectralDensity("rational"),
                                           spatial=True, integrator="exact")
        ctrl = TimeController.from_target(0.5, 0.125)
        out = model.run_sample(SchemeOrder.first_order(), ctrl, 0, 0, CflStats())
        assert out.shape == (1, 1, 4, 8)
        assert np.all(np.isfinite(out))
