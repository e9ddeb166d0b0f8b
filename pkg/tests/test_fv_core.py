import math

import numpy as np
import pytest

from stochfv import models, ou_sde
from stochfv.errors import ConfigurationError, NumericalBlowupError
from stochfv.fv_core import (
    CflStats,
    SchemeOrder,
    TimeController,
    advance_interval,
    cfl_dt,
    minmod,
    reconstruct_minmod,
    ssp_rk2_step,
)
from stochfv.grid import StructuredMesh


def scalar_model(n, ou=None, length=1.0):
    mesh = StructuredMesh((n, 1, 1), (length / n, 1.0, 1.0))
    ou = ou or ou_sde.OUFieldParams(theta=1.0, sigma=0.0, mu=0.0, z0=0.0)
    return models.ScalarAdvection(mesh, ou)


class TestMinmod:
    @pytest.mark.parametrize("a,b,expected", [
        (1.0, 2.0, 1.0),
        (-1.0, 2.0, 0.0),
        (-3.0, -1.0, -1.0),
        (0.0, 5.0, 0.0),
        (2.0, 2.0, 2.0),
    ])
    def test_cases(self, a, b, expected):
        assert minmod(a, b) == expected


class TestCflDt:
    def test_1d_direct(self):
        mesh = StructuredMesh((100, 1, 1), (0.01, 1.0, 1.0))
        assert cfl_dt((1.0, 0.0, 0.0), mesh, 0.5) == pytest.approx(0.005, rel=1e-15)

    def test_2d_hand_value(self):
        mesh = StructuredMesh((10, 10, 1), (0.1, 0.1, 1.0))
        assert cfl_dt((2.0, 2.0, 0.0), mesh, 0.5) == pytest.approx(0.0125, rel=1e-15)

    def test_all_zero_returns_remaining(self):
        mesh = StructuredMesh((10, 1, 1), (0.1, 1.0, 1.0))
        assert cfl_dt((0.0, 0.0, 0.0), mesh, 0.45, remaining=0.37) == 0.37

    def test_negative_rejected(self):
        mesh = StructuredMesh((10, 1, 1), (0.1, 1.0, 1.0))
        with pytest.raises(ValueError):
            cfl_dt((-1.0, 0.0, 0.0), mesh, 0.45)


class TestSchemeOrder:
    def test_pairings(self):
        assert SchemeOrder.first_order().reconstruction == "constant"
        assert SchemeOrder.second_order().time_integrator == "ssprk2"
        with pytest.raises(ConfigurationError):
            SchemeOrder(1, "minmod", "euler")
        with pytest.raises(ConfigurationError):
            SchemeOrder(3, "constant", "euler")

    def test_ghost_width(self):
        assert SchemeOrder.of(1).ghost_width == 1
        assert SchemeOrder.of(2).ghost_width == 2


class TestReconstruction:
    def test_linear_data_exact(self):
        x = np.arange(8.0)
        alpha = 0.7
        left, right = reconstruct_minmod(alpha * x, dx=1.0)
        np.testing.assert_allclose(left, alpha * (x[1:-1] - 0.5), rtol=1e-14)
        np.testing.assert_allclose(right, alpha * (x[1:-1] + 0.5), rtol=1e-14)

    def test_extremum_zero_slope(self):
        left, right = reconstruct_minmod(np.array([0.0, 1.0, 0.0]))
        assert left[0] == 1.0 and right[0] == 1.0

    def test_step_data_flat(self):
        left, right = reconstruct_minmod(np.array([0.0, 0.0, 1.0, 1.0]))
        np.testing.assert_array_equal(left, [0.0, 1.0])
        np.testing.assert_array_equal(right, [0.0, 1.0])

    def test_tvd(self, rng):
        u = rng.standard_normal(40)
        left, right = reconstruct_minmod(u)
        faces = np.empty(2 * (u.size - 2))
        faces[0::2] = left
        faces[1::2] = right
        tv_faces = np.abs(np.diff(faces)).sum()
        tv_cells = np.abs(np.diff(u)).sum()
        assert tv_faces <= tv_cells + 1e-12


class TestAdvanceInterval:
    def test_zero_coefficient_identity(self):
        model = scalar_model(16)
        u = model.initial_state()
        ctrl = TimeController.from_target(0.5, 0.1)
        out = advance_interval(u, (0.0,), model, SchemeOrder.first_order(), ctrl, 0.0)
        np.testing.assert_array_equal(out, u)

    def test_hand_upwind_step(self):
        # a=1, dt/dx = 1/2, U = (1,0,0,0) -> (1/2, 1/2, 0, 0)
        model = scalar_model(4)
        u = np.array([1.0, 0.0, 0.0, 0.0]).reshape(1, 1, 1, 4)
        dx = 0.25
        ctrl = TimeController(h=0.5 * dx, t_end=0.5 * dx, n_intervals=1, cfl_number=0.5)
        out = advance_interval(u, (1.0,), model, SchemeOrder.first_order(), ctrl, 0.0)
        np.testing.assert_allclose(out[0, 0, 0], [0.5, 0.5, 0.0, 0.0], rtol=1e-14)

    def test_conservation_1000_steps(self, rng):
        # random state, OU-driven coefficient path, drift <= 1e-12 relative
        ou = ou_sde.OUFieldParams(theta=2.0, sigma=0.6, mu=0.3, z0=0.1)
        model = scalar_model(64, ou)
        u = (1.0 + 0.5 * rng.standard_normal(64)).reshape(1, 1, 1, 64)
        mass0 = u.sum() * model.mesh.spacing[0]
        state = ou_sde.initial_state(ou, 0.05)
        ctrl = TimeController.from_target(0.05, 0.05)
        stats = CflStats()
        scheme = SchemeOrder.second_order()
        u_cur = u
        gen = np.random.default_rng(5)
        while stats.n_steps < 1000:
            u_cur = advance_interval(u_cur, (float(state.z),), model, scheme, ctrl,
                                     state.t, stats)
            state = ou_sde.step_milstein(state, ou, float(gen.standard_normal()))
        mass = u_cur.sum() * model.mesh.spacing[0]
        assert abs(mass - mass0) <= 1e-12 * abs(mass0)

    def test_first_order_monotone(self, rng):
        model = scalar_model(32)
        u = rng.standard_normal(32).reshape(1, 1, 1, 32)
        ctrl = TimeController.from_target(0.2, 0.2)
        out = advance_interval(u, (0.8,), model, SchemeOrder.first_order(), ctrl, 0.0)
        assert out.min() >= u.min() - 1e-14
        assert out.max() <= u.max() + 1e-14

    def test_cfl_recorded_and_respected(self):
        model = scalar_model(32)
        u = model.initial_state()
        ctrl = TimeController.from_target(0.3, 0.1, cfl_number=0.45)
        stats = CflStats()
        for l in range(ctrl.n_intervals):
            u = advance_interval(u, (0.9,), model, SchemeOrder.first_order(), ctrl,
                                 l * ctrl.h, stats)
        assert stats.violations == 0
        assert stats.max_cfl_sum <= 0.45 * (1 + 1e-12)
        assert stats.n_steps >= ctrl.n_intervals

    def test_interval_lands_exactly(self):
        # FV times restricted to interval boundaries equal {l h}: the total
        # advected distance after L intervals is exactly a * L * h
        model = scalar_model(64)
        u = model.initial_state()
        ctrl = TimeController.from_target(1.0, 2 / 64, cfl_number=0.45)
        stats = CflStats()
        out = u
        for l in range(ctrl.n_intervals):
            out = advance_interval(out, (0.25,), model, SchemeOrder.first_order(),
                                   ctrl, l * ctrl.h, stats)
        assert ctrl.n_intervals * ctrl.h == pytest.approx(1.0, rel=1e-14)
        # interval count L=32, each needs ceil(h / (0.45 dx / 0.25)) steps
        per = math.ceil(ctrl.h / (0.45 * model.mesh.spacing[0] / 0.25) - 1e-12)
        assert stats.n_steps == ctrl.n_intervals * per

    def test_blowup_detection(self):
        model = scalar_model(8)
        u = model.initial_state()
        u[0, 0, 0, 3] = np.inf
        ctrl = TimeController.from_target(0.1, 0.1)
        with pytest.raises(NumericalBlowupError) as exc:
            advance_interval(u, (1.0,), model, SchemeOrder.first_order(), ctrl, 0.0)
        assert exc.value.cell is not None


class TestSspRk2:
    def test_zero_rhs_identity(self, rng):
        class Null:
            mesh = StructuredMesh((8, 1, 1), (0.125, 1.0, 1.0))

            def rhs(self, u, ctx, t, order):
                return np.zeros_like(u)

        u = rng.standard_normal((1, 1, 1, 8))
        out = ssp_rk2_step(u, None, Null(), 0.1, 0.0)
        np.testing.assert_array_equal(out, u)

    def test_third_order_local_error_on_scalar_ode(self):
        # u' = -u: one step vs exp; halving dt cuts the local error ~8x
        class Decay:
            def rhs(self, u, ctx, t, order):
                return -u

        u = np.array([[1.0]])
        errs = []
        for dt in (0.2, 0.1):
            out = ssp_rk2_step(u, None, Decay(), dt, 0.0)
            errs.append(abs(out[0, 0] - math.exp(-dt)))
        ratio = errs[0] / errs[1]
        assert 6.5 < ratio < 9.5

    def test_matches_heun_composition(self, rng):
        class Lin:
            def __init__(self):
                self.A = rng.standard_normal((4, 4)) * 0.3

            def rhs(self, u, ctx, t, order):
                return self.A @ u

        lin = Lin()
        u = rng.standard_normal((4, 1))
        dt = 0.05
        u1 = u + dt * lin.rhs(u, None, 0.0, 2)
        expected = 0.5 * (u + u1 + dt * lin.rhs(u1, None, dt, 2))
        out = ssp_rk2_step(u, None, lin, dt, 0.0)
        np.testing.assert_allclose(out, expected, rtol=1e-15)


class TestTimeController:
    def test_h_divides_horizon(self):
        ctrl = TimeController.from_target(1.5, 0.0078125)
        assert ctrl.n_intervals * ctrl.h == pytest.approx(1.5, rel=1e-15)
        assert ctrl.h <= 0.0078125 * (1 + 1e-9)

    def test_cfl_number_range(self):
        with pytest.raises(ConfigurationError):
            TimeController(h=0.1, t_end=1.0, n_intervals=10, cfl_number=0.6)
        with pytest.raises(ConfigurationError):
            TimeController(h=0.1, t_end=1.0, n_intervals=10, cfl_number=0.0)
