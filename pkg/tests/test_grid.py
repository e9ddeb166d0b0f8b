import math

import numpy as np
import pytest

from stochfv.errors import ConfigurationError
from stochfv.grid import (
    DirichletFunction,
    Field,
    NEUMANN_COPY,
    PERIODIC,
    StructuredMesh,
    apply_boundary,
    l1_norm,
    l2_norm,
    read_csv,
    read_raw,
    write_csv,
    write_raw,
)


def mesh_1d(n, length=1.0, boundary=PERIODIC):
    return StructuredMesh((n, 1, 1), (length / n, 1.0, 1.0),
                          boundary=(boundary, PERIODIC, PERIODIC))


class TestMeshInvariants:
    def test_cell_centers(self):
        m = mesh_1d(4)
        np.testing.assert_allclose(m.axis_centers(0), [0.125, 0.375, 0.625, 0.875])

    def test_cell_volume_collapses_unused_axes(self):
        m = StructuredMesh((8, 4, 1), (0.5, 0.25, 1.0))
        assert m.cell_volume == 0.125
        assert m.active_axes == (0, 1)

    def test_rejects_bad_extents_and_spacings(self):
        with pytest.raises(ValueError):
            StructuredMesh((0, 1, 1))
        with pytest.raises(ValueError):
            StructuredMesh((4, 1, 1), (0.0, 1.0, 1.0))

    def test_periodic_must_pair(self):
        with pytest.raises(ConfigurationError):
            StructuredMesh((4, 1, 1), boundary=((PERIODIC, NEUMANN_COPY), PERIODIC, PERIODIC))


class TestNorms:
    def test_zero_field(self):
        f = Field.zeros(mesh_1d(8), 1)
        assert l1_norm(f) == 0.0
        assert l2_norm(f) == 0.0

    def test_constant_field_unit_domain(self):
        f = Field(mesh_1d(16), np.full((1, 1, 1, 16), -3.0))
        assert l1_norm(f) == pytest.approx(3.0)
        assert l2_norm(f) == pytest.approx(3.0)

    def test_single_cell_l1(self):
        # one nonzero cell v on a 4-cell mesh with dx = 1/4 -> |v|/4
        f = Field.zeros(mesh_1d(4), 1)
        f.data[0, 0, 0, 2] = -7.0
        assert l1_norm(f) == pytest.approx(7.0 / 4.0)

    def test_l2_hand_value(self):
        # (1, 2) with dx = 1/2 -> sqrt(0.5 * (1 + 4))
        m = StructuredMesh((2, 1, 1), (0.5, 1.0, 1.0))
        f = Field(m, np.array([1.0, 2.0]).reshape(1, 1, 1, 2))
        assert l2_norm(f) == pytest.approx(math.sqrt(2.5), rel=1e-15)

    def test_absolute_homogeneity(self, rng):
        m = StructuredMesh((8, 4, 1), (0.25, 0.5, 1.0))
        data = rng.standard_normal((2, 1, 4, 8))
        f = Field(m, data)
        g = Field(m, -2.5 * data)
        for norm in (l1_norm, l2_norm):
            assert norm(g, 1) == pytest.approx(2.5 * norm(f, 1), rel=1e-14)

    def test_component_out_of_range(self):
        f = Field.zeros(mesh_1d(4), 2)
        with pytest.raises(ValueError):
            l1_norm(f, 2)


class TestApplyBoundary:
    def test_periodic_wrap(self):
        f = Field(mesh_1d(3), np.array([1.0, 2.0, 3.0]).reshape(1, 1, 1, 3))
        ext = apply_boundary(f, 1)
        np.testing.assert_array_equal(ext[0, 0, 0], [3.0, 1.0, 2.0, 3.0, 1.0])

    def test_neumann_copy(self):
        f = Field(mesh_1d(3, boundary=NEUMANN_COPY),
                  np.array([1.0, 2.0, 3.0]).reshape(1, 1, 1, 3))
        ext = apply_boundary(f, 2)
        np.testing.assert_array_equal(ext[0, 0, 0], [1.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0])

    def test_acoustic_source_ghost(self):
        # left-boundary state (0, sin(4 pi t), 0) inside |y - 1/2| < 0.05
        def source(x, y, z, t):
            out = np.zeros((3,) + np.shape(x))
            out[1] = np.sin(4.0 * math.pi * t) * (np.abs(y - 0.5) < 0.05)
            return out

        m = StructuredMesh((10, 10, 1), (0.1, 0.1, 1.0),
                           boundary=((DirichletFunction(source), NEUMANN_COPY),
                                     (NEUMANN_COPY, NEUMANN_COPY), PERIODIC))
        f = Field.zeros(m, 3)
        ext = apply_boundary(f, 1, t=0.125)
        # ghost column 0; row with y in (0.45, 0.55) is j = 4 or 5 -> y = 0.45, 0.55
        # cell centers: y_j = (j + 1/2)/10, so only j = 4 (y = 0.45)? |0.45-0.5| = 0.05, not < 0.05
        # no cell center satisfies strictly; use 20 cells so y = 0.475, 0.525 qualify
        m = StructuredMesh((10, 20, 1), (0.1, 0.05, 1.0),
                           boundary=((DirichletFunction(source), NEUMANN_COPY),
                                     (NEUMANN_COPY, NEUMANN_COPY), PERIODIC))
        f = Field.zeros(m, 3)
        ext = apply_boundary(f, 1, t=0.125)
        j_in = 10  # y = 0.525
        assert ext[0, 0, j_in + 1, 0] == 0.0
        assert ext[1, 0, j_in + 1, 0] == pytest.approx(1.0, abs=1e-15)
        assert ext[2, 0, j_in + 1, 0] == 0.0
        j_out = 3   # y = 0.175, outside the slit
        assert ext[1, 0, j_out + 1, 0] == 0.0

    def test_interior_bit_identical(self, rng):
        m = StructuredMesh((8, 6, 1), (1 / 8, 1 / 6, 1.0))
        data = rng.standard_normal((2, 1, 6, 8))
        f = Field(m, data.copy())
        ext = apply_boundary(f, 2, t=0.3)
        assert np.array_equal(ext[:, :, 2:-2, 2:-2], data)

    def test_periodic_constant_stays_constant(self):
        m = StructuredMesh((6, 4, 1), (1 / 6, 1 / 4, 1.0))
        f = Field(m, np.full((1, 1, 4, 6), 2.5))
        ext = apply_boundary(f, 2)
        assert np.all(ext == 2.5)

    def test_dirichlet_without_handle_is_config_error(self):
        with pytest.raises(ConfigurationError):
            StructuredMesh((4, 1, 1), boundary=(("dirichlet", NEUMANN_COPY), PERIODIC, PERIODIC))


class TestIO:
    def test_raw_round_trip(self, tmp_path, rng):
        m = StructuredMesh((5, 3, 1), (0.2, 1 / 3, 1.0))
        f = Field(m, rng.standard_normal((2, 1, 3, 5)))
        path = tmp_path / "f.raw"
        write_raw(path, f)
        header = path.read_bytes().split(b"\n", 1)[0]
        assert header == b"stochfv-grid v1 5 3 1 2"
        data, dims = read_raw(path)
        assert dims == (5, 3, 1)
        np.testing.assert_array_equal(data, f.data)

    def test_csv_round_trip_17_digits(self, tmp_path):
        m = mesh_1d(3)
        f = Field(m, np.array([1 / 3, math.pi, -1e-17]).reshape(1, 1, 1, 3))
        path = tmp_path / "f.csv"
        write_csv(path, f)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,z,c0"
        rows = read_csv(path)
        np.testing.assert_array_equal(rows[:, 3], f.data[0, 0, 0])

    def test_csv_cell_order_x_fastest(self, tmp_path):
        m = StructuredMesh((2, 2, 1), (0.5, 0.5, 1.0))
        f = Field(m, np.arange(4.0).reshape(1, 1, 2, 2))
        path = tmp_path / "f.csv"
        write_csv(path, f)
        rows = read_csv(path)
        np.testing.assert_allclose(rows[:, 0], [0.25, 0.75, 0.25, 0.75])
        np.testing.assert_allclose(rows[:, 1], [0.25, 0.25, 0.75, 0.75])
        np.testing.assert_array_equal(rows[:, 3], [0.0, 1.0, 2.0, 3.0])
