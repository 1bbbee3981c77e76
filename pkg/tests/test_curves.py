import io

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fdboot import (
    FunctionalDataset,
    Grid,
    ValidationError,
    fourier_basis,
    fourier_smooth,
    inner_product,
    load_dataset,
    save_dataset,
    weighted_norm,
)


class TestGrid:
    def test_uniform_weights_sum_to_one(self):
        grid = Grid.uniform(500)
        assert grid.m == 500
        assert abs(grid.weights.sum() - 1.0) <= 1e-12
        assert grid.points[0] == 0.0 and grid.points[-1] == 1.0

    def test_trapezoid_weights_on_irregular_points(self):
        pts = np.array([0.0, 0.1, 0.4, 1.0])
        grid = Grid.from_points(pts)
        assert_allclose(grid.weights, [0.05, 0.2, 0.45, 0.3], atol=1e-15)

    def test_rejects_decreasing_points(self):
        with pytest.raises(ValidationError, match="strictly increasing"):
            Grid.from_points([0.0, 0.5, 0.4, 1.0])

    def test_rejects_points_outside_unit_interval(self):
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            Grid.from_points([0.0, 0.5, 1.2])

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ValidationError, match="positive"):
            Grid(np.array([0.0, 0.5, 1.0]), np.array([0.5, 0.0, 0.5]))

    def test_grid_is_immutable(self):
        grid = Grid.uniform(5)
        with pytest.raises(ValueError):
            grid.points[0] = 0.5


class TestInnerProduct:
    def test_unit_constant(self):
        grid = Grid.uniform(17)
        one = np.ones(grid.m)
        assert abs(inner_product(one, one, grid) - 1.0) <= 1e-12

    def test_sin_cos_orthogonality(self):
        # analytic value 0; high-resolution quadrature agrees to < 1e-12
        grid = Grid.uniform(500)
        f = np.sqrt(2) * np.sin(2 * np.pi * grid.points)
        g = np.sqrt(2) * np.cos(2 * np.pi * grid.points)
        assert abs(inner_product(f, g, grid) - 0.0) <= 1e-6

    def test_quadratic_moment(self):
        grid = Grid.uniform(1001)
        t = grid.points
        assert abs(inner_product(t, t, grid) - 1.0 / 3.0) <= 1e-6

    def test_length_mismatch_raises(self):
        grid = Grid.uniform(5)
        with pytest.raises(ValidationError, match="length mismatch"):
            inner_product(np.ones(4), np.ones(5), grid)

    def test_symmetric_and_bilinear(self, rng):
        grid = Grid.uniform(23)
        for _ in range(25):
            f = rng.standard_normal(grid.m)
            g = rng.standard_normal(grid.m)
            h = rng.standard_normal(grid.m)
            a, b = rng.standard_normal(2)
            assert inner_product(f, g, grid) == pytest.approx(
                inner_product(g, f, grid), abs=1e-14
            )
            lhs = inner_product(a * f + b * h, g, grid)
            rhs = a * inner_product(f, g, grid) + b * inner_product(h, g, grid)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-13)

    def test_norm_is_nonnegative(self, rng):
        grid = Grid.uniform(11)
        f = rng.standard_normal(grid.m)
        assert weighted_norm(f, grid) >= 0.0


class TestFourierSmooth:
    def test_constant_is_reproduced(self):
        grid = Grid.uniform(64)
        raw = np.full(grid.m, 5.0)
        assert_allclose(fourier_smooth(raw, grid, 1), raw, atol=1e-12)

    def test_basis_element_is_reproduced(self):
        grid = Grid.uniform(500)
        raw = np.sin(2 * np.pi * grid.points)
        assert np.max(np.abs(fourier_smooth(raw, grid, 49) - raw)) <= 1e-8

    def test_idempotent(self, rng):
        grid = Grid.uniform(200)
        raw = rng.standard_normal(grid.m)
        once = fourier_smooth(raw, grid, 25)
        twice = fourier_smooth(once, grid, 25)
        assert np.max(np.abs(twice - once)) <= 1e-10

    def test_step_function_error_decreases_with_basis_size(self):
        grid = Grid.uniform(500)
        raw = (grid.points > 0.5).astype(float)
        errors = []
        for n_basis in (9, 25, 49):
            fit = fourier_smooth(raw, grid, n_basis)
            errors.append(weighted_norm(raw - fit, grid))
            # direct least-squares oracle: solve the weighted normal
            # equations from scratch
            basis = fourier_basis(grid, n_basis)
            design = basis.T * np.sqrt(grid.weights)[:, None]
            coef, *_ = np.linalg.lstsq(design, raw * np.sqrt(grid.weights), rcond=None)
            assert_allclose(fit, basis.T @ coef, atol=1e-10)
        assert errors[0] > errors[1] > errors[2]

    def test_projection_optimality_nested_spans(self, rng):
        grid = Grid.uniform(128)
        for _ in range(10):
            f = rng.standard_normal(grid.m)
            err49 = weighted_norm(f - fourier_smooth(f, grid, 49), grid)
            err9 = weighted_norm(f - fourier_smooth(f, grid, 9), grid)
            assert err49 <= err9 + 1e-12

    def test_even_basis_count_rejected(self):
        grid = Grid.uniform(32)
        with pytest.raises(ValidationError, match="odd"):
            fourier_smooth(np.ones(grid.m), grid, 4)

    def test_basis_larger_than_grid_rejected(self):
        grid = Grid.uniform(8)
        with pytest.raises(ValidationError, match="exceeds grid size"):
            fourier_smooth(np.ones(grid.m), grid, 9)


class TestFunctionalDataset:
    def test_basic_properties(self, rng):
        grid = Grid.uniform(6)
        ds = FunctionalDataset(
            grid,
            (rng.standard_normal((3, 6)), rng.standard_normal((4, 6))),
            ("a", "b"),
        )
        assert ds.n_groups == 2
        assert ds.sizes == (3, 4)
        assert ds.total == 7
        assert ds.m == 6

    def test_single_group_rejected(self, rng):
        with pytest.raises(ValidationError, match="K >= 2"):
            FunctionalDataset(Grid.uniform(4), (rng.standard_normal((3, 4)),))

    def test_short_group_rejected(self, rng):
        with pytest.raises(ValidationError, match="n_i >= 2"):
            FunctionalDataset(
                Grid.uniform(4),
                (rng.standard_normal((1, 4)), rng.standard_normal((3, 4))),
            )

    def test_length_mismatch_rejected(self, rng):
        with pytest.raises(ValidationError, match="length"):
            FunctionalDataset(
                Grid.uniform(4),
                (rng.standard_normal((3, 5)), rng.standard_normal((3, 4))),
            )

    def test_non_finite_rejected(self, rng):
        bad = rng.standard_normal((3, 4))
        bad[1, 2] = np.nan
        with pytest.raises(ValidationError, match="non-finite"):
            FunctionalDataset(Grid.uniform(4), (bad, rng.standard_normal((2, 4))))


WELL_FORMED = """a,1.0,2.0,3.0,0.5
a,0.0,1.0,0.0,1.5
a,2.0,0.5,1.0,0.5
b,1.0,1.0,1.0,1.0
b,0.5,0.25,0.125,2.0
b,3.0,2.0,1.0,0.0
"""


class TestCsv:
    def test_well_formed_fixture(self):
        ds = load_dataset(io.StringIO(WELL_FORMED))
        assert ds.n_groups == 2
        assert ds.sizes == (3, 3)
        assert ds.m == 4
        assert ds.labels == ("a", "b")
        # default grid is uniform on [0, 1]
        assert_allclose(ds.grid.points, [0.0, 1 / 3, 2 / 3, 1.0], atol=1e-15)

    def test_grid_header_row(self):
        text = "#grid,0.0,0.25,1.0\nx,1,2,3\nx,4,5,6\ny,7,8,9\ny,1,1,1\n"
        ds = load_dataset(io.StringIO(text))
        assert_allclose(ds.grid.points, [0.0, 0.25, 1.0], atol=1e-15)

    def test_single_group_label_rejected(self):
        text = "only,1,2\nonly,3,4\n"
        with pytest.raises(ValidationError, match="K >= 2"):
            load_dataset(io.StringIO(text))

    def test_non_increasing_grid_rejected(self):
        text = "#grid,0.0,0.5,0.4\nx,1,2,3\nx,1,2,3\ny,1,2,3\ny,1,2,3\n"
        with pytest.raises(ValidationError, match="strictly increasing"):
            load_dataset(io.StringIO(text))

    def test_ragged_row_names_the_row(self):
        text = "a,1,2,3\na,1,2,3\nb,1,2\nb,1,2,3\n"
        with pytest.raises(ValidationError, match="row 3"):
            load_dataset(io.StringIO(text))

    def test_non_finite_value_rejected(self):
        text = "a,1,2,nan\na,1,2,3\nb,1,2,3\nb,1,2,3\n"
        with pytest.raises(ValidationError, match="row 1"):
            load_dataset(io.StringIO(text))

    def test_bad_token_rejected(self):
        text = "a,1,2,zebra\na,1,2,3\nb,1,2,3\nb,1,2,3\n"
        with pytest.raises(ValidationError, match="row 1"):
            load_dataset(io.StringIO(text))

    def test_round_trip_is_identity(self, rng):
        grid = Grid.from_points(np.sort(rng.uniform(0, 1, 9)))
        ds = FunctionalDataset(
            grid,
            (rng.standard_normal((4, 9)), rng.standard_normal((3, 9))),
            ("u", "v"),
        )
        buf = io.StringIO()
        save_dataset(ds, buf, comments=["seed,123"])
        back = load_dataset(io.StringIO(buf.getvalue()))
        assert back.labels == ds.labels
        assert_allclose(back.grid.points, ds.grid.points, atol=0)
        for a, b in zip(back.groups, ds.groups):
            assert_allclose(a, b, atol=0)
