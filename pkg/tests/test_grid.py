import numpy as np
import pytest

from wzlab.grid import (GridFunction, SpatialGrid, derivative, gaussian_bump, inner,
                        prolong_modes, restrict_modes, sobolev_norm, translate,
                        trig_function, zero_function)

TWO_PI = 2.0 * np.pi


def random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    vals = gaussian_bump(grid, 2.0, 0.5, 1.0).values
    vals = vals + rng.uniform(0.3, 1.4) * trig_function(grid, [(1, 0.4, -0.1), (3, 0.0, 0.25)]).values
    return GridFunction(grid, vals)


class TestSpatialGrid:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            SpatialGrid(48, TWO_PI)

    def test_rejects_small(self):
        with pytest.raises(ValueError):
            SpatialGrid(4, TWO_PI)

    def test_points_and_spacing(self):
        g = SpatialGrid(16, 4.0)
        assert g.dx == 0.25
        assert np.allclose(g.points, np.arange(16) * 0.25)


class TestDerivative:
    def test_order_zero_is_identity(self, sgrid):
        u = random_field(sgrid)
        assert derivative(u, 0) is u

    def test_sin_mode_analytic(self):
        g = SpatialGrid(64, 5.0)
        u = trig_function(g, [(1, 0.0, 1.0)])   # sin(2 pi x / 5)
        xi = 2.0 * np.pi / 5.0
        expect = xi * np.cos(xi * g.points)
        assert np.max(np.abs(derivative(u, 1).values - expect)) < 1e-12

    def test_constant_derivative_vanishes(self, sgrid):
        u = GridFunction(sgrid, np.full(sgrid.n_x, 3.2))
        for order in (1, 2, 3):
            assert np.max(np.abs(derivative(u, order).values)) < 1e-12

    def test_negative_order_rejected(self, sgrid):
        with pytest.raises(ValueError):
            derivative(random_field(sgrid), -1)

    def test_second_derivative_of_sin(self, sgrid):
        u = trig_function(sgrid, [(2, 0.0, 1.0)])
        expect = -4.0 * np.sin(2.0 * sgrid.points)
        assert np.max(np.abs(derivative(u, 2).values - expect)) < 1e-11


class TestSobolevNorm:
    def test_constant_norm(self, sgrid):
        c = -1.7
        u = GridFunction(sgrid, np.full(sgrid.n_x, c))
        for m in range(4):
            assert sobolev_norm(u, m) ** 2 == pytest.approx(c * c * TWO_PI, rel=1e-13)

    def test_sin_h1(self, sgrid):
        u = trig_function(sgrid, [(1, 0.0, 1.0)])
        # integral of sin^2 plus integral of cos^2 over one period
        assert sobolev_norm(u, 1) ** 2 == pytest.approx(2.0 * np.pi, rel=1e-13)

    def test_zero_function(self, sgrid):
        assert sobolev_norm(zero_function(sgrid), 2) == 0.0

    def test_negative_index_rejected(self, sgrid):
        with pytest.raises(ValueError):
            sobolev_norm(random_field(sgrid), -1)

    def test_parseval_matches_grid_quadrature(self, sgrid):
        u = random_field(sgrid, seed=3)
        for m in range(3):
            spectral = sobolev_norm(u, m) ** 2
            quad = sum(sgrid.dx * float(np.sum(derivative(u, k).values ** 2))
                       for k in range(m + 1))
            assert spectral == pytest.approx(quad, rel=1e-12)

    def test_monotone_in_m(self, sgrid):
        u = random_field(sgrid, seed=4)
        norms = [sobolev_norm(u, m) for m in range(5)]
        assert all(a <= b + 1e-14 for a, b in zip(norms, norms[1:]))

    def test_norm_recursion_identity(self, sgrid):
        u = random_field(sgrid, seed=5)
        for m in range(3):
            lhs = sobolev_norm(u, m + 1) ** 2
            rhs = sobolev_norm(u, m) ** 2 + sobolev_norm(derivative(u, m + 1), 0) ** 2
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_gaussian_mass(self):
        g = SpatialGrid(256, TWO_PI)
        amp, width = 0.8, 0.25
        u = gaussian_bump(g, center=np.pi, width=width, amplitude=amp)
        assert sobolev_norm(u, 0) ** 2 == pytest.approx(amp * amp * width * np.sqrt(np.pi), rel=1e-9)


class TestInner:
    def test_polarization(self, sgrid):
        u = random_field(sgrid, seed=6)
        for m in range(3):
            assert inner(u, u, m) == pytest.approx(sobolev_norm(u, m) ** 2, rel=1e-13)

    def test_orthogonal_modes(self, sgrid):
        u = trig_function(sgrid, [(1, 0.0, 1.0)])
        v = trig_function(sgrid, [(2, 0.0, 1.0)])
        assert abs(inner(u, v, 0)) < 1e-13

    def test_symmetry(self, sgrid):
        u = random_field(sgrid, seed=7)
        v = random_field(sgrid, seed=8)
        for m in range(2):
            assert inner(u, v, m) == pytest.approx(inner(v, u, m), rel=1e-13)

    def test_grid_mismatch(self, sgrid):
        other = SpatialGrid(128, TWO_PI)
        with pytest.raises(ValueError):
            inner(random_field(sgrid), random_field(other), 0)


class TestGaussianBump:
    def test_zero_amplitude(self, sgrid):
        u = gaussian_bump(sgrid, 1.0, 0.3, 0.0)
        assert np.all(u.values == 0.0)

    def test_value_at_center(self):
        g = SpatialGrid(64, TWO_PI)
        center = g.points[20]
        u = gaussian_bump(g, center, 0.4, 2.5)
        assert u.values[20] == pytest.approx(2.5, rel=1e-15)

    def test_periodic_wrap(self):
        g = SpatialGrid(64, TWO_PI)
        u = gaussian_bump(g, center=0.0, width=0.3, amplitude=1.0)
        # symmetric around 0 across the seam
        assert u.values[1] == pytest.approx(u.values[-1], rel=1e-12)

    def test_rejects_nonpositive_width(self, sgrid):
        with pytest.raises(ValueError):
            gaussian_bump(sgrid, 1.0, 0.0, 1.0)


class TestSpectralOps:
    def test_translate_trig_exact(self, sgrid):
        u = trig_function(sgrid, [(1, 0.3, 0.7), (2, -0.2, 0.0)])
        s = 0.731
        x = sgrid.points
        expect = (0.3 * np.cos(x + s) + 0.7 * np.sin(x + s)
                  - 0.2 * np.cos(2 * (x + s)))
        assert np.max(np.abs(translate(u, s).values - expect)) < 1e-12

    def test_translate_preserves_norms(self, sgrid):
        u = random_field(sgrid, seed=9)
        v = translate(u, 1.234)
        for m in range(3):
            assert sobolev_norm(v, m) == pytest.approx(sobolev_norm(u, m), rel=1e-12)

    def test_roundtrip_spectrum(self, sgrid):
        u = random_field(sgrid, seed=10)
        back = np.fft.ifft(u.spectrum).real
        assert np.max(np.abs(back - u.values)) < 1e-12

    def test_prolong_restrict_roundtrip(self, sgrid):
        u = random_field(sgrid, seed=11)
        fine = SpatialGrid(2 * sgrid.n_x, sgrid.domain_length)
        up = prolong_modes(u, fine)
        back = restrict_modes(up, sgrid)
        assert np.max(np.abs(back.values - u.values)) < 1e-12

    def test_prolong_exact_on_resolved_modes(self, sgrid):
        u = trig_function(sgrid, [(3, 0.5, -0.1)])
        fine = SpatialGrid(128, sgrid.domain_length)
        expect = trig_function(fine, [(3, 0.5, -0.1)])
        assert np.max(np.abs(prolong_modes(u, fine).values - expect.values)) < 1e-12

    def test_restrict_rejects_finer_target(self, sgrid):
        with pytest.raises(ValueError):
            restrict_modes(random_field(sgrid), SpatialGrid(128, sgrid.domain_length))


class TestGridFunction:
    def test_immutable(self, sgrid):
        u = random_field(sgrid)
        with pytest.raises(AttributeError):
            u.values = np.zeros(sgrid.n_x)
        with pytest.raises(ValueError):
            u.values[0] = 1.0

    def test_rejects_nonfinite(self, sgrid):
        vals = np.zeros(sgrid.n_x)
        vals[3] = np.inf
        with pytest.raises(ValueError):
            GridFunction(sgrid, vals)

    def test_rejects_wrong_shape(self, sgrid):
        with pytest.raises(ValueError):
            GridFunction(sgrid, np.zeros(sgrid.n_x + 1))
