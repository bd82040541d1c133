import numpy as np
import pytest

from wzlab import noise as nz
from wzlab.rates import fit_rate


def wiener(seed=7, d1=2, n_fine=2 ** 12, T=1.0):
    return nz.sample_wiener(seed, d1, nz.TimeGrid(T, n_fine))


class TestTimeGrid:
    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            nz.TimeGrid(0.0, 16)
        with pytest.raises(ValueError):
            nz.TimeGrid(1.0, 1)

    def test_times(self):
        g = nz.TimeGrid(2.0, 4)
        assert np.allclose(g.times, [0.0, 0.5, 1.0, 1.5, 2.0])


class TestSampleWiener:
    def test_starts_at_zero(self):
        W = wiener()
        assert np.all(W.samples[:, 0] == 0.0)

    def test_seed_determinism(self):
        g = nz.TimeGrid(1.0, 256)
        W1 = nz.sample_wiener(42, 2, g)
        W2 = nz.sample_wiener(42, 2, g)
        assert np.array_equal(W1.samples, W2.samples)

    def test_different_seeds_differ(self):
        g = nz.TimeGrid(1.0, 256)
        assert not np.array_equal(nz.sample_wiener(1, 1, g).samples,
                                  nz.sample_wiener(2, 1, g).samples)

    def test_terminal_variance_monte_carlo(self):
        # Var W(T) = T, estimated over 10^4 replicas per component
        g = nz.TimeGrid(1.0, 16)
        sq = np.zeros(2)
        reps = 10_000
        for rep in range(reps):
            W = nz.sample_wiener(50_000 + rep, 2, g)
            sq += W.samples[:, -1] ** 2
        mean_sq = sq / reps
        assert np.all(np.abs(mean_sq - 1.0) < 0.05)

    def test_rejects_zero_drivers(self):
        with pytest.raises(ValueError):
            nz.sample_wiener(1, 0, nz.TimeGrid(1.0, 16))


class TestPolygonal:
    def test_zero_path_stays_zero(self):
        g = nz.TimeGrid(1.0, 64)
        W = nz.MultiPath(g, np.zeros((2, 65)), nz.DETERMINISTIC)
        assert np.all(nz.polygonal_approx(W, 8).samples == 0.0)

    def test_linear_path_closed_form(self):
        # W(t) = t: zero on [0, T/n), then t - T/n; sup gap is T/n at the first knot
        g = nz.TimeGrid(1.0, 2 ** 10)
        W = nz.linear_path(1, g)
        n = 8
        Wn = nz.polygonal_approx(W, n)
        t = g.times
        first = t < 1.0 / n
        assert np.all(Wn.samples[0, first] == 0.0)
        assert np.max(np.abs(Wn.samples[0, ~first] - (t[~first] - 1.0 / n))) < 1e-14
        assert np.max(np.abs(W.samples - Wn.samples)) == pytest.approx(1.0 / n, abs=1e-15)

    def test_knot_values_exact(self):
        W = wiener(seed=3, n_fine=2 ** 10)
        n = 16
        Wn = nz.polygonal_approx(W, n)
        r = W.grid.n_fine // n
        for k in range(n):
            assert np.array_equal(Wn.samples[:, (k + 1) * r], W.samples[:, k * r])

    def test_adapted_to_one_knot_back(self):
        g = nz.TimeGrid(1.0, 512)
        W = wiener(seed=4, d1=1, n_fine=512)
        n, k = 8, 5
        r = g.n_fine // n
        bumped = W.samples.copy()
        bumped[:, k * r + 1:] += 3.0
        Wp = nz.MultiPath(g, bumped, nz.DETERMINISTIC)
        upto = (k + 1) * r + 1
        assert np.array_equal(nz.polygonal_approx(W, n).samples[:, :upto],
                              nz.polygonal_approx(Wp, n).samples[:, :upto])

    def test_rejects_bad_n(self):
        W = wiener(n_fine=2 ** 8)
        with pytest.raises(ValueError):
            nz.polygonal_approx(W, 3)          # does not divide
        with pytest.raises(ValueError):
            nz.polygonal_approx(W, 2 ** 9)     # exceeds n_fine


class TestSmoothed:
    def test_constant_path_reproduced_after_window(self):
        g = nz.TimeGrid(1.0, 2 ** 10)
        W = nz.MultiPath(g, np.full((1, g.n_fine + 1), 2.3), nz.DETERMINISTIC)
        n = 16
        Wn = nz.smoothed_approx(W, n)
        t = g.times
        assert np.max(np.abs(Wn.samples[0, t >= 1.0 / n] - 2.3)) < 1e-12

    def test_linear_path_half_window_lag(self):
        # average of s over [t-1/n, t] is t - 1/(2n); trapezoid is exact on linear data
        g = nz.TimeGrid(1.0, 2 ** 10)
        W = nz.linear_path(1, g)
        n = 32
        Wn = nz.smoothed_approx(W, n)
        t = g.times
        sel = t >= 1.0 / n
        assert np.max(np.abs(Wn.samples[0, sel] - (t[sel] - 0.5 / n))) < 1e-14

    def test_zero_extension_at_origin(self):
        g = nz.TimeGrid(1.0, 2 ** 8)
        Wn = nz.smoothed_approx(nz.linear_path(1, g), 8)
        assert Wn.samples[0, 0] == 0.0

    def test_rejects_unresolvable_window(self):
        g = nz.TimeGrid(1.0, 64)
        W = nz.linear_path(1, g)
        with pytest.raises(ValueError):
            nz.smoothed_approx(W, 128)    # 1/n < dt


class TestAreaProcess:
    def test_single_driver_collapses(self):
        A = nz.area_process(wiener(d1=1))
        assert np.all(A == 0.0)

    def test_smooth_pair_quadratic(self):
        # P = (t, t^2) on [0,1]: closed form (1/2) * integral (s*2s - s^2) ds = 1/6
        for n_fine, tol in ((2 ** 10, 1e-3), (2 ** 14, 7e-5)):
            g = nz.TimeGrid(1.0, n_fine)
            t = g.times
            P = nz.MultiPath(g, np.stack([t, t ** 2]), nz.DETERMINISTIC)
            A = nz.area_process(P)
            assert A[0, 1, -1] == pytest.approx(1.0 / 6.0, abs=tol)

    def test_antisymmetric_exactly(self):
        W = wiener(seed=9, d1=3, n_fine=2 ** 10)
        A = nz.area_process(W)
        assert np.all(A + np.swapaxes(A, 0, 1) == 0.0)
        assert np.all(A[np.arange(3), np.arange(3)] == 0.0)


class TestBnProcess:
    def test_identical_paths_vanish(self):
        g = nz.TimeGrid(1.0, 2 ** 8)
        W = nz.linear_path(1, g)
        Wn = nz.MultiPath(g, W.samples.copy(), nz.DETERMINISTIC, n=4)
        B, var = nz.bn_process(W, Wn)
        assert np.all(B == 0.0) and np.all(var == 0.0)

    def test_zero_wiener_gives_zero(self):
        g = nz.TimeGrid(1.0, 2 ** 8)
        W = nz.MultiPath(g, np.zeros((1, g.n_fine + 1)), nz.DETERMINISTIC)
        B, var = nz.bn_process(W, nz.polygonal_approx(W, 8))
        assert np.all(B == 0.0) and np.all(var == 0.0)

    def test_linear_polygonal_closed_form(self):
        # error is T/n after the first knot; integrating it against slope-1
        # increments gives (1 - 1/n)/n
        g = nz.TimeGrid(1.0, 2 ** 12)
        W = nz.linear_path(1, g)
        n = 8
        B, var = nz.bn_process(W, nz.polygonal_approx(W, n))
        expect = (1.0 - 1.0 / n) / n
        assert B[0, 0, -1] == pytest.approx(expect, abs=2e-4)
        assert var[0, 0] == pytest.approx(expect, abs=2e-4)

    def test_rejects_mismatches(self):
        W = wiener(d1=2, n_fine=2 ** 8)
        other = wiener(d1=1, n_fine=2 ** 8)
        with pytest.raises(ValueError):
            nz.bn_process(W, nz.polygonal_approx(other, 4))
        with pytest.raises(ValueError):
            nz.bn_process(W, wiener(seed=8, d1=2, n_fine=2 ** 8))


class TestSnProcess:
    def test_offdiagonal_equals_bn(self):
        W = wiener(d1=2, n_fine=2 ** 10)
        Wn = nz.polygonal_approx(W, 8)
        B, _ = nz.bn_process(W, Wn)
        S = nz.sn_process(W, Wn)
        assert np.array_equal(S[0, 1], B[0, 1])
        assert np.array_equal(S[1, 0], B[1, 0])

    def test_diagonal_ramp_when_bn_vanishes(self):
        g = nz.TimeGrid(1.0, 2 ** 8)
        W = nz.MultiPath(g, np.zeros((1, g.n_fine + 1)), nz.DETERMINISTIC)
        S = nz.sn_process(W, nz.polygonal_approx(W, 8))
        assert np.allclose(S[0, 0], -0.5 * g.times)


class TestProductIdentity:
    def test_deterministic_offdiagonal_zero(self):
        g = nz.TimeGrid(1.0, 2 ** 10)
        t = g.times
        W = nz.MultiPath(g, np.stack([np.sin(t), np.cos(2 * t)]), nz.DETERMINISTIC)
        Wn = nz.MultiPath(g, W.samples.copy(), nz.DETERMINISTIC, n=8)
        res = nz.product_identity_residual(nz.NoiseBundle(W, Wn))
        assert res[0, 1] == 0.0 and res[1, 0] == 0.0

    def test_wiener_residual_shrinks_with_fine_grid(self):
        # matched paths: restrict one realization to the coarser grid
        W_fine = wiener(seed=77, d1=2, n_fine=2 ** 16)
        W_coarse = nz.subsample_path(W_fine, 4)
        res_f = np.max(nz.product_identity_residual(nz.make_bundle(W_fine, nz.POLYGONAL, 16)))
        res_c = np.max(nz.product_identity_residual(nz.make_bundle(W_coarse, nz.POLYGONAL, 16)))
        assert res_f < res_c
        assert res_c < 10.0 * np.sqrt(W_coarse.grid.dt)


class TestScaling:
    def test_bilinear_covariance(self):
        W = wiener(seed=12, d1=2, n_fine=2 ** 10)
        c = -3.0
        Wc = nz.MultiPath(W.grid, c * W.samples, nz.DETERMINISTIC)
        b1 = nz.NoiseBundle(W, nz.polygonal_approx(W, 16))
        b2 = nz.NoiseBundle(Wc, nz.polygonal_approx(Wc, 16))
        assert np.allclose(b2.A, c * c * b1.A, rtol=1e-12, atol=1e-14)
        assert np.allclose(b2.An, c * c * b1.An, rtol=1e-12, atol=1e-14)
        assert np.allclose(b2.Bn, c * c * b1.Bn, rtol=1e-12, atol=1e-14)
        # Sn + ramp/2 is Bn, scaling with c^2; sup distance scales with |c|
        assert b2.sup_w_err == pytest.approx(abs(c) * b1.sup_w_err, rel=1e-13)


class TestNoiseReport:
    def test_singleton_eta(self):
        g = nz.TimeGrid(1.0, 2 ** 10)
        rows = nz.noise_report(5, 2, g, nz.POLYGONAL, [8])
        assert len(rows) == 1
        assert rows[0].eta_n == rows[0].sup_w_err

    def test_eta_is_running_sup(self):
        g = nz.TimeGrid(1.0, 2 ** 12)
        rows = nz.noise_report(5, 2, g, nz.POLYGONAL, [8, 16, 32, 64])
        sups = [r.sup_w_err for r in rows]
        for i, row in enumerate(rows):
            assert row.eta_n == max(sups[i:])

    def test_linear_path_exact_rate(self):
        g = nz.TimeGrid(1.0, 2 ** 12)
        W = nz.linear_path(1, g)
        rows = nz.noise_report(0, 1, g, nz.POLYGONAL, [8, 16, 32, 64], W=W)
        for row in rows:
            assert row.sup_w_err == pytest.approx(1.0 / row.n, abs=1e-15)
        fit = fit_rate([r.n for r in rows], [r.sup_w_err for r in rows])
        assert fit.kappa == pytest.approx(1.0, abs=1e-12)

    def test_rejects_unsorted(self):
        g = nz.TimeGrid(1.0, 2 ** 10)
        with pytest.raises(ValueError):
            nz.noise_report(5, 1, g, nz.POLYGONAL, [16, 8])


class TestPathCache:
    def test_roundtrip_bitwise(self, tmp_path):
        W = wiener(seed=21, d1=3, n_fine=2 ** 8)
        f = tmp_path / "w.wznb"
        nz.save_path(W, f)
        back = nz.load_path(f)
        assert back.grid == W.grid
        assert np.array_equal(back.samples, W.samples)

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "bad.wznb"
        f.write_bytes(b"XXXX" + bytes(32))
        with pytest.raises(ValueError, match="magic"):
            nz.load_path(f)

    def test_unsupported_version(self, tmp_path):
        W = wiener(seed=1, d1=1, n_fine=16)
        f = tmp_path / "w.wznb"
        nz.save_path(W, f)
        raw = bytearray(f.read_bytes())
        raw[4] = 99
        f.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            nz.load_path(f)

    def test_truncated(self, tmp_path):
        W = wiener(seed=1, d1=1, n_fine=16)
        f = tmp_path / "w.wznb"
        nz.save_path(W, f)
        f.write_bytes(f.read_bytes()[:-9])
        with pytest.raises(ValueError, match="truncated"):
            nz.load_path(f)


class TestSubsample:
    def test_keeps_every_kth(self):
        W = wiener(seed=2, d1=2, n_fine=2 ** 8)
        sub = nz.subsample_path(W, 4)
        assert sub.grid.n_fine == 2 ** 6
        assert np.array_equal(sub.samples, W.samples[:, ::4])

    def test_rejects_nondivisor(self):
        with pytest.raises(ValueError):
            nz.subsample_path(wiener(n_fine=2 ** 8), 3)


class TestMultiPath:
    def test_immutable(self):
        W = wiener()
        with pytest.raises(AttributeError):
            W.kind = "other"
        with pytest.raises(ValueError):
            W.samples[0, 0] = 1.0

    def test_wiener_must_start_at_zero(self):
        g = nz.TimeGrid(1.0, 16)
        samples = np.ones((1, 17))
        with pytest.raises(ValueError):
            nz.MultiPath(g, samples, nz.WIENER)

    def test_rejects_nonfinite(self):
        g = nz.TimeGrid(1.0, 16)
        samples = np.zeros((1, 17))
        samples[0, 5] = np.nan
        with pytest.raises(ValueError):
            nz.MultiPath(g, samples, nz.DETERMINISTIC)
