"""Distribution-divergence metrics against independent oracles.

scipy.stats.wasserstein_distance, scipy.linalg.sqrtm, scipy pdist, and
np.corrcoef appear here strictly as cross-check oracles; the library
implementations stand on their own.
"""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import sqrtm
from scipy.spatial.distance import pdist

from popalign import (
    MetricReport,
    amw,
    frechet_distance,
    mae_corr,
    metric_report,
    mmd,
    mmd_unsquared,
    pearson_corr_matrix,
    sliced_wasserstein,
    wasserstein_1d,
)
from popalign.core import ResponseMatrix
from popalign.errors import (
    ConstantColumn,
    DegenerateBandwidth,
    DimensionMismatch,
    EmptyInput,
    InsufficientSamples,
)


def merged_grid_w1(x, y):
    """Independent oracle: integrate |F_x - F_y| over the merged support."""
    x, y = np.sort(x), np.sort(y)
    z = np.unique(np.concatenate([x, y]))
    total = 0.0
    for lo, hi in zip(z[:-1], z[1:]):
        fx = np.searchsorted(x, lo, side="right") / len(x)
        fy = np.searchsorted(y, lo, side="right") / len(y)
        total += abs(fx - fy) * (hi - lo)
    return total


class TestWasserstein1d:
    def test_identical(self):
        assert wasserstein_1d([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_point_masses(self):
        assert wasserstein_1d([0.0], [1.0]) == pytest.approx(1.0, abs=1e-15)

    def test_sorted_pairing(self):
        # pairs (0,0) and (0,2) under the monotone coupling
        assert wasserstein_1d([0.0, 0.0], [0.0, 2.0]) == pytest.approx(1.0, abs=1e-15)

    def test_equal_sizes_mean_sorted_gap(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=300), rng.normal(size=300)
        want = float(np.mean(np.abs(np.sort(x) - np.sort(y))))
        assert wasserstein_1d(x, y) == pytest.approx(want, rel=1e-12)

    def test_unequal_sizes_vs_grid_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.normal(size=rng.integers(2, 40))
            y = rng.normal(size=rng.integers(2, 40))
            assert wasserstein_1d(x, y) == pytest.approx(merged_grid_w1(x, y), rel=1e-10)

    def test_vs_scipy(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            x = rng.normal(size=137)
            y = rng.normal(loc=0.5, size=211)
            assert wasserstein_1d(x, y) == pytest.approx(
                stats.wasserstein_distance(x, y), rel=1e-11
            )

    def test_empty(self):
        with pytest.raises(EmptyInput):
            wasserstein_1d([], [1.0])


class TestAmw:
    def test_identical(self):
        X = np.random.default_rng(3).normal(size=(20, 4))
        assert amw(X, X) == 0.0

    def test_point_rows(self):
        assert amw(np.array([[0.0, 0.0]]), np.array([[1.0, 3.0]])) == pytest.approx(
            2.0, abs=1e-14
        )

    def test_vs_per_column_oracle(self):
        rng = np.random.default_rng(4)
        X, Y = rng.normal(size=(200, 3)), rng.normal(loc=0.3, size=(300, 3))
        want = np.mean([merged_grid_w1(X[:, t], Y[:, t]) for t in range(3)])
        assert amw(X, Y) == pytest.approx(want, rel=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            amw(np.zeros((2, 2)), np.zeros((2, 3)))


class TestFrechetDistance:
    def test_identical(self):
        X = np.random.default_rng(5).normal(size=(50, 3))
        assert frechet_distance(X, X) <= 1e-8

    def test_pure_shift(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(100, 4))
        delta = np.array([1.0, -2.0, 0.5, 3.0])
        got = frechet_distance(X, X + delta)
        assert got == pytest.approx(float(np.sum(delta**2)), abs=1e-8)

    def test_two_point_scalar_formula(self):
        # {-a, +a} vs {-b, +b}: means 0, sample variances (N-1 norm) 2a^2, 2b^2
        # -> FD = (sqrt(2)a - sqrt(2)b)^2 = 2 (a - b)^2
        a, b = 1.5, 0.5
        got = frechet_distance(np.array([[-a], [a]]), np.array([[-b], [b]]))
        assert got == pytest.approx(2.0 * (a - b) ** 2, rel=1e-12)

    def test_vs_direct_sqrtm_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            X = rng.normal(size=(60, 3)) @ rng.normal(size=(3, 3))
            Y = rng.normal(size=(80, 3)) @ rng.normal(size=(3, 3)) + rng.normal(size=3)
            mx, my = X.mean(0), Y.mean(0)
            Sx, Sy = np.cov(X, rowvar=False), np.cov(Y, rowvar=False)
            cross = sqrtm(Sx @ Sy)
            want = float(
                np.sum((mx - my) ** 2) + np.trace(Sx + Sy - 2.0 * np.real(cross))
            )
            assert frechet_distance(X, Y) == pytest.approx(want, rel=1e-7)

    def test_nonnegative_near_identical(self):
        X = np.random.default_rng(8).normal(size=(30, 2))
        assert frechet_distance(X, X + 1e-12) >= 0.0

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientSamples):
            frechet_distance(np.zeros((1, 2)), np.zeros((5, 2)))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            frechet_distance(np.zeros((3, 2)), np.zeros((3, 3)))


class TestSlicedWasserstein:
    def test_identical_any_seed(self):
        X = np.random.default_rng(9).normal(size=(40, 3))
        for seed in (0, 1, 99):
            assert sliced_wasserstein(X, X, n_projections=16, seed=seed) == 0.0

    def test_d1_equals_exact_w1(self):
        rng = np.random.default_rng(10)
        x, y = rng.normal(size=(30, 1)), rng.normal(loc=1.0, size=(50, 1))
        w1 = wasserstein_1d(x[:, 0], y[:, 0])
        for seed in (0, 7):
            assert sliced_wasserstein(x, y, n_projections=8, seed=seed) == w1

    def test_shift_matches_sphere_average(self):
        # projections of X + delta are projections of X shifted by <delta, v>,
        # so each projected W1 is exactly |<delta, v>|; in d=3 the sphere
        # average of |<delta, v>| is ||delta|| / 2
        rng = np.random.default_rng(11)
        X = rng.normal(size=(60, 3))
        delta = np.array([2.0, -1.0, 0.5])
        got = sliced_wasserstein(X, X + delta, n_projections=2048, seed=5)
        want = float(np.linalg.norm(delta)) / 2.0
        assert abs(got - want) <= 0.05 * want

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        X, Y = rng.normal(size=(25, 4)), rng.normal(size=(35, 4))
        a = sliced_wasserstein(X, Y, n_projections=64, seed=3)
        b = sliced_wasserstein(X, Y, n_projections=64, seed=3)
        assert a == b

    def test_symmetry(self):
        rng = np.random.default_rng(13)
        X, Y = rng.normal(size=(25, 4)), rng.normal(size=(35, 4))
        a = sliced_wasserstein(X, Y, n_projections=64, seed=3)
        b = sliced_wasserstein(Y, X, n_projections=64, seed=3)
        assert abs(a - b) <= 1e-12


class TestMmd:
    def test_identical_multiset(self):
        X = np.random.default_rng(14).normal(size=(30, 3))
        assert mmd(X, X) <= 1e-12

    def test_singleton_formula(self):
        # X={0}, Y={1}, sigma=1: 1 + 1 - 2 exp(-1/2)
        got = mmd(np.array([[0.0]]), np.array([[1.0]]), kernel_bandwidth=1.0)
        want = 2.0 * (1.0 - math.exp(-0.5))
        assert got == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(0.78694, abs=5e-6)

    def test_flat_kernel_limit(self):
        rng = np.random.default_rng(15)
        X, Y = rng.normal(size=(20, 2)), rng.normal(loc=2.0, size=(25, 2))
        assert mmd(X, Y, kernel_bandwidth=1e8) <= 1e-10

    def test_median_heuristic_matches_pdist(self):
        rng = np.random.default_rng(16)
        X, Y = rng.normal(size=(15, 3)), rng.normal(size=(10, 3))
        pooled = np.vstack([X, Y])
        sigma = float(np.median(pdist(pooled)))
        assert mmd(X, Y) == pytest.approx(mmd(X, Y, kernel_bandwidth=sigma), rel=1e-12)

    def test_vs_brute_force_vstat(self):
        rng = np.random.default_rng(17)
        X, Y = rng.normal(size=(12, 2)), rng.normal(loc=1.0, size=(9, 2))
        sigma = 1.3

        def k(u, v):
            return math.exp(-float(np.sum((u - v) ** 2)) / (2.0 * sigma**2))

        kxx = np.mean([[k(a, b) for b in X] for a in X])
        kyy = np.mean([[k(a, b) for b in Y] for a in Y])
        kxy = np.mean([[k(a, b) for b in Y] for a in X])
        want = kxx + kyy - 2.0 * kxy
        assert mmd(X, Y, kernel_bandwidth=sigma) == pytest.approx(want, rel=1e-12)

    def test_degenerate_bandwidth(self):
        X = np.zeros((5, 2))
        with pytest.raises(DegenerateBandwidth):
            mmd(X, X.copy())

    def test_unsquared_is_sqrt(self):
        rng = np.random.default_rng(18)
        X, Y = rng.normal(size=(20, 2)), rng.normal(loc=1.0, size=(20, 2))
        sq = mmd(X, Y, kernel_bandwidth=1.0)
        assert mmd_unsquared(X, Y, kernel_bandwidth=1.0) == pytest.approx(
            math.sqrt(sq), rel=1e-12
        )

    def test_symmetry(self):
        rng = np.random.default_rng(19)
        X, Y = rng.normal(size=(20, 3)), rng.normal(size=(30, 3))
        assert abs(mmd(X, Y) - mmd(Y, X)) <= 1e-12


class TestPearson:
    def test_duplicate_column(self):
        x = np.random.default_rng(20).normal(size=30)
        M = pearson_corr_matrix(np.column_stack([x, x]))
        assert M[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_negated_column(self):
        x = np.random.default_rng(21).normal(size=30)
        M = pearson_corr_matrix(np.column_stack([x, -x]))
        assert M[0, 1] == pytest.approx(-1.0, abs=1e-12)

    def test_three_point_hand_value(self):
        M = pearson_corr_matrix(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 4.0]]))
        # cov = 3/2, sigma_x = 1, sigma_y = sqrt(7/3)
        want = 1.5 / math.sqrt(7.0 / 3.0)
        assert M[0, 1] == pytest.approx(want, rel=1e-12)
        assert want == pytest.approx(0.98198, abs=5e-6)

    def test_vs_corrcoef(self):
        rng = np.random.default_rng(22)
        X = rng.normal(size=(40, 5))
        np.testing.assert_allclose(
            pearson_corr_matrix(X), np.corrcoef(X, rowvar=False), atol=1e-12
        )

    def test_structure(self):
        rng = np.random.default_rng(23)
        M = pearson_corr_matrix(rng.normal(size=(25, 4)))
        np.testing.assert_allclose(M, M.T, atol=0)
        np.testing.assert_array_equal(np.diag(M), np.ones(4))
        assert (np.abs(M) <= 1.0).all()

    def test_constant_column_marked_nan(self):
        rng = np.random.default_rng(24)
        X = rng.normal(size=(20, 3))
        X[:, 1] = 7.0
        M = pearson_corr_matrix(X)
        assert np.isnan(M[0, 1]) and np.isnan(M[1, 2])
        assert M[1, 1] == 1.0  # diagonal stays defined
        assert not np.isnan(M[0, 2])

    def test_affine_invariance(self):
        rng = np.random.default_rng(25)
        X = rng.normal(size=(30, 3))
        scaled = X * np.array([2.0, 0.5, 10.0]) + np.array([-3.0, 7.0, 0.1])
        np.testing.assert_allclose(
            pearson_corr_matrix(X), pearson_corr_matrix(scaled), atol=1e-12
        )


class TestMaeCorr:
    def test_identical(self):
        X = np.random.default_rng(26).normal(size=(25, 4))
        assert mae_corr(X, X) == 0.0

    def test_opposite_correlations(self):
        x = np.random.default_rng(27).normal(size=30)
        X = np.column_stack([x, x])       # corr +1
        Y = np.column_stack([x, -x])      # corr -1
        assert mae_corr(X, Y) == pytest.approx(2.0, abs=1e-12)

    def test_vs_pairwise_loop_oracle(self):
        rng = np.random.default_rng(28)
        X, Y = rng.normal(size=(40, 4)), rng.normal(size=(50, 4))
        RX = np.corrcoef(X, rowvar=False)
        RY = np.corrcoef(Y, rowvar=False)
        pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        want = np.mean([abs(RX[i, j] - RY[i, j]) for i, j in pairs])
        assert mae_corr(X, Y) == pytest.approx(want, abs=1e-12)

    def test_constant_column_raises(self):
        rng = np.random.default_rng(29)
        X = rng.normal(size=(20, 3))
        Y = rng.normal(size=(20, 3))
        Y[:, 2] = 1.0
        with pytest.raises(ConstantColumn) as exc:
            mae_corr(X, Y)
        assert exc.value.column == 2

    def test_affine_invariance(self):
        rng = np.random.default_rng(30)
        X, Y = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
        Xs = X * np.array([3.0, 1.0, 0.2]) + 5.0
        assert mae_corr(Xs, Y) == pytest.approx(mae_corr(X, Y), abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(31)
        X, Y = rng.normal(size=(30, 3)), rng.normal(size=(40, 3))
        assert abs(mae_corr(X, Y) - mae_corr(Y, X)) <= 1e-12


class TestMetricReport:
    def test_fields_populated(self):
        rng = np.random.default_rng(32)
        X, Y = rng.normal(size=(50, 3)), rng.normal(loc=0.5, size=(60, 3))
        rep = metric_report(X, Y, n_projections=32, seed=0)
        assert isinstance(rep, MetricReport)
        for v in (rep.amw, rep.fd, rep.sw, rep.mmd, rep.mae_corr):
            assert v is not None and np.isfinite(v) and v >= 0
        assert rep.sample_sizes == (50, 60)

    def test_mae_none_on_constant_column(self):
        rng = np.random.default_rng(33)
        X, Y = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
        X[:, 0] = 2.0
        rep = metric_report(X, Y, n_projections=8, seed=0)
        assert rep.mae_corr is None
        assert rep.amw >= 0  # other metrics unaffected

    def test_mae_none_in_one_dimension(self):
        rng = np.random.default_rng(34)
        rep = metric_report(
            rng.normal(size=(20, 1)), rng.normal(size=(20, 1)),
            n_projections=8, seed=0,
        )
        assert rep.mae_corr is None

    def test_to_record_flat(self):
        rng = np.random.default_rng(35)
        rep = metric_report(
            rng.normal(size=(20, 2)), rng.normal(size=(25, 2)),
            n_projections=8, seed=4,
        )
        rec = rep.to_record()
        assert rec["amw"] == rep.amw
        assert rec["setting_sw_projections"] == 8
        assert rec["setting_sw_seed"] == 4
        assert rec["n_x"] == 20 and rec["n_y"] == 25
        assert all(not isinstance(v, (dict, list, tuple)) for v in rec.values())

    def test_accepts_response_matrices(self):
        rng = np.random.default_rng(36)
        X = ResponseMatrix(rng.normal(size=(20, 2)))
        Y = ResponseMatrix(rng.normal(size=(20, 2)))
        rep = metric_report(X, Y, n_projections=8, seed=0)
        assert rep.sample_sizes == (20, 20)
