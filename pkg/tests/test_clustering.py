import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svbrdfkit import clustering as cl
from svbrdfkit.errors import DegenerateInputError, InvalidInputError


def random_features(rng, n, spread=1.0):
    numeric = rng.normal(0, spread, (n, 3))
    bits = rng.integers(0, 2, (n, cl.BRIEF_BITS)).astype(np.uint8)
    return cl.PixelFeatures(numeric=numeric, bits=bits, image_shape=(1, n))


class TestPcaChannels:
    def test_gray_image_rank_one(self):
        rng = np.random.default_rng(0)
        g = rng.random((16, 16, 1))
        img = np.repeat(g, 3, axis=2)  # R = G = B
        channels, _ = cl.pca_channels(img)
        variances = channels.reshape(-1, 3).var(axis=0)
        assert variances[0] > 0
        assert variances[1] < 1e-18 and variances[2] < 1e-18

    def test_output_channels_decorrelated(self):
        rng = np.random.default_rng(1)
        img = rng.random((32, 32, 3))
        channels, _ = cl.pca_channels(img)
        flat = channels.reshape(-1, 3)
        cov = np.cov(flat.T)
        off_diag = cov - np.diag(np.diag(cov))
        assert np.abs(off_diag).max() < 1e-9

    def test_eigenvalues_match_cubic_root_oracle(self):
        # independent eigensolver: roots of the characteristic cubic
        rng = np.random.default_rng(2)
        img = rng.random((24, 24, 3))
        channels, _ = cl.pca_channels(img)
        got = np.sort(channels.reshape(-1, 3).var(axis=0))[::-1]

        flat = img.reshape(-1, 3)
        centered = flat - flat.mean(axis=0)
        cov = centered.T @ centered / flat.shape[0]
        c2 = -np.trace(cov)
        c1 = 0.5 * (np.trace(cov) ** 2 - np.trace(cov @ cov))
        c0 = -np.linalg.det(cov)
        roots = np.sort(np.roots([1.0, c2, c1, c0]).real)[::-1]
        np.testing.assert_allclose(got, roots, atol=1e-9)

    def test_variance_ordering(self):
        rng = np.random.default_rng(3)
        img = rng.random((16, 16, 3))
        channels, _ = cl.pca_channels(img)
        v = channels.reshape(-1, 3).var(axis=0)
        assert v[0] >= v[1] >= v[2]

    def test_constant_image_degenerate(self):
        with pytest.raises(DegenerateInputError):
            cl.pca_channels(np.full((8, 8, 3), 0.4))


class TestBriefFeatures:
    def test_constant_image_all_zero_bits(self):
        bits = cl.brief_features(np.full((40, 40), 3.0), seed=0)
        assert bits.shape == (1600, cl.BRIEF_BITS)
        assert bits.max() == 0  # strict less-than: ties give 0

    def test_bit_length_160(self):
        assert cl.BRIEF_BITS == 160
        assert [s[0] for s in cl.BRIEF_SCALES] == [48, 80, 32]
        assert [s[1] for s in cl.BRIEF_SCALES] == [33, 17, 5]
        assert [s[2] for s in cl.BRIEF_SCALES] == [4.0, 2.0, 0.0]

    def test_translation_equivariance(self):
        # window half (16) + gaussian truncation (4 sigma = 16) -> pixels at
        # least 32 from every crop edge see identical neighborhoods
        rng = np.random.default_rng(4)
        big = rng.random((120, 120))
        a = cl.brief_features(big[0:84, 0:84], seed=1).reshape(84, 84, -1)
        b = cl.brief_features(big[5:89, 7:91], seed=1).reshape(84, 84, -1)
        np.testing.assert_array_equal(a[40:44, 40:44], b[35:39, 33:37])

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(5)
        img = rng.random((40, 40))
        np.testing.assert_array_equal(cl.brief_features(img, seed=3),
                                      cl.brief_features(img, seed=3))
        assert not np.array_equal(cl.brief_features(img, seed=3),
                                  cl.brief_features(img, seed=4))

    def test_too_small_channel_rejected(self):
        with pytest.raises(InvalidInputError):
            cl.brief_features(np.zeros((20, 20)), seed=0)


class TestMixedDistance:
    def test_identity(self):
        rng = np.random.default_rng(6)
        f = random_features(rng, 4)
        d = cl.mixed_distance(f.numeric[0], f.bits[0], f.numeric[0], f.bits[0], 0.5)
        assert d == 0.0

    def test_gamma_zero_is_numeric_only(self):
        a_num, b_num = np.array([1.0, 2.0, 3.0]), np.array([1.5, 2.0, 1.0])
        a_bit = np.ones(cl.BRIEF_BITS, dtype=np.uint8)
        b_bit = np.zeros(cl.BRIEF_BITS, dtype=np.uint8)
        d = cl.mixed_distance(a_num, a_bit, b_num, b_bit, 0.0)
        assert np.isclose(d, 0.25 + 0 + 4.0)

    def test_hand_value(self):
        a_num = np.array([0.1, 0.0, 0.0])
        b_num = np.zeros(3)
        a_bit = np.zeros(cl.BRIEF_BITS, dtype=np.uint8)
        b_bit = a_bit.copy()
        b_bit[:3] = 1  # 3 differing bits
        d = cl.mixed_distance(a_num, a_bit, b_num, b_bit, 0.5)
        assert np.isclose(d, 0.01 + 0.5 * 3)

    @given(st.floats(0.0, 2.0))
    @settings(max_examples=20)
    def test_non_negative_symmetric(self, gamma):
        rng = np.random.default_rng(7)
        f = random_features(rng, 2)
        d_ab = cl.mixed_distance(f.numeric[0], f.bits[0], f.numeric[1], f.bits[1], gamma)
        d_ba = cl.mixed_distance(f.numeric[1], f.bits[1], f.numeric[0], f.bits[0], gamma)
        assert d_ab >= 0 and d_ab == d_ba


class TestDefaultGamma:
    def test_formula(self):
        # numeric with stds exactly (0.1, 0.2, 0.3) -> mean 0.2 over 160 bits
        base = np.array([-1.0, 1.0])
        numeric = np.stack([0.1 * base, 0.2 * base, 0.3 * base], axis=1)
        f = cl.PixelFeatures(numeric=numeric,
                             bits=np.zeros((2, cl.BRIEF_BITS), dtype=np.uint8),
                             image_shape=(1, 2))
        assert np.isclose(cl.default_gamma(f), 0.2 / 160.0)

    def test_constant_features_zero(self):
        f = cl.PixelFeatures(numeric=np.ones((5, 3)),
                             bits=np.zeros((5, cl.BRIEF_BITS), dtype=np.uint8),
                             image_shape=(1, 5))
        assert cl.default_gamma(f) == 0.0

    def test_homogeneous_in_scale(self):
        rng = np.random.default_rng(8)
        f = random_features(rng, 50)
        g1 = cl.default_gamma(f)
        f2 = cl.PixelFeatures(numeric=3.0 * f.numeric, bits=f.bits, image_shape=(1, 50))
        assert np.isclose(cl.default_gamma(f2), 3.0 * g1)


def reference_kmeans(x, k, seed, max_iter=50):
    """Naive k-means with the documented seeding, as an independent oracle."""
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        idx = int(rng.integers(n)) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centers[i] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    labels = None
    for _ in range(max_iter):
        sq_c = np.sum(centers**2, axis=1)
        d = np.sum(x**2, axis=1)[:, None] - 2.0 * x @ centers.T + sq_c[None, :]
        new = np.argmin(d, axis=1).astype(np.int32)
        if labels is not None and np.array_equal(labels, new):
            break
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
    return labels


class TestKPrototypes:
    def test_k1_closed_form(self):
        rng = np.random.default_rng(9)
        f = random_features(rng, 40)
        model = cl.kprototypes_fit(f, 1, gamma=0.3, seed=0)
        np.testing.assert_allclose(model.centers_numeric[0], f.numeric.mean(axis=0))
        majority = (f.bits.mean(axis=0) > 0.5).astype(np.uint8)
        np.testing.assert_array_equal(model.centers_bits[0], majority)
        assert np.all(model.labels == 0)

    def test_two_blobs_exact_separation(self):
        rng = np.random.default_rng(10)
        numeric = np.vstack([rng.normal(0, 0.05, (50, 3)), rng.normal(5, 0.05, (50, 3))])
        bits = rng.integers(0, 2, (100, cl.BRIEF_BITS)).astype(np.uint8)
        f = cl.PixelFeatures(numeric=numeric, bits=bits, image_shape=(10, 10))
        model = cl.kprototypes_fit(f, 2, gamma=0.001, seed=1)
        assert len(set(model.labels[:50])) == 1
        assert len(set(model.labels[50:])) == 1
        assert model.labels[0] != model.labels[99]

    def test_small_instance_matches_exhaustive_partition(self):
        # 14 points, k=2: check against the global optimum over all 2^14
        # assignments (centers = numeric mean + per-bit majority per side).
        rng = np.random.default_rng(11)
        n = 14
        numeric = np.vstack([rng.normal(0, 0.4, (7, 3)), rng.normal(4.0, 0.4, (7, 3))])
        bits = np.zeros((n, cl.BRIEF_BITS), dtype=np.uint8)
        bits[7:, :20] = 1
        bits ^= (rng.random((n, cl.BRIEF_BITS)) < 0.02).astype(np.uint8)
        gamma = 0.02
        f = cl.PixelFeatures(numeric=numeric, bits=bits, image_shape=(2, 7))

        def partition_cost(mask):
            total = 0.0
            for side in (mask, ~mask):
                if not side.any():
                    return np.inf
                c_num = numeric[side].mean(axis=0)
                c_bit = (bits[side].mean(axis=0) > 0.5).astype(np.uint8)
                total += float(np.sum((numeric[side] - c_num) ** 2))
                total += gamma * float(np.sum(bits[side] != c_bit))
            return total

        best_cost = np.inf
        for code in range(1, 2 ** (n - 1)):  # fix point 0's side to kill symmetry
            mask = np.array([(code >> i) & 1 for i in range(n)], dtype=bool)
            best_cost = min(best_cost, partition_cost(mask))

        model = cl.kprototypes_fit(f, 2, gamma=gamma, seed=3)
        got_cost = cl.model_cost(model, f)
        assert np.isclose(got_cost, best_cost, rtol=1e-9)

    def test_cost_history_non_increasing(self):
        rng = np.random.default_rng(12)
        for trial in range(10):
            f = random_features(rng, 5000)
            model = cl.kprototypes_fit(f, 16, gamma=0.01, seed=trial)
            hist = model.cost_history
            assert len(hist) >= 1
            assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gamma_zero_matches_reference_kmeans(self, seed):
        rng = np.random.default_rng(13)
        f = random_features(rng, 100)
        model = cl.kprototypes_fit(f, 5, gamma=0.0, seed=seed)
        x = np.hstack([f.numeric, f.bits.astype(np.float64) * 0.0])
        ref = reference_kmeans(x, 5, seed)
        np.testing.assert_array_equal(model.labels, ref)

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        f = random_features(rng, 500)
        a = cl.kprototypes_fit(f, 8, gamma=0.02, seed=42)
        b = cl.kprototypes_fit(f, 8, gamma=0.02, seed=42)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.centers_bits, b.centers_bits)
        np.testing.assert_array_equal(a.centers_numeric, b.centers_numeric)

    def test_majority_update_minimizes_hamming(self):
        # exhaustive flip test on a small cluster
        rng = np.random.default_rng(15)
        bits = rng.integers(0, 2, (9, 12)).astype(np.uint8)
        majority = (bits.mean(axis=0) > 0.5).astype(np.uint8)
        base_cost = np.sum(bits != majority)
        for i in range(12):
            flipped = majority.copy()
            flipped[i] ^= 1
            assert np.sum(bits != flipped) >= base_cost

    def test_permutation_cost_equality(self):
        # on a well-separated instance the optimum is unique, so pixel order
        # cannot change the final cost (labels differ only by relabeling)
        rng = np.random.default_rng(16)
        centers = rng.normal(0, 4.0, (4, 3))
        numeric = np.vstack([c + rng.normal(0, 0.05, (30, 3)) for c in centers])
        bits = rng.integers(0, 2, (120, cl.BRIEF_BITS)).astype(np.uint8)
        f = cl.PixelFeatures(numeric=numeric, bits=bits, image_shape=(12, 10))
        model = cl.kprototypes_fit(f, 4, gamma=1e-4, seed=5)
        perm = rng.permutation(120)
        f_perm = cl.PixelFeatures(numeric=f.numeric[perm], bits=f.bits[perm],
                                  image_shape=f.image_shape)
        model_perm = cl.kprototypes_fit(f_perm, 4, gamma=1e-4, seed=7)
        assert np.isclose(cl.model_cost(model, f), cl.model_cost(model_perm, f_perm),
                          rtol=1e-9)

    def test_every_cluster_non_empty(self):
        rng = np.random.default_rng(17)
        f = random_features(rng, 300)
        model = cl.kprototypes_fit(f, 12, gamma=0.01, seed=2)
        assert np.array_equal(np.unique(model.labels), np.arange(12))

    def test_k_exceeding_pixels_rejected(self):
        rng = np.random.default_rng(18)
        f = random_features(rng, 10)
        with pytest.raises(InvalidInputError):
            cl.kprototypes_fit(f, 11, gamma=0.1, seed=0)

    def test_subsampled_fit_assigns_all_pixels(self):
        rng = np.random.default_rng(19)
        f = random_features(rng, 3000)
        model = cl.kprototypes_fit(f, 6, gamma=0.01, seed=0, sample_cap=500)
        assert model.labels.shape == (3000,)
        assert np.array_equal(np.unique(model.labels), np.arange(6))


class TestLabelsPalette:
    def test_shapes_and_determinism(self):
        labels = np.arange(12).reshape(3, 4) % 5
        a = cl.labels_palette(labels, seed=0)
        assert a.shape == (3, 4, 3) and a.dtype == np.uint8
        np.testing.assert_array_equal(a, cl.labels_palette(labels, seed=0))
