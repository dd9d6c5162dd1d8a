import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from gwr_hoi.data import _MIRROR_PERMUTATION
from gwr_hoi.features import (
    JOINT_INDEX,
    Codebook,
    DegenerateQuadError,
    VladEncoder,
    fit_codebook,
    pose_feature,
    skeletal_quad,
    vlad_encode,
)


def random_similarity(r):
    rot = Rotation.random(random_state=r.integers(2**31)).as_matrix()
    return rot, r.uniform(0.1, 10.0), r.normal(0, 5, 3)


def vlad_oracle(centroids, descriptors):
    """Brute-force reference: loop over descriptors, explicit nearest search."""
    K, D = centroids.shape
    raw = np.zeros((K, D))
    for x in descriptors:
        best, best_d = 0, np.inf
        for k in range(K):
            d = sum((x[i] - centroids[k, i]) ** 2 for i in range(D))
            if d < best_d:
                best, best_d = k, d
        raw[best] += x - centroids[best]
    v = np.sign(raw.ravel()) * np.sqrt(np.abs(raw.ravel()))
    n = np.sqrt((v**2).sum())
    return v / n if n > 0 else v


class TestSkeletalQuad:
    def test_aligned_axis(self):
        out = skeletal_quad([0, 0, 0], [1, 1, 1], [0.5, 0.5, 0.5], [1, 0, 0])
        np.testing.assert_allclose(out, [0.5, 0.5, 0.5, 1, 0, 0], atol=1e-12)

    def test_pure_scaling(self):
        out = skeletal_quad([0, 0, 0], [2, 2, 2], [1, 1, 1], [0, 0, 0])
        np.testing.assert_allclose(out, [0.5, 0.5, 0.5, 0, 0, 0], atol=1e-12)

    def test_second_joint_lands_on_diagonal(self, rng):
        j = rng.normal(size=(4, 3))
        out = skeletal_quad(j[0], j[1], j[1], j[3])
        np.testing.assert_allclose(out[:3], [1, 1, 1], atol=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateQuadError):
            skeletal_quad([1, 2, 3], [1, 2, 3], [0, 0, 0], [1, 0, 0])

    def test_similarity_invariance(self, rng):
        worst = 0.0
        for _ in range(200):
            j = rng.normal(size=(4, 3))
            rot, s, t = random_similarity(rng)
            moved = s * j @ rot.T + t
            worst = max(worst, np.abs(skeletal_quad(*moved) - skeletal_quad(*j)).max())
        assert worst < 1e-8

    def test_preserves_relative_distances(self, rng):
        j = rng.normal(size=(4, 3))
        out = skeletal_quad(*j)
        s = np.sqrt(3) / np.linalg.norm(j[1] - j[0])
        assert np.linalg.norm(out[:3]) == pytest.approx(s * np.linalg.norm(j[2] - j[0]))
        assert np.linalg.norm(out[3:] - out[:3]) == pytest.approx(s * np.linalg.norm(j[3] - j[2]))


class TestPoseFeature:
    def test_all_valid(self, rng):
        vec, mask = pose_feature(rng.normal(size=(9, 3)))
        assert vec.shape == (12,) and mask.all()

    def test_left_hand_missing(self, rng):
        valid = np.ones(9, dtype=bool)
        valid[JOINT_INDEX["left_hand"]] = False
        vec, mask = pose_feature(rng.normal(size=(9, 3)), valid)
        assert not mask[:6].any() and mask[6:].all()
        assert np.isnan(vec[:6]).all()

    @pytest.mark.parametrize("joint", ["neck", "torso"])
    def test_missing_anchor_masks_everything(self, rng, joint):
        valid = np.ones(9, dtype=bool)
        valid[JOINT_INDEX[joint]] = False
        _, mask = pose_feature(rng.normal(size=(9, 3)), valid)
        assert not mask.any()

    def test_mirror_maps_blocks_across(self, rng):
        # With a rotation-invariant quad a mirrored frame does not swap blocks
        # verbatim: each block goes to the other side reflected through the
        # plane that holds the [1,1,1] axis and the [2,-1,-1] spin reference.
        f3 = np.array([0.0, 1.0, -1.0]) / np.sqrt(2)
        R = np.eye(3) - 2 * np.outer(f3, f3)
        for _ in range(20):
            P = rng.normal(size=(9, 3))
            M = P[_MIRROR_PERMUTATION].copy()
            M[:, 0] *= -1
            a, _ = pose_feature(P)
            b, _ = pose_feature(M)
            swapped = np.concatenate([a[6:9] @ R.T, a[9:] @ R.T, a[:3] @ R.T, a[3:6] @ R.T])
            np.testing.assert_allclose(b, swapped, atol=1e-12)

    def test_mirror_preserves_axis_and_distance_coordinates(self, rng):
        P = rng.normal(size=(9, 3))
        M = P[_MIRROR_PERMUTATION].copy()
        M[:, 0] *= -1
        a, _ = pose_feature(P)
        b, _ = pose_feature(M)
        axis = np.ones(3) / np.sqrt(3)
        for src, dst in ((slice(0, 3), slice(6, 9)), (slice(6, 9), slice(0, 3))):
            assert b[dst] @ axis == pytest.approx(a[src] @ axis)
            assert np.linalg.norm(b[dst]) == pytest.approx(np.linalg.norm(a[src]))


class TestCodebook:
    def test_single_word_is_mean(self, rng):
        X = rng.normal(size=(30, 3))
        cb = fit_codebook(X, 1)
        np.testing.assert_allclose(cb.centroids[0], X.mean(axis=0), atol=1e-12)

    def test_two_clusters(self, rng):
        A = rng.normal(0, 0.1, (20, 2))
        B = rng.normal(10, 0.1, (20, 2))
        cb = fit_codebook(np.vstack([A, B]), 2, seed=3)
        got = cb.centroids[np.argsort(cb.centroids[:, 0])]
        np.testing.assert_allclose(got, [A.mean(0), B.mean(0)], atol=1e-6)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_codebook(np.zeros((3, 2)) + np.arange(3)[:, None], 5)

    def test_inertia_monotone(self, rng):
        cb = fit_codebook(rng.normal(size=(300, 4)), 6, seed=1)
        assert np.all(np.diff(cb.inertia_history) <= 1e-9)

    def test_deterministic(self, rng):
        X = rng.normal(size=(100, 3))
        np.testing.assert_array_equal(fit_codebook(X, 4, 9).centroids, fit_codebook(X, 4, 9).centroids)

    def test_centroids_distinct(self, rng):
        cb = fit_codebook(rng.normal(size=(50, 2)), 7)
        assert np.unique(cb.centroids, axis=0).shape[0] == 7


class TestVlad:
    def test_example(self):
        cb = Codebook(np.array([[0.0, 0.0], [2.0, 2.0]]))
        np.testing.assert_allclose(vlad_encode(cb, [[1, 0], [2, 3]]), [0.70711, 0, 0, 0.70711], atol=1e-5)

    def test_descriptors_on_centroids(self):
        cb = Codebook(np.array([[0.0, 0.0], [2.0, 2.0]]))
        np.testing.assert_array_equal(vlad_encode(cb, [[0, 0], [2, 2]]), np.zeros(4))

    def test_single_cell(self):
        cb = Codebook(np.array([[0.0, 0.0]]))
        np.testing.assert_allclose(vlad_encode(cb, [[1, 0], [0, 1]]), [0.70711, 0.70711], atol=1e-5)

    def test_tie_goes_to_lower_word(self):
        cb = Codebook(np.array([[0.0], [2.0]]))
        np.testing.assert_array_equal(vlad_encode(cb, [[1.0]]), [1.0, 0.0])

    def test_errors(self):
        cb = Codebook(np.array([[0.0, 0.0]]))
        with pytest.raises(ValueError):
            vlad_encode(cb, np.empty((0, 2)))
        with pytest.raises(ValueError):
            vlad_encode(cb, [[1.0, 2.0, 3.0]])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 10), st.integers(0, 2**31 - 1))
    def test_matches_oracle(self, K, D, n, seed):
        r = np.random.default_rng(seed)
        C, X = r.normal(size=(K, D)), r.normal(size=(n, D))
        np.testing.assert_allclose(vlad_encode(Codebook(C), X), vlad_oracle(C, X), atol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_norm_and_permutation(self, seed):
        r = np.random.default_rng(seed)
        cb = Codebook(r.normal(size=(3, 4)))
        X = r.normal(size=(9, 4))
        v = vlad_encode(cb, X)
        assert abs(np.linalg.norm(v) - 1) < 1e-9
        np.testing.assert_array_equal(vlad_encode(cb, X[r.permutation(9)]), v)

    def test_encoder_estimator(self, rng):
        sets = [rng.normal(size=(int(n), 3)) for n in rng.integers(3, 9, 12)]
        enc = VladEncoder(n_words=3, random_state=2).fit(sets)
        codes = enc.transform(sets)
        assert codes.shape == (12, 9)
        for code, s in itertools.islice(zip(codes, sets), 3):
            np.testing.assert_array_equal(code, vlad_encode(enc.codebook_, s))
