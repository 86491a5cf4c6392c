import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msbls.bls import (
    BlsHyperParams,
    augment,
    classic_mapped_features,
    enhancement_features,
    generate_enhancement_keys,
    generate_full_map_key,
    generate_mix_key,
    joint_mapped_features,
    mapped_features_simplified,
    predict_labels,
    stack_affine_groups,
    train_output_weights,
)
from msbls.linalg import RngStream


class TestHyperParams:
    def test_defaults_are_valid(self):
        hp = BlsHyperParams()
        assert hp.mapped_width == 100
        assert hp.half_width == 50
        assert hp.feature_width == 1100

    def test_odd_mapped_width_rejected(self):
        with pytest.raises(ValueError):
            BlsHyperParams(map_groups=3, map_dim=3)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"map_groups": 0},
            {"enh_dim": 0},
            {"ridge": 0.0},
            {"ridge": -1.0},
            {"activation": "relu"},
        ],
    )
    def test_invalid_fields_rejected(self, kwargs):
        with pytest.raises(ValueError):
            BlsHyperParams(**kwargs)


class TestAugment:
    def test_single_row(self):
        assert np.array_equal(augment([[1.0, 2.0]]), [[1.0, 2.0, 1.0]])

    def test_zero_matrix(self):
        assert np.array_equal(
            augment(np.zeros((2, 2))), [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]
        )

    def test_ones_column_sums_to_row_count(self):
        x = np.random.default_rng(0).standard_normal((3, 4))
        out = augment(x)
        assert out.shape == (3, 5)
        assert out[:, -1].sum() == 3.0
        assert np.array_equal(out[:, :4], x)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            augment([[np.nan]])


class TestMappedFeatures:
    def test_identity_group(self):
        out = classic_mapped_features(
            [[1.0, 0.0]], [(np.eye(2), np.zeros((1, 2)))]
        )
        assert np.array_equal(out, [[1.0, 0.0]])

    def test_hand_arithmetic(self):
        out = classic_mapped_features(
            [[1.0, 1.0]], [(np.array([[1.0], [1.0]]), np.array([[1.0]]))]
        )
        assert np.array_equal(out, [[3.0]])

    def test_identity_mix_reduces_to_first_stage(self):
        rng = np.random.default_rng(0)
        x_aug = augment(rng.uniform(0, 1, (4, 3)))
        key = rng.standard_normal((4, 6))
        out = mapped_features_simplified(x_aug, key, np.eye(6))
        assert np.allclose(out, x_aug @ key)

    def test_one_hot_row_selects_key_row(self):
        key = np.random.default_rng(1).standard_normal((5, 4))
        mix = np.random.default_rng(2).standard_normal((4, 4))
        row = np.zeros((1, 5))
        row[0, 2] = 1.0
        out = mapped_features_simplified(row, key, mix)
        assert np.allclose(out, (key @ mix)[2:3, :])

    @given(
        n_rows=st.integers(1, 8),
        d=st.integers(1, 6),
        group_sizes=st.lists(st.integers(1, 4), min_size=1, max_size=4),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_groupwise_equals_single_product_form(self, n_rows, d, group_sizes, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, (n_rows, d))
        groups = [
            (rng.standard_normal((d, g)), rng.uniform(-1, 1, (1, g)))
            for g in group_sizes
        ]
        classic = classic_mapped_features(x, groups)
        stacked = stack_affine_groups(groups)
        simplified = mapped_features_simplified(
            augment(x), stacked, np.eye(stacked.shape[1])
        )
        assert np.max(np.abs(classic - simplified)) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            classic_mapped_features([[1.0, 2.0]], [(np.eye(3), np.zeros((1, 3)))])
        with pytest.raises(ValueError):
            mapped_features_simplified(np.ones((2, 3)), np.ones((4, 5)), np.eye(5))


class TestEnhancement:
    def test_zero_input_zero_output_tanh(self):
        out = enhancement_features(
            np.zeros((3, 2)), [(np.ones((2, 4)), np.zeros((1, 4)))], "tanh"
        )
        assert np.all(out == 0.0)

    def test_scalar_tanh_value(self):
        out = enhancement_features(
            [[1.0]], [(np.array([[1.0]]), np.array([[0.0]]))], "tanh"
        )
        # Independent evaluation of the same activation.
        assert abs(out[0, 0] - math.tanh(1.0)) < 1e-9

    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 10.0))
    def test_tanh_strictly_inside_for_moderate_inputs(self, seed, scale):
        rng = np.random.default_rng(seed)
        zn = rng.uniform(-scale, scale, (5, 3))
        keys = [(rng.standard_normal((3, 4)) * 0.3, rng.uniform(-1, 1, (1, 4)))]
        out = enhancement_features(zn, keys, "tanh")
        assert np.max(np.abs(out)) < 1.0

    def test_tanh_never_exceeds_unit_bound(self):
        # float64 tanh saturates to exactly +-1.0 for |x| above ~19; the
        # bound is still never exceeded.
        out = enhancement_features(
            [[1e6]], [(np.array([[1.0]]), np.array([[0.0]]))], "tanh"
        )
        assert np.max(np.abs(out)) <= 1.0

    def test_sigmoid_range(self):
        rng = np.random.default_rng(3)
        out = enhancement_features(
            rng.uniform(-5, 5, (4, 3)),
            [(rng.standard_normal((3, 6)), rng.uniform(-1, 1, (1, 6)))],
            "sigmoid",
        )
        assert np.all(out > 0.0) and np.all(out < 1.0)


class TestTrainPredict:
    def test_square_invertible_interpolates(self):
        rng = np.random.default_rng(4)
        zn = rng.standard_normal((4, 2))
        hm = rng.standard_normal((4, 2))
        y = np.eye(4)[:, :3] * 1.0
        y[3, 0] = 1.0
        w = train_output_weights(zn, hm, y, 1e-12)
        assert np.max(np.abs(np.hstack([zn, hm]) @ w - y)) < 1e-6

    def test_duplicated_rows_predict_identically(self):
        rng = np.random.default_rng(5)
        zn = np.repeat(rng.standard_normal((3, 2)), 2, axis=0)
        hm = np.repeat(rng.standard_normal((3, 3)), 2, axis=0)
        y = np.repeat(np.eye(3), 2, axis=0)
        w = train_output_weights(zn, hm, y, 1e-8)
        scores = np.hstack([zn, hm]) @ w
        for i in range(0, 6, 2):
            assert np.array_equal(scores[i], scores[i + 1])

    def test_separable_blobs_train_to_perfection(self):
        rng = np.random.default_rng(6)
        x = np.vstack([
            rng.normal(loc=(-3.0, 0.0), scale=0.4, size=(25, 2)),
            rng.normal(loc=(3.0, 0.0), scale=0.4, size=(25, 2)),
        ])
        labels = np.repeat([0, 1], 25)
        y = np.eye(2)[labels]
        # Oracle: a plain linear least-squares fit already separates them.
        coef, *_ = np.linalg.lstsq(augment(x), y, rcond=None)
        assert np.mean(np.argmax(augment(x) @ coef, axis=1) == labels) == 1.0

        hyper = BlsHyperParams(map_groups=2, map_dim=2, enh_groups=1, enh_dim=20, seed=0)
        map_key = generate_full_map_key(2, hyper, RngStream(1))
        mix_key = generate_mix_key(hyper, RngStream(2))
        enh = generate_enhancement_keys(hyper, RngStream(3))
        zn = mapped_features_simplified(augment(x), map_key, mix_key)
        hm = enhancement_features(zn, enh, "tanh")
        w = train_output_weights(zn, hm, y, 1e-8)
        pred = predict_labels(np.hstack([zn, hm]), w)
        assert np.mean(pred == labels) == 1.0

    def test_zero_feature_column_changes_nothing(self):
        rng = np.random.default_rng(7)
        zn = rng.standard_normal((10, 3))
        hm = rng.standard_normal((10, 4))
        y = np.eye(2)[rng.integers(0, 2, 10)]
        w = train_output_weights(zn, hm, y, 1e-8)
        w_padded = train_output_weights(zn, np.hstack([hm, np.zeros((10, 1))]), y, 1e-8)
        assert np.max(np.abs(w_padded[-1])) < 1e-8
        a = np.hstack([zn, hm])
        a_padded = np.hstack([zn, hm, np.zeros((10, 1))])
        assert np.array_equal(
            predict_labels(a, w), predict_labels(a_padded, w_padded)
        )

    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError):
            train_output_weights(np.ones((3, 2)), np.ones((4, 2)), np.ones((3, 1)), 1e-8)


class TestPredict:
    def test_argmax(self):
        assert predict_labels([[1.0]], [[0.1, 0.9]])[0] == 1

    def test_tie_goes_to_lowest_class(self):
        assert predict_labels([[1.0]], [[0.5, 0.5]])[0] == 0

    @given(
        n=st.integers(1, 10), f=st.integers(1, 5), c=st.integers(1, 5),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_matches_rowwise_scan(self, n, f, c, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n, f))
        w = rng.standard_normal((f, c))
        pred = predict_labels(a, w)
        scores = a @ w
        for i in range(n):
            best, best_score = 0, scores[i, 0]
            for j in range(1, c):
                if scores[i, j] > best_score:
                    best, best_score = j, scores[i, j]
            assert pred[i] == best

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict_labels(np.ones((2, 3)), np.ones((4, 2)))


class TestDeterminismAndJointForm:
    def test_same_seed_bit_identical_model(self):
        def build():
            hyper = BlsHyperParams(map_groups=2, map_dim=4, enh_groups=1, enh_dim=8)
            rng = np.random.default_rng(11)
            x = rng.uniform(0, 1, (30, 5))
            y = np.eye(3)[rng.integers(0, 3, 30)]
            map_key = generate_full_map_key(5, hyper, RngStream(21))
            mix_key = generate_mix_key(hyper, RngStream(22))
            enh = generate_enhancement_keys(hyper, RngStream(23))
            zn = mapped_features_simplified(augment(x), map_key, mix_key)
            hm = enhancement_features(zn, enh, "tanh")
            return train_output_weights(zn, hm, y, 1e-8)

        assert np.array_equal(build(), build())

    def test_joint_blockwise_matches_single_product(self):
        rng = np.random.default_rng(12)
        hyper = BlsHyperParams(map_groups=2, map_dim=4)
        xa = rng.uniform(0, 1, (7, 5))
        xb = rng.uniform(0, 1, (9, 5))
        key_a = rng.standard_normal((6, hyper.half_width))
        key_b = rng.standard_normal((6, hyper.half_width))
        mix = rng.standard_normal((8, 8))
        blockwise = joint_mapped_features(xa, xb, key_a, key_b, mix)
        pooled = mapped_features_simplified(
            augment(np.vstack([xa, xb])), np.hstack([key_a, key_b]), mix
        )
        denom = np.linalg.norm(pooled)
        assert np.linalg.norm(blockwise - pooled) / denom < 1e-10
