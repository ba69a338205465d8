"""Attention distribution, coverage features, and context vectors."""

import numpy as np
import pytest

from conftest import finite_difference_check, random_feature_rows, tiny_config, tiny_model

from ink2tex.attention import (
    AttentionState,
    attend,
    attend_plain,
    coverage_features,
    init_attention_state,
    project_annotations,
)
from ink2tex.encoder import AnnotationSequence, encode
from ink2tex.numerics import backward, constant, init_params, pick, sum_all
from ink2tex.preprocess import FeatureSequence


def _annotations(rng, length: int, dim: int) -> AnnotationSequence:
    a = constant(rng.normal(size=(length, dim)))
    return AnnotationSequence(a=a, point_span=[(i, i) for i in range(length)])


class TestCoverageFeatures:
    def test_zero_coverage_gives_zero_features(self, rng):
        q = constant(rng.normal(size=(3, 1, 2)))
        f = coverage_features(constant(np.zeros(5)), q)
        np.testing.assert_array_equal(f.data, np.zeros((5, 2)))

    def test_length_one_uses_center_tap(self, rng):
        q = constant(rng.normal(size=(3, 1, 2)))
        f = coverage_features(constant(np.array([2.0])), q)
        np.testing.assert_allclose(f.data, 2.0 * q.data[1, 0, :].reshape(1, 2))

    def test_matches_brute_force(self, rng):
        width, channels, length = 5, 3, 7
        q = rng.normal(size=(width, 1, channels))
        beta = rng.normal(size=length)
        f = coverage_features(constant(beta), constant(q)).data
        pad = width // 2
        padded = np.concatenate([np.zeros(pad), beta, np.zeros(pad)])
        want = np.zeros((length, channels))
        for i in range(length):
            for c in range(channels):
                want[i, c] = np.dot(padded[i:i + width], q[:, 0, c])
        np.testing.assert_allclose(f.data, want, rtol=1e-12)
        assert f.shape == want.shape


class TestAttend:
    def test_single_annotation_gets_all_mass(self, rng):
        params = tiny_model()
        ann = _annotations(rng, 1, params.config.annotation_dim)
        s = constant(rng.normal(size=params.config.dec_hidden))
        alpha, context, state = attend(s, ann, init_attention_state(1), params)
        np.testing.assert_array_equal(alpha.data, [1.0])
        np.testing.assert_array_equal(context.data, ann.a.data[0])
        np.testing.assert_array_equal(state.beta.data, [1.0])

    def test_identical_rows_zero_coverage_uniform(self, rng):
        params = tiny_model()
        row = rng.normal(size=params.config.annotation_dim)
        a = constant(np.tile(row, (4, 1)))
        ann = AnnotationSequence(a=a, point_span=[(i, i) for i in range(4)])
        s = constant(rng.normal(size=params.config.dec_hidden))
        alpha, context, _ = attend(s, ann, init_attention_state(4), params)
        np.testing.assert_allclose(alpha.data, np.full(4, 0.25), atol=1e-12)
        np.testing.assert_allclose(context.data, row, rtol=1e-12)

    def test_alpha_is_simplex(self, rng):
        params = tiny_model()
        ann = _annotations(rng, 6, params.config.annotation_dim)
        state = init_attention_state(6)
        for _ in range(4):
            s = constant(rng.normal(size=params.config.dec_hidden))
            alpha, _, state = attend(s, ann, state, params)
            assert (alpha.data > 0).all()
            assert abs(alpha.data.sum() - 1.0) <= 1e-12

    def test_beta_is_exact_alpha_sum(self, rng):
        params = tiny_model()
        ann = _annotations(rng, 5, params.config.annotation_dim)
        state = init_attention_state(5)
        for _ in range(6):
            s = constant(rng.normal(size=params.config.dec_hidden))
            _, _, state = attend(s, ann, state, params)
        resummed = np.sum([al.data for al in state.alpha_history], axis=0)
        np.testing.assert_array_equal(state.beta.data, resummed)
        assert len(state.alpha_history) == 6

    def test_context_in_convex_hull(self, rng):
        params = tiny_model()
        ann = _annotations(rng, 6, params.config.annotation_dim)
        s = constant(rng.normal(size=params.config.dec_hidden))
        _, context, _ = attend(s, ann, init_attention_state(6), params)
        lo = ann.a.data.min(axis=0) - 1e-12
        hi = ann.a.data.max(axis=0) + 1e-12
        assert ((context.data >= lo) & (context.data <= hi)).all()

    def test_zero_uf_matches_plain_route(self, rng):
        params = tiny_model()
        params["attention.U_f"].data[:] = 0.0
        ann = _annotations(rng, 5, params.config.annotation_dim)
        state = init_attention_state(5)
        for _ in range(3):  # plain route ignores coverage entirely
            s = constant(rng.normal(size=params.config.dec_hidden))
            alpha, context, state = attend(s, ann, state, params)
            alpha_p, context_p = attend_plain(s, ann, params)
            np.testing.assert_allclose(alpha.data, alpha_p.data, rtol=1e-15)
            np.testing.assert_allclose(context.data, context_p.data, rtol=1e-15)

    def test_zero_coverage_bit_equal_to_plain(self, rng):
        # At t=1 beta is exactly zero, so the covered energy reduces to the
        # plain form up to the U_f x 0 term; the results must agree bitwise.
        params = tiny_model()
        ann = _annotations(rng, 4, params.config.annotation_dim)
        s = constant(rng.normal(size=params.config.dec_hidden))
        alpha, context, _ = attend(s, ann, init_attention_state(4), params)
        alpha_p, context_p = attend_plain(s, ann, params)
        np.testing.assert_array_equal(alpha.data, alpha_p.data)
        np.testing.assert_array_equal(context.data, context_p.data)

    def test_precomputed_projection_matches(self, rng):
        params = tiny_model()
        ann = _annotations(rng, 5, params.config.annotation_dim)
        proj = project_annotations(ann.a, params)
        s = constant(rng.normal(size=params.config.dec_hidden))
        a1, c1, _ = attend(s, ann, init_attention_state(5), params)
        a2, c2, _ = attend(s, ann, init_attention_state(5), params,
                           proj_annotations=proj)
        np.testing.assert_array_equal(a1.data, a2.data)
        np.testing.assert_array_equal(c1.data, c2.data)

    def test_coverage_shifts_mass_away(self, rng):
        # Saturating one position's coverage with a negative-enough U_f
        # pushes probability off that position.
        params = tiny_model()
        params["attention.U_f"].data[:] = -2.0
        params["coverage.Q"].data[:] = 1.0
        params["attention.v_att"].data[:] = 1.0  # saturated energy is minimal
        ann = _annotations(rng, 5, params.config.annotation_dim)
        s = constant(rng.normal(size=params.config.dec_hidden))
        alpha0, _, _ = attend(s, ann, init_attention_state(5), params)
        heavy = int(np.argmax(alpha0.data))
        beta = np.zeros(5)
        beta[heavy] = 5.0
        state = AttentionState(beta=constant(beta), alpha_history=[])
        alpha1, _, _ = attend(s, ann, state, params)
        assert alpha1.data[heavy] < alpha0.data[heavy]


class TestGradients:
    def test_energy_gradient_finite_difference(self, rng):
        params = init_params(tiny_config(encoder_hidden=2, att_dim=4,
                                         dec_hidden=3), 5)
        fs = FeatureSequence(random_feature_rows(rng, 6))
        ann = encode(fs, params)
        s = constant(rng.normal(size=3))
        beta0 = rng.uniform(0.0, 2.0, size=ann.length)

        def loss():
            state = AttentionState(beta=constant(beta0.copy()), alpha_history=[])
            _, context, _ = attend(s, ann, state, params)
            return sum_all(context)

        names = ["attention.v_att", "attention.W_att", "attention.U_att",
                 "attention.U_f", "coverage.Q"]
        finite_difference_check(loss, params, names=names)

    def test_alpha_gradient_flows_to_coverage(self, rng):
        params = tiny_model()
        ann = _annotations(rng, 4, params.config.annotation_dim)
        s = constant(rng.normal(size=params.config.dec_hidden))
        beta = constant(rng.uniform(0.5, 1.5, size=4))
        params.zero_grads()
        alpha, _, _ = attend(s, ann, AttentionState(beta=beta, alpha_history=[]),
                             params)
        backward(pick(alpha, 2))
        assert params["coverage.Q"].grad is not None
        assert np.abs(params["coverage.Q"].grad).max() > 0.0
        assert np.abs(params["attention.U_f"].grad).max() > 0.0
