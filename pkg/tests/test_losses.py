"""Loss matrices, the unbiased estimator, joint types, and smoothing."""

from __future__ import annotations

import math

import numpy as np
import pytest

from duodenoise.channel import canonical_erasure_h, compute_h, make_bec, make_bsc
from duodenoise.denoisers import (
    ConstantDenoiser,
    IdentityDenoiser,
    ParityCopyDenoiser,
    SmoothingConfig,
    make_bec_parity_pair,
    make_bsc_counterexample_pair,
    make_sliding_window,
)
from duodenoise.losses import (
    JointTypeCounts,
    LossMatrix,
    bsc_estimate_from_type,
    cumulative_loss,
    erasure_estimate_loss,
    estimate_loss,
    estimate_smoothed_loss,
    joint_type_counts,
    per_symbol_deviation,
    per_symbol_estimate,
    per_symbol_estimates,
    smoothed_conditional_loss,
)
from duodenoise.rng import RngStream

HAMMING = LossMatrix.hamming(2)


class TestLossMatrix:
    def test_hamming(self):
        np.testing.assert_array_equal(HAMMING.lam, [[0, 1], [1, 0]])
        assert HAMMING.lambda_max == 1.0

    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            LossMatrix([[0.0, -1.0], [1.0, 0.0]])

    def test_from_json(self):
        lm = LossMatrix.from_json({"type": "matrix", "lambda": [[0, 2], [3, 0]]})
        assert lm.lambda_max == 3.0
        assert LossMatrix.from_json('{"type": "hamming", "k": 4}').size == 4

    def test_cumulative_loss(self):
        assert cumulative_loss(HAMMING, [0, 1, 1, 0], [0, 0, 1, 1]) == 0.5
        with pytest.raises(ValueError, match="length mismatch"):
            cumulative_loss(HAMMING, [0, 1], [0])


class TestEstimator:
    def test_identity_on_bsc_estimates_crossover_rate(self):
        # for the identity the estimate is exactly delta whatever z is
        ch = make_bsc(0.25)
        h = compute_h(ch)
        for z in ([0, 0, 0], [1, 0, 1, 1], [0, 1]):
            got = estimate_loss(ch, h, HAMMING, IdentityDenoiser(), z)
            assert got == pytest.approx(0.25, abs=1e-12)

    def test_constant_zero_on_bsc(self):
        # per-symbol value is h(1, z_i): -delta/(1-2delta) at 0, dbar/(1-2delta) at 1
        ch = make_bsc(0.25)
        h = compute_h(ch)
        d = ConstantDenoiser(0, 2)
        got = estimate_loss(ch, h, HAMMING, d, [0, 0, 1, 1])
        assert got == pytest.approx((2 * -0.5 + 2 * 1.5) / 4, abs=1e-12)

    def test_estimates_can_go_negative(self):
        ch = make_bsc(0.2)
        h = compute_h(ch)
        z = np.zeros(9, dtype=np.int64)
        z[0] = 1  # odd parity, mostly zeros
        got = estimate_loss(ch, h, HAMMING, ParityCopyDenoiser(), z)
        assert got < 0.0

    def test_per_symbol_estimates_sum_to_estimate(self):
        ch = make_bsc(0.3)
        h = compute_h(ch)
        d = make_sliding_window(1, "majority")
        z = RngStream(5).generator().integers(0, 2, size=64)
        vals = per_symbol_estimates(ch, h, HAMMING, d, z)
        assert math.fsum(vals) / 64 == pytest.approx(
            estimate_loss(ch, h, HAMMING, d, z), abs=1e-14
        )
        for i in (0, 17, 63):
            assert vals[i] == pytest.approx(
                per_symbol_estimate(ch, h, HAMMING, d, z, i), abs=1e-14
            )

    def test_per_symbol_deviation_telescopes(self):
        ch = make_bsc(0.3)
        h = compute_h(ch)
        d = make_sliding_window(1, "majority")
        g = RngStream(6).generator()
        x = g.integers(0, 2, size=32)
        z = g.integers(0, 2, size=32)
        total = math.fsum(
            per_symbol_deviation(ch, h, HAMMING, d, x, z, i) for i in range(32)
        )
        expected = 32 * (
            estimate_loss(ch, h, HAMMING, d, z) - cumulative_loss(HAMMING, x, d.denoise(z))
        )
        assert total == pytest.approx(expected, abs=1e-10)


class TestErasureShortcut:
    def test_matches_general_estimator_at_half(self):
        ch = make_bec(0.5)
        h = canonical_erasure_h(ch)
        d1, d2 = make_bec_parity_pair()
        g = RngStream(7).generator()
        for d in (d1, d2, IdentityDenoiser(2, 3)):
            for _ in range(20):
                z = g.integers(0, 3, size=40)
                assert erasure_estimate_loss(ch, HAMMING, d, z) == pytest.approx(
                    estimate_loss(ch, h, HAMMING, d, z), abs=1e-12
                )

    def test_scales_by_odds_away_from_half(self):
        # general estimator = eps/(1-eps) * erasure form for copy-preserving
        # denoisers under the canonical h
        eps = 0.3
        ch = make_bec(eps)
        h = canonical_erasure_h(ch)
        d = make_bec_parity_pair()[0]
        g = RngStream(8).generator()
        for _ in range(10):
            z = g.integers(0, 3, size=30)
            lhs = estimate_loss(ch, h, HAMMING, d, z)
            rhs = eps / (1 - eps) * erasure_estimate_loss(ch, HAMMING, d, z)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_requires_bec(self):
        with pytest.raises(ValueError, match="erasure"):
            erasure_estimate_loss(make_bsc(0.2), HAMMING, IdentityDenoiser(), [0, 1])


class TestJointType:
    def test_counts_on_hand_worked_example(self):
        # identity: denoised symbol = z_i, flipped symbol = 1 - z_i
        t = joint_type_counts([0, 0, 1], IdentityDenoiser())
        assert t.n == 3
        assert t.counts[0, 0, 1] == 2
        assert t.counts[1, 1, 0] == 1
        assert t.counts.sum() == 3

    def test_marginals(self):
        z = RngStream(9).generator().integers(0, 2, size=100)
        t = joint_type_counts(z, make_sliding_window(1, "majority"))
        assert t.symbol_count(0) == int((z == 0).sum())
        assert t.pair_count(1, 0) + t.pair_count(1, 1) == t.symbol_count(1)

    def test_validation(self):
        with pytest.raises(ValueError, match="2x2x2"):
            JointTypeCounts(np.zeros((2, 2)))

    def test_closed_form_matches_estimator(self):
        ch = make_bsc(0.2)
        h = compute_h(ch)
        d = make_bsc_counterexample_pair(0.2)[1]
        z = RngStream(10).generator().integers(0, 2, size=257)
        t = joint_type_counts(z, d)
        assert bsc_estimate_from_type(0.2, t, 257) == pytest.approx(
            estimate_loss(ch, h, HAMMING, d, z), abs=1e-12
        )


class TestSmoothedLosses:
    def test_conditional_loss_exact_identity(self):
        # position-wise: P(error) = q where z agrees with x, 1 - q elsewhere
        cfg = SmoothingConfig(q=0.125, mode="exact")
        x = np.array([0, 0, 1, 1])
        z = np.array([0, 1, 1, 1])
        got = smoothed_conditional_loss(HAMMING, IdentityDenoiser(), cfg, x, z)
        assert got == pytest.approx((3 * 0.125 + 0.875) / 4, abs=1e-12)

    def test_smoothed_estimate_exact_identity(self):
        # the smoothed identity misreads each symbol w.p. delta + q(1 - 2 delta)
        delta, q = 0.25, 0.125
        ch = make_bsc(delta)
        h = compute_h(ch)
        cfg = SmoothingConfig(q=q, mode="exact")
        got = estimate_smoothed_loss(ch, h, HAMMING, IdentityDenoiser(), cfg,
                                     [0, 1, 0, 1, 1])
        assert got == pytest.approx(delta + q * (1 - 2 * delta), abs=1e-12)

    def test_q_zero_reduces_to_plain(self):
        ch = make_bsc(0.2)
        h = compute_h(ch)
        cfg = SmoothingConfig(q=0.0, mode="exact")
        d = make_bsc_counterexample_pair(0.2)[0]
        z = np.array([1, 0, 0, 1, 1, 0, 1, 0, 0, 0])
        assert estimate_smoothed_loss(ch, h, HAMMING, d, cfg, z) == pytest.approx(
            estimate_loss(ch, h, HAMMING, d, z), abs=1e-12
        )
        x = np.zeros(10, dtype=np.int64)
        assert smoothed_conditional_loss(HAMMING, d, cfg, x, z) == pytest.approx(
            cumulative_loss(HAMMING, x, d.denoise(z)), abs=1e-12
        )

    def test_monte_carlo_tracks_exact(self):
        ch = make_bsc(0.2)
        h = compute_h(ch)
        d = make_bsc_counterexample_pair(0.2)[1]
        z = RngStream(12).generator().integers(0, 2, size=16)
        exact = estimate_smoothed_loss(
            ch, h, HAMMING, d, SmoothingConfig(q=0.05, mode="exact"), z
        )
        mc = estimate_smoothed_loss(
            ch, h, HAMMING, d, SmoothingConfig(q=0.05, m=4000), z, RngStream(13)
        )
        assert mc == pytest.approx(exact, abs=0.02)

    def test_binary_only(self):
        cfg = SmoothingConfig(q=0.1, mode="exact")
        with pytest.raises(ValueError, match="binary"):
            smoothed_conditional_loss(HAMMING, IdentityDenoiser(2, 3), cfg,
                                      [0, 1], [0, 2])
