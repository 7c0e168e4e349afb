"""Denoiser behavior, substituted-output tables, and smoothing machinery.

The load-bearing property here is that every vectorized override of
``substituted_outputs`` / ``denoise_batch`` agrees with the brute-force
fallback (re-denoising the whole modified sequence), since the loss estimator
consumes only those tables.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duodenoise.denoisers import (
    BecParityDenoiser,
    ConstantDenoiser,
    Denoiser,
    IdentityDenoiser,
    ParityCopyDenoiser,
    ParityMarkedZerosDenoiser,
    SmoothingConfig,
    draw_smoothing_mask,
    draw_smoothing_masks,
    enumerate_masks,
    exact_mask_weights,
    make_bec_parity_pair,
    make_bsc_counterexample_pair,
    make_sliding_window,
    smoothed_expected_output,
    stratified_mask_weights,
)
from duodenoise.rng import RngStream


def brute_force_table(d: Denoiser, z: np.ndarray) -> np.ndarray:
    """Reference substituted-output table via full re-denoising."""
    n = len(z)
    tab = np.empty((n, d.input_size), dtype=np.int64)
    for i in range(n):
        for a in range(d.input_size):
            w = z.copy()
            w[i] = a
            tab[i, a] = d.denoise(w)[i]
    return tab


ZOO = [
    IdentityDenoiser(2, 3),
    ConstantDenoiser(1, 2, 3),
    make_sliding_window(1, "majority"),
    make_sliding_window(2, "majority"),
    BecParityDenoiser(complement=False),
    BecParityDenoiser(complement=True),
    ParityCopyDenoiser(),
    ParityMarkedZerosDenoiser(0.2),
    ParityMarkedZerosDenoiser(0.49),
]


@pytest.mark.parametrize("d", ZOO, ids=lambda d: type(d).__name__)
@given(data=st.data())
@settings(max_examples=25, deadline=None)
def test_substituted_outputs_match_brute_force(d, data):
    n = data.draw(st.integers(1, 12))
    z = np.array(
        data.draw(st.lists(st.integers(0, d.input_size - 1), min_size=n, max_size=n))
    )
    np.testing.assert_array_equal(d.substituted_outputs(z), brute_force_table(d, z))


@pytest.mark.parametrize("d", ZOO, ids=lambda d: type(d).__name__)
def test_batch_paths_match_row_wise(d):
    rng = RngStream(3).generator()
    zs = rng.integers(0, d.input_size, size=(7, 20))
    np.testing.assert_array_equal(
        d.denoise_batch(zs), np.stack([d.denoise(r) for r in zs])
    )
    np.testing.assert_array_equal(
        d.substituted_outputs_batch(zs),
        np.stack([d.substituted_outputs(r) for r in zs]),
    )


class TestSimpleDenoisers:
    def test_identity_copies_and_maps_erasures_to_zero(self):
        d = IdentityDenoiser(2, 3)
        np.testing.assert_array_equal(d.denoise([0, 1, 2, 1]), [0, 1, 0, 1])

    def test_constant(self):
        d = ConstantDenoiser(1, 2)
        np.testing.assert_array_equal(d.denoise([0, 1, 0]), [1, 1, 1])
        with pytest.raises(ValueError, match="outside"):
            ConstantDenoiser(3, 2)

    def test_majority_window(self):
        d = make_sliding_window(1, "majority")
        # zero padding at the boundaries; ties go to 0
        np.testing.assert_array_equal(d.denoise([1, 1, 0, 0, 1]), [1, 1, 0, 0, 0])
        np.testing.assert_array_equal(d.denoise([1]), [0])

    def test_window_rule_dict(self):
        flip = {w: 1 - w[1] for w in np.ndindex(2, 2, 2)}
        d = make_sliding_window(1, flip)
        np.testing.assert_array_equal(d.denoise([0, 1, 1, 0]), [1, 0, 0, 1])

    def test_incomplete_rule_dict_rejected(self):
        with pytest.raises(ValueError, match="incomplete table"):
            make_sliding_window(1, {(0, 0, 0): 1})

    def test_wrong_size_flat_table_rejected(self):
        with pytest.raises(ValueError, match="incomplete table"):
            make_sliding_window(1, np.zeros(4, dtype=np.int64))


class TestParityPairs:
    def test_bec_pair_fills_by_zero_count_parity(self):
        d1, d2 = make_bec_parity_pair()
        z = np.array([0, 2, 0, 2, 1])  # two zeros -> even parity
        np.testing.assert_array_equal(d1.denoise(z), [0, 0, 0, 0, 1])
        np.testing.assert_array_equal(d2.denoise(z), [0, 1, 0, 1, 1])

    def test_bec_pair_is_globally_sensitive(self):
        d1, _ = make_bec_parity_pair()
        z = np.array([0, 2, 2, 2, 1])
        flipped = z.copy()
        flipped[0] = 1  # one symbol change flips every erased output
        before, after = d1.denoise(z), d1.denoise(flipped)
        assert (before[z == 2] != after[z == 2]).all()

    def test_parity_copy(self):
        d = ParityCopyDenoiser()
        np.testing.assert_array_equal(d.denoise([1, 0, 0, 0]), [1, 0, 0, 0])
        np.testing.assert_array_equal(d.denoise([1, 1, 0, 0]), [0, 0, 0, 0])

    def test_parity_marked_zeros(self):
        d = ParityMarkedZerosDenoiser(0.4)
        # odd parity, 5 zeros -> floor(0.4 * 5) = 2 leading zeros raised
        np.testing.assert_array_equal(
            d.denoise([0, 1, 0, 0, 0, 0]), [1, 0, 1, 0, 0, 0]
        )
        np.testing.assert_array_equal(d.denoise([0, 1, 1, 0]), [0, 0, 0, 0])

    def test_counterexample_pair_agrees_on_even_parity(self):
        d1, d2 = make_bsc_counterexample_pair(0.2)
        z = RngStream(11).generator().integers(0, 2, size=101)
        if z.sum() % 2 == 0:
            z[0] ^= 1
        even = z.copy()
        even[-1] ^= 1
        np.testing.assert_array_equal(d1.denoise(even), d2.denoise(even))
        assert (d1.denoise(z) != d2.denoise(z)).any()


class TestSmoothing:
    def test_config_requires_exactly_one_rate(self):
        with pytest.raises(ValueError, match="exactly one"):
            SmoothingConfig(q=0.1, nu=0.5)
        with pytest.raises(ValueError, match="exactly one"):
            SmoothingConfig()

    def test_config_resolves_rate_exponent(self):
        assert SmoothingConfig(nu=0.5).resolve_q(256) == pytest.approx(1 / 16)
        assert SmoothingConfig(q=0.01).resolve_q(999) == 0.01

    def test_mask_law(self):
        cfg = SmoothingConfig(q=0.2)
        masks = draw_smoothing_masks(
            SmoothingConfig(q=0.2, m=400), 256, RngStream(4)
        )
        assert masks.shape == (400, 256)
        assert abs(masks.mean() - 0.2) < 0.01
        single = draw_smoothing_mask(cfg, 50, RngStream(4))
        assert set(np.unique(single)) <= {0, 1}

    def test_exact_weights_sum_to_one(self):
        masks = enumerate_masks(10)
        for q in (0.0, 0.1, 0.3):
            w = exact_mask_weights(masks, q)
            assert w.sum() == pytest.approx(1.0, abs=1e-12)
        # q = 0 puts all mass on the zero mask
        w0 = exact_mask_weights(masks, 0.0)
        assert w0[0] == 1.0 and w0[1:].max() == 0.0

    def test_stratified_weights_match_exact_parity_mass(self):
        q, n = 0.05, 64
        masks = draw_smoothing_masks(SmoothingConfig(q=q, m=256), n, RngStream(8))
        w = stratified_mask_weights(masks, q)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        p_odd = 0.5 * (1.0 - (1.0 - 2 * q) ** n)
        assert w[masks.sum(axis=1) % 2 == 1].sum() == pytest.approx(p_odd, abs=1e-12)

    def test_stratified_weights_degrade_to_uniform(self):
        masks = np.zeros((8, 5), dtype=np.int64)  # all even
        np.testing.assert_allclose(stratified_mask_weights(masks, 0.1), 1 / 8)

    def test_smoothed_expected_output_exact(self):
        # identity at position i: P(output 1) = q if z_i = 0 else 1 - q
        d = IdentityDenoiser()
        cfg = SmoothingConfig(q=0.1, mode="exact")
        z = np.array([0, 1, 0, 1])
        assert smoothed_expected_output(d, cfg, z, 0) == pytest.approx(0.1, abs=1e-12)
        assert smoothed_expected_output(d, cfg, z, 1) == pytest.approx(0.9, abs=1e-12)

    def test_exact_mode_respects_threshold(self):
        cfg = SmoothingConfig(q=0.1, mode="exact", exact_threshold=8)
        with pytest.raises(ValueError, match="exact smoothing"):
            smoothed_expected_output(IdentityDenoiser(), cfg, np.zeros(9, np.int64), 0)

    def test_monte_carlo_requires_stream(self):
        cfg = SmoothingConfig(q=0.1)
        with pytest.raises(ValueError, match="RngStream"):
            smoothed_expected_output(IdentityDenoiser(), cfg, np.zeros(30, np.int64), 0)
