"""
Tests for the binned mutual-information estimates and the bottleneck report.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vessel_transfer import drunet
from vessel_transfer.errors import ConfigurationError, ShapeError
from vessel_transfer.transfer import binned_entropy, binned_mi, ib_report, ib_report_for_model

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=8, max_size=80)


class TestBinnedEntropy:
    def test_uniform_over_four_bins(self):
        assert binned_entropy([0, 1, 2, 3] * 5, bins=4) == pytest.approx(2.0)

    def test_constant_is_zero(self):
        assert binned_entropy([0.7] * 10, bins=4) == 0.0

    def test_too_few_samples(self):
        with pytest.raises(ConfigurationError):
            binned_entropy([0.0, 1.0], bins=4)

    def test_bins_at_least_two(self):
        with pytest.raises(ConfigurationError):
            binned_entropy([0.0] * 10, bins=1)


class TestBinnedMi:
    """Histogram mutual information."""

    def test_identity_channel_equals_entropy(self, rng):
        x = rng.random(500)
        assert binned_mi(x, x, 8) == pytest.approx(binned_entropy(x, 8))

    def test_perfect_binary_correlation_is_one_bit(self):
        x = np.array([0.0, 1.0] * 10)
        assert binned_mi(x, x, 2) == pytest.approx(1.0)

    def test_independent_samples(self):
        gen = np.random.default_rng(0)
        assert binned_mi(gen.random(10_000), gen.random(10_000), 8) < 0.05

    def test_constant_variable(self, rng):
        assert binned_mi(np.full(50, 3.0), rng.random(50), 8) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            binned_mi(np.zeros(10), np.zeros(9), 2)

    @settings(max_examples=60, deadline=None)
    @given(samples, st.integers(2, 8))
    def test_bounded_by_entropies(self, values, bins):
        x = np.array(values)
        y = np.sin(x)
        mi = binned_mi(x, y, bins)
        assert 0.0 <= mi <= min(binned_entropy(x, bins), binned_entropy(y, bins)) + 1e-9
        assert mi == pytest.approx(binned_mi(y, x, bins), abs=1e-9)


class TestIbReport:
    """Bottleneck terms over a latent sample."""

    def test_zero_lambda(self, rng):
        report = ib_report(rng.random((40, 3)), rng.random(40), rng.random(40), lam=0.0, bins=4)
        assert report.lagrangian == report.i_xz

    def test_constant_latent(self, rng):
        labels = rng.random(40)
        report = ib_report(np.ones((40, 2)), rng.random(40), labels, lam=0.5, bins=4)
        assert report.i_xz == 0.0 and report.i_zy == 0.0
        assert report.lagrangian == pytest.approx(0.5 * binned_entropy(labels, 4))

    def test_informative_latent(self, rng):
        x = rng.random(200)
        report = ib_report(np.stack([x, x**2], axis=1), x, x > 0.5, lam=1.0, bins=4)
        assert report.i_xz > 1.0
        assert report.i_zy == pytest.approx(1.0, abs=0.05)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ib_report(rng.random((10, 2)), rng.random(9), rng.random(10), bins=2)

    def test_negative_lambda(self, rng):
        with pytest.raises(ConfigurationError):
            ib_report(rng.random((10, 2)), rng.random(10), rng.random(10), lam=-1.0, bins=2)

    def test_for_model(self, tiny_spec, rng):
        model = drunet.build(tiny_spec)
        pairs = [(rng.random((8, 8)), (rng.random((8, 8)) < 0.2).astype(float)) for _ in range(12)]
        report = ib_report_for_model(model, pairs, lam=2.0, bins=4)
        assert report.lam == 2.0
        assert report.i_xz >= 0.0 and report.i_zy >= 0.0 and report.h_y >= 0.0
