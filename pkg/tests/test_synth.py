"""Synthetic ground-truth generation."""

import io

import numpy as np
import pytest

from ibpica.state import ConfigurationError
from ibpica.synth import (
    MIXTURE_VARIANCES,
    MIXTURE_WEIGHTS,
    load_bundle,
    save_bundle,
    synth_generate,
)


class TestSynthGenerate:
    def test_shapes_and_determinism(self):
        b1 = synth_generate(8, 3, 100, 0.5, seed=4)
        b2 = synth_generate(8, 3, 100, 0.5, seed=4)
        assert b1.observations.shape == (100, 8)
        assert b1.loadings.shape == (8, 3)
        assert b1.sources.shape == (100, 3)
        np.testing.assert_array_equal(b1.observations, b2.observations)

    def test_full_sparsity_gives_dense_loadings(self):
        bundle = synth_generate(6, 3, 10, 1.0, seed=0)
        assert np.all(bundle.loadings != 0.0)

    def test_no_empty_columns(self):
        for seed in range(10):
            bundle = synth_generate(5, 4, 10, 0.15, seed=seed)
            assert np.all(np.any(bundle.loadings != 0.0, axis=0))

    def test_high_snr_limit_is_noiseless(self):
        bundle = synth_generate(6, 3, 50, 0.6, seed=1, snr=1e12)
        reconstruction = bundle.sources @ bundle.loadings.T
        np.testing.assert_allclose(bundle.observations, reconstruction, atol=1e-4)

    def test_unit_marginal_source_power(self):
        w1, w2 = MIXTURE_WEIGHTS
        v1, v2 = MIXTURE_VARIANCES
        assert w1 * v1 + w2 * v2 == pytest.approx(1.0)
        bundle = synth_generate(4, 2, 200_000, 0.5, seed=2)
        assert bundle.sources.var() == pytest.approx(1.0, rel=0.02)

    def test_sample_covariance_matches_model(self):
        # cov(X) -> G G^T + noise_var * I for unit-power sources.
        bundle = synth_generate(6, 3, 20_000, 0.5, seed=3)
        X = bundle.observations
        expected = bundle.loadings @ bundle.loadings.T + np.eye(6) / bundle.noise_precision
        sample_cov = (X.T @ X) / X.shape[0]
        scale = np.abs(np.diag(expected)).mean()
        assert np.max(np.abs(sample_cov - expected)) / scale < 0.05

    def test_invalid_arguments(self):
        with pytest.raises(ConfigurationError):
            synth_generate(4, 0, 10, 0.5, seed=0)
        with pytest.raises(ConfigurationError):
            synth_generate(4, 2, 10, 0.0, seed=0)
        with pytest.raises(ConfigurationError):
            synth_generate(4, 2, 10, 0.5, seed=0, snr=-1.0)


class TestBundleIO:
    def test_round_trip_bit_exact(self):
        bundle = synth_generate(5, 2, 30, 0.7, seed=9)
        buf = io.BytesIO()
        save_bundle(buf, bundle, config_json='{"seed":9}')
        loaded, config = load_bundle(io.BytesIO(buf.getvalue()))
        assert config == '{"seed":9}'
        np.testing.assert_array_equal(loaded.observations, bundle.observations)
        np.testing.assert_array_equal(loaded.loadings, bundle.loadings)
        assert loaded.noise_precision == bundle.noise_precision
        assert loaded.seed == 9
        buf2 = io.BytesIO()
        save_bundle(buf2, loaded, config_json=config)
        assert buf.getvalue() == buf2.getvalue()
