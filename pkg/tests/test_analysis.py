"""Tests for corpus ingestion, rank-frequency fitting, and smoothing."""

import numpy as np
import pytest

from entcal import (
    CorpusError,
    PowerLaw,
    TokenCounts,
    exponential_smooth,
    fit_loglog,
    ingest_corpus,
    lowercase_whitespace,
    predicted_scaling_exponent,
    zipf_exponent,
)


class TestIngestion:
    def test_tokenizer_lowercases_and_splits(self):
        tokens = lowercase_whitespace("The cat  sat\ton The mat.")
        assert tokens == ["the", "cat", "sat", "on", "the", "mat."]

    def test_counts_from_file(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("a b a\nB a\n")
        counts = ingest_corpus(path)
        assert counts.counts == {"a": 3, "b": 2}
        assert counts.total == 5

    def test_counts_from_iterable(self):
        counts = ingest_corpus(["x y", "y y"])
        assert counts.counts == {"x": 1, "y": 3}

    def test_custom_tokenizer(self):
        counts = ingest_corpus(["a-b a-b c"], tokenizer=lambda s: s.split("-"))
        assert counts.counts == {"a": 1, "b a": 1, "b c": 1}

    def test_invalid_utf8_raises_corpus_error(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_bytes(b"ok so far \xff\xfe broken")
        with pytest.raises(CorpusError):
            ingest_corpus(path)

    def test_total_validated(self):
        with pytest.raises(ValueError):
            TokenCounts({"a": 2}, total=3)

    def test_ranked_breaks_ties_by_token(self):
        counts = TokenCounts({"b": 2, "a": 2, "c": 5}, total=9)
        assert counts.ranked() == [("c", 5), ("a", 2), ("b", 2)]

    def test_counts_csv(self, tmp_path):
        counts = TokenCounts({"hi": 2, "lo": 1}, total=3)
        path = tmp_path / "counts.csv"
        counts.to_csv(path)
        assert path.read_text().splitlines() == ["token,count", "hi,2", "lo,1"]


class TestFitLogLog:
    def test_noiseless_power_law_recovered_exactly(self):
        """y = c x^s comes back with the exact slope and R^2 = 1."""
        xs = np.geomspace(1.0, 1e5, 30)
        ys = 2.5 * xs**-1.4
        fit = fit_loglog(xs, ys)
        np.testing.assert_allclose(fit.slope, -1.4, atol=1e-12)
        np.testing.assert_allclose(10**fit.intercept, 2.5, rtol=1e-12)
        np.testing.assert_allclose(fit.r_squared, 1.0, atol=1e-12)

    def test_positive_slope_also_exact(self):
        xs = np.array([1.0, 10.0, 100.0, 1000.0])
        fit = fit_loglog(xs, 0.3 * xs**0.5)
        np.testing.assert_allclose(fit.slope, 0.5, atol=1e-13)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            fit_loglog([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            fit_loglog([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])
        with pytest.raises(ValueError):
            fit_loglog([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_noise_lowers_r_squared(self):
        rng = np.random.default_rng(14)
        xs = np.geomspace(1.0, 1e4, 50)
        ys = xs**-1.0 * np.exp(rng.normal(0.0, 0.3, size=50))
        fit = fit_loglog(xs, ys)
        assert fit.r_squared < 1.0
        np.testing.assert_allclose(fit.slope, -1.0, atol=0.15)


class TestZipfExponent:
    def test_recovers_synthetic_exponent(self):
        """Counts drawn from a rank-frequency power law fit back to it."""
        pl = PowerLaw(1.2, 2000)
        draws = pl.sample(500_000, np.random.default_rng(15))
        raw = np.bincount(draws, minlength=2000)
        counts = TokenCounts(
            {f"w{i}": int(c) for i, c in enumerate(raw) if c > 0}, int(raw.sum())
        )
        fit = zipf_exponent(counts, top_n=500)
        np.testing.assert_allclose(-fit.slope, 1.2, atol=0.08)

    def test_requires_enough_distinct_tokens(self):
        counts = TokenCounts({"a": 5, "b": 3}, total=8)
        with pytest.raises(CorpusError):
            zipf_exponent(counts, top_n=100)


class TestScalingExponent:
    def test_reported_corpus_exponents_map_to_stated_decay(self):
        """The three reference exponents round to 0.09, -0.10, -0.33."""
        assert round(predicted_scaling_exponent(0.918), 2) == 0.09
        assert round(predicted_scaling_exponent(1.114), 2) == -0.10
        assert round(predicted_scaling_exponent(1.5), 2) == -0.33

    def test_unit_exponent_is_flat(self):
        assert predicted_scaling_exponent(1.0) == 0.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            predicted_scaling_exponent(0.0)


class TestExponentialSmooth:
    def test_recurrence_hand_check(self):
        out = exponential_smooth([1.0, 2.0, 3.0], factor=0.5)
        np.testing.assert_allclose(out, [1.0, 1.5, 2.25])

    def test_factor_one_is_identity(self):
        xs = np.array([0.3, -1.0, 2.5])
        np.testing.assert_array_equal(exponential_smooth(xs, 1.0), xs)

    def test_constant_series_fixed_point(self):
        out = exponential_smooth(np.full(10, 4.2), factor=0.2)
        np.testing.assert_allclose(out, 4.2, rtol=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            exponential_smooth([1.0], 0.0)
        with pytest.raises(ValueError):
            exponential_smooth([], 0.5)
