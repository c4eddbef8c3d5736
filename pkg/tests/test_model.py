"""Tests for the tabular sequence model: codecs, validation, factories, I/O."""

import filecmp

import numpy as np
import pytest

from entcal import (
    DEFAULT_PROMPT,
    ModelDomainError,
    Prompt,
    TabularModel,
    decode_prefix,
    deterministic_model,
    entropy_overshoot_pair,
    load_model,
    prefix_code,
    random_model,
    save_model,
    uniform_model,
)


class TestPrefixCodec:
    """prefix_code and decode_prefix form a bijection onto 0..V^t - 1."""

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            V = int(rng.integers(2, 6))
            t = int(rng.integers(0, 5))
            prefix = tuple(int(v) for v in rng.integers(0, V, size=t))
            code = prefix_code(prefix, V)
            assert 0 <= code < V**t
            assert decode_prefix(code, t, V) == prefix

    def test_lexicographic_order(self):
        """Codes enumerate prefixes in lexicographic order, base V."""
        V, t = 3, 2
        seen = [decode_prefix(c, t, V) for c in range(V**t)]
        assert seen == sorted(seen)
        assert seen[0] == (0, 0)
        assert seen[-1] == (2, 2)

    def test_empty_prefix_is_zero(self):
        assert prefix_code((), 7) == 0
        assert decode_prefix(0, 0, 7) == ()


class TestTabularModelValidation:
    """Constructor rejects anything that is not a complete conditional table."""

    def test_rows_must_normalize(self):
        levels = {"default": [np.array([[0.7, 0.2]])]}
        with pytest.raises(ValueError):
            TabularModel(2, 1, (DEFAULT_PROMPT,), levels)

    def test_rows_must_be_nonnegative(self):
        levels = {"default": [np.array([[1.5, -0.5]])]}
        with pytest.raises(ValueError):
            TabularModel(2, 1, (DEFAULT_PROMPT,), levels)

    def test_shape_checked_per_level(self):
        levels = {"default": [np.full((1, 2), 0.5), np.full((3, 2), 0.5)]}
        with pytest.raises(ValueError):
            TabularModel(2, 2, (DEFAULT_PROMPT,), levels)

    def test_level_keys_must_match_prompts(self):
        levels = {"other": [np.full((1, 2), 0.5)]}
        with pytest.raises(ValueError):
            TabularModel(2, 1, (DEFAULT_PROMPT,), levels)

    def test_rows_frozen_after_init(self):
        model = uniform_model(2, 2)
        with pytest.raises(ValueError):
            model.level_rows("default", 0)[0, 0] = 1.0


class TestTabularModelQueries:
    def test_conditional_matches_level_rows(self):
        model = random_model(vocab_size=3, horizon=3, seed=4)
        rng = np.random.default_rng(4)
        for _ in range(50):
            t = int(rng.integers(0, 3))
            prefix = tuple(int(v) for v in rng.integers(0, 3, size=t))
            row = model.conditional(DEFAULT_PROMPT, prefix)
            direct = model.level_rows("default", t)[prefix_code(prefix, 3)]
            np.testing.assert_array_equal(row, direct)

    def test_sequence_logprob_is_chain_rule_sum(self):
        """log p(y) equals the sum of per-step conditional logs."""
        model = random_model(vocab_size=3, horizon=4, seed=9)
        rng = np.random.default_rng(9)
        for _ in range(100):
            seq = tuple(int(v) for v in rng.integers(0, 3, size=4))
            expected = 0.0
            for t in range(4):
                expected += np.log(model.conditional(DEFAULT_PROMPT, seq[:t])[seq[t]])
            np.testing.assert_allclose(
                model.sequence_logprob(DEFAULT_PROMPT, seq), expected, rtol=1e-13
            )

    def test_sequence_logprob_zero_probability_is_neg_inf(self):
        model = deterministic_model(2, 2, sequence=(1, 0))
        assert model.sequence_logprob(DEFAULT_PROMPT, (1, 0)) == 0.0
        assert model.sequence_logprob(DEFAULT_PROMPT, (0, 0)) == -np.inf

    def test_domain_errors(self):
        model = uniform_model(2, 2)
        with pytest.raises(ModelDomainError):
            model.conditional(DEFAULT_PROMPT, (0, 1))
        with pytest.raises(ModelDomainError):
            model.conditional(DEFAULT_PROMPT, (5,))
        with pytest.raises(ModelDomainError):
            model.sequence_logprob(DEFAULT_PROMPT, (0,))
        with pytest.raises(ModelDomainError):
            model.level_rows("nope", 0)

    def test_sampling_reproducible_and_in_range(self):
        model = random_model(vocab_size=4, horizon=3, seed=7)
        a = model.sample_sequences(DEFAULT_PROMPT, 64, np.random.default_rng(123))
        b = model.sample_sequences(DEFAULT_PROMPT, 64, np.random.default_rng(123))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (64, 3)
        assert a.min() >= 0 and a.max() < 4

    def test_sampling_frequencies_match_first_step_row(self):
        """Empirical first-token frequencies converge on the stored row."""
        model = random_model(vocab_size=3, horizon=2, seed=15)
        row = model.conditional(DEFAULT_PROMPT, ())
        draws = model.sample_sequences(DEFAULT_PROMPT, 200_000, np.random.default_rng(5))
        freq = np.bincount(draws[:, 0], minlength=3) / 200_000
        np.testing.assert_allclose(freq, row, atol=5e-3)


class TestFactories:
    def test_uniform_rows(self):
        model = uniform_model(4, 3)
        for t in range(3):
            rows = model.level_rows("default", t)
            np.testing.assert_allclose(rows, 0.25, rtol=0, atol=0)

    def test_deterministic_one_hot(self):
        model = deterministic_model(3, 3, sequence=(2, 0, 1))
        assert model.conditional(DEFAULT_PROMPT, ())[2] == 1.0
        assert model.conditional(DEFAULT_PROMPT, (2,))[0] == 1.0
        assert model.conditional(DEFAULT_PROMPT, (2, 0))[1] == 1.0

    def test_random_model_seeded(self):
        a = random_model(vocab_size=3, horizon=3, seed=1)
        b = random_model(vocab_size=3, horizon=3, seed=1)
        c = random_model(vocab_size=3, horizon=3, seed=2)
        np.testing.assert_array_equal(
            a.level_rows("default", 2), b.level_rows("default", 2)
        )
        assert not np.array_equal(a.level_rows("default", 2), c.level_rows("default", 2))

    def test_random_model_rows_normalized(self):
        for seed in range(5):
            model = random_model(vocab_size=5, horizon=3, concentration=0.4, seed=seed)
            for t in range(3):
                sums = model.level_rows("default", t).sum(axis=1)
                np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_custom_prompts(self):
        prompts = (Prompt("a", (0,)), Prompt("b", (1, 1)))
        model = random_model(vocab_size=2, horizon=2, seed=3, prompts=prompts)
        assert {p.id for p in model.prompts} == {"a", "b"}
        assert model.conditional(Prompt("a", (0,)), ()).shape == (2,)


class TestSaveLoad:
    """Text serialization round-trips models bit-exactly."""

    def test_round_trip_exact(self, tmp_path):
        model = random_model(vocab_size=3, horizon=3, concentration=0.7, seed=42)
        path = tmp_path / "m.txt"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.vocab_size == 3 and loaded.horizon == 3
        for t in range(3):
            np.testing.assert_array_equal(
                loaded.level_rows("default", t), model.level_rows("default", t)
            )

    def test_double_save_identical_bytes(self, tmp_path):
        model = random_model(vocab_size=4, horizon=2, seed=8)
        save_model(model, tmp_path / "a.txt")
        save_model(load_model(tmp_path / "a.txt"), tmp_path / "b.txt")
        assert filecmp.cmp(tmp_path / "a.txt", tmp_path / "b.txt", shallow=False)

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not-a-model 1\nvocab 2\n")
        with pytest.raises(ValueError):
            load_model(path)


class TestOvershootPair:
    """Fixture generator for the cooling sweep: entropy above log loss."""

    def test_entropy_exceeds_logloss(self):
        from entcal import ent_ce

        for seed in range(5):
            true_model, base_model = entropy_overshoot_pair(seed=seed)
            report = ent_ce(true_model, base_model)
            assert report.total_entropy > report.total_logloss

    def test_pair_shares_support(self):
        true_model, base_model = entropy_overshoot_pair(seed=1)
        for t in range(true_model.horizon):
            pt = true_model.level_rows("default", t)
            pb = base_model.level_rows("default", t)
            assert pt.shape == pb.shape
            assert np.all((pt > 0) == (pb > 0))

    def test_rows_normalized(self):
        true_model, base_model = entropy_overshoot_pair(seed=2)
        for model in (true_model, base_model):
            for t in range(model.horizon):
                sums = model.level_rows("default", t).sum(axis=1)
                np.testing.assert_allclose(sums, 1.0, atol=1e-9)
