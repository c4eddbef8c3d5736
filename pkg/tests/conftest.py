"""Shared fixtures: small enumerable model pairs reused across test modules."""

import pytest

from entcal import random_model


@pytest.fixture
def small_pair():
    """A (true, base) pair of independent Dirichlet(1) models, V=3, T=3."""
    true_model = random_model(vocab_size=3, horizon=3, seed=101)
    base_model = random_model(vocab_size=3, horizon=3, seed=202)
    return true_model, base_model


@pytest.fixture
def tiny_pair():
    """A V=2, T=2 pair small enough for hand enumeration."""
    true_model = random_model(vocab_size=2, horizon=2, seed=11)
    base_model = random_model(vocab_size=2, horizon=2, seed=22)
    return true_model, base_model
