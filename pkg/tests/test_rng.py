import numpy as np
import pytest

from sbim.rng import STAGES, derive_rng, derive_seed_sequence


def test_streams_reproducible_and_distinct():
    a = derive_rng(42, "filter", 3, 1).random(5)
    np.testing.assert_array_equal(a, derive_rng(42, STAGES["filter"], 3, 1).random(5))
    others = [derive_rng(42, "filter", 3, 2), derive_rng(42, "filter", 4, 1), derive_rng(42, "data", 3, 1),
              derive_rng(43, "filter", 3, 1)]
    for g in others:
        assert not np.array_equal(a, g.random(5))


def test_rejects_negative_key():
    with pytest.raises(ValueError):
        derive_seed_sequence(1, "data", -1)
    with pytest.raises(KeyError):
        derive_rng(1, "nope")
