import itertools
import math

import numpy as np
import pytest

from userdp.core import BudgetExceededError, Dataset, hockey_stick
from userdp.mechanisms import (
    CountSummaryMechanism,
    RandomizedResponseVector,
    constant_mechanism,
    first_item_mechanism,
    pac_em_mechanism,
    randomized_response_bit,
    randomized_response_count,
)


def test_rr_bit_law():
    mech = randomized_response_bit(math.log(3))
    assert mech(Dataset(2, [[0]])).masses.tolist() == pytest.approx([0.75, 0.25])
    assert mech(Dataset(2, [[1]])).masses.tolist() == pytest.approx([0.25, 0.75])


def test_rr_count_matches_enumeration():
    eps0, users, m = 0.7, 2, 2
    mech = randomized_response_count(eps0, users, m)
    keep = 1 / (1 + math.exp(-eps0))
    ds = Dataset(2, [[1, 0], [1, 1]])
    bits = ds.users.reshape(-1)
    law = np.zeros(users * m + 1)
    for noisy in itertools.product((0, 1), repeat=bits.size):
        p = np.prod([keep if a == b else 1 - keep for a, b in zip(noisy, bits)])
        law[sum(noisy)] += p
    assert np.allclose(mech(ds).masses, law, atol=1e-14)
    assert mech.summaries(ds).tolist() == [1, 2]


def test_arity_is_checked():
    mech = randomized_response_count(1.0, 3, 1)
    with pytest.raises(ValueError):
        mech(Dataset(2, [[0], [1]]))


def test_from_item_weights():
    tables = [[1, 0], [0.5, 0.5], [0, 1]]
    mech = CountSummaryMechanism.from_item_weights([0, 1], tables, input_users=2, m=1)
    assert mech(Dataset(2, [[1], [1]])).masses.tolist() == [0, 1]
    with pytest.raises(ValueError):
        CountSummaryMechanism.from_item_weights([0, 1], tables[:2], input_users=2, m=1)


def test_simple_factories():
    assert constant_mechanism([0.3, 0.7])(Dataset(2, [[0]])).masses.tolist() == [0.3, 0.7]
    assert first_item_mechanism(3)(Dataset(3, [[2, 0]])).masses.tolist() == [0, 0, 1]
    law = pac_em_mechanism([[0, 0], [1, 1]], 1.0)(Dataset(4, [[0, 2]]))
    assert law[0] > law[1]


def test_rr_vector_closed_form_matches_dense():
    mech = RandomizedResponseVector(0.6, 6)
    rng = np.random.default_rng(2)
    for _ in range(30):
        a = Dataset(2, rng.integers(2, size=(6, 1)))
        b = Dataset(2, rng.integers(2, size=(6, 1)))
        for eps in (0.0, 0.5, 1.7):
            dense = hockey_stick(mech(a), mech(b), eps), hockey_stick(mech(b), mech(a), eps)
            closed = mech.divergences(a, b, eps)
            assert np.allclose(dense, closed, atol=1e-12)


def test_rr_vector_dense_limit():
    mech = RandomizedResponseVector(0.1, 25)
    with pytest.raises(BudgetExceededError):
        mech(Dataset(2, np.zeros((25, 1), dtype=int)))
