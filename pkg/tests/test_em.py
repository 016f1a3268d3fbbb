import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from userdp.core import Dataset, FiniteDistribution
from userdp.em import (
    ComparisonFamily,
    ScoreVector,
    agnostic_family,
    decode_example,
    default_tau,
    em_distribution,
    em_select,
    encode_example,
    pac_score,
    pac_scores,
    pairwise_clipped_matrix,
    pairwise_clipped_scores,
    scheffe_family,
)

scores = st.lists(st.floats(-50, 50), min_size=1, max_size=10)


def test_two_candidate_example():
    p = em_distribution(ScoreVector([0, 2], 1), 2).masses
    assert p[0] == pytest.approx(0.8807970779778824, abs=1e-12)
    assert p[0] == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-12)


def test_large_score_gaps_do_not_overflow():
    p = em_distribution(ScoreVector([0, 1e6], 1), 1).masses
    assert p.tolist() == [1.0, 0.0]


def test_single_candidate_and_errors():
    assert em_select(ScoreVector([3.0], 1), 1, 0) == 0
    with pytest.raises(ValueError):
        em_distribution(ScoreVector([], 1), 1)
    with pytest.raises(ValueError):
        em_distribution(ScoreVector([0, 1], 0), 1)


@given(scores, st.floats(-100, 100), st.floats(0.1, 5))
def test_shift_invariance(s, c, eps):
    a = em_distribution(ScoreVector(s, 1), eps).masses
    b = em_distribution(ScoreVector(np.array(s) + c, 1), eps).masses
    assert np.allclose(a, b, atol=1e-12)


@given(scores, st.randoms(use_true_random=False), st.floats(0.1, 5))
def test_permutation_equivariance(s, r, eps):
    perm = list(range(len(s)))
    r.shuffle(perm)
    a = em_distribution(ScoreVector(s, 1), eps).masses
    b = em_distribution(ScoreVector(np.array(s)[perm], 1), eps).masses
    assert np.array_equal(a[perm], b)


def test_accuracy_guarantee():
    sv = ScoreVector(np.linspace(0, 40, 30), 1)
    eps, beta = 1.0, 0.1
    bar = sv.scores.min() + 2 * sv.sensitivity * math.log(len(sv) / beta) / eps
    bad = sum(sv.scores[em_select(sv, eps, np.random.default_rng([1, t]))] > bar for t in range(1000))
    # binomial(1000, 0.1) stays below 0.13 with overwhelming probability
    assert bad / 1000 <= beta + 0.03


def test_example_encoding():
    for x, y in itertools.product(range(5), (0, 1)):
        assert decode_example(encode_example(x, y)) == (x, y)


def test_pac_score_counts_users():
    # hypothesis labels point 0 -> 0, point 1 -> 1; items: (0,0)=0, (0,1)=1, (1,0)=2, (1,1)=3
    h = [0, 1]
    ds = Dataset(4, [[0, 3], [0, 1], [2, 2]])
    assert pac_score(h, ds) == 2
    assert pac_score(h, Dataset(4, np.zeros((0, 2)))) == 0
    assert pac_scores([h, [1, 1]], ds).sensitivity == 1.0


def test_pac_score_sensitivity_one():
    hyps = [[0, 0], [0, 1], [1, 1]]
    for users in itertools.product(range(4), repeat=4):
        ds = Dataset(4, np.array(users).reshape(2, 2))
        for rec in itertools.product(range(4), repeat=2):
            nb = ds.replace_user(1, rec)
            for h in hyps:
                assert abs(pac_score(h, ds) - pac_score(h, nb)) <= 1


def test_default_tau():
    assert default_tau(0.5, 1) == pytest.approx(1.3325546111576978, abs=1e-12)
    assert default_tau(0.5, 1, c_tau=3) == pytest.approx(3 * default_tau(0.5, 1))
    assert default_tau(0.1, 5) < default_tau(0.1, 6)


def test_scheffe_example():
    cf = scheffe_family([FiniteDistribution([0.6, 0.4]), FiniteDistribution([0.3, 0.7])])
    # W = {0}: P(W) = 0.6
    assert cf.psi(0, 1, 0) == pytest.approx(-0.4)
    assert cf.psi(0, 1, 1) == pytest.approx(0.6)
    # the family compares P with itself on the empty set
    assert cf.psi(0, 0, 0) == 0.0


def test_scheffe_expectation_is_signed_gap():
    rng = np.random.default_rng(0)
    cands = [FiniteDistribution(rng.dirichlet(np.ones(4))) for _ in range(5)]
    cf = scheffe_family(cands)
    src = FiniteDistribution(rng.dirichlet(np.ones(4)))
    for h, h2 in itertools.permutations(range(5), 2):
        wins = cands[h].masses > cands[h2].masses
        expected = cands[h].masses[wins].sum() - src.masses[wins].sum()
        assert cf.row(h)[h2] @ src.masses == pytest.approx(expected)


def test_agnostic_family_sign():
    concepts = np.array([[0], [1]])
    cf = agnostic_family(concepts)
    z = encode_example(0, 0)
    # concept 0 is right and concept 1 is wrong on (0, 0): psi = 0 - 1
    assert cf.psi(0, 1, z) == -1
    assert cf.psi(1, 0, z) == 1


def test_pairwise_matrix_example():
    cf = ComparisonFamily.from_callable(2, 2, lambda h, h2, z: 0.0 if h == h2 else (1.0 if h == 0 else -1.0))
    ds = Dataset(2, [[0, 1], [1, 1]])
    sv = pairwise_clipped_scores(cf, ds, tau=1.0)
    assert sv.scores.tolist() == [2.0, -2.0]
    assert sv.sensitivity == 2.0
    unclipped = pairwise_clipped_matrix(cf, ds, tau=10.0)
    assert unclipped[0, 1] == 4.0


def test_comparison_family_checks_range():
    with pytest.raises(ValueError):
        ComparisonFamily.from_callable(2, 2, lambda h, h2, z: 2.0)


def test_lazy_rows_match_table():
    rng = np.random.default_rng(4)
    cands = [FiniteDistribution(rng.dirichlet(np.ones(3))) for _ in range(6)]
    full = scheffe_family(cands)
    lazy = scheffe_family(cands, memory_budget=0)
    ds = Dataset.sample(FiniteDistribution.uniform(3), 7, 3, rng)
    a = pairwise_clipped_scores(full, ds, 1.5).scores
    b = pairwise_clipped_scores(lazy, ds, 1.5).scores
    assert np.array_equal(a, b)


def test_clipped_scores_sensitivity_exhaustive():
    rng = np.random.default_rng(9)
    cands = [FiniteDistribution(rng.dirichlet(np.ones(3))) for _ in range(4)]
    cf = scheffe_family(cands)
    tau = 0.8
    records = list(itertools.product(range(3), repeat=2))
    for users in itertools.product(records, repeat=2):
        ds = Dataset(3, np.array(users))
        base = pairwise_clipped_scores(cf, ds, tau).scores
        for rec in records:
            nb = pairwise_clipped_scores(cf, ds.replace_user(0, rec), tau).scores
            assert np.max(np.abs(base - nb)) <= 2 * tau + 1e-12
