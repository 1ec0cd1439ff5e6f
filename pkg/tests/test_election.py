import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from avicast.core import client_node
from avicast.election import CandidateFactors, ElectionError, candidate_score, select_dta


def brute_force_select(scores):
    """Independent oracle: full enumeration with explicit tie-break."""
    best = None
    for node, score in scores.items():
        if best is None or score > scores[best] or (score == scores[best] and node.index < best.index):
            best = node
    rest = {n: s for n, s in scores.items() if n != best}
    second = None
    for node, score in rest.items():
        if second is None or score > rest[second] or (score == rest[second] and node.index < second.index):
            second = node
    return (best, second)


class TestScore:
    def test_literal_is_plain_mean(self):
        f = CandidateFactors(0.9, 0.1, 0.8)
        assert candidate_score(f, "literal") == pytest.approx(0.6)

    def test_normalized_all_maxed(self):
        f = CandidateFactors(1.0, 0.0, 10.0)
        assert candidate_score(f, "normalized", max_distance=1000.0, max_access=10.0) == 1.0

    def test_normalized_worst_distance_and_access(self):
        f = CandidateFactors(0.5, 1000.0, 0.0)
        score = candidate_score(f, "normalized", max_distance=1000.0, max_access=10.0)
        assert score == pytest.approx(0.5 / 3)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            candidate_score(CandidateFactors(math.nan, 0.0, 0.0), "literal")
        with pytest.raises(ValueError):
            candidate_score(CandidateFactors(0.5, math.inf, 0.0), "normalized")

    def test_normalized_requires_positive_bounds(self):
        with pytest.raises(ValueError):
            candidate_score(CandidateFactors(0.5, 1.0, 1.0), "normalized", max_distance=0.0)

    @given(
        energy=st.floats(0, 1),
        access=st.floats(0, 20),
        d1=st.floats(0, 2000),
        d2=st.floats(0, 2000),
    )
    def test_normalized_never_rewards_distance(self, energy, access, d1, d2):
        lo, hi = sorted((d1, d2))
        near = candidate_score(CandidateFactors(energy, lo, access), "normalized")
        far = candidate_score(CandidateFactors(energy, hi, access), "normalized")
        assert far <= near

    @given(score=st.floats(0, 50))
    def test_normalized_capped_factors(self, score):
        f = CandidateFactors(1.0, 0.0, score)
        assert candidate_score(f, "normalized", max_access=10.0) <= 1.0


class TestSelect:
    def test_highest_wins_second_succeeds(self):
        scores = {client_node(1): 0.6, client_node(2): 0.7, client_node(3): 0.5}
        assert select_dta(scores) == (client_node(2), client_node(1))

    def test_tie_breaks_to_lowest_index(self):
        scores = {client_node(2): 0.7, client_node(1): 0.7}
        assert select_dta(scores) == (client_node(1), client_node(2))

    def test_singleton_has_no_successor(self):
        assert select_dta({client_node(1): 0.4}) == (client_node(1), None)

    def test_empty_map_is_an_error(self):
        with pytest.raises(ElectionError):
            select_dta({})

    @given(st.data())
    def test_matches_brute_force_and_permutation_invariant(self, data):
        n = data.draw(st.integers(1, 8))
        indices = data.draw(
            st.lists(st.integers(1, 20), min_size=n, max_size=n, unique=True)
        )
        raw = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
        scores = {client_node(i): s / 4.0 for i, s in zip(indices, raw)}
        expect = brute_force_select(scores)
        assert select_dta(scores) == expect
        shuffled = data.draw(st.permutations(list(scores.items())))
        assert select_dta(dict(shuffled)) == expect
        dta, successor = expect
        if successor is not None:
            assert dta != successor

    @given(st.data())
    def test_power_of_two_scaling_never_changes_result(self, data):
        # exact-by-construction: scaling by 2**k only shifts exponents
        n = data.draw(st.integers(1, 6))
        indices = data.draw(st.lists(st.integers(1, 20), min_size=n, max_size=n, unique=True))
        raw = data.draw(st.lists(st.floats(0.001, 1.0, allow_nan=False), min_size=n, max_size=n))
        k = data.draw(st.integers(-3, 3))
        scores = {client_node(i): s for i, s in zip(indices, raw)}
        scaled = {node: s * (2.0 ** k) for node, s in scores.items()}
        assert select_dta(scores) == select_dta(scaled)


def test_ten_thousand_random_maps_match_oracle():
    rng = random.Random(2024)
    for _ in range(10_000):
        n = rng.randint(1, 12)
        indices = rng.sample(range(1, 40), n)
        scores = {client_node(i): rng.choice((0.1, 0.25, 0.5, 0.5, 0.75, 1.0)) for i in indices}
        assert select_dta(scores) == brute_force_select(scores)
