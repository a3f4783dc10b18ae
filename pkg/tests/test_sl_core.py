import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexrec import sl_core
from flexrec.sl_core import (
    EnumerationLimitError,
    InvalidPairError,
    InvalidPlausibilityError,
    InvalidSubsetError,
    class_related_confusion,
    enumerate_masses,
    hyper_opinion,
    ignorance,
    mass_table,
    pairwise_confusion,
    singleton_beliefs,
    subset_mass,
    total_confusion,
    total_uncertainty,
)

from .oracles import conjunctive_combination

PL3 = (0.9, 0.8, 0.1)
PL2 = (0.6, 0.3)

plausibilities = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=2, max_size=7)


class TestWorkedValues:
    def test_subset_mass(self):
        assert subset_mass(PL3, {0, 1}) == pytest.approx(0.648, abs=1e-15)
        assert subset_mass(PL2, set()) == pytest.approx(0.28, abs=1e-15)
        assert subset_mass((1.0, 0.0, 0.0), {0}) == 1.0

    def test_bit_pattern_matches_set(self):
        assert subset_mass(PL3, 0b011) == subset_mass(PL3, {0, 1})
        assert subset_mass(PL3, 0) == ignorance(PL3)

    def test_beliefs(self):
        assert singleton_beliefs(PL2) == pytest.approx([0.42, 0.12], abs=1e-15)
        assert singleton_beliefs(PL3) == pytest.approx([0.162, 0.072, 0.002], abs=1e-15)
        assert singleton_beliefs((0.0,) * 5) == [0.0] * 5

    def test_ignorance(self):
        assert ignorance((0.0, 0.0, 0.0)) == 1.0
        assert ignorance(PL2) == pytest.approx(0.28, abs=1e-15)
        assert ignorance((0.3, 1.0, 0.2)) == 0.0

    def test_uncertainty_and_confusion(self):
        assert total_uncertainty(PL2) == pytest.approx(0.46, abs=1e-15)
        assert total_confusion(PL2) == pytest.approx(0.18, abs=1e-15)
        assert total_uncertainty(PL3) == pytest.approx(0.764, abs=1e-15)
        assert total_confusion(PL3) == pytest.approx(0.746, abs=1e-15)
        assert total_uncertainty((0.0,) * 4) == 1.0
        assert total_confusion((0.0,) * 4) == 0.0

    def test_class_confusion(self):
        assert class_related_confusion(PL2, 0) == pytest.approx(0.18, abs=1e-15)
        assert class_related_confusion(PL3, 2) == pytest.approx(0.098, abs=1e-15)
        assert class_related_confusion((0.7, 0.0, 0.4), 1) == 0.0

    def test_pairwise(self):
        assert pairwise_confusion(PL3, 0, 1) == pytest.approx(0.648, abs=1e-15)
        assert pairwise_confusion(PL3, 0, 2) == pytest.approx(0.018, abs=1e-15)
        assert pairwise_confusion((0.0, 0.5, 0.9), 0, 2) == 0.0

    def test_enumeration_examples(self):
        m = enumerate_masses(PL2)
        expect = {frozenset(): 0.28, frozenset({0}): 0.42, frozenset({1}): 0.12, frozenset({0, 1}): 0.18}
        assert set(m) == set(expect)
        for key, val in expect.items():
            assert m[key] == pytest.approx(val, abs=1e-15)
        m = enumerate_masses((1.0, 1.0))
        assert m[frozenset({0, 1})] == 1.0 and sum(m.values()) == 1.0
        assert set(enumerate_masses((0.5, 0.5, 0.5)).values()) == {0.125}

    def test_hyper_opinion(self):
        op = hyper_opinion(PL3)
        assert op.beliefs == pytest.approx((0.162, 0.072, 0.002), abs=1e-15)
        assert op.ignorance == pytest.approx(0.018, abs=1e-15)
        assert op.uncertainty == pytest.approx(0.764, abs=1e-15)
        assert op.total_confusion == pytest.approx(0.746, abs=1e-15)
        assert op.num_classes == 3
        assert op.pairwise(0, 1) == pairwise_confusion(PL3, 0, 1)
        assert op.mass({2}) == op.beliefs[2]


class TestErrors:
    @pytest.mark.parametrize("pl", [(0.5,), (0.2, 1.1), (-0.1, 0.5), (float("nan"), 0.5)])
    def test_bad_plausibility(self, pl):
        with pytest.raises(InvalidPlausibilityError):
            ignorance(pl)

    def test_bad_subset(self):
        with pytest.raises(InvalidSubsetError):
            subset_mass(PL3, {3})
        with pytest.raises(InvalidSubsetError):
            subset_mass(PL3, 8)
        with pytest.raises(InvalidSubsetError):
            class_related_confusion(PL3, -1)

    def test_pair_needs_two_classes(self):
        with pytest.raises(InvalidPairError):
            pairwise_confusion(PL3, 1, 1)

    def test_enumeration_limit(self):
        with pytest.raises(EnumerationLimitError):
            mass_table([0.5] * (sl_core.MAX_ENUMERATION_K + 1))


class TestAgainstIntersectionOracle:
    @pytest.mark.parametrize("k", range(2, 9))
    def test_every_subset(self, k):
        rng = random.Random(k)
        for _ in range(25):
            pl = [rng.random() for _ in range(k)]
            oracle = conjunctive_combination(pl)
            table = mass_table(pl)
            for mask in range(1 << k):
                members = frozenset(i for i in range(k) if mask >> i & 1)
                assert table[mask] == pytest.approx(oracle.get(members, 0.0), rel=1e-12, abs=1e-15)
            op = hyper_opinion(pl)
            assert op.ignorance == pytest.approx(oracle[frozenset()], rel=1e-12, abs=1e-15)
            multi = math.fsum(v for s, v in oracle.items() if len(s) >= 2)
            assert op.total_confusion == pytest.approx(multi, rel=1e-10, abs=1e-14)
            for i in range(k):
                ci = math.fsum(v for s, v in oracle.items() if i in s and len(s) >= 2)
                assert class_related_confusion(pl, i) == pytest.approx(ci, rel=1e-10, abs=1e-14)

    def test_mass_table_is_bit_identical_to_subset_mass(self):
        pl = [0.13, 0.77, 0.52, 0.91, 0.05]
        table = mass_table(pl)
        for mask in range(32):
            assert table[mask] == subset_mass(pl, mask)


class TestProperties:
    @given(plausibilities)
    def test_masses_sum_to_one(self, pl):
        assert math.fsum(mass_table(pl)) == pytest.approx(1.0, abs=1e-12)

    @given(plausibilities)
    def test_plausibility_decomposes(self, pl):
        b = singleton_beliefs(pl)
        for i, p in enumerate(pl):
            assert abs(b[i] + class_related_confusion(pl, i) - p) <= 1e-12

    @given(plausibilities)
    def test_partition_of_unity(self, pl):
        op = hyper_opinion(pl)
        assert abs(math.fsum(op.beliefs) + op.ignorance + op.total_confusion - 1.0) <= 1e-12
        assert op.total_confusion >= 0.0

    @given(plausibilities, st.randoms(use_true_random=False))
    def test_relabelling_is_exact(self, pl, rnd):
        perm = list(range(len(pl)))
        rnd.shuffle(perm)
        q = [pl[p] for p in perm]
        a, b = hyper_opinion(pl), hyper_opinion(q)
        assert a.ignorance == b.ignorance
        assert a.uncertainty == b.uncertainty
        assert [a.beliefs[p] for p in perm] == list(b.beliefs)
        for i, j in itertools.combinations(range(len(pl)), 2):
            assert b.pairwise(i, j) == a.pairwise(perm[i], perm[j])

    @given(plausibilities, st.data())
    def test_monotone_in_own_plausibility(self, pl, data):
        i = data.draw(st.integers(0, len(pl) - 1))
        bump = data.draw(st.floats(0.0, 1.0))
        raised = list(pl)
        raised[i] = pl[i] + (1.0 - pl[i]) * bump
        assert singleton_beliefs(raised)[i] >= singleton_beliefs(pl)[i] - 1e-15
        assert ignorance(raised) <= ignorance(pl) + 1e-15

    @settings(max_examples=50)
    @given(plausibilities)
    def test_pairwise_symmetric(self, pl):
        for i, j in itertools.combinations(range(len(pl)), 2):
            assert pairwise_confusion(pl, i, j) == pairwise_confusion(pl, j, i)


def test_numpy_input_accepted():
    assert ignorance(np.array([0.5, 0.5])) == 0.25
