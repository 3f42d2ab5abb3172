from fractions import Fraction

import numpy as np
import pytest

from montest import oracles
from montest.functions import AntiDictator, Dictator, Majority, Parity, RandomBernoulli, TruthTable, instantiate, to_truth_table


def tt(spec, n):
    return to_truth_table(instantiate(spec, n))


AD2 = tt(AntiDictator(1), 2)


class TestInfluence:
    @pytest.mark.parametrize("spec, infl, viol, total", [
        (Parity(), 12, 6, Fraction(3)),
        (Dictator(1), 4, 0, Fraction(1)),
        (Majority(), 6, 0, Fraction(3, 2)),
        (AntiDictator(2), 4, 4, Fraction(1)),
    ])
    def test_n3_examples(self, spec, infl, viol, total):
        rep = oracles.influence_report(tt(spec, 3))
        assert (rep.influential_count, rep.violating_count, rep.total_influence) == (infl, viol, total)

    def test_identity_against_pair_count(self):
        for bits in oracles.all_truth_tables(3):
            t = TruthTable(3, bits)
            assert oracles.influence_report(t).total_influence == oracles.total_influence_from_pairs(t)

    def test_batch_counts_match_single(self):
        tables = oracles.all_truth_tables(3)
        infl, viol = oracles.edge_counts(tables, 3)
        for j in (0, 17, 105, 255):
            rep = oracles.influence_report(TruthTable(3, tables[j]))
            assert (infl[j], viol[j]) == (rep.influential_count, rep.violating_count)

    def test_violating_edges_listed(self):
        assert oracles.violating_edges(AD2) == [(0, 1), (2, 1)]
        assert oracles.violating_edges(tt(Dictator(2), 4)) == []


class TestSurvival:
    def test_antidictator_n2(self):
        st = oracles.survival_table(AD2, 2)
        np.testing.assert_array_equal(st.s[0], 1.0)
        np.testing.assert_allclose(st.s[1], 0.5)
        np.testing.assert_allclose(st.s[2], 0.25)

    def test_constant_and_parity(self):
        const = TruthTable(4, [1] * 16)
        np.testing.assert_array_equal(oracles.survival_table(const, 4).s, 1.0)
        st = oracles.survival_table(tt(Parity(), 4), 4)
        np.testing.assert_array_equal(st.s[1:], 0.0)

    def test_recurrence_and_monotone_in_ell(self):
        t = tt(RandomBernoulli(0.2, 5), 6)
        st = oracles.survival_table(t, 8)
        n = t.n
        for ell in range(1, 9):
            for x in range(1 << n):
                want = sum(st.s[ell - 1][x ^ (1 << i)] for i in range(n)
                           if t.bits[x] == t.bits[x ^ (1 << i)]) / n
                assert st.s[ell][x] == pytest.approx(want, abs=1e-15)
            assert np.all(st.s[ell] <= st.s[ell - 1])

    def test_limits(self):
        with pytest.raises(ValueError):
            oracles.survival_table(TruthTable(21, np.zeros(1 << 21, dtype=np.uint8)), 2)
        with pytest.raises(ValueError):
            oracles.survival_table(AD2, 0)


class TestStickySet:
    def test_antidictator_n2(self):
        f1 = oracles.sticky_set(AD2, 1)
        assert f1.sticky_vertices.tolist() == [0, 1, 2, 3] and len(f1) == 2
        assert f1.boundary.size == 4      # s = 1/2 exactly
        f2 = oracles.sticky_set(AD2, 2)
        assert f2.sticky_vertices.size == 0 and len(f2) == 0
        assert f2.nonsticky_vertices.tolist() == [0, 1, 2, 3]

    def test_partition_and_edge_membership(self):
        t = tt(RandomBernoulli(0.15, 3), 7)
        for ell in (1, 2, 4, 8):
            fs = oracles.sticky_set(t, ell)
            both = np.concatenate([fs.sticky_vertices, fs.nonsticky_vertices])
            assert sorted(both.tolist()) == list(range(1 << 7))
            sticky = set(fs.sticky_vertices.tolist())
            for e in fs.edge_objects():
                assert t.query(e.lower.index) == 1 and t.query(e.upper.index) == 0
                assert e.lower.index in sticky and e.upper.index in sticky

    def test_monotone_has_empty_f(self):
        t = tt(Majority(), 5)
        assert all(len(oracles.sticky_set(t, ell)) == 0 for ell in (1, 2, 4, 8))


class TestEventSum:
    def test_antidictator_n2(self):
        assert oracles.event_probability_sum(AD2, 1) == pytest.approx(0.5, abs=1e-15)
        assert oracles.event_probability_sum(AD2, 2) == 0.0

    def test_lower_bound_form(self):
        for bits in oracles.all_truth_tables(3)[::7]:
            t = TruthTable(3, bits)
            for ell in (1, 2, 4):
                bound = ell * len(oracles.sticky_set(t, ell)) / (4 * 3 * 8)
                assert oracles.event_probability_sum(t, ell) >= bound - 1e-15


class TestExhaustive:
    def test_antidictator_n2(self):
        assert oracles.exhaustive_rejection_probability(AD2, 1) == Fraction(1, 2)
        assert oracles.exhaustive_rejection_probability(AD2, 2) == Fraction(1, 2)

    def test_zero_length_walk(self):
        assert oracles.exhaustive_rejection_probability(AD2, 0) == 0

    def test_monotone_zero(self):
        for bits in oracles.all_truth_tables(3):
            t = TruthTable(3, bits)
            if oracles.is_monotone(t):
                assert all(oracles.exhaustive_rejection_probability(t, ell) == 0 for ell in (1, 2, 3, 4))

    def test_agrees_with_direct_simulation(self):
        # walk every (start, steps) pair through the scalar tester's own search
        from itertools import product

        from montest.hypercube import Point, WalkPath
        from montest.tester import binary_search_influential, is_violation
        t = tt(RandomBernoulli(0.5, 11), 3)
        for ell in (1, 2, 3):
            rejections = 0
            for x in range(8):
                for steps in product(range(1, 4), repeat=ell):
                    path = WalkPath(Point(3, x), steps)
                    if t.query(x) != t.query(path.vertex_index(ell)):
                        edge, _ = binary_search_influential(t, path)
                        rejections += is_violation(t, edge)
            assert oracles.exhaustive_rejection_probability(t, ell) == Fraction(rejections, 8 * 3 ** ell)

    def test_limits(self):
        with pytest.raises(ValueError):
            oracles.exhaustive_rejection_probability(tt(Parity(), 5), 1)
        with pytest.raises(ValueError):
            oracles.exhaustive_rejection_probability(AD2, 5)

    def test_sandwich(self):
        for bits in oracles.all_truth_tables(3):
            t = TruthTable(3, bits)
            for ell in (1, 2, 4):
                exact = oracles.exhaustive_rejection_probability(t, ell)
                assert oracles.event_probability_sum(t, ell) <= float(exact) + 1e-12
                assert exact <= oracles.endpoint_difference_probability(t, ell)


class TestDistance:
    def test_examples(self):
        assert oracles.distance_to_monotonicity(tt(AntiDictator(1), 3)).distance == Fraction(1, 2)
        rep = oracles.distance_to_monotonicity(TruthTable.from_string("0110"))   # x1 xor x2
        assert rep.flips == 1 and rep.distance == Fraction(1, 4)
        assert oracles.is_monotone(rep.witness)
        assert rep.witness.to_string() == "0111"

    def test_monotone_witness_is_itself(self):
        t = tt(Majority(), 5)
        rep = oracles.distance_to_monotonicity(t)
        assert rep.flips == 0 and rep.witness == t

    def test_monotone_counts(self):
        assert [oracles.monotone_function_codes(n).size for n in (1, 2, 3, 4)] == [3, 6, 20, 168]

    def test_bruteforce_examples(self):
        assert oracles.distance_bruteforce(TruthTable(3, [1] * 8)) == 0
        assert oracles.distance_bruteforce(AD2) == 2

    def test_cut_matches_bruteforce_n3(self):
        brute = oracles.distance_bruteforce_all(3)
        for code, bits in enumerate(oracles.all_truth_tables(3)):
            rep = oracles.distance_to_monotonicity(TruthTable(3, bits))
            assert rep.flips == brute[code]
            assert oracles.is_monotone(rep.witness)
            assert int(np.count_nonzero(rep.witness.bits != bits)) == rep.flips

    def test_limit(self):
        with pytest.raises(ValueError):
            oracles.distance_bruteforce(tt(Parity(), 5))


class TestRatio:
    def test_parity(self):
        assert oracles.violating_influential_ratio(tt(Parity(), 3)).value == Fraction(1, 2)

    def test_degenerate(self):
        rep = oracles.violating_influential_ratio(TruthTable(2, [0, 0, 0, 0]))
        assert rep.degenerate and rep.value == 0

    def test_monotone_zero(self):
        rep = oracles.violating_influential_ratio(tt(Majority(), 7))
        assert rep.value == 0 and not rep.degenerate

    def test_sampled_large_n(self):
        rep = oracles.violating_influential_ratio(instantiate(Parity(), 64), samples=100_000, seed=1)
        assert not rep.exact and rep.influential == 100_000
        assert abs(rep.value - 0.5) < 0.01
        assert rep.interval[0] <= rep.value <= rep.interval[1]


class TestAnalyze:
    def test_record(self):
        rep = oracles.analyze(tt(AntiDictator(1), 3), family="antidictator(i=1)")
        d = rep.to_dict()
        assert d["distance"] == "1/2" and d["total_influence"] == "1" and d["violating_count"] == 4
        assert rep.csv_row()["F_1"] == rep.f_ell_sizes[1]
