"""Tester behaviour: bisection traces, one-sidedness, query accounting, and
bit-for-bit agreement between the scalar and vectorized tester."""

import math

import numpy as np
import pytest

from montest.batch import simulate, supports_batch
from montest.functions import (AntiDictator, BooleanFunction, Dictator, Majority, Parity, QueryMeter,
                               RandomBernoulli, RandomMonotone, Threshold, TruthTable, instantiate, random_corpus,
                               to_truth_table)
from montest.hypercube import Edge, Point, WalkPath, ceil_log2
from montest.rng import Stream
from montest.tester import (AmplifyConfig, Verdict, binary_search_influential, calibrate_repetitions,
                            check_monotonicity, distinct_query_bound, edge_sampler, estimate_influence, is_violation,
                            run_amplified, run_once, run_query_bound)


def path_with_values(values):
    """A walk on {0,1}^ell flipping coordinates 1..ell in turn, and a
    function whose value at p_t is values[t]."""
    ell = len(values) - 1
    path = WalkPath(Point(ell, 0), range(1, ell + 1))
    at = {path.vertex_index(t): v for t, v in enumerate(values)}
    return BooleanFunction(ell, at.__getitem__), path


class TestBinarySearch:
    @pytest.mark.parametrize("values, t", [
        ((0, 0, 1, 1), 2),
        ((1, 0), 1),
        ((0, 1, 0, 1), 1),
        ((1, 1, 1, 1, 1, 1, 1, 0), 7),
        ((0, 1, 1, 1, 1), 1),
    ])
    def test_traces(self, values, t):
        f, path = path_with_values(values)
        edge, got = binary_search_influential(f, path)
        assert got == t and edge == path.edge_at(t)

    def test_precondition(self):
        f, path = path_with_values((0, 1, 0))
        with pytest.raises(ValueError):
            binary_search_influential(f, path)

    def test_extra_queries_at_most_log(self):
        rng = Stream(3)
        for _ in range(500):
            ell = 1 + rng.below(64)
            values = [rng.below(2) for _ in range(ell + 1)]
            if values[0] == values[-1]:
                values[-1] ^= 1
            f, path = path_with_values(values)
            meter = QueryMeter(f)
            meter.begin_run()
            edge, t = binary_search_influential(meter, path, (values[0], values[-1]))
            assert meter.total_queries <= ceil_log2(ell)
            assert values[t - 1] != values[t]


class TestIsViolation:
    def test_examples(self):
        ad = instantiate(AntiDictator(1), 3)
        assert all(is_violation(ad, Edge(Point(3, x), 1)) for x in (0, 2, 4, 6))
        dic = instantiate(Dictator(1), 3)
        assert not any(is_violation(dic, Edge(Point(3, x & ~(1 << c)), c + 1)) for x in range(8) for c in range(3))
        assert is_violation(instantiate(Parity(), 2), Edge(Point.from_bits("01"), 1))


class TestRunOnce:
    def test_monotone_never_rejects(self):
        for f in (instantiate(Majority(), 9), instantiate(Threshold(3), 7), instantiate(RandomMonotone(4), 10)):
            assert not any(run_once(f, Stream(1, i)).rejected for i in range(2000))

    def test_witness_is_violation(self):
        f = instantiate(RandomBernoulli(0.5, 2), 8)
        seen = 0
        for i in range(2000):
            out = run_once(f, Stream(1, i))
            if out.rejected:
                assert is_violation(f, out.witness) and out.step >= 1
                seen += 1
            else:
                assert out.witness is None
        assert seen > 100

    def test_query_bound_and_meter_conservation(self):
        f = instantiate(Parity(), 37)
        meter = QueryMeter(f)
        total = distinct = 0
        for i in range(3000):
            out = run_once(meter, Stream(2, i))
            assert out.queries_distinct <= distinct_query_bound(out.ell) <= run_query_bound(37)
            assert out.queries_distinct <= 2 + ceil_log2(out.ell)
            total += out.queries_total
            distinct += out.queries_distinct
        assert (meter.total_queries, meter.distinct_queries) == (total, distinct)

    def test_fixed_length(self):
        out = run_once(instantiate(Parity(), 5), Stream(0), ell=3)
        assert out.ell == 3
        with pytest.raises(ValueError):
            run_once(instantiate(Parity(), 5), Stream(0), ell=-1)

    def test_parity_n2_ell1_rate(self):
        f = to_truth_table(instantiate(Parity(), 2))
        rate = simulate(f, 9, np.arange(10**6), ell=1).rejected.mean()
        assert abs(rate - 0.5) < 0.002

    def test_antidictator_n2_rate(self):
        f = to_truth_table(instantiate(AntiDictator(1), 2))
        rate = simulate(f, 10, np.arange(10**6)).rejected.mean()
        assert abs(rate - 0.5) < 0.002


class TestBatchEquivalence:
    """simulate(f, seed, ids) must reproduce run_once(f, Stream(seed, i)) exactly."""

    CASES = [(AntiDictator(2), 5), (Parity(), 9), (RandomBernoulli(0.3, 4), 12), (Majority(), 7),
             (RandomBernoulli(0.5, 1), 64), (RandomBernoulli(0.5, 2), 1)]

    @pytest.mark.parametrize("spec, n", CASES)
    @pytest.mark.parametrize("ell", [None, 0, 1, 5, 32])
    def test_trial_by_trial(self, spec, n, ell):
        f = instantiate(spec, n)
        assert supports_batch(f)
        ids = np.arange(700, 1300)
        res = simulate(f, 77, ids, ell=ell)
        for j, i in enumerate(ids):
            out = run_once(f, Stream(77, int(i)), ell=ell)
            assert out.ell == res.ell[j]
            assert out.rejected == bool(res.rejected[j])
            assert (out.step or 0) == res.step[j]
            assert out.queries_total == res.queries_total[j]
            assert out.queries_distinct == res.queries_distinct[j]
            if out.rejected:
                assert (out.witness.lower.index, out.witness.coord) == (res.witness_lower[j], res.witness_coord[j])

    def test_chunking_does_not_matter(self):
        f = instantiate(RandomBernoulli(0.4, 8), 10)
        whole = simulate(f, 5, np.arange(5000))
        part = simulate(f, 5, np.arange(2500, 5000))
        np.testing.assert_array_equal(whole.rejected[2500:], part.rejected)

    def test_refuses_unvectorized(self):
        with pytest.raises(ValueError):
            simulate(instantiate(Majority(), 101), 0, [0])


class TestAmplified:
    def test_repetition_formula(self):
        cfg = AmplifyConfig(0.5, 1.0, constant_c=1.0, max_repetitions=10**12)
        assert cfg.repetitions_for(8) == math.ceil(3**9 * 16)
        assert cfg.repetitions_for(1) == 16     # log of max(n, 2)
        assert AmplifyConfig(0.5, 1.0).repetitions_for(1 << 20) == 10**6
        assert AmplifyConfig(0.5, 1.0, repetitions=7).repetitions_for(8) == 7

    @pytest.mark.parametrize("kwargs", [dict(epsilon=0), dict(epsilon=1), dict(influence_bound=0),
                                        dict(constant_c=-1), dict(max_repetitions=0), dict(repetitions=0)])
    def test_config_validation(self, kwargs):
        base = dict(epsilon=0.5, influence_bound=1.0)
        with pytest.raises(ValueError):
            AmplifyConfig(**{**base, **kwargs})

    def test_monotone_accepts(self):
        f = instantiate(Majority(), 11)
        out = run_amplified(f, AmplifyConfig(0.1, 4.0, max_repetitions=3000), Stream(1))
        assert out.verdict is Verdict.ACCEPT and out.repetitions == 3000

    def test_query_totals_respect_caps(self):
        f = instantiate(RandomMonotone(2), 16)
        cfg = AmplifyConfig(0.5, 1.0, max_repetitions=500)
        out = run_amplified(f, cfg, Stream(4))
        reps = cfg.repetitions_for(16)
        assert out.repetitions <= cfg.max_repetitions
        assert out.queries_distinct <= reps * (2 + ceil_log2(1 << ceil_log2(16)))

    def test_antidictator_pilot_mode(self):
        f = to_truth_table(instantiate(AntiDictator(1), 8))
        reps = calibrate_repetitions(f, seed=0)
        assert 5 < reps < 50
        cfg = AmplifyConfig(0.5, 1.0, repetitions=reps)
        rejected = sum(run_amplified(f, cfg, Stream(1, j)).rejected for j in range(1000))
        assert rejected >= 990

    def test_antidictator_default_constant(self):
        f = to_truth_table(instantiate(AntiDictator(1), 8))
        cfg = AmplifyConfig(0.5, 1.0)
        assert all(run_amplified(f, cfg, Stream(2, j)).rejected for j in range(1000))

    def test_calibration_on_monotone(self):
        assert calibrate_repetitions(instantiate(Dictator(1), 6), 2000, max_repetitions=99) == 99


class TestEdgeSampler:
    def test_monotone_accepts(self):
        out = edge_sampler(instantiate(Threshold(2), 6), Stream(0), 500)
        assert not out.rejected and out.queries_distinct <= 1000 and out.regime == "edges"

    def test_parity_16(self):
        f = instantiate(Parity(), 16)
        assert sum(edge_sampler(f, Stream(1, j), 64).rejected for j in range(1000)) >= 999

    def test_single_trial_rate_parity_8(self):
        f = instantiate(Parity(), 8)
        hits = sum(edge_sampler(f, Stream(2, j), 1).rejected for j in range(10**5))
        assert abs(hits / 10**5 - 0.5) < 0.01

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            edge_sampler(instantiate(Parity(), 4), Stream(), 0)


class TestInfluenceEstimate:
    def test_constant_is_exactly_zero(self):
        assert estimate_influence(TruthTable(5, [1] * 32), Stream(0), 1000).value == 0.0

    @pytest.mark.parametrize("spec, value", [(Parity(), 10.0), (Dictator(1), 1.0)])
    def test_examples(self, spec, value):
        est = estimate_influence(instantiate(spec, 10), Stream(1), 10**5)
        assert abs(est.value - value) < 0.1
        assert est.low <= est.value <= est.high

    def test_scalar_path(self):
        est = estimate_influence(instantiate(Majority(), 101), Stream(2), 4000)
        # I(Maj_n) ~ sqrt(2n/pi) ~ 8.0
        assert 6.5 < est.value < 9.5


class TestDispatch:
    def test_high_influence_uses_edges(self):
        out = check_monotonicity(instantiate(Parity(), 64), 0.5, Stream(0))
        assert out.regime == "edges" and out.rejected

    def test_low_influence_uses_walks(self):
        out = check_monotonicity(instantiate(AntiDictator(3), 16), 0.5, Stream(0), repetitions=100)
        assert out.regime == "walk" and out.rejected and is_violation(instantiate(AntiDictator(3), 16), out.witness)

    def test_monotone_accepted_in_both_regimes(self):
        for spec, n in [(Majority(), 9), (Threshold(2), 40)]:
            out = check_monotonicity(instantiate(spec, n), 0.5, Stream(3), repetitions=200)
            assert not out.rejected

    @pytest.mark.parametrize("spec, n", random_corpus(6, range(5, 11), seed=12))
    def test_rejections_carry_witnesses(self, spec, n):
        f = instantiate(spec, n)
        out = check_monotonicity(f, 0.25, Stream(5), repetitions=300)
        if out.rejected:
            assert is_violation(f, out.witness)
