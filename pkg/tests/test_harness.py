import csv
import io
from fractions import Fraction

import pytest

from montest.functions import AntiDictator, Majority, Parity, RandomBernoulli, instantiate, to_truth_table
from montest.harness import (CSV_HEADER, EstimateRow, ExperimentConfig, lemma_bound_holds, matches_exact, mc_estimate,
                             rows_to_csv, run_sweep)
from montest.stats import binomial_stderr, wilson_interval


class TestWilson:
    def test_zero_successes(self):
        low, high = wilson_interval(0, 1000)
        assert low == 0.0 and 0 < high < 0.004

    def test_contains_rate(self):
        for k, n in [(1, 10), (5, 10), (10, 10), (333, 1000), (1, 10**6)]:
            low, high = wilson_interval(k, n)
            assert 0 <= low <= k / n <= high <= 1

    def test_known_value(self):
        low, high = wilson_interval(50, 100)
        assert low == pytest.approx(0.4038, abs=1e-4) and high == pytest.approx(0.5962, abs=1e-4)

    def test_validation(self):
        with pytest.raises(ValueError):
            wilson_interval(3, 2)
        with pytest.raises(ValueError):
            wilson_interval(0, 0)

    def test_stderr(self):
        assert binomial_stderr(25, 100) == pytest.approx((0.25 * 0.75 / 100) ** 0.5)


class TestEstimate:
    def test_monotone_rate_zero(self):
        (row,) = mc_estimate(instantiate(Majority(), 9), 20_000, seed=1)
        assert row.rejections == 0 and row.rate == 0.0
        assert row.wilson == wilson_interval(0, 20_000)
        assert row.oracle_bound == 0.0

    def test_antidictator_n2(self):
        (row,) = mc_estimate(to_truth_table(instantiate(AntiDictator(1), 2)), 10**6, seed=2)
        assert abs(row.rate - 0.5) < 0.002
        assert row.exact_rate == Fraction(1, 2)
        assert row.ell == "mixed"

    def test_stratified_rows(self):
        f = to_truth_table(instantiate(RandomBernoulli(0.5, 3), 4))
        rows = mc_estimate(f, 30_001, seed=3, stratify_by_ell=True)
        assert [r.ell for r in rows] == [1, 2, 4]
        assert all(r.trials == 10_000 for r in rows)
        assert all(matches_exact(r, sigmas=4) for r in rows)
        assert all(lemma_bound_holds(r) for r in rows)

    def test_stratify_needs_enough_trials(self):
        with pytest.raises(ValueError):
            mc_estimate(instantiate(Parity(), 8), 3, seed=0, stratify_by_ell=True)
        with pytest.raises(ValueError):
            mc_estimate(instantiate(Parity(), 8), 0, seed=0)

    def test_large_n_has_no_oracle_columns(self):
        (row,) = mc_estimate(instantiate(Parity(), 40), 5000, seed=0)
        assert row.oracle_bound is None and row.exact_rate is None
        assert lemma_bound_holds(row) is None and matches_exact(row) is None

    def test_scalar_fallback_matches_batch(self):
        from montest.functions import BooleanFunction
        f = instantiate(RandomBernoulli(0.5, 5), 7)
        scalar = BooleanFunction(7, f.query)          # no query_many
        a = mc_estimate(f, 4000, seed=6, with_oracles=False)
        b = mc_estimate(scalar, 4000, seed=6, with_oracles=False)
        assert (a[0].rejections, a[0].mean_queries) == (b[0].rejections, b[0].mean_queries)

    def test_worker_count_irrelevant(self):
        f = to_truth_table(instantiate(RandomBernoulli(0.3, 1), 6))
        trials = 2 * 2**18 + 17
        assert mc_estimate(f, trials, 4, workers=1) == mc_estimate(f, trials, 4, workers=2)

    def test_deterministic(self):
        f = instantiate(RandomBernoulli(0.5, 9), 12)
        assert rows_to_csv(mc_estimate(f, 50_000, 11, True)) == rows_to_csv(mc_estimate(f, 50_000, 11, True))
        assert mc_estimate(f, 50_000, 11) != mc_estimate(f, 50_000, 12)


class TestCsv:
    def test_header_and_empty_fields(self):
        rows = mc_estimate(instantiate(Parity(), 40), 1000, seed=0, family="parity")
        text = rows_to_csv(rows)
        lines = text.splitlines()
        assert lines[0] == "family,n,ell,trials,rejections,rate,wilson_low,wilson_high,mean_queries,oracle_bound,exact_rate"
        assert tuple(lines[0].split(",")) == CSV_HEADER
        record = next(csv.DictReader(io.StringIO(text)))
        assert record["oracle_bound"] == "" and record["exact_rate"] == ""
        assert record["family"] == "parity" and record["ell"] == "mixed"

    def test_floats_round_trip(self):
        row = EstimateRow("x", 4, 2, 3, 1, 2.5, 0.125, Fraction(1, 3))
        values = row.csv_values()
        assert float(values[5]) == 1 / 3 and float(values[10]) == 1 / 3 and values[9] == "0.125"


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig("Blended(base=threshold(3), noise_coord=1, subcube_mask=2)", (5, 6), 1000, 7, True,
                               "out.csv", 2)
        assert ExperimentConfig.from_text(cfg.to_text()) == cfg
        assert cfg.family == "blended(base=threshold(t=3),noise_coord=1,subcube_mask=2,seed=0)"

    def test_file_format(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("# sweep\nfamily = antidictator\nn_values = 4,8\n\nstratify_by_ell = TRUE\n")
        cfg = ExperimentConfig.load(path)
        assert cfg.n_values == (4, 8) and cfg.stratify_by_ell and cfg.trials == 100_000 and cfg.seed == 0

    @pytest.mark.parametrize("text", [
        "family=parity\n",
        "n_values=4\n",
        "family=parity\nn_values=\n",
        "family=parity\nn_values=4\ntrials=0\n",
        "family=parity\nn_values=4\nseed=-1\n",
        "family=nosuch\nn_values=4\n",
        "family=parity\nn_values=4\ncolour=red\n",
        "family=parity\nn_values=4\nfamily=dictator\n",
        "family=parity\nn_values=4\nstratify_by_ell=maybe\n",
        "family parity\n",
    ])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            ExperimentConfig.from_text(text)


class TestSweep:
    def test_antidictator_row_count(self):
        cfg = ExperimentConfig("antidictator", (4, 8, 16), 12_000, 0, True)
        rows = run_sweep(cfg)
        # one row per walk length 2^k, k = 0..ceil(log2 n)
        assert len(rows) == 3 + 4 + 5
        assert all(lemma_bound_holds(r) for r in rows)

    def test_monotone_rates_zero(self):
        rows = run_sweep(ExperimentConfig("monotone(seed=2)", (6, 9, 30), 6000, 1, True))
        assert all(r.rate == 0 for r in rows)

    def test_writes_output(self, tmp_path):
        out = tmp_path / "sweep.csv"
        run_sweep(ExperimentConfig("parity", (3,), 300, 0, False, str(out)))
        assert out.read_text().splitlines()[0].startswith("family,n,ell")

    def test_unwritable_output(self, tmp_path):
        with pytest.raises(OSError):
            run_sweep(ExperimentConfig("parity", (3,), 300, 0, False, str(tmp_path / "missing" / "x.csv")))

    def test_identical_bytes(self):
        cfg = ExperimentConfig("bernoulli(0.4, seed=3)", (5, 7), 9000, 5, True)
        a, b = io.StringIO(), io.StringIO()
        run_sweep(cfg, out=a)
        run_sweep(cfg, out=b)
        assert a.getvalue() == b.getvalue()
