import numpy as np
import pandas as pd
import pytest

from zipanel.data import (
    PanelDataset,
    build_diff_samples,
    ingest_csv,
    panel_to_csv,
    random_growth_transform,
    trim,
)
from zipanel.errors import ConfigError, DataError, SchemaError, UsageError
from zipanel.synth import Scenario, generate

SCHEMA = {
    "unit": "unit",
    "time": "time",
    "outcome": "outcome",
    "treatment": "treatment",
    "covariates": ["SIZE"],
}


def write_csv(path, rows, header="unit,time,outcome,treatment,SIZE"):
    path.write_text("\n".join([header] + rows) + "\n")


def toy_panel(tmp_path):
    rows = []
    for unit, treat, size in [("a", "none", 5), ("b", "none", 7), ("c", "T", 3), ("d", "T", 9)]:
        for t, y in zip((1993, 1994, 1995), (10, 11, 12)):
            rows.append(f"{unit},{t},{y},{treat},{size}")
    p = tmp_path / "toy.csv"
    write_csv(p, rows)
    return p


class TestIngest:
    def test_toy_csv(self, tmp_path):
        data = ingest_csv(toy_panel(tmp_path), SCHEMA)
        assert data.n_periods == 3  # m = 2
        assert data.n_treatments == 2
        assert data.group_counts == {"none": 2, "T": 2}
        np.testing.assert_array_equal(data.times, [1993, 1994, 1995])

    def test_group_structure_fixture(self, tmp_path):
        # four-arm panel with the headline group sizes
        sizes = {"none": 12580, "5B": 5277, "ZRR&5B": 7014, "ZRR": 722}
        units = []
        for label, count in sizes.items():
            units += [(f"{label}_{i}", label) for i in range(count)]
        frame = pd.DataFrame(
            {
                "unit": [u for u, _ in units for _ in range(2)],
                "time": [1993, 1994] * len(units),
                "outcome": 1.0,
                "treatment": [l for _, l in units for _ in range(2)],
                "SIZE": 1.0,
            }
        )
        p = tmp_path / "big.csv"
        frame.to_csv(p, index=False)
        schema = dict(SCHEMA, treatment_levels=["none", "5B", "ZRR", "ZRR&5B"])
        data = ingest_csv(p, schema)
        assert data.n_units == 25593
        assert data.group_counts == {
            "none": 12580,
            "5B": 5277,
            "ZRR": 722,
            "ZRR&5B": 7014,
        }

    def test_incomplete_unit_rejected_with_name(self, tmp_path):
        rows = [
            "a,1993,1,none,5",
            "a,1994,2,none,5",
            "b,1993,1,T,5",  # b missing 1994
        ]
        p = tmp_path / "bad.csv"
        write_csv(p, rows)
        with pytest.raises(DataError, match="b"):
            ingest_csv(p, SCHEMA)

    def test_missing_column_schema_error(self, tmp_path):
        p = tmp_path / "cols.csv"
        p.write_text("unit,time,outcome\na,1,1\n")
        with pytest.raises(SchemaError):
            ingest_csv(p, SCHEMA)

    def test_duplicate_unit_time_rejected(self, tmp_path):
        rows = ["a,1993,1,none,5", "a,1993,2,none,5", "a,1994,1,none,5"]
        p = tmp_path / "dup.csv"
        write_csv(p, rows)
        with pytest.raises(DataError, match="duplicate"):
            ingest_csv(p, SCHEMA)

    def test_non_numeric_outcome_reports_line(self, tmp_path):
        rows = ["a,1993,1,none,5", "a,1994,oops,none,5"]
        p = tmp_path / "nan.csv"
        write_csv(p, rows)
        with pytest.raises(DataError, match="line"):
            ingest_csv(p, SCHEMA)

    def test_treatment_varying_over_time_rejected(self, tmp_path):
        rows = ["a,1993,1,none,5", "a,1994,2,T,5", "b,1993,1,T,5", "b,1994,2,T,5"]
        p = tmp_path / "vary.csv"
        write_csv(p, rows)
        with pytest.raises(DataError, match="varies"):
            ingest_csv(p, SCHEMA)


class TestTrim:
    @staticmethod
    def _panel(rng, n=500):
        size = rng.uniform(0, 2000, n)
        density = rng.uniform(0, 5000, n)
        return PanelDataset(
            unit_ids=np.arange(n).astype(str),
            times=np.array([1993, 1994]),
            outcomes=np.ones((n, 2)),
            treatment=(np.arange(n) % 2),
            treatment_labels=("none", "T"),
            covariates=np.column_stack([size, density]),
            covariate_names=("SIZE", "DENSITY"),
        )

    def test_upper_bounds(self, rng):
        data = self._panel(rng)
        trimmed, report = trim(
            data, {"SIZE": {"max": 500}, "DENSITY": {"max": 1000}}, return_report=True
        )
        assert np.all(trimmed.covariate("SIZE") < 500)
        assert np.all(trimmed.covariate("DENSITY") < 1000)
        assert report.n_dropped == data.n_units - trimmed.n_units
        assert report.dropped_by_rule["SIZE"] == int(np.sum(data.covariate("SIZE") >= 500))

    def test_empty_rules_identity(self, rng):
        data = self._panel(rng)
        trimmed = trim(data, {})
        np.testing.assert_array_equal(trimmed.outcomes, data.outcomes)
        np.testing.assert_array_equal(trimmed.unit_ids, data.unit_ids)

    def test_idempotent(self, rng):
        data = self._panel(rng)
        rules = {"SIZE": {"max": 500}}
        once = trim(data, rules)
        twice = trim(once, rules)
        np.testing.assert_array_equal(once.unit_ids, twice.unit_ids)
        np.testing.assert_array_equal(once.outcomes, twice.outcomes)

    def test_unknown_covariate_rejected(self, rng):
        with pytest.raises(ConfigError):
            trim(self._panel(rng), {"INCOME": {"max": 10}})


class TestDiffSamples:
    def test_constant_panel_all_zero(self):
        data = PanelDataset(
            unit_ids=np.array(["a", "b"]),
            times=np.array([0, 1, 2]),
            outcomes=np.full((2, 3), 7.0),
            treatment=np.array([0, 1]),
            treatment_labels=("none", "T"),
            covariates=np.zeros((2, 0)),
            covariate_names=(),
        )
        samples = build_diff_samples(data, 0)
        assert len(samples) == 2
        for s in samples:
            assert s.zero_share == 1.0
            assert np.all(s.is_zero)

    def test_zero_share_matches_generator(self):
        sc = Scenario(
            n=5000,
            n_post_periods=1,
            covariates=({"name": "X", "dist": "uniform"},),
            treatment={"kind": "probs", "probs": [1.0]},
            treatment_labels=("none",),
            baseline={"intercepts": [4.0], "terms": []},
            effects=(),
            zero={"intercepts": [float(np.log(0.26 / 0.74))], "treatment_shifts": [0.0], "terms": []},
            noise_sd=1.0,
            seed=99,
        )
        data, _ = generate(sc)
        share = build_diff_samples(data, 0)[0].zero_share
        binom_sd = np.sqrt(0.26 * 0.74 / 5000)
        assert abs(share - 0.26) < 3 * binom_sd

    def test_reported_moments_match_engineered_distribution(self):
        # 26% exact zeros, mean difference -0.06, mode at zero
        n = 100
        n_zero = 26
        spread = np.linspace(-1, 1, n - n_zero)
        nonzero = -6.0 / (n - n_zero) + spread - np.mean(spread)
        delta = np.concatenate([np.zeros(n_zero), nonzero])
        outcomes = np.column_stack([np.full(n, 100.0), 100.0 + delta])
        data = PanelDataset(
            unit_ids=np.arange(n).astype(str),
            times=np.array([1993, 1994]),
            outcomes=outcomes,
            treatment=np.zeros(n, dtype=int),
            treatment_labels=("none",),
            covariates=np.zeros((n, 0)),
            covariate_names=(),
        )
        sample = build_diff_samples(data, 0)[0]
        assert sample.zero_share == pytest.approx(0.26)
        assert np.mean(sample.delta) == pytest.approx(-0.06, abs=1e-12)
        values, counts = np.unique(sample.delta, return_counts=True)
        assert values[np.argmax(counts)] == 0.0

    def test_reconstruction_identity(self, rng):
        # integer-valued outcomes (employment counts): differencing and
        # summing back are exact in floating point
        outcomes = rng.integers(0, 500, size=(40, 4)).astype(float)
        data = PanelDataset(
            unit_ids=np.arange(40).astype(str),
            times=np.arange(4),
            outcomes=outcomes,
            treatment=np.zeros(40, dtype=int),
            treatment_labels=("none",),
            covariates=np.zeros((40, 0)),
            covariate_names=(),
        )
        for s in build_diff_samples(data, 0):
            np.testing.assert_array_equal(
                outcomes[:, 0] + s.delta, outcomes[:, s.period_index]
            )
            assert int(np.sum(s.is_zero)) + int(np.sum(s.delta != 0)) == s.n

    def test_zero_flag_consistency_enforced(self):
        with pytest.raises(DataError):
            from zipanel.data import DiffSample

            DiffSample(
                period=1,
                period_index=1,
                t0_index=0,
                delta=np.array([0.0, 1.0]),
                is_zero=np.array([False, False]),
                treatment=np.zeros(2, dtype=int),
                treatment_labels=("none",),
                covariates=np.zeros((2, 0)),
                covariate_names=(),
                unit_ids=np.array(["a", "b"]),
            )


class TestRandomGrowth:
    @staticmethod
    def _panel(outcomes, times=None):
        outcomes = np.asarray(outcomes, dtype=float)
        n, m1 = outcomes.shape
        return PanelDataset(
            unit_ids=np.arange(n).astype(str),
            times=np.arange(m1) if times is None else np.asarray(times),
            outcomes=outcomes,
            treatment=np.zeros(n, dtype=int),
            treatment_labels=("none",),
            covariates=np.zeros((n, 0)),
            covariate_names=(),
            treatment_start=2,
        )

    def test_hand_computed_case(self):
        data = self._panel([[2.0, 5.0, 9.0]])
        samples = random_growth_transform(data, 1)
        assert samples[0].delta[0] == pytest.approx(9 - 5 - 1 * (5 - 2))
        assert samples[0].delta[0] == 1.0

    def test_linear_paths_annihilated_exactly(self, rng):
        slopes = rng.integers(-5, 6, 30)
        intercepts = rng.integers(0, 100, 30)
        t = np.arange(5)
        outcomes = intercepts[:, None] + slopes[:, None] * t[None, :]
        data = self._panel(outcomes.astype(float))
        for s in random_growth_transform(data, 1):
            np.testing.assert_array_equal(s.delta, 0.0)
            assert np.all(s.is_zero)

    def test_needs_pre_baseline_period(self):
        data = self._panel([[1.0, 2.0, 3.0]])
        with pytest.raises(UsageError):
            random_growth_transform(data, 0)

    def test_unbiased_under_trend_confounding(self):
        """Unit slopes correlated with treatment bias the before-after
        group contrast; the random-growth transform removes the bias."""
        reps = 200
        ba_est, rg_est = [], []
        for rep in range(reps):
            rng = np.random.default_rng(500 + rep)
            n = 120
            treated = np.arange(n) % 2 == 1
            slope = rng.normal(0, 0.3, n) - 0.8 * treated
            level = rng.normal(0, 1, n)
            t = np.arange(4)
            outcomes = (
                level[:, None]
                + slope[:, None] * t[None, :]
                + rng.normal(0, 0.5, (n, 4))
            )
            data = PanelDataset(
                unit_ids=np.arange(n).astype(str),
                times=t,
                outcomes=outcomes,
                treatment=treated.astype(int),
                treatment_labels=("none", "T"),
                covariates=np.zeros((n, 0)),
                covariate_names=(),
                treatment_start=2,
            )
            ba = build_diff_samples(data, 1)[-1]
            rg = random_growth_transform(data, 1)[-1]
            ba_est.append(np.mean(ba.delta[treated]) - np.mean(ba.delta[~treated]))
            rg_est.append(np.mean(rg.delta[treated]) - np.mean(rg.delta[~treated]))
        ba_mean = np.mean(ba_est)
        rg_mean = np.mean(rg_est)
        rg_ci = 2 * np.std(rg_est) / np.sqrt(reps)
        assert ba_mean < -1.0  # two periods of slope gap -0.8
        assert abs(rg_mean) < rg_ci * 2


class TestCsvRoundTrip:
    def test_exact_round_trip(self, tmp_path):
        sc = Scenario(
            n=200,
            n_post_periods=2,
            covariates=({"name": "SIZE", "dist": "lognormal", "mu": 2.0, "sigma": 0.7},),
            treatment={"kind": "probs", "probs": [0.6, 0.4]},
            treatment_labels=("none", "T"),
            baseline={"intercepts": [1.0, 2.0], "terms": []},
            effects=({"values": [1.0, 1.0]},),
            zero={"intercepts": [-1.0, -1.2], "treatment_shifts": [0.0, 0.3], "terms": []},
            seed=5,
        )
        data, _ = generate(sc)
        path = tmp_path / "panel.csv"
        schema = panel_to_csv(data, path)
        back = ingest_csv(path, schema)
        np.testing.assert_array_equal(back.outcomes, data.outcomes)
        np.testing.assert_array_equal(back.treatment, data.treatment)
        np.testing.assert_array_equal(back.covariates, data.covariates)
        assert back.treatment_start == data.treatment_start
