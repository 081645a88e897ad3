"""Discretization and panel plumbing."""

import numpy as np
import pytest

from rulescreen.errors import BadSplitPoint, EmptyPanel, NonPositiveModalities
from rulescreen.panel import (
    MISSING_CODE,
    Discretizer,
    FeatureSpec,
    RawObservation,
    RawPanel,
    apply_discretizer,
    attach_returns,
    empirical_quantile,
    fit_discretizer,
    load_features_csv,
    load_returns_csv,
    split,
    write_features_csv,
    write_returns_csv,
)

SPEC1 = [FeatureSpec("f0")]


def panel_of(values, y=None):
    obs = [
        RawObservation(np.datetime64("2020-01-01") + i, f"S{i:03d}", [v],
                       None if y is None else y[i])
        for i, v in enumerate(values)
    ]
    return obs


def test_uniform_1_to_100_m4_edges():
    disc = fit_discretizer(panel_of(range(1, 101)), SPEC1, m=4)
    assert disc.edges["f0"].tolist() == [25.0, 50.0, 75.0]


def test_m10_codes_span_0_to_9():
    rng = np.random.default_rng(7)
    disc = fit_discretizer(panel_of(rng.uniform(size=500)), SPEC1, m=10)
    codes = apply_discretizer(panel_of(rng.uniform(size=500)), disc).x[:, 0]
    assert codes.min() >= 0 and codes.max() <= 9


def test_constant_feature_single_modality():
    disc = fit_discretizer(panel_of([3.5] * 20), SPEC1, m=10)
    assert disc.n_codes("f0") == 1
    codes = apply_discretizer(panel_of([3.5, -1.0, 99.0]), disc).x[:, 0]
    assert codes.tolist() == [0, 0, 0]


def test_few_distinct_values_identity_binning():
    # 3 distinct values with m=5: each value becomes its own modality.
    disc = fit_discretizer(panel_of([2.0, 1.0, 2.0, 7.0, 1.0]), SPEC1, m=5)
    assert disc.n_codes("f0") == 3
    codes = apply_discretizer(panel_of([1.0, 2.0, 7.0]), disc).x[:, 0]
    assert codes.tolist() == [0, 1, 2]


def test_cut_point_falls_in_lower_bin():
    disc = fit_discretizer(panel_of(range(1, 101)), SPEC1, m=4)
    codes = apply_discretizer(panel_of([25.0, 25.0001, 50.0, 75.0, 76.0]), disc)
    assert codes.x[:, 0].tolist() == [0, 1, 1, 2, 3]


def test_out_of_range_values_clamp():
    disc = fit_discretizer(panel_of(range(1, 101)), SPEC1, m=4)
    codes = apply_discretizer(panel_of([-1e6, 1e6]), disc).x[:, 0]
    assert codes.tolist() == [0, 3]


def test_missing_value_gets_missing_code():
    disc = fit_discretizer(panel_of([1.0, 2.0, 3.0, 4.0]), SPEC1, m=2)
    codes = apply_discretizer(panel_of([None, 1.0]), disc).x[:, 0]
    assert codes[0] == MISSING_CODE
    assert codes[1] != MISSING_CODE


def test_categorical_feature_passthrough():
    specs = [FeatureSpec("sec", kind="categorical")]
    obs = [RawObservation("2020-01-01", f"S{i}", [v])
           for i, v in enumerate(["b", "a", "b", None])]
    disc = fit_discretizer(obs, specs, m=4)
    assert disc.categories["sec"] == ["a", "b"]
    out = apply_discretizer(obs, disc)
    by_stock = dict(zip(out.stock_ids, out.x[:, 0]))
    assert by_stock["S0"] == 1 and by_stock["S1"] == 0
    assert by_stock["S3"] == MISSING_CODE
    # Labels never seen at fit time behave like missing values.
    unseen = apply_discretizer(
        [RawObservation("2020-01-01", "S9", ["zz"])], disc)
    assert unseen.x[0, 0] == MISSING_CODE


def test_quantile_definition_smallest_value_with_cdf_at_least_p():
    v = np.array([10.0, 20.0, 30.0, 40.0])
    assert empirical_quantile(v, 0.25) == 10.0
    assert empirical_quantile(v, 0.26) == 20.0
    assert empirical_quantile(v, 1.0) == 40.0


def test_modality_frequencies_balanced():
    """With many distinct values every modality holds roughly 1/m of the
    sample; the contract band is [0.5/m, 2/m]."""
    rng = np.random.default_rng(11)
    for m in (2, 5, 10):
        values = rng.normal(size=40 * m)
        obs = panel_of(values)
        disc = fit_discretizer(obs, SPEC1, m=m)
        codes = apply_discretizer(obs, disc).x[:, 0]
        freq = np.bincount(codes, minlength=m) / len(codes)
        assert freq.min() >= 0.5 / m - 1e-12
        assert freq.max() <= 2.0 / m + 1e-12


def test_m_below_2_rejected():
    with pytest.raises(NonPositiveModalities):
        fit_discretizer(panel_of([1.0, 2.0]), SPEC1, m=1)


def test_empty_panel_rejected():
    with pytest.raises(EmptyPanel):
        fit_discretizer([], SPEC1, m=4)


def test_discretizer_json_round_trip():
    specs = [FeatureSpec("f0"), FeatureSpec("sec", kind="categorical")]
    obs = [RawObservation("2020-01-01", f"S{i}", [float(i), "ab"[i % 2]])
           for i in range(30)]
    disc = fit_discretizer(obs, specs, m=4)
    clone = Discretizer.from_json(disc.to_json(), m=4)
    assert clone.edges["f0"].tolist() == disc.edges["f0"].tolist()
    assert clone.categories["sec"] == disc.categories["sec"]
    assert clone.code_counts() == disc.code_counts()


def test_apply_sorts_rows_by_date_then_stock():
    obs = [
        RawObservation("2020-01-02", "B", [1.0]),
        RawObservation("2020-01-01", "B", [2.0]),
        RawObservation("2020-01-01", "A", [3.0]),
    ]
    disc = fit_discretizer(obs, SPEC1, m=2)
    out = apply_discretizer(obs, disc)
    keys = list(zip(out.dates, out.stock_ids))
    assert keys == sorted(keys)


def test_split_is_chronological_prefix():
    obs = panel_of(range(10), y=[0.01] * 10)
    disc = fit_discretizer(obs, SPEC1, m=5)
    codes = apply_discretizer(obs, disc)
    parts = split(codes, 7)
    assert parts.learn.n == 7 and parts.aggregate.n == 3
    assert parts.learn.dates.max() < parts.aggregate.dates.min()
    # n = N-1 leaves a single aggregation row
    assert split(codes, 9).aggregate.n == 1


def test_split_rejects_degenerate_points():
    obs = panel_of(range(5))
    codes = apply_discretizer(obs, fit_discretizer(obs, SPEC1, m=3))
    for bad in (0, 5, -1, 6):
        with pytest.raises(BadSplitPoint):
            split(codes, bad)


def test_shuffled_input_splits_like_sorted_input():
    rng = np.random.default_rng(3)
    obs = panel_of(rng.normal(size=40), y=list(rng.normal(size=40)))
    disc = fit_discretizer(obs, SPEC1, m=4)
    shuffled = list(obs)
    rng.shuffle(shuffled)
    a = split(apply_discretizer(obs, disc), 25)
    b = split(apply_discretizer(shuffled, disc), 25)
    assert np.array_equal(a.learn.x, b.learn.x)
    assert np.array_equal(a.aggregate.y, b.aggregate.y)


def test_same_bytes_same_codes():
    rng = np.random.default_rng(5)
    obs = panel_of(rng.normal(size=100))
    disc = fit_discretizer(obs, SPEC1, m=6)
    x1 = apply_discretizer(obs, disc).x
    x2 = apply_discretizer(obs, disc).x
    assert np.array_equal(x1, x2)


def test_features_csv_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    specs = [FeatureSpec("f0"), FeatureSpec("f1")]
    obs = [
        RawObservation(np.datetime64("2020-01-01") + i % 3, f"S{i % 4}",
                       [rng.normal(), None if i == 5 else rng.normal()])
        for i in range(12)
    ]
    from rulescreen.panel import raw_panel_from_observations
    panel = raw_panel_from_observations(obs, specs)
    path = tmp_path / "features.csv"
    write_features_csv(path, panel, specs)
    loaded, loaded_specs = load_features_csv(path)
    assert [s.feature_id for s in loaded_specs] == ["f0", "f1"]
    assert np.array_equal(loaded.dates, panel.dates)
    assert np.array_equal(loaded.stock_ids, panel.stock_ids)
    for a, b in zip(loaded.columns, panel.columns):
        assert np.allclose(a, b, equal_nan=True)


def test_returns_csv_round_trip_and_attach(tmp_path):
    specs = [FeatureSpec("f0")]
    obs = [
        RawObservation("2020-01-01", "A", [1.0], 0.05),
        RawObservation("2020-01-01", "B", [2.0], None),
        RawObservation("2020-01-02", "A", [3.0], -0.02),
    ]
    from rulescreen.panel import raw_panel_from_observations
    panel = raw_panel_from_observations(obs, specs)
    path = tmp_path / "returns.csv"
    write_returns_csv(path, panel)
    table = load_returns_csv(path)
    # only labeled rows are written
    assert len(table) == 2
    stripped = RawPanel(panel.dates, panel.stock_ids, panel.columns,
                        np.full(panel.n, np.nan))
    joined = attach_returns(stripped, table)
    assert joined.y[0] == 0.05 and np.isnan(joined.y[1]) and joined.y[2] == -0.02
