"""Dataset parsing, discretization, splitting, fixtures, synthetic cohorts."""
import numpy as np
import pytest

from survcal.data import (
    DiscreteDataset,
    GroupSpec,
    SyntheticConfig,
    TableSchema,
    counterexample_dataset,
    counterexample_predictions,
    discretize,
    generate_synthetic,
    parse_table,
    read_dataset,
    split,
    standardize_features,
    write_dataset,
)
from survcal.errors import (
    DegenerateTimesError,
    EmptyDatasetError,
    InvalidEventFlagError,
    InvalidRateError,
    InvalidSplitError,
    MissingColumnError,
    NonNumericValueError,
    UnknownTableIdError,
)


def write_csv(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


BASIC = """age,sex,time,event
63,m,5.0,1
70,f,2.5,0
55,f,7.25,1
41,m,1.0,1
"""

SCHEMA = TableSchema(
    time="time", event="event",
    features=(("age", "continuous"), ("sex", "categorical")),
)


def test_parse_table_basic(tmp_path):
    raw = parse_table(write_csv(tmp_path, BASIC), SCHEMA)
    assert raw.n == 4 and raw.d == 2
    np.testing.assert_allclose(raw.times, [5.0, 2.5, 7.25, 1.0])
    np.testing.assert_array_equal(raw.events, [True, False, True, True])
    # codes assigned in sorted label order: f -> 0, m -> 1
    assert raw.categorical_map == {"sex": {"f": 0, "m": 1}}
    np.testing.assert_allclose(raw.features[:, 1], [1, 0, 0, 1])


def test_parse_table_code_assignment_ignores_row_order(tmp_path):
    shuffled = "age,sex,time,event\n70,f,2.5,0\n63,m,5.0,1\n"
    raw = parse_table(write_csv(tmp_path, shuffled), SCHEMA)
    assert raw.categorical_map == {"sex": {"f": 0, "m": 1}}


def test_parse_table_missing_column(tmp_path):
    with pytest.raises(MissingColumnError):
        parse_table(write_csv(tmp_path, "age,time\n1,2\n"), SCHEMA)


def test_parse_table_non_numeric(tmp_path):
    bad = "age,sex,time,event\nxx,m,5.0,1\n"
    with pytest.raises(NonNumericValueError) as err:
        parse_table(write_csv(tmp_path, bad), SCHEMA)
    assert err.value.row == 1 and err.value.column == "age"


def test_parse_table_bad_event_flag(tmp_path):
    bad = "age,sex,time,event\n3,m,5.0,yes\n"
    with pytest.raises(InvalidEventFlagError):
        parse_table(write_csv(tmp_path, bad), SCHEMA)


def test_parse_table_empty(tmp_path):
    with pytest.raises(EmptyDatasetError):
        parse_table(write_csv(tmp_path, "age,sex,time,event\n"), SCHEMA)


def make_raw(times):
    import survcal.data as d

    n = len(times)
    return d.RawDataset(
        np.zeros((n, 1)), np.asarray(times, dtype=float),
        np.ones(n, dtype=bool), ("x",), {},
    )


def test_discretize_uniform_integer_grid():
    ds = discretize(make_raw([1, 2, 3, 4, 5]), tau=5, strategy="uniform")
    np.testing.assert_array_equal(ds.times, [1, 2, 3, 4, 5])


def test_discretize_uniform_bounds():
    ds = discretize(make_raw([0.0, 10.0, 4.9, 5.1]), tau=2, strategy="uniform")
    np.testing.assert_array_equal(ds.times, [1, 2, 1, 2])


def test_discretize_monotone_property():
    rng = np.random.default_rng(23)
    for strategy in ("uniform", "quantile"):
        t = np.sort(rng.gamma(2.0, 3.0, size=200)) + 1e-3
        ds = discretize(make_raw(t), tau=12, strategy=strategy)
        assert np.all(np.diff(ds.times) >= 0)
        assert ds.times.min() >= 1 and ds.times.max() <= 12


def test_discretize_quantile_balances_counts():
    rng = np.random.default_rng(2)
    t = rng.exponential(5.0, size=100) + 1e-6
    ds = discretize(make_raw(t), tau=10, strategy="quantile")
    counts = np.bincount(ds.times, minlength=11)[1:]
    assert counts.min() >= 9 and counts.max() <= 11


def test_discretize_quantile_degenerate():
    with pytest.raises(DegenerateTimesError):
        discretize(make_raw([3.0] * 10), tau=4, strategy="quantile")


def grid_dataset(n, tau=10, seed=0):
    rng = np.random.default_rng(seed)
    return DiscreteDataset(
        rng.standard_normal((n, 2)), rng.integers(1, tau + 1, size=n),
        rng.random(n) < 0.7, tau, ("a", "b"), {},
    )


def test_split_sizes_with_flooring():
    ds = grid_dataset(7)
    tr, va, te = split(ds, (0.5, 0.25, 0.25), seed=1)
    assert (tr.n, va.n, te.n) == (5, 1, 1)


def test_split_partition_is_disjoint_and_exhaustive():
    ds = grid_dataset(53)
    tr, va, te = split(ds, (0.6, 0.2, 0.2), seed=9)
    assert tr.n + va.n + te.n == 53
    key = lambda s: {(tuple(s.features[i]), int(s.times[i])) for i in range(s.n)}
    rows = key(tr) | key(va) | key(te)
    assert len(rows) == 53  # distinct normal features make rows unique


def test_split_deterministic():
    ds = grid_dataset(40)
    a = split(ds, (0.6, 0.2, 0.2), seed=4)
    b = split(ds, (0.6, 0.2, 0.2), seed=4)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.times, y.times)
    c = split(ds, (0.6, 0.2, 0.2), seed=5)
    assert any(not np.array_equal(x.times, y.times) for x, y in zip(a, c))


def test_split_bad_fractions():
    with pytest.raises(InvalidSplitError):
        split(grid_dataset(10), (0.5, 0.2, 0.2), seed=0)


def test_counterexample_rows():
    dcal = counterexample_dataset("dcal")
    assert dcal.n == 5 and dcal.tau == 5
    assert dcal.events.all()
    np.testing.assert_array_equal(np.sort(dcal.times), [1, 2, 3, 4, 5])

    brier = counterexample_dataset("brier")
    assert brier.n == 15
    assert int(brier.events.sum()) == 5
    cens = np.sort(brier.times[~brier.events])
    np.testing.assert_array_equal(cens, [1, 1, 2, 2, 3, 3, 4, 4, 5, 5])

    rps = counterexample_dataset("rps")
    assert rps.n == 15
    np.testing.assert_array_equal(
        np.sort(rps.times[~rps.events]), [1, 1, 1, 1, 2, 2, 2, 3, 3, 3]
    )

    with pytest.raises(UnknownTableIdError):
        counterexample_dataset("nope")


def test_counterexample_prediction_shapes_and_marginals():
    for tid, marginal_at_5 in (("dcal", 0.55), ("brier", 0.0), ("rps", 10 / 15)):
        ds = counterexample_dataset(tid)
        S = counterexample_predictions(tid)
        assert S.shape == (ds.n, ds.tau + 1)
        np.testing.assert_allclose(S[:, 0], 1.0)
        assert np.all(np.diff(S, axis=1) <= 1e-12)
        assert S.mean(axis=0)[5] == pytest.approx(marginal_at_5, abs=1e-12)


def test_counterexample_dcal_cdf_values():
    # each individual's predicted CDF at their own time, one per fifth of [0,1]
    S = counterexample_predictions("dcal")
    ds = counterexample_dataset("dcal")
    F = 1.0 - S[np.arange(5), ds.times]
    np.testing.assert_allclose(np.sort(F), [0.05, 0.25, 0.45, 0.65, 0.85], atol=1e-12)


def synth_config(**kw):
    base = dict(
        n=1000, d=3,
        groups=(GroupSpec("low", 0.9, 0.1), GroupSpec("high", 0.1, 0.4)),
        censor_rate=0.0, tau=20,
    )
    base.update(kw)
    return SyntheticConfig(**base)


def test_synthetic_group_sizes_and_features():
    ds = generate_synthetic(synth_config(), seed=3)
    assert ds.n == 1000 and ds.d == 3
    codes = ds.feature_column("group")
    assert int(np.sum(codes == 0)) == 900
    assert int(np.sum(codes == 1)) == 100
    assert ds.categorical_map == {"group": {"low": 0, "high": 1}}


def test_synthetic_no_censoring_all_events():
    ds = generate_synthetic(synth_config(censor_rate=0.0), seed=1)
    assert ds.events.all()


def test_synthetic_near_certain_hazard():
    cfg = synth_config(groups=(GroupSpec("g", 1.0, 1 - 1e-9),), n=500)
    ds = generate_synthetic(cfg, seed=0)
    assert np.all(ds.times == 1)


def test_synthetic_survival_matches_geometric_law():
    cfg = synth_config(groups=(GroupSpec("g", 1.0, 0.1),), n=20000, tau=30)
    ds = generate_synthetic(cfg, seed=8)
    s5 = float(np.mean(ds.times > 5))
    assert s5 == pytest.approx(0.9 ** 5, abs=0.01)


def test_synthetic_debug_draws_consistent():
    ds, draws = generate_synthetic(synth_config(censor_rate=0.4), seed=5, debug=True)
    stored_censored = ~ds.events
    np.testing.assert_array_equal(
        ds.times[stored_censored], draws.censor_times[stored_censored]
    )
    np.testing.assert_array_equal(
        ds.times[ds.events], draws.event_times[ds.events]
    )
    assert stored_censored.any() and ds.events.any()


def test_synthetic_invalid_rates():
    with pytest.raises(InvalidRateError):
        generate_synthetic(synth_config(censor_rate=1.0), seed=0)
    with pytest.raises(InvalidRateError):
        generate_synthetic(
            synth_config(groups=(GroupSpec("g", 1.0, 0.0),)), seed=0
        )


def test_synthetic_deterministic():
    a = generate_synthetic(synth_config(censor_rate=0.2), seed=11)
    b = generate_synthetic(synth_config(censor_rate=0.2), seed=11)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.events, b.events)
    np.testing.assert_array_equal(a.features, b.features)


def test_dataset_round_trip(tmp_path):
    ds = generate_synthetic(synth_config(n=50, censor_rate=0.3), seed=2)
    path = tmp_path / "cohort.csv"
    write_dataset(ds, path, meta={"seed": 2})
    back = read_dataset(path)
    assert back.tau == ds.tau
    assert back.feature_names == ds.feature_names
    assert back.categorical_map == ds.categorical_map
    np.testing.assert_array_equal(back.times, ds.times)
    np.testing.assert_array_equal(back.events, ds.events)
    np.testing.assert_allclose(back.features, ds.features, atol=0)


def test_standardize_features_leaves_categoricals_alone():
    ds = generate_synthetic(synth_config(n=200, censor_rate=0.1), seed=7)
    tr, va, te = split(ds, (0.6, 0.2, 0.2), seed=1)
    (tr2, va2, te2), stats = standardize_features(tr, [va, te])
    np.testing.assert_array_equal(
        tr2.feature_column("group"), tr.feature_column("group")
    )
    assert "group" not in stats
    assert tr2.feature_column("x1").mean() == pytest.approx(0.0, abs=1e-9)
    assert tr2.feature_column("x1").std() == pytest.approx(1.0, abs=1e-9)
    # validation transformed with train statistics, not its own
    m = stats["x1"]["mean"]
    s = stats["x1"]["std"]
    np.testing.assert_allclose(
        va2.feature_column("x1"), (va.feature_column("x1") - m) / s, atol=1e-12
    )
