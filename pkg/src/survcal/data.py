"""Datasets for discrete-time survival analysis.

A record is (features, observed time, event flag); event=False means the
individual was censored at that time. Discrete datasets live on the integer
grid {1, ..., tau}.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np

from .errors import (
    DegenerateTimesError,
    EmptyDatasetError,
    InvalidEventFlagError,
    InvalidRateError,
    InvalidSplitError,
    MissingColumnError,
    NonNumericValueError,
    UnknownTableIdError,
)

FeatureKind = Literal["continuous", "categorical"]


@dataclass(frozen=True)
class SurvivalRecord:
    features: np.ndarray
    time: float
    event: bool


@dataclass(frozen=True)
class TableSchema:
    """Column layout of a delimited survival table."""

    time: str
    event: str
    features: tuple[tuple[str, FeatureKind], ...]
    delimiter: str = ","


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RawDataset:
    """Continuous-time dataset straight out of a parsed table."""

    features: np.ndarray          # (n, d) float64
    times: np.ndarray             # (n,) float64, > 0
    events: np.ndarray            # (n,) bool
    feature_names: tuple[str, ...]
    categorical_map: dict[str, dict[str, int]]

    def __post_init__(self):
        object.__setattr__(self, "features", _freeze(np.asarray(self.features, dtype=np.float64)))
        object.__setattr__(self, "times", _freeze(np.asarray(self.times, dtype=np.float64)))
        object.__setattr__(self, "events", _freeze(np.asarray(self.events, dtype=bool)))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class DiscreteDataset:
    """Survival dataset on the integer grid {1, ..., tau}."""

    features: np.ndarray          # (n, d) float64
    times: np.ndarray             # (n,) int64 in [1, tau]
    events: np.ndarray            # (n,) bool
    tau: int
    feature_names: tuple[str, ...]
    categorical_map: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.int64)
        events = np.asarray(self.events, dtype=bool)
        if feats.ndim != 2 or feats.shape[0] != times.shape[0] or times.shape != events.shape:
            raise ValueError("inconsistent dataset arrays")
        if times.size and (times.min() < 1 or times.max() > self.tau):
            raise ValueError("times outside [1, tau]")
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "times", _freeze(times))
        object.__setattr__(self, "events", _freeze(events))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def records(self) -> Iterator[SurvivalRecord]:
        for i in range(self.n):
            yield SurvivalRecord(self.features[i], int(self.times[i]), bool(self.events[i]))

    def subset(self, mask_or_idx: np.ndarray) -> "DiscreteDataset":
        return DiscreteDataset(
            self.features[mask_or_idx],
            self.times[mask_or_idx],
            self.events[mask_or_idx],
            self.tau,
            self.feature_names,
            self.categorical_map,
        )

    def feature_column(self, name: str) -> np.ndarray:
        try:
            j = self.feature_names.index(name)
        except ValueError:
            from .errors import UnknownFeatureError

            raise UnknownFeatureError(name) from None
        return self.features[:, j]


def parse_table(path: str | Path, schema: TableSchema) -> RawDataset:
    """Parse a delimited text table into a RawDataset.

    Categorical feature labels are mapped to integer codes in sorted label
    order so the coding does not depend on row order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError("empty table") from None
        header = [h.strip() for h in header]
        col_index = {name: i for i, name in enumerate(header)}
        for required in [schema.time, schema.event] + [n for n, _ in schema.features]:
            if required not in col_index:
                raise MissingColumnError(required)

        rows = [row for row in reader if row and any(cell.strip() for cell in row)]

    if not rows:
        raise EmptyDatasetError(f"no data rows in {path}")

    n = len(rows)
    d = len(schema.features)
    times = np.empty(n, dtype=np.float64)
    events = np.empty(n, dtype=bool)
    raw_cells: list[list[str]] = []

    for r, row in enumerate(rows):
        t_str = row[col_index[schema.time]].strip()
        try:
            times[r] = float(t_str)
        except ValueError:
            raise NonNumericValueError(r + 1, schema.time, t_str) from None
        e_str = row[col_index[schema.event]].strip()
        if e_str not in ("0", "1"):
            raise InvalidEventFlagError(r + 1, e_str)
        events[r] = e_str == "1"
        raw_cells.append([row[col_index[name]].strip() for name, _ in schema.features])

    categorical_map: dict[str, dict[str, int]] = {}
    features = np.empty((n, d), dtype=np.float64)
    for j, (name, kind) in enumerate(schema.features):
        column = [raw_cells[r][j] for r in range(n)]
        if kind == "categorical":
            labels = sorted(set(column))
            codes = {label: code for code, label in enumerate(labels)}
            categorical_map[name] = codes
            features[:, j] = [codes[v] for v in column]
        else:
            for r, v in enumerate(column):
                try:
                    features[r, j] = float(v)
                except ValueError:
                    raise NonNumericValueError(r + 1, name, v) from None

    return RawDataset(
        features, times, events,
        tuple(name for name, _ in schema.features), categorical_map,
    )


def discretize(
    raw: RawDataset, tau: int, strategy: Literal["uniform", "quantile"] = "uniform"
) -> DiscreteDataset:
    """Map continuous observed times onto the grid {1, ..., tau}.

    uniform: tau equal-width bins over (0, max(times)].
    quantile: bin edges at the empirical k/tau quantiles, so bins hold
    roughly equal counts. Both are monotone in the input time.
    """
    if raw.n == 0:
        raise EmptyDatasetError("cannot discretize an empty dataset")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    t = raw.times
    if strategy == "uniform":
        t_max = float(t.max())
        if t_max <= 0:
            raise DegenerateTimesError("all times <= 0")
        idx = np.ceil(t * tau / t_max).astype(np.int64)
        idx = np.clip(idx, 1, tau)
    elif strategy == "quantile":
        if float(t.min()) == float(t.max()):
            raise DegenerateTimesError("all observed times identical")
        edges = np.quantile(t, [k / tau for k in range(1, tau)])
        idx = np.searchsorted(edges, t, side="left").astype(np.int64) + 1
        idx = np.clip(idx, 1, tau)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return DiscreteDataset(
        raw.features, idx, raw.events, tau, raw.feature_names, raw.categorical_map
    )


def split(
    dataset: DiscreteDataset, fractions: tuple[float, float, float], seed: int
) -> tuple[DiscreteDataset, DiscreteDataset, DiscreteDataset]:
    """Seeded train/validation/test partition.

    Validation and test sizes are floored; the remainder goes to train.
    Within each split records keep their original relative order.
    """
    f_train, f_val, f_test = fractions
    if min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidSplitError(f"fractions must be nonnegative and sum to 1, got {fractions}")
    n = dataset.n
    n_val = math.floor(n * f_val)
    n_test = math.floor(n * f_test)
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    idx_train = np.sort(perm[:n_train])
    idx_val = np.sort(perm[n_train:n_train + n_val])
    idx_test = np.sort(perm[n_train + n_val:])
    return dataset.subset(idx_train), dataset.subset(idx_val), dataset.subset(idx_test)


# ---------------------------------------------------------------------------
# Counterexample fixtures: tiny cohorts on tau=5 where a calibration metric is
# blind to a grossly miscalibrated (or marginally absurd) model.
# ---------------------------------------------------------------------------

COUNTEREXAMPLE_IDS = ("dcal", "brier", "rps")


def _placeholder_features(n: int) -> np.ndarray:
    # Distinct placeholder covariates; the demos never feed these to a model.
    return np.arange(1, n + 1, dtype=np.float64).reshape(n, 1)


def counterexample_dataset(table_id: str) -> DiscreteDataset:
    """One of the three fixed demonstration cohorts (tau = 5).

    dcal:  5 uncensored individuals with times 1..5.
    brier: the dcal cohort plus two censored individuals at each time.
    rps:   5 uncensored individuals plus censored times {1,1,1,1,2,2,2,3,3,3}.
    """
    if table_id == "dcal":
        times = [1, 2, 3, 4, 5]
        events = [True] * 5
    elif table_id == "brier":
        times = [1, 2, 3, 4, 5] + [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
        events = [True] * 5 + [False] * 10
    elif table_id == "rps":
        times = [1, 2, 3, 4, 5] + [1, 1, 1, 1, 2, 2, 2, 3, 3, 3]
        events = [True] * 5 + [False] * 10
    else:
        raise UnknownTableIdError(table_id)
    n = len(times)
    return DiscreteDataset(
        _placeholder_features(n), np.array(times), np.array(events),
        tau=5, feature_names=("unit",), categorical_map={},
    )


def counterexample_predictions(table_id: str) -> np.ndarray:
    """Hand-specified per-individual survival curves, shape (n, tau+1).

    dcal:  curve i falls linearly from S(0)=1 to S(t_i) = 1 - F_i with
           F = (0.85, 0.65, 0.45, 0.25, 0.05), then stays constant. Each
           individual's predicted CDF at their own death time lands in a
           different fifth of [0, 1].
    brier: perfectly discriminating step curves S_i(t) = 1[t < t_i].
    rps:   step curves for the uncensored, constant 1 for the censored.
    """
    ds = counterexample_dataset(table_id)
    tau = ds.tau
    grid = np.arange(tau + 1, dtype=np.float64)
    S = np.ones((ds.n, tau + 1))
    if table_id == "dcal":
        finals = np.array([0.15, 0.35, 0.55, 0.75, 0.95])
        for i, (t_i, v) in enumerate(zip(ds.times, finals)):
            ramp = 1.0 + (v - 1.0) * np.minimum(grid, t_i) / t_i
            S[i] = ramp
    elif table_id == "brier":
        for i, t_i in enumerate(ds.times):
            S[i] = (grid < t_i).astype(np.float64)
    elif table_id == "rps":
        for i, (t_i, e_i) in enumerate(zip(ds.times, ds.events)):
            if e_i:
                S[i] = (grid < t_i).astype(np.float64)
            # censored rows keep S = 1 everywhere
    else:
        raise UnknownTableIdError(table_id)
    return S


# ---------------------------------------------------------------------------
# Synthetic cohorts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupSpec:
    name: str
    weight: float
    hazard: float


@dataclass(frozen=True)
class SyntheticConfig:
    """Geometric-hazard cohort with a categorical group feature.

    Feature 0 is the group code; the remaining d-1 features are standard
    normal noise. Event times are geometric(hazard) truncated at tau. With
    probability censor_rate an individual gets an independent censor time
    uniform on {1..tau}; the record stores min(event, censor) and the flag.
    """

    n: int
    d: int
    groups: tuple[GroupSpec, ...]
    censor_rate: float
    tau: int


@dataclass(frozen=True)
class SyntheticDraws:
    event_times: np.ndarray
    censor_times: np.ndarray   # tau+1 where no censor time was drawn
    group_codes: np.ndarray


def _group_sizes(n: int, weights: Sequence[float]) -> list[int]:
    total = float(sum(weights))
    exact = [n * w / total for w in weights]
    sizes = [math.floor(e) for e in exact]
    # largest-remainder rounding
    order = sorted(range(len(weights)), key=lambda i: exact[i] - sizes[i], reverse=True)
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def generate_synthetic(
    config: SyntheticConfig, seed: int, debug: bool = False
) -> DiscreteDataset | tuple[DiscreteDataset, SyntheticDraws]:
    if config.n < 1 or config.d < 1 or config.tau < 1 or not config.groups:
        raise ValueError("n, d, tau must be >= 1 and at least one group is required")
    for g in config.groups:
        if not (0.0 < g.hazard < 1.0):
            raise InvalidRateError(f"hazard for group {g.name!r}", g.hazard)
        if g.weight <= 0:
            raise InvalidRateError(f"weight for group {g.name!r}", g.weight)
    if not (0.0 <= config.censor_rate < 1.0):
        raise InvalidRateError("censor_rate", config.censor_rate)

    rng = np.random.default_rng(seed)
    sizes = _group_sizes(config.n, [g.weight for g in config.groups])
    codes = np.repeat(np.arange(len(config.groups)), sizes).astype(np.float64)

    features = np.empty((config.n, config.d))
    features[:, 0] = codes
    if config.d > 1:
        features[:, 1:] = rng.standard_normal((config.n, config.d - 1))

    hazards = np.repeat([g.hazard for g in config.groups], sizes)
    event_times = np.minimum(rng.geometric(hazards), config.tau).astype(np.int64)
    censored_flag = rng.random(config.n) < config.censor_rate
    censor_times = np.full(config.n, config.tau + 1, dtype=np.int64)
    n_cens = int(censored_flag.sum())
    if n_cens:
        censor_times[censored_flag] = rng.integers(1, config.tau + 1, size=n_cens)

    times = np.minimum(event_times, censor_times)
    events = event_times <= censor_times

    names = ("group",) + tuple(f"x{j}" for j in range(1, config.d))
    cat_map = {"group": {g.name: i for i, g in enumerate(config.groups)}}
    ds = DiscreteDataset(features, times, events, config.tau, names, cat_map)
    if debug:
        return ds, SyntheticDraws(event_times, censor_times, codes.astype(np.int64))
    return ds


# ---------------------------------------------------------------------------
# Dataset artifacts: canonical delimited file + JSON metadata sidecar
# ---------------------------------------------------------------------------


def write_dataset(ds: DiscreteDataset, path: str | Path, meta: dict | None = None) -> None:
    """Write the canonical delimited file and its `<path>.meta.json` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + ["time", "event"])
        for i in range(ds.n):
            row = [format(v, ".17g") for v in ds.features[i]]
            row += [str(int(ds.times[i])), "1" if ds.events[i] else "0"]
            writer.writerow(row)
    sidecar = {
        "tau": ds.tau,
        "feature_names": list(ds.feature_names),
        "categorical_map": ds.categorical_map,
    }
    if meta:
        sidecar.update(meta)
    sidecar_path = path.with_suffix(path.suffix + ".meta.json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> DiscreteDataset:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".meta.json")
    meta = json.loads(sidecar_path.read_text())
    feature_names = tuple(meta["feature_names"])
    schema = TableSchema(
        time="time", event="event",
        features=tuple((n, "continuous") for n in feature_names),
    )
    raw = parse_table(path, schema)
    return DiscreteDataset(
        raw.features, raw.times.astype(np.int64), raw.events,
        int(meta["tau"]), feature_names, meta.get("categorical_map", {}),
    )


def standardize_features(
    train: DiscreteDataset, others: Sequence[DiscreteDataset]
) -> tuple[list[DiscreteDataset], dict[str, dict[str, float]]]:
    """Standardize continuous columns with train-split statistics.

    Categorical columns keep their codes. Returns the transformed datasets
    (train first) and the per-column statistics for the metadata sidecar.
    Zero-variance columns are left unscaled.
    """
    stats: dict[str, dict[str, float]] = {}
    cols = [
        j for j, name in enumerate(train.feature_names)
        if name not in train.categorical_map
    ]
    mu = train.features[:, cols].mean(axis=0) if cols else np.zeros(0)
    sd = train.features[:, cols].std(axis=0) if cols else np.zeros(0)
    sd = np.where(sd > 0, sd, 1.0)
    for k, j in enumerate(cols):
        stats[train.feature_names[j]] = {"mean": float(mu[k]), "std": float(sd[k])}

    out = []
    for ds in [train, *others]:
        feats = ds.features.copy()
        if cols:
            feats[:, cols] = (feats[:, cols] - mu) / sd
        out.append(DiscreteDataset(
            feats, ds.times, ds.events, ds.tau, ds.feature_names, ds.categorical_map
        ))
    return out, stats
