"""Subgroup predicates, automatic candidate selection, constraint sets.

A subgroup is a named conjunction of atomic conditions on features. The
empty conjunction is the full population.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DiscreteDataset
from .errors import (
    DuplicateNameError,
    NoCategoricalFeaturesError,
    SubgroupParseError,
    UnknownFeatureError,
)


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str                      # "eq" | "in_set" | "in_interval"
    value: object                # float/str, frozenset, or (lo, hi)

    def describe(self, inverse_map: dict[str, dict[int, str]] | None = None) -> str:
        inv = (inverse_map or {}).get(self.feature, {})

        def label(v):
            if isinstance(v, str):
                return v
            iv = int(v) if float(v).is_integer() else None
            if iv is not None and iv in inv:
                return inv[iv]
            return format(float(v), "g")

        if self.op == "eq":
            return f"{self.feature}={label(self.value)}"
        if self.op == "in_set":
            vals = ",".join(sorted(label(v) for v in self.value))
            return f"{self.feature} in {{{vals}}}"
        lo, hi = self.value
        return f"{self.feature} in [{format(lo, 'g')},{format(hi, 'g')}]"


@dataclass(frozen=True)
class SubgroupSpec:
    name: str
    conditions: tuple[Condition, ...] = ()
    kind: str = "manual"         # "manual" | "auto" | "full_population"

    @property
    def is_population(self) -> bool:
        return len(self.conditions) == 0


FULL_POPULATION = SubgroupSpec("population", (), "full_population")


def _resolve(value, feature: str, dataset: DiscreteDataset) -> float:
    """Categorical labels in conditions resolve through the dataset's map."""
    if isinstance(value, str):
        codes = dataset.categorical_map.get(feature)
        if codes is None or value not in codes:
            raise UnknownFeatureError(f"{feature}={value}")
        return float(codes[value])
    return float(value)


def membership(spec: SubgroupSpec, dataset: DiscreteDataset) -> np.ndarray:
    """Boolean membership mask over the dataset's records."""
    mask = np.ones(dataset.n, dtype=bool)
    for cond in spec.conditions:
        col = dataset.feature_column(cond.feature)
        if cond.op == "eq":
            mask &= col == _resolve(cond.value, cond.feature, dataset)
        elif cond.op == "in_set":
            values = [_resolve(v, cond.feature, dataset) for v in cond.value]
            mask &= np.isin(col, values)
        elif cond.op == "in_interval":
            lo, hi = cond.value
            mask &= (col >= lo) & (col <= hi)
        else:
            raise ValueError(f"unknown condition op {cond.op!r}")
    return mask


def auto_select(
    dataset: DiscreteDataset,
    min_size: int = 100,
    max_overlap: float = 0.8,
    max_arity: int = 3,
) -> list[SubgroupSpec]:
    """Greedy subgroup selection over categorical cross-products.

    Candidates are all value combinations of 1..max_arity categorical
    features, visited in decreasing size order; a candidate is kept when it
    has at least min_size members and shares at most max_overlap of them
    with every already-kept subgroup.
    """
    cat_features = sorted(dataset.categorical_map.keys())
    cat_features = [f for f in cat_features if f in dataset.feature_names]
    if not cat_features:
        raise NoCategoricalFeaturesError("auto selection needs categorical features")

    inverse = {
        f: {code: label for label, code in dataset.categorical_map[f].items()}
        for f in cat_features
    }

    candidates: list[tuple[SubgroupSpec, np.ndarray, int]] = []
    for arity in range(1, max_arity + 1):
        for combo in itertools.combinations(cat_features, arity):
            observed = [np.unique(dataset.feature_column(f)) for f in combo]
            for values in itertools.product(*observed):
                conds = tuple(
                    Condition(f, "eq", float(v)) for f, v in zip(combo, values)
                )
                mask = np.ones(dataset.n, dtype=bool)
                for f, v in zip(combo, values):
                    mask &= dataset.feature_column(f) == v
                size = int(mask.sum())
                if size == 0:
                    continue
                name = "&".join(c.describe(inverse) for c in conds)
                candidates.append(
                    (SubgroupSpec(name, conds, "auto"), mask, size)
                )

    candidates.sort(key=lambda item: (-item[2], len(item[0].conditions), item[0].name))

    kept: list[tuple[SubgroupSpec, np.ndarray]] = []
    for spec, mask, size in candidates:
        if size < min_size:
            continue
        ok = True
        for _, kept_mask in kept:
            overlap = int(np.sum(mask & kept_mask)) / size
            if overlap > max_overlap:
                ok = False
                break
        if ok:
            kept.append((spec, mask))
    return [spec for spec, _ in kept]


@dataclass(frozen=True)
class ConstraintSpec:
    subgroup: SubgroupSpec
    c: float
    distance: str                # "l2" | "var"


def build_constraint_set(
    manual: list[SubgroupSpec],
    auto: list[SubgroupSpec],
    c_default: float,
    distance: str,
    c_overrides: dict[str, float] | None = None,
) -> list[ConstraintSpec]:
    """Full population first, then manual, then auto subgroups."""
    overrides = c_overrides or {}
    specs = [FULL_POPULATION] + list(manual) + list(auto)
    seen: set[str] = set()
    out = []
    for spec in specs:
        if spec.name in seen:
            raise DuplicateNameError(spec.name)
        seen.add(spec.name)
        out.append(ConstraintSpec(spec, float(overrides.get(spec.name, c_default)), distance))
    return out


# ---------------------------------------------------------------------------
# Definitions file: one subgroup per line, `name: cond & cond & ...`
# where cond is `feature=value`, `feature in {a,b}`, or `feature in [lo,hi]`.
# `*` denotes the full population. `#` starts a comment.
# ---------------------------------------------------------------------------

_INTERVAL_RE = re.compile(r"^(\S+)\s+in\s+\[\s*([^,\]]+)\s*,\s*([^,\]]+)\s*\]$")
_SET_RE = re.compile(r"^(\S+)\s+in\s+\{([^}]*)\}$")
_EQ_RE = re.compile(r"^(\S+)\s*=\s*(\S+)$")


def _parse_value(token: str):
    try:
        return float(token)
    except ValueError:
        return token  # categorical label, resolved at membership time


def parse_subgroups_file(path: str | Path) -> list[SubgroupSpec]:
    specs = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise SubgroupParseError(line_no, "expected `name: conditions`")
        name, rest = line.split(":", 1)
        name = name.strip()
        rest = rest.strip()
        if not name:
            raise SubgroupParseError(line_no, "empty name")
        if rest == "*":
            specs.append(SubgroupSpec(name, (), "manual"))
            continue
        conds = []
        for chunk in rest.split("&"):
            chunk = chunk.strip()
            m = _INTERVAL_RE.match(chunk)
            if m:
                try:
                    lo, hi = float(m.group(2)), float(m.group(3))
                except ValueError:
                    raise SubgroupParseError(line_no, f"bad interval {chunk!r}") from None
                conds.append(Condition(m.group(1), "in_interval", (lo, hi)))
                continue
            m = _SET_RE.match(chunk)
            if m:
                tokens = [t.strip() for t in m.group(2).split(",") if t.strip()]
                if not tokens:
                    raise SubgroupParseError(line_no, f"empty set {chunk!r}")
                conds.append(
                    Condition(m.group(1), "in_set", frozenset(_parse_value(t) for t in tokens))
                )
                continue
            m = _EQ_RE.match(chunk)
            if m:
                conds.append(Condition(m.group(1), "eq", _parse_value(m.group(2))))
                continue
            raise SubgroupParseError(line_no, f"cannot parse condition {chunk!r}")
        specs.append(SubgroupSpec(name, tuple(conds), "manual"))
    return specs


def write_subgroups_file(specs: list[SubgroupSpec], path: str | Path) -> None:
    lines = []
    for spec in specs:
        if spec.is_population:
            lines.append(f"{spec.name}: *")
        else:
            lines.append(f"{spec.name}: " + " & ".join(c.describe() for c in spec.conditions))
    Path(path).write_text("\n".join(lines) + "\n")
