"""Command-line interface: ingest, synth, train, evaluate, counterexample, compare."""
from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from .data import (
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
from .errors import DuplicateNameError, MisalignedRunsError, SurvcalError
from .estimators import censoring_km, km_curve
from .evaluation import (
    HIGHER_BETTER,
    METRIC_COLUMNS,
    ComparisonTable,
    evaluate,
    paired_outcome,
    report_to_delimited,
    report_to_text,
)
from .losses import brier_curve, dcal_from_survival, rps_loss
from .manifest import read_manifest, write_manifest
from .model import deserialize, init_model, serialize, survival
from .plotting import km_overlay_figure, mu_trajectory_figure, training_figure
from .subgroups import (
    FULL_POPULATION,
    auto_select,
    build_constraint_set,
    membership,
    parse_subgroups_file,
    write_subgroups_file,
)
from .trainer import TrainerConfig, history_to_delimited, mu_to_delimited, train


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _split_arg(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three fractions, e.g. 0.7,0.15,0.15")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}") from None


def _features_arg(text: str) -> tuple[tuple[str, str], ...]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, kind = item.partition(":")
        kind = kind or "continuous"
        if kind not in ("continuous", "categorical"):
            raise argparse.ArgumentTypeError(
                f"feature kind must be continuous or categorical, got {kind!r}"
            )
        out.append((name, kind))
    if not out:
        raise argparse.ArgumentTypeError("no features given")
    return tuple(out)


def _groups_arg(text: str) -> tuple[GroupSpec, ...]:
    groups = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(
                f"expected name:weight:hazard, got {item!r}"
            )
        try:
            groups.append(GroupSpec(parts[0], float(parts[1]), float(parts[2])))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad group {item!r}") from None
    return tuple(groups)


def _override_arg(text: str) -> tuple[str, float]:
    name, sep, value = text.rpartition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad budget in {text!r}") from None


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "subgroup"


def _ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(path: Path, text: str) -> None:
    path.write_text(text)


# ---------------------------------------------------------------------------
# subgroup assembly shared by train and evaluate
# ---------------------------------------------------------------------------


def _collect_specs(args, dataset):
    manual = []
    if args.subgroups:
        manual = [
            s for s in parse_subgroups_file(args.subgroups)
            if not (s.is_population and s.name == FULL_POPULATION.name)
        ]
    auto = []
    if args.auto_subgroups:
        auto = auto_select(
            dataset, min_size=args.min_size,
            max_overlap=args.max_overlap, max_arity=args.max_arity,
        )
    return manual, auto


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_dir(args.out)
    schema = TableSchema(
        time=args.time_col, event=args.event_col,
        features=args.features, delimiter=args.delimiter,
    )
    raw = parse_table(args.input, schema)
    ds = discretize(raw, args.tau, args.strategy)
    parts = dict(zip(("train", "val", "test"), split(ds, args.split, args.seed)))
    meta: dict = {"source": str(Path(args.input).resolve()), "strategy": args.strategy}
    if args.standardize:
        (parts["train"], parts["val"], parts["test"]), stats = standardize_features(
            parts["train"], [parts["val"], parts["test"]]
        )
        meta["standardization"] = stats
    outputs = []
    for name, part in parts.items():
        write_dataset(part, out / f"{name}.csv", meta=dict(meta, role=name))
        outputs += [f"{name}.csv", f"{name}.csv.meta.json"]
    config = {
        "tau": args.tau, "strategy": args.strategy, "split": list(args.split),
        "standardize": bool(args.standardize),
        "schema": {"time": args.time_col, "event": args.event_col,
                   "features": [list(f) for f in args.features]},
    }
    write_manifest(out, "ingest", config, {"table": args.input}, outputs,
                   seed=args.seed, wall_clock=time.perf_counter() - t0)
    for name, part in parts.items():
        print(f"{name}: {part.n} records")
    print(f"tau={args.tau} grid, artifacts in {out}")
    return 0


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_dir(args.out)
    cfg = SyntheticConfig(n=args.n, d=args.d, groups=args.groups,
                          censor_rate=args.censor_rate, tau=args.tau)
    ds = generate_synthetic(cfg, seed=args.seed)
    meta = {"generator": {
        "n": args.n, "d": args.d, "censor_rate": args.censor_rate,
        "groups": [[g.name, g.weight, g.hazard] for g in args.groups],
    }}
    outputs = []
    if args.split is None:
        write_dataset(ds, out / "cohort.csv", meta=dict(meta, role="cohort"))
        outputs += ["cohort.csv", "cohort.csv.meta.json"]
        print(f"cohort: {ds.n} records")
    else:
        parts = dict(zip(("train", "val", "test"), split(ds, args.split, args.seed)))
        for name, part in parts.items():
            write_dataset(part, out / f"{name}.csv", meta=dict(meta, role=name))
            outputs += [f"{name}.csv", f"{name}.csv.meta.json"]
            print(f"{name}: {part.n} records")
    config = dict(meta["generator"], tau=args.tau,
                  split=None if args.split is None else list(args.split))
    write_manifest(out, "synth", config, {}, outputs,
                   seed=args.seed, wall_clock=time.perf_counter() - t0)
    print(f"tau={args.tau} grid, artifacts in {out}")
    return 0


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_dir(args.out)
    train_ds = read_dataset(args.train)
    val_ds = read_dataset(args.val)
    mode = {"rps": "drsa_rps"}.get(args.mode, args.mode)

    constraints = []
    spec_list = [FULL_POPULATION]
    if mode == "graduate":
        if not args.subgroups and not args.auto_subgroups:
            print("error: graduate mode needs --subgroups or --auto-subgroups",
                  file=sys.stderr)
            return 2
        manual, auto = _collect_specs(args, train_ds)
        overrides = dict(args.c_override or [])
        constraints = build_constraint_set(manual, auto, args.c,
                                           args.distance, overrides)
        spec_list = [cs.subgroup for cs in constraints]
    elif args.subgroups or args.auto_subgroups:
        print(f"warning: mode {args.mode} ignores --subgroups/--auto-subgroups",
              file=sys.stderr)

    model0 = init_model(args.arch, d=train_ds.d, tau=train_ds.tau,
                        hidden=args.hidden, clamp_eps=args.clamp_eps,
                        seed=args.seed)
    cfg = TrainerConfig(
        mode=mode, eta=args.eta, outer_iters=args.outer_iters,
        patience=args.patience, inner_steps=args.inner_steps,
        inner_lr=args.inner_lr, batch_size=args.batch_size,
        lam=args.lam, seed=args.seed,
    )
    result = train(model0, train_ds, val_ds, constraints, cfg)

    serialize(result.model, out / "model.txt")
    _write(out / "history.csv", history_to_delimited(result))
    outputs = ["model.txt", "history.csv"]
    if constraints:
        _write(out / "mu.csv", mu_to_delimited(result))
        write_subgroups_file(spec_list, out / "subgroups.txt")
        _write(out / "constraints.json", json.dumps(
            [{"name": cs.subgroup.name, "c": cs.c, "distance": cs.distance}
             for cs in result.constraints], indent=2) + "\n")
        outputs += ["mu.csv", "subgroups.txt", "constraints.json"]

    figures = _ensure_dir(out / "figures")
    training_figure(figures / "training.png", result)
    outputs.append("figures/training.png")
    if mu_trajectory_figure(figures / "mu.png", result):
        outputs.append("figures/mu.png")

    config = {
        "mode": mode, "distance": args.distance, "c": args.c,
        "c_override": sorted(dict(args.c_override or []).items()),
        "arch": args.arch, "hidden": args.hidden, "clamp_eps": args.clamp_eps,
        "eta": args.eta, "outer_iters": args.outer_iters,
        "patience": args.patience, "inner_steps": args.inner_steps,
        "inner_lr": args.inner_lr, "batch_size": args.batch_size,
        "lam": args.lam, "auto_subgroups": bool(args.auto_subgroups),
        "min_size": args.min_size, "max_overlap": args.max_overlap,
        "max_arity": args.max_arity,
    }
    inputs = {"train": args.train, "val": args.val}
    if mode == "graduate" and args.subgroups:
        inputs["subgroups"] = args.subgroups
    write_manifest(out, "train", config, inputs, outputs,
                   seed=args.seed, wall_clock=time.perf_counter() - t0)

    last = result.history[-1]
    sel = result.history[result.selected_iteration]
    print(f"ran {len(result.history)} iterations"
          + (" (stopped early)" if result.stopped_early else ""))
    print(f"selected iteration {result.selected_iteration}: "
          f"satisfied {sel.satisfied}/{sel.monitored}, "
          f"val c-index {sel.val_c_index:.4f}")
    print(f"final train loss {last.train_loss:.6f}, artifacts in {out}")
    return 0


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_dir(args.out)
    model = deserialize(args.model)
    ds = read_dataset(args.data)
    manual, auto = _collect_specs(args, ds)
    specs = [FULL_POPULATION] + manual + auto
    seen = set()
    for s in specs:
        if s.name in seen:
            raise DuplicateNameError(s.name)
        seen.add(s.name)

    report = evaluate(model, ds, specs, bins=args.bins,
                      significance=args.significance,
                      tie_credit=0.5 if args.half_credit_ties else 0.0)
    _write(out / "report.csv", report_to_delimited(report))
    text = report_to_text(report)
    _write(out / "report.txt", text)
    outputs = ["report.csv", "report.txt"]

    curves = _ensure_dir(out / "curves")
    figures = _ensure_dir(out / "figures")
    S = survival(model, ds.features)
    for i, spec in enumerate(specs):
        mask = membership(spec, ds)
        if not mask.any():
            continue
        km = km_curve(ds.times[mask], ds.events[mask], ds.tau)
        marg = S[mask].mean(axis=0)
        stem = f"{i:02d}_{_slug(spec.name)}"
        lines = ["t,km,km_variance,km_variance_valid,model_marginal"]
        for t in range(ds.tau + 1):
            lines.append(",".join([
                str(t), format(km.values[t], ".17g"),
                format(km.variance[t], ".17g"),
                "1" if km.variance_valid[t] else "0",
                format(marg[t], ".17g"),
            ]))
        _write(curves / f"{stem}.csv", "\n".join(lines) + "\n")
        outputs.append(f"curves/{stem}.csv")
        km_overlay_figure(figures / f"{stem}.png", km, marg,
                          f"{spec.name} (n={int(mask.sum())})")
        outputs.append(f"figures/{stem}.png")

    config = {"bins": args.bins, "significance": args.significance,
              "half_credit_ties": bool(args.half_credit_ties),
              "auto_subgroups": bool(args.auto_subgroups),
              "min_size": args.min_size, "max_overlap": args.max_overlap,
              "max_arity": args.max_arity}
    inputs = {"model": args.model, "data": args.data}
    if args.subgroups:
        inputs["subgroups"] = args.subgroups
    write_manifest(out, "evaluate", config, inputs, outputs,
                   seed=args.seed, system=args.system,
                   wall_clock=time.perf_counter() - t0)
    print(text, end="")
    print(f"artifacts in {out}")
    return 0


def cmd_counterexample(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_dir(args.out)
    ds = counterexample_dataset(args.table)
    S = counterexample_predictions(args.table)
    km = km_curve(ds.times, ds.events, ds.tau)
    marginal = S.mean(axis=0)

    if args.table == "dcal":
        metric_name = "d_calibration"
        value = dcal_from_survival(S, ds.times, ds.events, M=args.bins)
    elif args.table == "brier":
        metric_name = "max_brier"
        values, _ = brier_curve(S, ds.times, ds.events,
                                censoring_km(ds.times, ds.events, ds.tau))
        value = float(np.max(np.abs(values)))
    else:
        metric_name = "rps"
        value = rps_loss(S, ds.times, ds.events).value

    write_dataset(ds, out / "dataset.csv", meta={"role": f"counterexample-{args.table}"})
    pred_lines = ["id,time,event," + ",".join(f"S{t}" for t in range(ds.tau + 1))]
    for i in range(ds.n):
        pred_lines.append(",".join(
            [str(i + 1), str(int(ds.times[i])), "1" if ds.events[i] else "0"]
            + [format(v, ".17g") for v in S[i]]
        ))
    _write(out / "predictions.csv", "\n".join(pred_lines) + "\n")

    curve_lines = ["t,km,km_variance,km_variance_valid,predicted_marginal"]
    for t in range(ds.tau + 1):
        curve_lines.append(",".join([
            str(t), format(km.values[t], ".17g"), format(km.variance[t], ".17g"),
            "1" if km.variance_valid[t] else "0", format(marginal[t], ".17g"),
        ]))
    _write(out / "curves.csv", "\n".join(curve_lines) + "\n")

    summary = "\n".join([
        f"table: {args.table}",
        f"metric: {metric_name}",
        f"value: {value:.17g}",
        f"predicted marginal S({ds.tau}): {marginal[ds.tau]:.17g}",
        f"product-limit S({ds.tau}): {km.values[ds.tau]:.17g}",
    ]) + "\n"
    _write(out / "summary.txt", summary)

    figures = _ensure_dir(out / "figures")
    km_overlay_figure(figures / "overlay.png", km, marginal,
                      f"counterexample: {args.table}")

    outputs = ["dataset.csv", "dataset.csv.meta.json", "predictions.csv",
               "curves.csv", "summary.txt", "figures/overlay.png"]
    write_manifest(out, "counterexample", {"table": args.table, "bins": args.bins},
                   {}, outputs, wall_clock=time.perf_counter() - t0)
    print(summary, end="")
    print(f"artifacts in {out}")
    return 0


def _load_report(path: Path) -> dict[str, dict[str, float | None]]:
    rows: dict[str, dict[str, float | None]] = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows[row["name"]] = {
                col: (float(row[col]) if row[col] != "" else None)
                for col in METRIC_COLUMNS
            }
    return rows


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    if args.metric != "all" and args.metric not in HIGHER_BETTER:
        print(f"error: unknown metric {args.metric!r}", file=sys.stderr)
        return 2
    out = _ensure_dir(args.out)
    systems: dict[str, dict[int, Path]] = {}
    for run_dir in args.runs:
        man = read_manifest(run_dir)
        if man["command"] != "evaluate":
            raise MisalignedRunsError(f"{run_dir} is not an evaluation run")
        system, seed = man.get("system"), man.get("seed")
        if not system or seed is None:
            raise MisalignedRunsError(
                f"{run_dir} lacks the system label or seed needed for pairing"
            )
        by_seed = systems.setdefault(system, {})
        if seed in by_seed:
            raise MisalignedRunsError(f"duplicate seed {seed} for system {system}")
        by_seed[seed] = Path(run_dir) / "report.csv"
    if len(systems) != 2:
        raise MisalignedRunsError(
            f"need exactly two systems, got {sorted(systems)}"
        )
    (sys_a, runs_a), (sys_b, runs_b) = sorted(systems.items())
    if set(runs_a) != set(runs_b):
        raise MisalignedRunsError(
            f"seed sets differ: {sorted(runs_a)} vs {sorted(runs_b)}"
        )
    seeds = sorted(runs_a)
    if len(seeds) < 2:
        raise MisalignedRunsError("need at least two aligned seeds per system")

    reports_a = [_load_report(runs_a[s]) for s in seeds]
    reports_b = [_load_report(runs_b[s]) for s in seeds]
    names = list(reports_a[0].keys())
    for rep in reports_a + reports_b:
        if list(rep.keys()) != names:
            raise MisalignedRunsError("subgroup sets differ between runs")

    metrics = ([args.metric] if args.metric != "all"
               else [m for m in METRIC_COLUMNS if m != "logrank_passed"])
    tables = []
    for metric in metrics:
        outcomes = []
        for name in names:
            va = [rep[name][metric] for rep in reports_a]
            vb = [rep[name][metric] for rep in reports_b]
            if any(v is None for v in va + vb):
                continue
            outcomes.append((name, paired_outcome(
                np.array(va), np.array(vb),
                args.significance, HIGHER_BETTER[metric],
            )))
        tables.append(ComparisonTable(sys_a, sys_b, metric,
                                      args.significance, tuple(outcomes)))

    csv_lines = ["metric,subgroup,outcome"]
    txt_lines = [f"{sys_a} vs {sys_b} over seeds {seeds} "
                 f"(paired t-test, significance {args.significance})"]
    for table in tables:
        for name, outcome in table.outcomes:
            csv_lines.append(f"{table.metric},{name},{outcome}")
        txt_lines.append(f"{table.metric}: {table.summary()}")
    _write(out / "comparison.csv", "\n".join(csv_lines) + "\n")
    text = "\n".join(txt_lines) + "\n"
    _write(out / "comparison.txt", text)

    inputs = {}
    for s in seeds:
        inputs[f"{sys_a}:{s}"] = runs_a[s]
        inputs[f"{sys_b}:{s}"] = runs_b[s]
    write_manifest(out, "compare",
                   {"metric": args.metric, "significance": args.significance,
                    "systems": [sys_a, sys_b], "seeds": seeds},
                   inputs, ["comparison.csv", "comparison.txt"],
                   wall_clock=time.perf_counter() - t0)
    print(text, end="")
    print(f"artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_subgroup_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--subgroups", help="subgroup definitions file")
    p.add_argument("--auto-subgroups", action="store_true",
                   help="select subgroups from categorical cross-products")
    p.add_argument("--min-size", type=int, default=100)
    p.add_argument("--max-overlap", type=float, default=0.8)
    p.add_argument("--max-arity", type=int, default=3)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survcal",
        description="Discrete-time survival models with subgroup calibration "
                    "constraints trained in the loop.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, discretize, and split a raw table")
    p.add_argument("--input", required=True)
    p.add_argument("--time-col", required=True)
    p.add_argument("--event-col", required=True)
    p.add_argument("--features", type=_features_arg, required=True,
                   help="comma list of name:kind, kind in {continuous,categorical}")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--tau", type=int, default=102)
    p.add_argument("--strategy", choices=["uniform", "quantile"], default="uniform")
    p.add_argument("--split", type=_split_arg, default=(0.7, 0.15, 0.15))
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic geometric-hazard cohort")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--groups", type=_groups_arg, required=True,
                   help="comma list of name:weight:hazard")
    p.add_argument("--censor-rate", type=float, default=0.0)
    p.add_argument("--tau", type=int, default=102)
    p.add_argument("--split", type=_split_arg, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a hazard model")
    p.add_argument("--train", required=True, help="training dataset artifact")
    p.add_argument("--val", required=True, help="validation dataset artifact")
    p.add_argument("--mode", choices=["graduate", "drsa", "rps", "drsa_rps"],
                   default="graduate")
    p.add_argument("--distance", choices=["l2", "var"], default="l2")
    p.add_argument("--c", type=float, default=0.02, help="default budget")
    p.add_argument("--c-override", type=_override_arg, action="append",
                   help="per-subgroup budget, name=value")
    _add_subgroup_flags(p)
    p.add_argument("--arch", choices=["linear_time", "mlp_time", "recurrent"],
                   default="mlp_time")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--clamp-eps", type=float, default=1e-6)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--outer-iters", type=int, default=3000)
    p.add_argument("--patience", type=int, default=500)
    p.add_argument("--inner-steps", type=int, default=0,
                   help="minibatches per outer iteration, 0 = one epoch")
    p.add_argument("--inner-lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lam", type=float, default=1.0,
                   help="ranked-probability weight in rps mode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    _add_subgroup_flags(p)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--half-credit-ties", action="store_true")
    p.add_argument("--system", help="system label used by compare")
    p.add_argument("--seed", type=int, help="seed label used by compare")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("counterexample",
                       help="reproduce a calibration-metric blind spot")
    p.add_argument("--table", required=True, help="dcal, brier, or rps")
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("compare", help="paired comparison of evaluation runs")
    p.add_argument("--runs", nargs="+", required=True,
                   help="evaluation run directories (two systems, aligned seeds)")
    p.add_argument("--metric", default="all")
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SurvcalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
