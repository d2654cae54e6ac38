"""Primal-dual training loop with per-subgroup calibration constraints.

The constrained objective is the data-fit loss plus sum_i mu_i * (dist_i - c_i),
where dist_i measures the gap between the model's marginal survival over
subgroup i and the subgroup's product-limit curve on the training split.
Each outer iteration ascends the duals first, then descends the primals for
one epoch of minibatches; a constraint whose multiplier is zero contributes
no gradient work at all, so with slack budgets the loop runs the exact
unconstrained arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .calibration import (
    _var_usable,
    l2_distance,
    penalty_from_forward,
    variance_adjusted_distance,
)
from .data import DiscreteDataset
from .errors import (
    EmptySubgroupOnTrainError,
    InvalidRateError,
    NoComparablePairsError,
    NonFiniteLossError,
)
from .estimators import KMCurve, km_curve
from .evaluation import c_index_from_survival
from .losses import drsa_loss, rps_loss
from .model import (
    GradientTape,
    HazardModel,
    survival,
    survival_cotangent_to_hazard,
    survival_from_hazards,
)
from .subgroups import ConstraintSpec, membership

MODES = ("graduate", "drsa", "drsa_rps")

# rng stream tags so dual init and batch schedules never alias
_MU_STREAM = 101
_BATCH_STREAM = 202


@dataclass(frozen=True)
class TrainerConfig:
    mode: str = "graduate"
    eta: float = 0.01            # dual ascent rate
    outer_iters: int = 3000
    patience: int = 500          # 0 disables early stopping
    inner_steps: int = 0         # 0 = one epoch per outer iteration
    inner_lr: float = 0.1
    batch_size: int = 32
    lam: float = 1.0             # ranked-probability weight in drsa_rps mode
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.eta <= 0.0:
            raise InvalidRateError("eta", self.eta)
        if self.inner_lr <= 0.0:
            raise InvalidRateError("inner_lr", self.inner_lr)
        if self.lam < 0.0:
            raise InvalidRateError("lam", self.lam)
        if self.outer_iters < 1 or self.batch_size < 1:
            raise ValueError("outer_iters and batch_size must be positive")
        if self.patience < 0 or self.inner_steps < 0:
            raise ValueError("patience and inner_steps must be nonnegative")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    train_loss: float                    # mean minibatch data-fit loss
    penalty: float                       # sum mu_i * (dist_i - c_i) at the dual step
    mu: tuple[float, ...]
    train_dists: tuple[float, ...] | None
    satisfied: int                       # constraints met on the validation split
    monitored: int
    val_c_index: float                   # nan when no comparable pairs


@dataclass(frozen=True)
class TrainResult:
    model: HazardModel                   # selected incumbent
    final_model: HazardModel
    mu: np.ndarray
    history: tuple[IterationRecord, ...]
    constraints: tuple[ConstraintSpec, ...]
    selected_iteration: int
    stopped_early: bool


@dataclass(frozen=True)
class _Constraint:
    spec: ConstraintSpec
    train_mask: np.ndarray
    train_ref: KMCurve
    val_mask: np.ndarray
    val_ref: KMCurve | None
    monitored: bool


def _train_distance(marg: np.ndarray, ref: KMCurve, kind: str) -> float:
    if kind == "l2":
        return l2_distance(marg, ref.values)
    return variance_adjusted_distance(marg, ref)


def _prepare_constraints(
    train_ds: DiscreteDataset,
    val_ds: DiscreteDataset,
    specs: tuple[ConstraintSpec, ...],
) -> list[_Constraint]:
    out = []
    for cs in specs:
        tm = membership(cs.subgroup, train_ds)
        if not tm.any():
            raise EmptySubgroupOnTrainError(cs.subgroup.name)
        tref = km_curve(train_ds.times[tm], train_ds.events[tm], train_ds.tau)
        if cs.distance == "var" and not _var_usable(tref).any():
            raise EmptySubgroupOnTrainError(
                f"{cs.subgroup.name} (no usable variance on the training curve)"
            )
        vm = membership(cs.subgroup, val_ds)
        vref = None
        monitored = False
        if vm.any():
            vref = km_curve(val_ds.times[vm], val_ds.events[vm], val_ds.tau)
            monitored = cs.distance == "l2" or _var_usable(vref).any()
        out.append(_Constraint(cs, tm, tref, vm, vref, monitored))
    return out


def _batches(n: int, cfg: TrainerConfig, iteration: int) -> list[np.ndarray]:
    rng = np.random.default_rng([cfg.seed, _BATCH_STREAM, iteration])
    perm = rng.permutation(n)
    bs = cfg.batch_size
    if cfg.inner_steps == 0:
        return [perm[i : i + bs] for i in range(0, n, bs)]
    reps = -(-(cfg.inner_steps * bs) // n)            # ceil
    tiled = np.tile(perm, reps)
    return [tiled[i * bs : (i + 1) * bs] for i in range(cfg.inner_steps)]


def _selection_key(rec: IterationRecord) -> tuple:
    c = rec.val_c_index
    c_key = -np.inf if np.isnan(c) else c
    return (rec.satisfied, c_key, -rec.iteration)


def train(
    model: HazardModel,
    train_ds: DiscreteDataset,
    val_ds: DiscreteDataset,
    constraints: list[ConstraintSpec] | tuple[ConstraintSpec, ...] = (),
    config: TrainerConfig = TrainerConfig(),
) -> TrainResult:
    """Fit the model; returns the incumbent chosen across iterations.

    The incumbent maximizes (validation constraints satisfied, validation
    concordance, earliness) lexicographically. Training stops early when the
    incumbent has not changed for `patience` consecutive iterations.
    """
    cfg = config
    cons = _prepare_constraints(train_ds, val_ds, tuple(constraints))
    k = len(cons)
    dual = cfg.mode == "graduate" and k > 0
    if dual:
        mu = np.random.default_rng([cfg.seed, _MU_STREAM]).uniform(size=k)
    else:
        mu = np.zeros(k)
    cvec = np.array([c.spec.c for c in cons], dtype=np.float64)

    X, times, events = train_ds.features, train_ds.times, train_ds.events
    n = train_ds.n
    theta = model.theta.copy()

    history: list[IterationRecord] = []
    incumbent_key = None
    incumbent_theta = theta.copy()
    selected_iteration = 0
    stale = 0
    stopped_early = False

    for j in range(cfg.outer_iters):
        # dual ascent first: slack budgets zero their multipliers before any
        # primal step, so the unconstrained reduction is exact
        penalty = 0.0
        train_dists = None
        if dual:
            S_full = survival(model.with_theta(theta), X)
            dists = np.empty(k)
            for i, c in enumerate(cons):
                marg = S_full[c.train_mask].mean(axis=0)
                dists[i] = _train_distance(marg, c.train_ref, c.spec.distance)
            mu = np.maximum(0.0, mu + cfg.eta * (dists - cvec))
            penalty = float(np.dot(mu, dists - cvec))
            train_dists = tuple(dists)
            if not np.isfinite(penalty):
                raise NonFiniteLossError(j, "constraint penalty diverged")

        # primal descent
        loss_sum = 0.0
        n_batches = 0
        current = model.with_theta(theta)
        for batch in _batches(n, cfg, j):
            tape = GradientTape(current, X[batch])
            fit = drsa_loss(tape.hazards, times[batch], events[batch])
            loss = fit.value
            dH = fit.cotangents
            if cfg.mode == "drsa_rps":
                S_b = survival_from_hazards(tape.hazards)
                r = rps_loss(S_b, times[batch], events[batch])
                scale = cfg.lam / len(batch)
                loss += scale * r.value
                dH = dH + survival_cotangent_to_hazard(
                    S_b, tape.hazards, scale * r.cotangents
                )
            if not np.isfinite(loss):
                raise NonFiniteLossError(j, f"data-fit loss = {loss!r}")
            grad = tape.gradient(dH)
            if dual and np.any(mu > 0.0):
                full = GradientTape(current, X)
                S_f = survival_from_hazards(full.hazards)
                dH_f = np.zeros_like(full.hazards)
                for i, c in enumerate(cons):
                    if mu[i] == 0.0:
                        continue
                    res = penalty_from_forward(
                        full.hazards[c.train_mask], S_f[c.train_mask],
                        c.train_ref, c.spec.c, c.spec.distance,
                    )
                    dH_f[c.train_mask] += mu[i] * res.hazard_cotangents
                grad = grad + full.gradient(dH_f)
            theta = theta - cfg.inner_lr * grad
            current = model.with_theta(theta)
            loss_sum += loss
            n_batches += 1

        # validation monitoring
        S_val = survival(current, val_ds.features)
        satisfied = 0
        monitored = 0
        for c in cons:
            if not c.monitored:
                continue
            monitored += 1
            marg = S_val[c.val_mask].mean(axis=0)
            if _train_distance(marg, c.val_ref, c.spec.distance) <= c.spec.c:
                satisfied += 1
        try:
            val_c = c_index_from_survival(S_val, val_ds.times, val_ds.events)
        except NoComparablePairsError:
            val_c = float("nan")

        rec = IterationRecord(
            iteration=j,
            train_loss=loss_sum / max(n_batches, 1),
            penalty=penalty,
            mu=tuple(mu),
            train_dists=train_dists,
            satisfied=satisfied,
            monitored=monitored,
            val_c_index=val_c,
        )
        history.append(rec)

        key = _selection_key(rec)
        if incumbent_key is None or key > incumbent_key:
            incumbent_key = key
            incumbent_theta = theta.copy()
            selected_iteration = j
            stale = 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                stopped_early = True
                break

    return TrainResult(
        model=model.with_theta(incumbent_theta),
        final_model=model.with_theta(theta),
        mu=mu,
        history=tuple(history),
        constraints=tuple(c.spec for c in cons),
        selected_iteration=selected_iteration,
        stopped_early=stopped_early,
    )


def baseline_train(
    model: HazardModel,
    train_ds: DiscreteDataset,
    val_ds: DiscreteDataset,
    config: TrainerConfig,
    constraints: list[ConstraintSpec] | tuple[ConstraintSpec, ...] = (),
) -> TrainResult:
    """Unconstrained fit (drsa or drsa_rps); constraints only monitored."""
    if config.mode == "graduate":
        config = replace(config, mode="drsa")
    return train(model, train_ds, val_ds, constraints, config)


def history_to_delimited(result: TrainResult) -> str:
    header = ["iteration", "train_loss", "penalty", "satisfied", "monitored",
              "val_c_index"]
    lines = [",".join(header)]
    for r in result.history:
        lines.append(",".join([
            str(r.iteration),
            format(r.train_loss, ".17g"),
            format(r.penalty, ".17g"),
            str(r.satisfied),
            str(r.monitored),
            format(r.val_c_index, ".17g"),
        ]))
    return "\n".join(lines) + "\n"


def mu_to_delimited(result: TrainResult) -> str:
    """Multiplier and train-distance trajectories, one row per iteration."""
    names = [c.subgroup.name for c in result.constraints]
    header = ["iteration"]
    header += [f"mu:{n}" for n in names]
    header += [f"dist:{n}" for n in names]
    lines = [",".join(header)]
    for r in result.history:
        cells = [str(r.iteration)]
        cells += [format(v, ".17g") for v in r.mu]
        if r.train_dists is None:
            cells += ["" for _ in names]
        else:
            cells += [format(v, ".17g") for v in r.train_dists]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
