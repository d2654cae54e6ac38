"""Training losses and calibration-blind metrics.

Conventions: H is a hazard matrix (n, tau) on the grid {1..tau}; S is the
matching survival matrix (n, tau+1) with S[:, 0] = 1. DRSA and RPS return
cotangents for training; D-calibration and Brier are metrics only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominatorError, EmptyInputError, LengthMismatchError


@dataclass(frozen=True)
class LossValue:
    value: float
    cotangents: np.ndarray  # same shape as the argument the loss was taken in


def _check_batch(arr: np.ndarray, times: np.ndarray, events: np.ndarray):
    if arr.shape[0] == 0:
        raise EmptyInputError("empty batch")
    if arr.shape[0] != len(times) or len(times) != len(events):
        raise LengthMismatchError(arr.shape[0], len(times))


def drsa_loss(H: np.ndarray, times: np.ndarray, events: np.ndarray) -> LossValue:
    """Mean discrete-time survival likelihood loss with an event-by-horizon term.

    Per record with event at t: -log h_t - sum_{t'<t} log(1-h_t')
    - log(1 - prod_{t'<tau}(1-h_t')). Censored at t: -sum_{t'<t} log(1-h_t').
    Cotangents are with respect to H.
    """
    H = np.asarray(H, dtype=np.float64)
    times = np.asarray(times, dtype=np.int64)
    events = np.asarray(events, dtype=bool)
    _check_batch(H, times, events)
    n, tau = H.shape

    with np.errstate(divide="ignore"):
        log1mh = np.log1p(-H)                   # (n, tau)
    cum = np.cumsum(log1mh, axis=1)
    # sum over t' < t_i, i.e. columns 0 .. t_i-2
    pre_sum = np.where(times >= 2, np.take_along_axis(
        cum, np.maximum(times - 2, 0)[:, None], axis=1
    )[:, 0], 0.0)

    if tau >= 2:
        logQ = cum[:, tau - 2]                  # prod over t' = 1 .. tau-1
    else:
        logQ = np.zeros(n)
    one_minus_Q = -np.expm1(logQ)
    with np.errstate(divide="ignore"):
        log_tail = np.log(one_minus_Q)
    log_h_at_t = np.log(H[np.arange(n), times - 1])

    per_example = np.where(
        events,
        -log_h_at_t - pre_sum - log_tail,
        -pre_sum,
    )
    value = float(per_example.mean())

    cols = np.arange(tau)[None, :]
    before_t = cols < (times - 1)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = np.where(before_t, 1.0 / (1.0 - H), 0.0)
        ev = events.astype(np.float64)[:, None]
        if tau >= 2:
            Q = np.exp(logQ)
            tail_fac = np.where(one_minus_Q > 0, Q / one_minus_Q, np.inf)
            cot[:, : tau - 1] -= (ev * tail_fac[:, None]) / (1.0 - H[:, : tau - 1])
        cot[np.arange(n), times - 1] -= events / H[np.arange(n), times - 1]
    return LossValue(value, cot / n)


def rps_loss(S: np.ndarray, times: np.ndarray, events: np.ndarray) -> LossValue:
    """Ranked probability score, summed over the batch.

    Event at t: sum_{t'=0}^{tau} (S(t') - 1[t' < t])^2.
    Censored at t: sum_{t'=0}^{t} (S(t') - 1)^2.
    Cotangents are with respect to S (the t=0 column carries none in effect
    since S(0) is pinned at 1).
    """
    S = np.asarray(S, dtype=np.float64)
    times = np.asarray(times, dtype=np.int64)
    events = np.asarray(events, dtype=bool)
    _check_batch(S, times, events)
    n, tau_plus_1 = S.shape

    grid = np.arange(tau_plus_1)[None, :]
    target_event = (grid < times[:, None]).astype(np.float64)
    mask_cens = grid <= times[:, None]

    diff_event = S - target_event
    diff_cens = np.where(mask_cens, S - 1.0, 0.0)

    ev = events[:, None]
    per_example = np.where(
        events,
        (diff_event ** 2).sum(axis=1),
        (diff_cens ** 2).sum(axis=1),
    )
    value = float(per_example.sum())
    cot = np.where(ev, 2.0 * diff_event, 2.0 * diff_cens)
    return LossValue(value, cot)


def _bin_index(values: np.ndarray, M: int) -> np.ndarray:
    """Half-open bins ((m-1)/M, m/M]; 0 goes to bin 1. Returns 1-based bins."""
    idx = np.ceil(np.asarray(values, dtype=np.float64) * M).astype(np.int64)
    return np.clip(idx, 1, M)


def dcal_metric(
    F: np.ndarray, events: np.ndarray, M: int = 10,
    eps: float = 1e-12, clamp: bool = True,
) -> float:
    """Distributional calibration over M equal CDF intervals.

    F holds each record's predicted CDF at its own observed time. Uncensored
    mass is an indicator for the containing interval; censored mass spreads
    (b_I - F)/(1 - F) over the containing interval and (b_I - a_I)/F over
    intervals above F. Denominators are clamped at eps unless clamp=False,
    in which case a zero denominator raises.
    """
    F = np.asarray(F, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if F.size == 0:
        raise EmptyInputError("empty dataset")
    n = F.size
    bins = _bin_index(F, M)
    a = (np.arange(1, M + 1) - 1) / M
    b = np.arange(1, M + 1) / M

    mass = np.zeros((n, M))
    unc = events
    mass[unc, bins[unc] - 1] = 1.0

    cens = ~events
    if cens.any():
        Fc = F[cens]
        bc = bins[cens]
        one_minus = 1.0 - Fc
        if not clamp and np.any(one_minus <= 0.0):
            raise DegenerateDenominatorError("1 - F is zero for a censored record")
        denom1 = np.maximum(one_minus, eps)
        mass_cont = (b[bc - 1] - Fc) / denom1

        above = a[None, :] > Fc[:, None]        # intervals entirely above F
        if not clamp and np.any(above.any(axis=1) & (Fc <= 0.0)):
            raise DegenerateDenominatorError("F is zero for a censored record")
        denom2 = np.maximum(Fc, eps)
        mass_above = above * ((1.0 / M) / denom2[:, None])

        cm = np.zeros((int(cens.sum()), M))
        cm[np.arange(len(Fc)), bc - 1] += mass_cont
        cm += mass_above
        mass[cens] = cm

    mean_mass = mass.mean(axis=0)
    return float(np.sum((mean_mass - 1.0 / M) ** 2))


def dcal_from_survival(
    S: np.ndarray, times: np.ndarray, events: np.ndarray, M: int = 10,
    eps: float = 1e-12, clamp: bool = True,
) -> float:
    """dcal_metric on F(t_i|x_i) = 1 - S(t_i|x_i)."""
    S = np.asarray(S, dtype=np.float64)
    times = np.asarray(times, dtype=np.int64)
    F = 1.0 - S[np.arange(S.shape[0]), times]
    return dcal_metric(F, events, M=M, eps=eps, clamp=clamp)


def brier_score(
    S: np.ndarray, times: np.ndarray, events: np.ndarray,
    G: np.ndarray, t: int, eps: float = 1e-12, clamp: bool = True,
) -> float:
    """Censoring-weighted Brier score at grid step t.

    (1/n) sum_i [ 1[t_i <= t, event] S(t|x_i)^2 / G(t_i)
                + 1[t_i > t] (1 - S(t|x_i))^2 / G(t) ]
    where G is the censoring KM curve. Zero denominators are clamped at eps
    unless clamp=False, in which case they raise when actually needed.
    """
    S = np.asarray(S, dtype=np.float64)
    times = np.asarray(times, dtype=np.int64)
    events = np.asarray(events, dtype=bool)
    G = np.asarray(getattr(G, "values", G), dtype=np.float64)
    _check_batch(S, times, events)
    n = S.shape[0]

    died = (times <= t) & events
    alive = times > t

    G_at_ti = G[times]
    if not clamp and (np.any(died & (G_at_ti <= 0.0)) or (alive.any() and G[t] <= 0.0)):
        raise DegenerateDenominatorError("censoring survival is zero where needed")
    term1 = np.where(died, S[:, t] ** 2 / np.maximum(G_at_ti, eps), 0.0)
    term2 = np.where(alive, (1.0 - S[:, t]) ** 2 / max(G[t], eps), 0.0)
    return float((term1 + term2).sum() / n)


def brier_curve(
    S: np.ndarray, times: np.ndarray, events: np.ndarray,
    G: np.ndarray, eps: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Brier score at each t in {1..tau} plus flags where clamping engaged."""
    G_values = np.asarray(getattr(G, "values", G), dtype=np.float64)
    tau = len(G_values) - 1
    times = np.asarray(times, dtype=np.int64)
    events = np.asarray(events, dtype=bool)
    values = np.empty(tau)
    flagged = np.zeros(tau, dtype=bool)
    for t in range(1, tau + 1):
        values[t - 1] = brier_score(S, times, events, G_values, t, eps=eps, clamp=True)
        died = (times <= t) & events
        alive = times > t
        flagged[t - 1] = bool(
            np.any(died & (G_values[times] <= 0.0)) or (alive.any() and G_values[t] <= 0.0)
        )
    return values, flagged


def integrated_brier(
    S: np.ndarray, times: np.ndarray, events: np.ndarray,
    G: np.ndarray, eps: float = 1e-12,
) -> float:
    values, _ = brier_curve(S, times, events, G, eps=eps)
    return float(values.mean())
