"""Distances between survival curves and the subgroup constraint penalty.

Curves are arrays over {0..tau}; t=0 is pinned at 1 by construction and all
distances ignore it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllTimestepsSkippedError, EmptySubgroupError, LengthMismatchError
from .estimators import KMCurve
from .model import HazardModel, GradientTape, survival_cotangent_to_hazard, survival_from_hazards

DISTANCES = ("l2", "var")


def _as_values(curve) -> np.ndarray:
    return np.asarray(getattr(curve, "values", curve), dtype=np.float64)


def _check_lengths(pred: np.ndarray, ref: np.ndarray):
    if pred.shape != ref.shape:
        raise LengthMismatchError(pred.shape[0], ref.shape[0])


def l2_distance(pred, ref) -> float:
    """Mean squared difference over t = 1..tau."""
    p, r = _as_values(pred), _as_values(ref)
    _check_lengths(p, r)
    tau = len(p) - 1
    return float(np.sum((p[1:] - r[1:]) ** 2) / tau)


def _l2_cotangent(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    tau = len(p) - 1
    d = np.zeros_like(p)
    d[1:] = 2.0 * (p[1:] - r[1:]) / tau
    return d


def _var_usable(ref: KMCurve) -> np.ndarray:
    usable = ref.variance_valid & (ref.variance > 0.0)
    usable[0] = False
    return usable


def _var_adjusted(pred: np.ndarray, ref: KMCurve) -> tuple[float, int]:
    """Worst |pred - ref| in Greenwood standard deviations, with its argmax.

    Timesteps with zero or undefined variance are skipped; ties resolve to
    the smallest t.
    """
    p = pred
    r = ref.values
    _check_lengths(p, r)
    usable = _var_usable(ref)
    if not usable.any():
        raise AllTimestepsSkippedError("no timestep has a valid positive variance")
    ratios = np.full_like(p, -np.inf)
    sd = np.sqrt(ref.variance[usable])
    ratios[usable] = np.abs(p[usable] - r[usable]) / sd
    t_star = int(np.argmax(ratios))
    return float(ratios[t_star]), t_star


def variance_adjusted_distance(pred, ref: KMCurve) -> float:
    value, _ = _var_adjusted(_as_values(pred), ref)
    return value


def ece(pred, ref, M: int = 10) -> float:
    """Expected calibration error over M value bins.

    Each grid step t in {0..tau} joins the bin its predicted value falls in
    (half-open bins ((m-1)/M, m/M], 0 in bin 1); the error is the bin-size
    weighted |mean reference - mean predicted| with weights |B_m|/(tau+1).
    """
    p, r = _as_values(pred), _as_values(ref)
    _check_lengths(p, r)
    bins = np.clip(np.ceil(p * M).astype(np.int64), 1, M)
    total = 0.0
    n = len(p)
    for m in range(1, M + 1):
        sel = bins == m
        cnt = int(sel.sum())
        if cnt == 0:
            continue
        total += (cnt / n) * abs(r[sel].mean() - p[sel].mean())
    return float(total)


@dataclass(frozen=True)
class PenaltyResult:
    """Constraint penalty p = dist - c with cotangents for training.

    hazard_cotangents covers the member rows the penalty was computed from,
    shape (m, tau); distance is reported alongside the shifted penalty.
    """

    penalty: float
    distance: float
    hazard_cotangents: np.ndarray


def penalty_from_forward(
    H: np.ndarray, S: np.ndarray, ref: KMCurve, c: float, distance: str
) -> PenaltyResult:
    """Penalty and gradient for precomputed member hazards and survival."""
    m = H.shape[0]
    if m == 0:
        raise EmptySubgroupError("constraint over zero members")
    marg = S.mean(axis=0)
    if distance == "l2":
        dist = l2_distance(marg, ref.values)
        dmarg = _l2_cotangent(marg, ref.values)
    elif distance == "var":
        dist, t_star = _var_adjusted(marg, ref)
        dmarg = np.zeros_like(marg)
        diff = marg[t_star] - ref.values[t_star]
        sd = float(np.sqrt(ref.variance[t_star]))
        dmarg[t_star] = np.sign(diff) / sd if diff != 0.0 else 0.0
    else:
        raise ValueError(f"unknown distance {distance!r}")
    dS = np.broadcast_to(dmarg / m, S.shape)
    dH = survival_cotangent_to_hazard(S, H, dS)
    return PenaltyResult(dist - c, dist, dH)


def constraint_penalty(
    model: HazardModel, X_members: np.ndarray, ref: KMCurve, c: float, distance: str
) -> PenaltyResult:
    """Model-level wrapper: forwards the members, then scores the marginal."""
    X_members = np.asarray(X_members, dtype=np.float64)
    if X_members.ndim == 1:
        X_members = X_members.reshape(1, -1)
    if X_members.shape[0] == 0:
        raise EmptySubgroupError("constraint over zero members")
    tape = GradientTape(model, X_members)
    S = survival_from_hazards(tape.hazards)
    return penalty_from_forward(tape.hazards, S, ref, c, distance)
