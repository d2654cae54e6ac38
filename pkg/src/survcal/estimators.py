"""Kaplan-Meier estimation and logrank tests on the discrete grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import EmptyInputError, NoEventsError, ZeroReferenceSurvivalError


@dataclass(frozen=True)
class KMCurve:
    """Product-limit curve on {0, ..., tau} with Greenwood variance.

    variance_valid[t] is False once the risk set has been fully consumed by
    events (the variance is undefined from that step on; 0 is reported).
    """

    values: np.ndarray          # (tau+1,)
    variance: np.ndarray        # (tau+1,)
    variance_valid: np.ndarray  # (tau+1,) bool
    event_times: np.ndarray     # grid steps with at least one event
    n_at_risk: np.ndarray       # risk-set size at each event time
    n_events: np.ndarray        # event count at each event time

    @property
    def tau(self) -> int:
        return len(self.values) - 1


def km_curve(times: np.ndarray, events: np.ndarray, tau: int) -> KMCurve:
    """Kaplan-Meier estimate S(t) for t in {0, ..., tau}.

    S(t) is the product over event times up to t of (1 - deaths/at_risk);
    Greenwood's formula gives the variance S(t)^2 * sum deaths/(k*(k-deaths)).
    """
    times = np.asarray(times)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise EmptyInputError("no records")

    values = np.ones(tau + 1)
    variance = np.zeros(tau + 1)
    valid = np.ones(tau + 1, dtype=bool)
    ev_times, ev_at_risk, ev_counts = [], [], []

    # the product is kept as an exact integer ratio; one correctly rounded
    # division per step means uncensored curves equal counting frequencies
    num, den = 1, 1
    acc = 0.0
    collapsed = False
    for t in range(1, tau + 1):
        at_risk = int(np.sum(times >= t))
        deaths = int(np.sum((times == t) & events))
        if deaths > 0:
            ev_times.append(t)
            ev_at_risk.append(at_risk)
            ev_counts.append(deaths)
            num *= at_risk - deaths
            den *= at_risk
            if at_risk == deaths:
                collapsed = True
            else:
                acc += deaths / (at_risk * (at_risk - deaths))
        s = num / den
        values[t] = s
        if collapsed:
            valid[t] = False
            variance[t] = 0.0
        else:
            variance[t] = s * s * acc

    return KMCurve(
        values, variance, valid,
        np.array(ev_times, dtype=np.int64),
        np.array(ev_at_risk, dtype=np.int64),
        np.array(ev_counts, dtype=np.int64),
    )


def censoring_km(times: np.ndarray, events: np.ndarray, tau: int) -> KMCurve:
    """KM estimate of the censoring distribution (indicator flipped)."""
    return km_curve(times, ~np.asarray(events, dtype=bool), tau)


@dataclass(frozen=True)
class LogrankResult:
    statistic: float
    passed: bool
    significance: float
    critical: float


def _chi2_critical(significance: float) -> float:
    return float(chi2.ppf(1.0 - significance, df=1))


def logrank_two_sample(
    times_a: np.ndarray, events_a: np.ndarray,
    times_b: np.ndarray, events_b: np.ndarray,
    significance: float = 0.05,
) -> LogrankResult:
    """Two-sample logrank test with the hypergeometric variance.

    passed means the statistic does not exceed the chi-square critical value
    at 1 - significance with one degree of freedom (no detectable difference).
    """
    times_a = np.asarray(times_a)
    times_b = np.asarray(times_b)
    events_a = np.asarray(events_a, dtype=bool)
    events_b = np.asarray(events_b, dtype=bool)
    if times_a.size == 0 or times_b.size == 0:
        raise EmptyInputError("both groups need at least one record")

    pooled_event_times = np.unique(
        np.concatenate([times_a[events_a], times_b[events_b]])
    )
    if pooled_event_times.size == 0:
        raise NoEventsError("no events in either group")

    observed = expected = variance = 0.0
    for t in pooled_event_times:
        k_a = int(np.sum(times_a >= t))
        k_b = int(np.sum(times_b >= t))
        k = k_a + k_b
        e = int(np.sum((times_a == t) & events_a)) + int(np.sum((times_b == t) & events_b))
        e_a = int(np.sum((times_a == t) & events_a))
        observed += e_a
        expected += k_a * e / k
        if k > 1:
            variance += e * (k_a / k) * (1.0 - k_a / k) * (k - e) / (k - 1)

    if variance == 0.0:
        statistic = 0.0 if observed == expected else float("inf")
    else:
        statistic = (observed - expected) ** 2 / variance
    critical = _chi2_critical(significance)
    return LogrankResult(float(statistic), bool(statistic <= critical),
                         significance, critical)


def logrank_one_sample(
    times: np.ndarray, events: np.ndarray,
    reference: np.ndarray, significance: float = 0.05,
) -> LogrankResult:
    """One-sample logrank test of records against a reference survival curve.

    The reference hazard is h(t) = 1 - S(t)/S(t-1); expected events are the
    at-risk counts weighted by h, and the statistic is (O - E)^2 / E. A
    reference with zero expected events but observed ones yields +inf.
    """
    times = np.asarray(times)
    events = np.asarray(events, dtype=bool)
    ref = np.asarray(getattr(reference, "values", reference), dtype=np.float64)
    if times.size == 0:
        raise EmptyInputError("no records")
    tau = len(ref) - 1

    observed = float(np.sum(events))
    expected = 0.0
    for t in range(1, tau + 1):
        at_risk = int(np.sum(times >= t))
        if at_risk == 0:
            continue
        if ref[t - 1] <= 0.0:
            raise ZeroReferenceSurvivalError(t)
        h = 1.0 - ref[t] / ref[t - 1]
        expected += at_risk * h

    critical = _chi2_critical(significance)
    if expected == 0.0:
        statistic = float("inf") if observed > 0 else 0.0
    else:
        statistic = (observed - expected) ** 2 / expected
    return LogrankResult(float(statistic), bool(statistic <= critical),
                         significance, critical)
