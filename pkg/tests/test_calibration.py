"""Curve distances, ECE, and the constraint penalty gradient."""
import numpy as np
import pytest

from survcal.calibration import (
    constraint_penalty,
    ece,
    l2_distance,
    penalty_from_forward,
    variance_adjusted_distance,
)
from survcal.errors import (
    AllTimestepsSkippedError,
    EmptySubgroupError,
    LengthMismatchError,
)
from survcal.estimators import KMCurve, km_curve
from survcal.model import hazards, init_model, survival_from_hazards


def make_km(values, variance, valid=None):
    values = np.asarray(values, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if valid is None:
        valid = np.ones(len(values), dtype=bool)
    return KMCurve(
        values, variance, np.asarray(valid, dtype=bool),
        np.array([], dtype=np.int64), np.array([], dtype=np.int64),
        np.array([], dtype=np.int64),
    )


def test_l2_hand_value():
    pred = [1.0, 0.5, 0.3]
    ref = [1.0, 0.4, 0.1]
    assert l2_distance(pred, ref) == pytest.approx(0.025, abs=1e-15)


def test_l2_ignores_t0_and_is_zero_on_identical():
    pred = [0.7, 0.5, 0.3]
    ref = [1.0, 0.5, 0.3]
    assert l2_distance(pred, ref) == 0.0


def test_l2_length_mismatch():
    with pytest.raises(LengthMismatchError):
        l2_distance([1.0, 0.5], [1.0, 0.5, 0.3])


def test_variance_adjusted_single_usable_timestep():
    ref = make_km([1.0, 0.8, 0.6], [0.0, 0.0025, 0.0], valid=[True, True, True])
    pred = [1.0, 0.9, 0.99]
    # only t=1 has positive variance; |0.1| / 0.05 = 2
    assert variance_adjusted_distance(pred, ref) == pytest.approx(2.0, abs=1e-12)


def test_variance_adjusted_skips_flagged_timesteps():
    ref = make_km(
        [1.0, 0.8, 0.5], [0.0, 0.01, 0.04], valid=[True, True, False]
    )
    pred = [1.0, 0.85, 0.0]  # huge diff at t=2 but that step is flagged
    assert variance_adjusted_distance(pred, ref) == pytest.approx(0.05 / 0.1, abs=1e-12)


def test_variance_adjusted_max_over_usable():
    ref = make_km([1.0, 0.8, 0.6, 0.4], [0.0, 0.01, 0.01, 0.01])
    pred = [1.0, 0.81, 0.66, 0.38]
    assert variance_adjusted_distance(pred, ref) == pytest.approx(0.06 / 0.1, abs=1e-12)


def test_variance_adjusted_all_skipped():
    ref = make_km([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    with pytest.raises(AllTimestepsSkippedError):
        variance_adjusted_distance([1.0, 0.9, 0.8], ref)


def test_ece_hand_value():
    pred = [1.0, 0.55, 0.25]
    ref = [1.0, 0.5, 0.4]
    # bins (0.5, 1]: t=0,1; (0, 0.5]: t=2
    expected = (2 / 3) * abs(0.75 - 0.775) + (1 / 3) * abs(0.4 - 0.25)
    assert ece(pred, ref, M=2) == pytest.approx(expected, abs=1e-12)
    assert ece(pred, ref, M=2) == pytest.approx(0.0667, abs=5e-4)


def test_ece_zero_on_identical():
    rng = np.random.default_rng(1)
    v = np.sort(rng.uniform(0, 1, size=11))[::-1]
    assert ece(v, v.copy(), M=7) == 0.0


def test_ece_uniform_offset():
    rng = np.random.default_rng(2)
    for M in (2, 5, 10):
        ref = np.sort(rng.uniform(0.10, 0.85, size=21))[::-1]
        pred = ref + 0.05
        assert ece(pred, ref, M=M) == pytest.approx(0.05, abs=1e-12)


def test_ece_zero_value_goes_to_first_bin():
    pred = np.array([0.0, 0.0])
    ref = np.array([0.3, 0.1])
    # both entries in bin 1: |mean ref - mean pred| = 0.2
    assert ece(pred, ref, M=4) == pytest.approx(0.2, abs=1e-12)


def test_ece_weights_sum_to_one():
    rng = np.random.default_rng(3)
    pred = rng.uniform(0, 1, size=50)
    ref = pred + 0.01
    assert ece(pred, ref, M=6) == pytest.approx(0.01, abs=1e-12)


def test_penalty_value_and_sign():
    rng = np.random.default_rng(4)
    model = init_model("linear_time", 2, 5, seed=1)
    X = rng.standard_normal((20, 2))
    times = rng.integers(1, 6, size=20)
    ref = km_curve(times, np.ones(20, dtype=bool), 5)
    res = constraint_penalty(model, X, ref, c=0.01, distance="l2")
    marg = survival_from_hazards(hazards(model, X)).mean(axis=0)
    assert res.distance == pytest.approx(l2_distance(marg, ref.values), rel=1e-12)
    assert res.penalty == pytest.approx(res.distance - 0.01, rel=1e-12)
    big_c = constraint_penalty(model, X, ref, c=1e6, distance="l2")
    assert big_c.penalty < 0


def test_penalty_l2_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    for arch, hidden in (("linear_time", 0), ("mlp_time", 5), ("recurrent", 4)):
        model = init_model(arch, 3, 4, hidden=hidden, seed=6)
        X = rng.standard_normal((9, 3))
        times = rng.integers(1, 5, size=9)
        events = rng.random(9) < 0.8
        if not events.any():
            events[0] = True
        ref = km_curve(times, events, 4)

        from survcal.model import GradientTape

        tape = GradientTape(model, X)
        res = penalty_from_forward(
            tape.hazards, survival_from_hazards(tape.hazards), ref, 0.05, "l2"
        )
        g = tape.gradient(res.hazard_cotangents)

        def f(theta):
            m2 = model.with_theta(theta)
            marg = survival_from_hazards(hazards(m2, X)).mean(axis=0)
            return l2_distance(marg, ref.values)

        fd = np.zeros(model.p)
        for i in range(model.p):
            up, dn = model.theta.copy(), model.theta.copy()
            up[i] += 1e-5
            dn[i] -= 1e-5
            fd[i] = (f(up) - f(dn)) / 2e-5
        assert np.linalg.norm(g - fd) / (np.linalg.norm(fd) + 1e-12) < 1e-4


def test_penalty_var_gradient_is_local_subgradient():
    # away from ties the max is locally smooth, so FD applies
    model = init_model("linear_time", 2, 4, seed=9)
    rng = np.random.default_rng(10)
    X = rng.standard_normal((6, 2))
    ref = make_km(
        [1.0, 0.8, 0.6, 0.5, 0.4], [0.0, 0.01, 0.02, 0.02, 0.03]
    )
    from survcal.model import GradientTape

    tape = GradientTape(model, X)
    S = survival_from_hazards(tape.hazards)
    res = penalty_from_forward(tape.hazards, S, ref, 0.0, "var")
    g = tape.gradient(res.hazard_cotangents)

    def f(theta):
        m2 = model.with_theta(theta)
        marg = survival_from_hazards(hazards(m2, X)).mean(axis=0)
        return variance_adjusted_distance(marg, ref)

    fd = np.zeros(model.p)
    for i in range(model.p):
        up, dn = model.theta.copy(), model.theta.copy()
        up[i] += 1e-6
        dn[i] -= 1e-6
        fd[i] = (f(up) - f(dn)) / 2e-6
    assert np.linalg.norm(g - fd) / (np.linalg.norm(fd) + 1e-12) < 1e-4


def test_penalty_var_tie_breaks_to_smallest_t():
    # two timesteps with identical |diff|/sd; the gradient must land on t=1
    H = np.array([[0.5, 0.5]])
    S = survival_from_hazards(H)          # (1, 0.5, 0.25)
    ref = make_km([1.0, 0.6, 0.35], [0.0, 0.01, 0.01])
    res = penalty_from_forward(H, S, ref, 0.0, "var")
    assert res.distance == pytest.approx(1.0, abs=1e-12)
    # cotangent at t=2 flows only from timestep 1's derivative chain
    dh2 = res.hazard_cotangents[0, 1]
    assert dh2 == 0.0


def test_penalty_empty_subgroup():
    model = init_model("linear_time", 2, 3, seed=0)
    ref = make_km([1.0, 0.9, 0.8, 0.7], np.zeros(4))
    with pytest.raises(EmptySubgroupError):
        constraint_penalty(model, np.zeros((0, 2)), ref, 0.1, "l2")
