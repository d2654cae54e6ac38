"""Hazard model forwards, reverse-mode gradients, clamping, serialization.

Central finite differences are the oracle for every architecture's
reverse-mode gradient.
"""
import numpy as np
import pytest

from survcal.errors import (
    CorruptArtifactError,
    DimensionMismatchError,
    EmptySubgroupError,
    InvalidDimsError,
    VersionMismatchError,
)
from survcal.model import (
    ARCHITECTURES,
    GradientTape,
    HazardModel,
    deserialize,
    grad_scalar,
    hazards,
    init_model,
    marginal_survival,
    param_count,
    serialize,
    survival,
    survival_cotangent_to_hazard,
    survival_from_hazards,
)

CASES = [
    ("linear_time", 3, 5, 0),
    ("mlp_time", 2, 4, 8),
    ("recurrent", 3, 6, 5),
]


def fd_gradient(f, theta, step=1e-5):
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        up = theta.copy()
        dn = theta.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (f(up) - f(dn)) / (2 * step)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / (np.linalg.norm(b) + 1e-12)


def test_param_counts():
    assert param_count("linear_time", 3, 5) == 8
    assert param_count("mlp_time", 2, 4, 8) == (2 + 1) * 8 + 8 + 8 + 1
    assert param_count("recurrent", 3, 6, 5) == 2 * ((3 + 1) * 5 + 25 + 5) + 5 + 1


@pytest.mark.parametrize("arch,d,tau,hidden", CASES)
def test_gradient_matches_finite_differences(arch, d, tau, hidden):
    rng = np.random.default_rng(42)
    for trial in range(10):
        model = init_model(arch, d, tau, hidden=hidden, seed=100 + trial)
        n = int(rng.integers(1, 7))
        X = rng.standard_normal((n, d))
        dH = rng.standard_normal((n, tau))

        g = grad_scalar(model, X, dH)

        def f(theta):
            return float(np.sum(dH * hazards(model.with_theta(theta), X)))

        g_fd = fd_gradient(f, model.theta.copy())
        assert rel_err(g, g_fd) < 1e-4, f"{arch} trial {trial}"


@pytest.mark.parametrize("arch,d,tau,hidden", CASES)
def test_hazard_shapes_and_range(arch, d, tau, hidden):
    model = init_model(arch, d, tau, hidden=hidden, seed=1)
    X = np.random.default_rng(0).standard_normal((9, d))
    H = hazards(model, X)
    assert H.shape == (9, tau)
    eps = model.clamp_eps
    assert np.all((H >= eps) & (H <= 1 - eps))


def test_dimension_mismatch():
    model = init_model("linear_time", 3, 5, seed=0)
    with pytest.raises(DimensionMismatchError):
        hazards(model, np.zeros((2, 4)))


def test_clamp_under_adversarial_parameters():
    for arch, d, tau, hidden in CASES:
        model = init_model(arch, d, tau, hidden=hidden, seed=0)
        huge = np.where(np.arange(model.p) % 2 == 0, 1e6, -1e6)
        model = model.with_theta(huge)
        X = np.random.default_rng(3).standard_normal((4, d)) * 10
        H = hazards(model, X)
        eps = model.clamp_eps
        assert np.all((H >= eps) & (H <= 1 - eps))


def test_clamped_hazards_have_zero_gradient():
    model = init_model("linear_time", 2, 3, seed=0)
    # drive every pre-activation far into saturation
    model = model.with_theta(np.full(model.p, 50.0))
    X = np.ones((3, 2))
    tape = GradientTape(model, X)
    assert np.all(tape.hazards == 1 - model.clamp_eps)
    g = tape.gradient(np.ones((3, 3)))
    np.testing.assert_allclose(g, 0.0, atol=0)


def test_survival_chain():
    H = np.array([[0.5, 0.5], [0.1, 0.2]])
    S = survival_from_hazards(H)
    np.testing.assert_allclose(S, [[1, 0.5, 0.25], [1, 0.9, 0.72]], atol=1e-15)


@pytest.mark.parametrize("arch,d,tau,hidden", CASES)
def test_survival_properties(arch, d, tau, hidden):
    model = init_model(arch, d, tau, hidden=hidden, seed=5)
    X = np.random.default_rng(7).standard_normal((6, d))
    S = survival(model, X)
    assert S.shape == (6, tau + 1)
    np.testing.assert_allclose(S[:, 0], 1.0)
    assert np.all(np.diff(S, axis=1) < 0)  # hazards are strictly positive
    assert np.all(S > 0)


def test_survival_cotangent_chain_matches_finite_differences():
    rng = np.random.default_rng(9)
    H = rng.uniform(0.05, 0.6, size=(4, 6))
    dS = rng.standard_normal((4, 7))
    dS[:, 0] = 0.0
    dH = survival_cotangent_to_hazard(survival_from_hazards(H), H, dS)

    def f(h_flat):
        return float(np.sum(dS * survival_from_hazards(h_flat.reshape(4, 6))))

    g_fd = fd_gradient(f, H.ravel().copy(), step=1e-6)
    assert rel_err(dH.ravel(), g_fd) < 1e-6


def test_marginal_survival():
    model = init_model("linear_time", 2, 4, seed=3)
    X = np.random.default_rng(1).standard_normal((5, 2))
    marg = marginal_survival(model, X)
    np.testing.assert_allclose(marg, survival(model, X).mean(axis=0), atol=0)
    with pytest.raises(EmptySubgroupError):
        marginal_survival(model, np.zeros((0, 2)))


def test_init_deterministic_and_seed_sensitive():
    a = init_model("mlp_time", 3, 5, hidden=4, seed=11)
    b = init_model("mlp_time", 3, 5, hidden=4, seed=11)
    c = init_model("mlp_time", 3, 5, hidden=4, seed=12)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert not np.array_equal(a.theta, c.theta)


def test_init_validation():
    with pytest.raises(InvalidDimsError):
        init_model("linear_time", 0, 5, seed=0)
    with pytest.raises(InvalidDimsError):
        init_model("mlp_time", 2, 5, hidden=0, seed=0)
    with pytest.raises(InvalidDimsError):
        init_model("nope", 2, 5, seed=0)
    with pytest.raises(InvalidDimsError):
        HazardModel("linear_time", 2, 3, 0, 1e-6, np.zeros(4))


@pytest.mark.parametrize("arch,d,tau,hidden", CASES)
def test_serialize_round_trip_bitwise(arch, d, tau, hidden, tmp_path):
    model = init_model(arch, d, tau, hidden=hidden, seed=21)
    path = tmp_path / "model.txt"
    serialize(model, path)
    back = deserialize(path)
    assert back.arch == model.arch
    assert (back.d, back.tau, back.hidden) == (model.d, model.tau, model.hidden)
    assert back.clamp_eps == model.clamp_eps
    np.testing.assert_array_equal(back.theta, model.theta)
    X = np.random.default_rng(2).standard_normal((3, d))
    np.testing.assert_array_equal(hazards(back, X), hazards(model, X))


def test_deserialize_version_and_corruption(tmp_path):
    model = init_model("linear_time", 2, 3, seed=0)
    path = tmp_path / "model.txt"
    serialize(model, path)

    lines = path.read_text().splitlines()
    bad = tmp_path / "bad.txt"

    bad.write_text("\n".join(["survcal-model 999 " + " ".join(lines[0].split()[2:])] + lines[1:]))
    with pytest.raises(VersionMismatchError):
        deserialize(bad)

    bad.write_text("\n".join(lines[:-1]))  # drop one parameter
    with pytest.raises(CorruptArtifactError):
        deserialize(bad)

    bad.write_text("\n".join(lines[:1] + ["not-a-number"] + lines[2:]))
    with pytest.raises(CorruptArtifactError):
        deserialize(bad)

    bad.write_text("something else entirely\n")
    with pytest.raises(CorruptArtifactError):
        deserialize(bad)


def test_all_architectures_enumerated():
    assert set(ARCHITECTURES) == {"linear_time", "mlp_time", "recurrent"}
