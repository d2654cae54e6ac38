"""Parameterized discrete hazard models with reverse-mode gradients.

A model maps features x to hazards h_t(x) in [eps, 1-eps] for t = 1..tau.
Three architectures:

  linear_time  z[t] = w.x + b_t                       (d + tau parameters)
  mlp_time     z[t] = W2.tanh(W1.[x, t/tau] + b1) + b2
  recurrent    gated cell chain over t with input [x, t/tau], shared weights

All forwards run through a sigmoid followed by a hard clamp to
[eps, 1-eps]; the clamp has zero gradient outside the interior, so
cotangents at clamped hazards are zeroed on the way back.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import (
    CorruptArtifactError,
    DimensionMismatchError,
    EmptySubgroupError,
    InvalidDimsError,
    VersionMismatchError,
)

ARCHITECTURES = ("linear_time", "mlp_time", "recurrent")
ARTIFACT_VERSION = "1"


def _layout(arch: str, d: int, tau: int, hidden: int) -> list[tuple[str, tuple[int, ...]]]:
    if arch == "linear_time":
        return [("w", (d,)), ("bias", (tau,))]
    if arch == "mlp_time":
        return [("W1", (d + 1, hidden)), ("b1", (hidden,)),
                ("W2", (hidden,)), ("b2", (1,))]
    if arch == "recurrent":
        return [("Wg", (d + 1, hidden)), ("Ug", (hidden, hidden)), ("bg", (hidden,)),
                ("Wc", (d + 1, hidden)), ("Uc", (hidden, hidden)), ("bc", (hidden,)),
                ("wo", (hidden,)), ("bo", (1,))]
    raise InvalidDimsError(f"unknown architecture {arch!r}")


def param_count(arch: str, d: int, tau: int, hidden: int = 0) -> int:
    return sum(int(np.prod(shape)) for _, shape in _layout(arch, d, tau, hidden))


@dataclass(frozen=True)
class HazardModel:
    arch: str
    d: int
    tau: int
    hidden: int
    clamp_eps: float
    theta: np.ndarray

    def __post_init__(self):
        theta = np.ascontiguousarray(np.asarray(self.theta, dtype=np.float64))
        expected = param_count(self.arch, self.d, self.tau, self.hidden)
        if theta.shape != (expected,):
            raise InvalidDimsError(
                f"theta has {theta.shape} entries, {self.arch} with d={self.d} "
                f"tau={self.tau} hidden={self.hidden} needs ({expected},)"
            )
        object.__setattr__(self, "theta", theta)

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    def with_theta(self, theta: np.ndarray) -> "HazardModel":
        return replace(self, theta=theta)

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        offset = 0
        for name, shape in _layout(self.arch, self.d, self.tau, self.hidden):
            size = int(np.prod(shape))
            out[name] = self.theta[offset:offset + size].reshape(shape)
            offset += size
        return out


def init_model(
    arch: str, d: int, tau: int, hidden: int = 32,
    clamp_eps: float = 1e-6, seed: int = 0,
) -> HazardModel:
    """Seeded init: weights uniform on +-1/sqrt(fan_in), biases zero."""
    if arch not in ARCHITECTURES:
        raise InvalidDimsError(f"unknown architecture {arch!r}")
    if d < 1 or tau < 1:
        raise InvalidDimsError(f"d and tau must be >= 1, got d={d} tau={tau}")
    if arch in ("mlp_time", "recurrent") and hidden < 1:
        raise InvalidDimsError(f"hidden must be >= 1 for {arch}, got {hidden}")
    if not (0.0 < clamp_eps < 0.5):
        raise InvalidDimsError(f"clamp_eps must be in (0, 0.5), got {clamp_eps}")
    rng = np.random.default_rng(seed)
    chunks = []
    for name, shape in _layout(arch, d, tau, hidden):
        size = int(np.prod(shape))
        if name in ("bias", "b1", "b2", "bg", "bc", "bo"):
            chunks.append(np.zeros(size))
        else:
            fan_in = shape[0] if len(shape) > 1 else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=size))
    return HazardModel(arch, d, tau, hidden, clamp_eps, np.concatenate(chunks))


def _time_encoding(tau: int) -> np.ndarray:
    return np.arange(1, tau + 1, dtype=np.float64) / tau


class GradientTape:
    """Forward pass with stored intermediates; .gradient(dH) backpropagates.

    dH are cotangents with respect to the clamped hazards; entries at
    clamped positions are zeroed before the chain rule is applied.
    """

    def __init__(self, model: HazardModel, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != model.d:
            raise DimensionMismatchError(model.d, X.shape[1])
        self.model = model
        self.X = X
        self._forward()

    def _forward(self):
        m = self.model
        P = m.params()
        X = self.X
        n, tau = X.shape[0], m.tau
        if m.arch == "linear_time":
            Z = X @ P["w"][:, None] + P["bias"][None, :]
            self._cache = {}
        elif m.arch == "mlp_time":
            enc = _time_encoding(tau)
            T1 = enc[:, None] * P["W1"][m.d, :][None, :] + P["b1"][None, :]
            pre = (X @ P["W1"][: m.d, :])[:, None, :] + T1[None, :, :]
            A = np.tanh(pre)                       # (n, tau, hidden)
            Z = A @ P["W2"] + P["b2"][0]
            self._cache = {"A": A, "enc": enc}
        elif m.arch == "recurrent":
            enc = _time_encoding(tau)
            H = m.hidden
            XG = X @ P["Wg"][: m.d, :]
            XC = X @ P["Wc"][: m.d, :]
            wg_t, wc_t = P["Wg"][m.d, :], P["Wc"][m.d, :]
            s = np.zeros((n, H))
            gates, cands, states = [], [], []
            Z = np.empty((n, tau))
            for t in range(tau):
                g = expit(XG + enc[t] * wg_t + s @ P["Ug"] + P["bg"])
                c = np.tanh(XC + enc[t] * wc_t + s @ P["Uc"] + P["bc"])
                s_new = (1.0 - g) * s + g * c
                Z[:, t] = s_new @ P["wo"] + P["bo"][0]
                gates.append(g)
                cands.append(c)
                states.append(s_new)
                s = s_new
            self._cache = {"gates": gates, "cands": cands, "states": states, "enc": enc}
        else:
            raise InvalidDimsError(f"unknown architecture {m.arch!r}")

        raw = expit(Z)
        lo, hi = m.clamp_eps, 1.0 - m.clamp_eps
        self._interior = (raw > lo) & (raw < hi)
        self._raw = raw
        self.hazards = np.clip(raw, lo, hi)

    def gradient(self, dH: np.ndarray) -> np.ndarray:
        """Gradient of sum(dH * hazards) with respect to theta, flat (p,)."""
        m = self.model
        P = m.params()
        X = self.X
        dH = np.asarray(dH, dtype=np.float64)
        if dH.shape != self.hazards.shape:
            raise DimensionMismatchError(self.hazards.size, dH.size)
        # clamp kills the gradient outside the interior; sigmoid' = h(1-h)
        dZ = np.where(self._interior, dH, 0.0) * self._raw * (1.0 - self._raw)

        grads: dict[str, np.ndarray] = {}
        if m.arch == "linear_time":
            grads["w"] = (X.T @ dZ).sum(axis=1)
            grads["bias"] = dZ.sum(axis=0)
        elif m.arch == "mlp_time":
            A, enc = self._cache["A"], self._cache["enc"]
            grads["b2"] = np.array([dZ.sum()])
            grads["W2"] = np.tensordot(dZ, A, axes=([0, 1], [0, 1]))
            dA = dZ[:, :, None] * P["W2"][None, None, :]
            dpre = dA * (1.0 - A * A)
            dW1 = np.empty((m.d + 1, m.hidden))
            dpre_t = dpre.sum(axis=1)              # (n, hidden)
            dW1[: m.d, :] = X.T @ dpre_t
            dW1[m.d, :] = np.tensordot(enc, dpre.sum(axis=0), axes=(0, 0))
            grads["W1"] = dW1
            grads["b1"] = dpre_t.sum(axis=0)
        elif m.arch == "recurrent":
            gates, cands, states = (
                self._cache["gates"], self._cache["cands"], self._cache["states"]
            )
            enc = self._cache["enc"]
            n, H = X.shape[0], m.hidden
            dWg = np.zeros((m.d + 1, H))
            dUg = np.zeros((H, H))
            dbg = np.zeros(H)
            dWc = np.zeros((m.d + 1, H))
            dUc = np.zeros((H, H))
            dbc = np.zeros(H)
            dwo = np.zeros(H)
            dbo = 0.0
            ds = np.zeros((n, H))
            for t in range(m.tau - 1, -1, -1):
                s_prev = states[t - 1] if t > 0 else np.zeros((n, H))
                g, c, s_t = gates[t], cands[t], states[t]
                dz = dZ[:, t]
                dwo += s_t.T @ dz
                dbo += dz.sum()
                ds = ds + dz[:, None] * P["wo"][None, :]
                dg = ds * (c - s_prev)
                dc = ds * g
                dPG = dg * g * (1.0 - g)
                dPC = dc * (1.0 - c * c)
                dWg[: m.d, :] += X.T @ dPG
                dWg[m.d, :] += enc[t] * dPG.sum(axis=0)
                dUg += s_prev.T @ dPG
                dbg += dPG.sum(axis=0)
                dWc[: m.d, :] += X.T @ dPC
                dWc[m.d, :] += enc[t] * dPC.sum(axis=0)
                dUc += s_prev.T @ dPC
                dbc += dPC.sum(axis=0)
                ds = ds * (1.0 - g) + dPG @ P["Ug"].T + dPC @ P["Uc"].T
            grads = {"Wg": dWg, "Ug": dUg, "bg": dbg,
                     "Wc": dWc, "Uc": dUc, "bc": dbc,
                     "wo": dwo, "bo": np.array([dbo])}

        flat = [grads[name].ravel() for name, _ in _layout(m.arch, m.d, m.tau, m.hidden)]
        return np.concatenate(flat)


def hazards(model: HazardModel, X: np.ndarray) -> np.ndarray:
    """Clamped hazards, shape (n, tau)."""
    return GradientTape(model, X).hazards


def survival_from_hazards(H: np.ndarray) -> np.ndarray:
    """S(t) = prod_{l<=t} (1 - h_l) on {0..tau}, S(0) = 1. Shape (n, tau+1)."""
    H = np.asarray(H)
    n = H.shape[0]
    return np.concatenate(
        [np.ones((n, 1)), np.cumprod(1.0 - H, axis=1)], axis=1
    )


def survival(model: HazardModel, X: np.ndarray) -> np.ndarray:
    return survival_from_hazards(hazards(model, X))


def marginal_survival(model: HazardModel, X: np.ndarray) -> np.ndarray:
    """Mean survival curve over the rows of X, shape (tau+1,)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[0] == 0:
        raise EmptySubgroupError("marginal over an empty set of rows")
    return survival(model, X).mean(axis=0)


def survival_cotangent_to_hazard(
    S: np.ndarray, H: np.ndarray, dS: np.ndarray
) -> np.ndarray:
    """Chain survival cotangents through S(t) = prod (1-h): returns dH.

    dS has shape (n, tau+1); its t=0 column is ignored (S(0) is constant).
    """
    M = dS[:, 1:] * S[:, 1:]
    rev = np.flip(np.cumsum(np.flip(M, axis=1), axis=1), axis=1)
    return -rev / (1.0 - H)


def grad_scalar(model: HazardModel, X: np.ndarray, dH: np.ndarray) -> np.ndarray:
    """One-shot gradient of sum(dH * hazards(X)) with respect to theta."""
    return GradientTape(model, X).gradient(dH)


# ---------------------------------------------------------------------------
# Plain-text model artifact
# ---------------------------------------------------------------------------


def serialize(model: HazardModel, path: str | Path) -> None:
    path = Path(path)
    header = (
        f"survcal-model {ARTIFACT_VERSION} arch={model.arch} d={model.d} "
        f"tau={model.tau} hidden={model.hidden} clamp_eps={model.clamp_eps:.17g}"
    )
    lines = [header] + [format(v, ".17g") for v in model.theta]
    path.write_text("\n".join(lines) + "\n")


def deserialize(path: str | Path) -> HazardModel:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("survcal-model"):
        raise CorruptArtifactError(f"{path} is not a model artifact")
    head = lines[0].split()
    if len(head) < 2 or head[1] != ARTIFACT_VERSION:
        raise VersionMismatchError(head[1] if len(head) > 1 else "?")
    fields = {}
    for token in head[2:]:
        if "=" not in token:
            raise CorruptArtifactError(f"bad header token {token!r}")
        k, v = token.split("=", 1)
        fields[k] = v
    try:
        arch = fields["arch"]
        d = int(fields["d"])
        tau = int(fields["tau"])
        hidden = int(fields["hidden"])
        clamp_eps = float(fields["clamp_eps"])
    except (KeyError, ValueError) as exc:
        raise CorruptArtifactError(f"bad header in {path}: {exc}") from None
    expected = param_count(arch, d, tau, hidden)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != expected:
        raise CorruptArtifactError(
            f"{path} holds {len(body)} parameters, header implies {expected}"
        )
    try:
        theta = np.array([float(ln) for ln in body])
    except ValueError as exc:
        raise CorruptArtifactError(f"bad parameter line in {path}: {exc}") from None
    return HazardModel(arch, d, tau, hidden, clamp_eps, theta)
