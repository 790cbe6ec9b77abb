"""Policy/value network: a two-hidden-layer MLP in double precision.

A shared tanh trunk feeds a softmax policy head over the filter actions
and a scalar value head.  Forward, backward, and the Adam optimizer are
implemented directly on numpy arrays so that gradients are exact in
float64 (checkable against finite differences) and training runs are
bit-reproducible from a seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class ShapeMismatch(Exception):
    pass


class DegenerateDistribution(Exception):
    pass


_FIELDS = ("w1", "b1", "w2", "b2", "wp", "bp", "wv", "bv")
_MAGIC = b"ADPK"
_VERSION = 1


@dataclass
class PolicyParameters:
    """Weights/biases, stored (fan_in, fan_out)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wp: np.ndarray  # policy head -> logits over actions
    bp: np.ndarray
    wv: np.ndarray  # value head -> scalar
    bv: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_actions(self) -> int:
        return self.wp.shape[1]

    @property
    def hidden(self) -> tuple[int, int]:
        return self.w1.shape[1], self.w2.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f) for f in _FIELDS]

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(*(a.copy() for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, values: np.ndarray) -> None:
        offset = 0
        for a in self.arrays():
            a[...] = values[offset : offset + a.size].reshape(a.shape)
            offset += a.size
        if offset != values.size:
            raise ShapeMismatch("flat vector length does not match parameters")

    def allfinite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(
    obs_dim: int,
    n_actions: int,
    hidden: tuple[int, int] = (256, 256),
    seed: int = 0,
) -> PolicyParameters:
    """Orthogonal hidden layers, small-scale heads; fully seed-determined."""
    rng = np.random.default_rng(seed)
    h1, h2 = hidden
    return PolicyParameters(
        w1=_orthogonal(rng, obs_dim, h1, gain=np.sqrt(2.0)),
        b1=np.zeros(h1),
        w2=_orthogonal(rng, h1, h2, gain=np.sqrt(2.0)),
        b2=np.zeros(h2),
        wp=_orthogonal(rng, h2, n_actions, gain=0.01),
        bp=np.zeros(n_actions),
        wv=_orthogonal(rng, h2, 1, gain=0.01),
        bv=np.zeros(1),
    )


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(params: PolicyParameters, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """Batch forward pass: (probs (B,A), values (B,), cache for backward)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.obs_dim:
        raise ShapeMismatch(
            f"observation width {x.shape[1]} != input layer {params.obs_dim}"
        )
    h1 = np.tanh(x @ params.w1 + params.b1)
    h2 = np.tanh(h1 @ params.w2 + params.b2)
    logits = h2 @ params.wp + params.bp
    values = (h2 @ params.wv)[:, 0] + params.bv[0]
    logp = log_softmax(logits)
    probs = np.exp(logp)
    cache = {"x": x, "h1": h1, "h2": h2, "logits": logits, "logp": logp, "probs": probs}
    return probs, values, cache


def policy_forward(params: PolicyParameters, obs: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-observation forward: (action probabilities, value)."""
    probs, values, _ = forward(params, np.asarray(obs, dtype=np.float64)[None, :])
    return probs[0], float(values[0])


def backward(
    params: PolicyParameters,
    cache: dict,
    g_logits: np.ndarray,
    g_values: np.ndarray,
) -> PolicyParameters:
    """Gradients of a scalar loss given its gradient at the two heads.

    Returns a PolicyParameters holding d(loss)/d(param) in each slot.
    """
    x, h1, h2 = cache["x"], cache["h1"], cache["h2"]
    g_wp = h2.T @ g_logits
    g_bp = g_logits.sum(axis=0)
    g_wv = (h2 * g_values[:, None]).sum(axis=0)[:, None]
    g_bv = np.array([g_values.sum()])
    g_h2 = g_logits @ params.wp.T + g_values[:, None] @ params.wv.T
    g_z2 = g_h2 * (1.0 - h2 * h2)
    g_w2 = h1.T @ g_z2
    g_b2 = g_z2.sum(axis=0)
    g_h1 = g_z2 @ params.w2.T
    g_z1 = g_h1 * (1.0 - h1 * h1)
    g_w1 = x.T @ g_z1
    g_b1 = g_z1.sum(axis=0)
    return PolicyParameters(g_w1, g_b1, g_w2, g_b2, g_wp, g_bp, g_wv, g_bv)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Sample an index proportional to probs; returns (index, log prob)."""
    probs = np.asarray(probs)
    if np.isnan(probs).any():
        raise DegenerateDistribution("action probabilities contain NaN")
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    idx = min(idx, probs.shape[0] - 1)
    return idx, float(np.log(probs[idx]))


def sample_actions(
    probs: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise categorical sampling for a batch of distributions."""
    probs = np.asarray(probs)
    if np.isnan(probs).any():
        raise DegenerateDistribution("action probabilities contain NaN")
    cum = np.cumsum(probs, axis=1)
    draws = rng.random((probs.shape[0], 1)) * cum[:, -1:]
    idx = (draws > cum).sum(axis=1)
    idx = np.minimum(idx, probs.shape[1] - 1)
    logp = np.log(probs[np.arange(probs.shape[0]), idx])
    return idx, logp


class Adam:
    """Adam with bias correction and optional global-norm gradient clipping."""

    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        grad_clip: float | None = None,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.grad_clip = grad_clip
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: PolicyParameters, grads: PolicyParameters) -> None:
        arrays = params.arrays()
        gs = grads.arrays()
        if self._m is None:
            self._m = [np.zeros_like(a) for a in arrays]
            self._v = [np.zeros_like(a) for a in arrays]
        if self.grad_clip is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in gs))
            if norm > self.grad_clip:
                gs = [g * (self.grad_clip / norm) for g in gs]
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, gs, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def save_params(params: PolicyParameters, path) -> None:
    """Versioned flat binary: shape header then little-endian float64s."""
    h1, h2 = params.hidden
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<5I", _VERSION, params.obs_dim, h1, h2, params.n_actions))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_params(path) -> PolicyParameters:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ShapeMismatch(f"{path} is not a policy parameter file")
        version, obs_dim, h1, h2, n_actions = struct.unpack("<5I", fh.read(20))
        if version != _VERSION:
            raise ShapeMismatch(f"unsupported parameter file version {version}")
        shapes = [
            (obs_dim, h1), (h1,), (h1, h2), (h2,),
            (h2, n_actions), (n_actions,), (h2, 1), (1,),
        ]
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ShapeMismatch(f"truncated parameter file {path}")
            arrays.append(np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape))
    return PolicyParameters(*arrays)
