"""Bidirectional LSTM with a shared softmax projection, trained by BPTT.

Each direction stores its four gates stacked in the order input, forget,
output, cell (``i, f, o, c``), so ``Wx`` is ``4H x n``, ``Wh`` is ``4H x H``
and ``b`` has ``4H`` entries. The per-gate views (``W_xi``, ``W_hf``, ...)
are exposed for inspection and checkpoints.

The output layer concatenates ``[h_fwd, h_rev]`` and applies one projection
to ``C + 1`` channels (``C`` concepts plus the CTC blank) followed by a
row softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .numerics import Rng, as_matrix, softmax_rows

GATES = ("i", "f", "o", "c")
INIT_RANGE = 0.1


class ShapeError(ValueError):
    pass


@dataclass
class TrainConfig:
    hidden_size_visual: int = 40
    hidden_size_audio: int = 100
    learning_rate: float = 1e-4
    momentum: float = 0.9
    concept_learning_rate: float = 1e-3

    def __post_init__(self):
        for name in ("hidden_size_visual", "hidden_size_audio"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name}: must be positive")
        for name in ("learning_rate", "concept_learning_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name}: must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum: must lie in [0, 1)")


@dataclass
class Direction:
    Wx: np.ndarray
    Wh: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.Wh.shape[1]

    def gate(self, kind: str, gate: str) -> np.ndarray:
        """View of one gate block; ``kind`` is ``"x"``, ``"h"`` or ``"b"``."""
        k = GATES.index(gate)
        H = self.hidden
        src = {"x": self.Wx, "h": self.Wh, "b": self.b}[kind]
        return src[k * H:(k + 1) * H]

    def __getattr__(self, name):
        # W_xi, W_hf, b_o, ... as in the usual gate notation
        if name.startswith("W_") and len(name) == 4 and name[2] in "xh" and name[3] in GATES:
            return self.gate(name[2], name[3])
        if name.startswith("b_") and len(name) == 3 and name[2] in GATES:
            return self.gate("b", name[2])
        raise AttributeError(name)


@dataclass
class LstmParams:
    fwd: Direction
    rev: Direction
    W_hz: np.ndarray
    b_z: np.ndarray

    @property
    def n_inputs(self) -> int:
        return self.fwd.Wx.shape[1]

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    @property
    def n_outputs(self) -> int:
        return self.W_hz.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array mapping (arrays are shared, not copied)."""
        return {
            "fwd.Wx": self.fwd.Wx, "fwd.Wh": self.fwd.Wh, "fwd.b": self.fwd.b,
            "rev.Wx": self.rev.Wx, "rev.Wh": self.rev.Wh, "rev.b": self.rev.b,
            "W_hz": self.W_hz, "b_z": self.b_z,
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "LstmParams":
        a = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
        return cls(
            Direction(a["fwd.Wx"], a["fwd.Wh"], a["fwd.b"]),
            Direction(a["rev.Wx"], a["rev.Wh"], a["rev.b"]),
            a["W_hz"], a["b_z"],
        )

    def copy(self) -> "LstmParams":
        return LstmParams.from_arrays(self.arrays())

    def zeros_like(self) -> "LstmParams":
        return LstmParams.from_arrays({k: np.zeros_like(v) for k, v in self.arrays().items()})

    def check(self) -> None:
        n, H, K = self.n_inputs, self.hidden, self.n_outputs
        for d in (self.fwd, self.rev):
            if d.Wx.shape != (4 * H, n) or d.Wh.shape != (4 * H, H) or d.b.shape != (4 * H,):
                raise ShapeError("inconsistent gate shapes")
        if self.W_hz.shape != (K, 2 * H) or self.b_z.shape != (K,):
            raise ShapeError("inconsistent output projection shapes")


@dataclass
class DirectionCache:
    x: np.ndarray  # inputs in processing order
    gates: np.ndarray  # T x 4H activations (i, f, o sigmoid; g tanh)
    c: np.ndarray  # T x H cell states
    tanh_c: np.ndarray
    h: np.ndarray  # T x H outputs in processing order


@dataclass
class LstmCache:
    fwd: DirectionCache
    rev: DirectionCache
    hcat: np.ndarray  # T x 2H, time-aligned [h_fwd, h_rev]
    z: np.ndarray  # softmax outputs

    def gate_values(self, direction: str, gate: str) -> np.ndarray:
        dc = getattr(self, direction)
        H = dc.c.shape[1]
        k = GATES.index(gate)
        return dc.gates[:, k * H:(k + 1) * H]


def init_params(rng: Rng, n: int, H: int, C: int) -> LstmParams:
    """Uniform(-0.1, 0.1) weights, zero biases; output has ``C + 1`` channels."""
    if min(n, H, C) <= 0:
        raise ShapeError("dimensions must be positive")

    def u(*shape):
        return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)

    fwd = Direction(u(4 * H, n), u(4 * H, H), np.zeros(4 * H))
    rev = Direction(u(4 * H, n), u(4 * H, H), np.zeros(4 * H))
    return LstmParams(fwd, rev, u(C + 1, 2 * H), np.zeros(C + 1))


def _run_direction(d: Direction, x: np.ndarray) -> DirectionCache:
    gates, c, tanh_c, h = _kernels.lstm_direction_forward(
        np.ascontiguousarray(x), np.ascontiguousarray(d.Wx), np.ascontiguousarray(d.Wh), d.b)
    return DirectionCache(x, gates, c, tanh_c, h)


def lstm_forward(params: LstmParams, x) -> tuple[np.ndarray, LstmCache]:
    """Run both directions over ``x`` (T x n); returns ``(z, cache)``."""
    x = as_matrix(x, "x")
    if x.shape[0] < 1:
        raise ShapeError("empty input sequence")
    if x.shape[1] != params.n_inputs:
        raise ShapeError(f"input dim {x.shape[1]} != {params.n_inputs}")
    fwd = _run_direction(params.fwd, x)
    rev = _run_direction(params.rev, x[::-1])
    hcat = np.hstack([fwd.h, rev.h[::-1]])
    z = softmax_rows(hcat @ params.W_hz.T + params.b_z)
    return z, LstmCache(fwd, rev, hcat, z)


def _backprop_direction(d: Direction, dc: DirectionCache, dh_out: np.ndarray) -> Direction:
    dA = _kernels.lstm_direction_backward(np.ascontiguousarray(dh_out), np.ascontiguousarray(d.Wh),
                                          dc.gates, dc.tanh_c, dc.c)
    h_prev = np.vstack([np.zeros((1, dc.h.shape[1])), dc.h[:-1]])
    return Direction(dA.T @ dc.x, dA.T @ h_prev, dA.sum(axis=0))


def lstm_backward(params: LstmParams, cache: LstmCache, delta) -> LstmParams:
    """Gradients of a loss whose derivative w.r.t. the pre-softmax
    activations is ``delta`` (``z - y`` for cross-entropy style targets)."""
    delta = as_matrix(delta, "delta")
    T = cache.hcat.shape[0]
    H = params.hidden
    if delta.shape != (T, params.n_outputs):
        raise ShapeError(f"delta shape {delta.shape} != {(T, params.n_outputs)}")
    if cache.hcat.shape[1] != 2 * H or cache.fwd.x.shape[1] != params.n_inputs:
        raise ShapeError("cache does not match params")
    dW_hz = delta.T @ cache.hcat
    db_z = delta.sum(axis=0)
    dh = delta @ params.W_hz
    g_fwd = _backprop_direction(params.fwd, cache.fwd, dh[:, :H])
    g_rev = _backprop_direction(params.rev, cache.rev, dh[::-1, H:])
    return LstmParams(g_fwd, g_rev, dW_hz, db_z)


def apply_momentum_sgd(params: LstmParams, grads: LstmParams, velocity: LstmParams,
                       lr: float, momentum: float) -> tuple[LstmParams, LstmParams]:
    """In place: ``v <- momentum * v - lr * g``; ``p <- p + v``."""
    p, g, v = params.arrays(), grads.arrays(), velocity.arrays()
    for name, arr in p.items():
        if arr.shape != g[name].shape or arr.shape != v[name].shape:
            raise ShapeError(f"shape mismatch for {name}")
    for name, arr in p.items():
        vel = v[name]
        vel *= momentum
        vel -= lr * g[name]
        arr += vel
    return params, velocity
