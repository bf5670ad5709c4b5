"""Numeric kernels: sparse propagation, the two-layer GCN with a hand-written backward
pass, Xavier init, Adam, and a central finite-difference gradient checker."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .graph import NormAdj

ACTIVATIONS = ("relu", "prelu", "identity")
PRELU_SLOPE = 0.25


class DivergenceError(FloatingPointError):
    pass


def spmm(adj: NormAdj, dense: np.ndarray) -> np.ndarray:
    """Sparse-dense product; rows are reduced in ascending column order."""
    if adj.matrix.shape[1] != dense.shape[0]:
        raise ValueError(f"spmm shape mismatch: {adj.matrix.shape} @ {dense.shape}")
    return np.asarray(adj.matrix @ dense)


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "prelu":
        return np.where(x > 0, x, x * x.dtype.type(PRELU_SLOPE))
    return x


def _act_grad(pre: np.ndarray, kind: str) -> np.ndarray:
    # subgradient at 0 is 0 for relu and the negative-side slope for prelu
    if kind == "relu":
        return (pre > 0).astype(pre.dtype)
    if kind == "prelu":
        return np.where(pre > 0, 1.0, PRELU_SLOPE).astype(pre.dtype)
    return np.ones_like(pre)


@dataclass
class EncoderParams:
    W1: np.ndarray
    W2: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W1.ndim != 2 or self.W2.ndim != 2 or self.W1.shape[1] != self.W2.shape[0]:
            raise ValueError(f"weights do not chain: {self.W1.shape} -> {self.W2.shape}")

    @property
    def arrays(self) -> list[np.ndarray]:
        return [self.W1, self.W2]

    def replace(self, arrays: Sequence[np.ndarray]) -> "EncoderParams":
        return EncoderParams(arrays[0], arrays[1], self.activation)

    def astype(self, dtype) -> "EncoderParams":
        return EncoderParams(self.W1.astype(dtype), self.W2.astype(dtype), self.activation)


@dataclass
class ForwardCache:
    adj: NormAdj
    X: np.ndarray
    pre: np.ndarray  # A X W1 before the activation
    hidden: np.ndarray
    params: EncoderParams


def init_encoder(in_dim: int, hidden_dim: int, out_dim: int, seed: int, activation: str = "relu") -> EncoderParams:
    ss = np.random.SeedSequence(seed)
    s1, s2 = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    return EncoderParams(xavier_init(in_dim, hidden_dim, s1), xavier_init(hidden_dim, out_dim, s2), activation)


def gcn_forward(params: EncoderParams, adj: NormAdj, X: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Z = A act(A X W1) W2."""
    if X.shape[1] != params.W1.shape[0]:
        raise ValueError(f"features have {X.shape[1]} columns, W1 expects {params.W1.shape[0]}")
    if X.shape[0] != adj.num_nodes:
        raise ValueError(f"features have {X.shape[0]} rows, graph has {adj.num_nodes} nodes")
    pre = spmm(adj, X @ params.W1)
    hidden = _act(pre, params.activation)
    Z = spmm(adj, hidden @ params.W2)
    if not np.all(np.isfinite(Z)):
        raise DivergenceError("encoder produced non-finite embeddings")
    return Z, ForwardCache(adj, X, pre, hidden, params)


def gcn_backward(cache: ForwardCache, dZ: np.ndarray) -> list[np.ndarray]:
    """Gradients [dW1, dW2] of a scalar whose gradient w.r.t. Z is ``dZ``.

    Uses that the propagation matrix is symmetric, so A^T = A.
    """
    if dZ.shape != (cache.adj.num_nodes, cache.params.W2.shape[1]):
        raise ValueError(f"dZ shape {dZ.shape} does not match embeddings")
    g = spmm(cache.adj, dZ)
    dW2 = cache.hidden.T @ g
    d_pre = (g @ cache.params.W2.T) * _act_grad(cache.pre, cache.params.activation)
    dW1 = cache.X.T @ spmm(cache.adj, d_pre)
    return [dW1, dW2]


def xavier_init(rows: int, cols: int, seed: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("dimensions must be positive")
    bound = np.sqrt(6.0 / (rows + cols))
    return np.random.default_rng(seed).uniform(-bound, bound, size=(rows, cols))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> tuple[list, AdamState]:
    """One bias-corrected Adam update. Returns new parameter arrays; ``state`` is updated in place."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    out = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        step = (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        out.append((p - step).astype(p.dtype, copy=False))
    return out, state


def finite_diff_check(
    loss_fn: Callable[[list[np.ndarray]], float],
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Largest relative error between ``grads`` and central differences of ``loss_fn``.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        g = np.asarray(grads[k], dtype=np.float64).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = loss_fn(params)
            flat[idx] = orig - eps
            down = loss_fn(params)
            flat[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise DivergenceError("loss is not finite during finite differencing")
            num = (up - down) / (2 * eps)
            err = abs(g[idx] - num) / max(abs(g[idx]), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


# -- binary matrix container ----------------------------------------------------------
#
# magic "GRMAT001" | uint64 rows | uint64 cols | uint32 itemsize (4 or 8) | uint32 0 |
# row-major little-endian IEEE values

MATRIX_MAGIC = b"GRMAT001"
_HEADER = struct.Struct("<8sQQII")


def write_matrix(fh, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    rows, cols = arr.shape
    fh.write(_HEADER.pack(MATRIX_MAGIC, rows, cols, arr.dtype.itemsize, 0))
    fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def read_matrix(fh) -> np.ndarray:
    head = fh.read(_HEADER.size)
    magic, rows, cols, itemsize, _ = _HEADER.unpack(head)
    if magic != MATRIX_MAGIC:
        raise ValueError(f"bad matrix magic {magic!r}")
    dtype = {4: "<f4", 8: "<f8"}[itemsize]
    data = fh.read(rows * cols * itemsize)
    return np.frombuffer(data, dtype=dtype).reshape(rows, cols).astype(dtype[1:], copy=True)


def save_embeddings(Z: np.ndarray, path) -> None:
    """Write ``path`` (binary matrix) and ``path`` + ``.json`` sidecar."""
    path = Path(path)
    with path.open("wb") as fh:
        write_matrix(fh, Z)
    header = {"rows": int(Z.shape[0]), "cols": int(Z.shape[1]), "dtype": str(Z.dtype), "format": "GRMAT001"}
    path.with_name(path.name + ".json").write_text(json.dumps(header, indent=2) + "\n")


def load_embeddings(path) -> np.ndarray:
    with Path(path).open("rb") as fh:
        return read_matrix(fh)


def save_params(params: EncoderParams, path) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        write_matrix(fh, params.W1)
        write_matrix(fh, params.W2)
    header = {
        "activation": params.activation,
        "shapes": [list(params.W1.shape), list(params.W2.shape)],
        "format": "GRMAT001 x2 (W1, W2)",
    }
    path.with_name(path.name + ".json").write_text(json.dumps(header, indent=2) + "\n")


def load_params(path) -> EncoderParams:
    path = Path(path)
    header = json.loads(path.with_name(path.name + ".json").read_text())
    with path.open("rb") as fh:
        W1 = read_matrix(fh)
        W2 = read_matrix(fh)
    return EncoderParams(W1, W2, header["activation"])
