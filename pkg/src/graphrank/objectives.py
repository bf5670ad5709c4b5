"""Similarities, negative samplers, the margin rank loss and the InfoNCE baseline.

Losses return the mean loss together with gradients for both embedding
matrices. Anchors live in view 1; positives and negatives come from view 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numkit import DivergenceError

log = logging.getLogger(__name__)

SIMILARITIES = ("dot", "cosine")
ALL_NODES = "all"


@dataclass
class LossOutput:
    value: float
    dZ1: np.ndarray
    dZ2: np.ndarray


def similarity(a: np.ndarray, b: np.ndarray, kind: str = "dot") -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape} vs {b.shape}")
    if kind == "dot":
        return float(a @ b)
    if kind == "cosine":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            log.warning("cosine similarity with a zero vector is taken as 0")
            return 0.0
        return float(a @ b / (na * nb))
    raise ValueError(f"unknown similarity {kind!r}")


# -- negative sampling --------------------------------------------------------------


def _distinct_rows(draw, n_rows, k, n_choices, rng):
    """(n_rows, k) draws from range(n_choices); rows redrawn until entries are distinct."""
    out = draw(rng.integers(0, n_choices, size=(n_rows, k)))
    if k > 1:
        srt = np.sort(out, axis=1)
        dup = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        for r in dup:
            out[r] = draw(rng.choice(n_choices, size=k, replace=False)[None, :], rows=np.array([r]))[0]
    return out


def sample_negatives(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """For each anchor ``i``, ``k`` distinct indices uniform over ``{0..n-1} \\ {i}``."""
    if n < 2:
        raise ValueError("need at least two nodes to sample negatives")
    if k < 1 or k >= n:
        raise ValueError(f"num_negatives must be in [1, n-1], got {k} for n={n}")
    anchors = np.arange(n)[:, None]

    def shift(raw, rows=None):
        a = anchors if rows is None else rows[:, None]
        return raw + (raw >= a)

    return _distinct_rows(shift, n, k, n - 1, rng)


def sample_negatives_label_filtered(labels: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Like :func:`sample_negatives` but only nodes of a different class are eligible."""
    labels = np.asarray(labels)
    n = len(labels)
    out = np.empty((n, k), dtype=np.int64)
    for c in np.unique(labels):
        anchors = np.flatnonzero(labels == c)
        candidates = np.flatnonzero(labels != c)
        if len(candidates) == 0:
            raise ValueError(f"anchors of class {c} have no differently labeled node")
        if k > len(candidates):
            raise ValueError(f"class {c} has only {len(candidates)} candidates for k={k}")
        picked = _distinct_rows(lambda raw, rows=None: raw, len(anchors), k, len(candidates), rng)
        out[anchors] = candidates[picked]
    return out


# -- similarity plumbing ------------------------------------------------------------


def _normalize_rows(Z):
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return Z / safe, safe, norms[:, 0] > 0


def _prepare(Z, kind):
    if kind == "dot":
        return Z, None
    if kind == "cosine":
        U, norms, nonzero = _normalize_rows(Z)
        return U, (U, norms, nonzero)
    raise ValueError(f"unknown similarity {kind!r}")


def _pullback(dU, ctx):
    """Map a gradient w.r.t. normalized rows back to the raw rows."""
    if ctx is None:
        return dU
    U, norms, nonzero = ctx
    dZ = (dU - U * np.sum(U * dU, axis=1, keepdims=True)) / norms
    dZ[~nonzero] = 0.0
    return dZ


def _check_inputs(Z1, Z2):
    if Z1.shape != Z2.shape:
        raise ValueError(f"embedding shapes differ: {Z1.shape} vs {Z2.shape}")
    if not (np.all(np.isfinite(Z1)) and np.all(np.isfinite(Z2))):
        raise DivergenceError("non-finite embeddings")


def _check_negatives(negs, n):
    negs = np.asarray(negs, dtype=np.int64)
    if negs.ndim == 1:
        negs = negs[:, None]
    if negs.shape[0] != n:
        raise ValueError(f"negative assignment has {negs.shape[0]} anchors, expected {n}")
    if negs.size and (negs.min() < 0 or negs.max() >= n):
        raise ValueError("negative index out of range")
    if np.any(negs == np.arange(n)[:, None]):
        raise ValueError("a negative coincides with its anchor")
    return negs


def _scatter_rows(weights, negs, U):
    """out[j] = sum over (i, t) with negs[i, t] == j of weights[i, t] * U[i]."""
    n, k = negs.shape
    anchors = np.repeat(np.arange(n), k)
    mat = sp.csr_matrix((weights.reshape(-1), (negs.reshape(-1), anchors)), shape=(n, n))
    return np.asarray(mat @ U)


# -- rank loss ------------------------------------------------------------------------


def _rank_one_way(Z1, Z2, negs, margin, kind):
    n, k = negs.shape
    U1, ctx1 = _prepare(Z1, kind)
    U2, ctx2 = _prepare(Z2, kind)
    s_pos = np.einsum("ij,ij->i", U1, U2)
    s_neg = np.einsum("ij,ikj->ik", U1, U2[negs])
    slack = margin - (s_pos[:, None] - s_neg)
    active = slack >= 0  # the kink counts as active
    value = float(np.sum(np.where(active, slack, 0.0)) / (n * k))

    w = active.astype(U1.dtype) / U1.dtype.type(n * k)
    w_pos = w.sum(axis=1)
    dU1 = -w_pos[:, None] * U2 + np.einsum("ik,ikj->ij", w, U2[negs])
    dU2 = -w_pos[:, None] * U1 + _scatter_rows(w, negs, U1)
    return value, _pullback(dU1, ctx1), _pullback(dU2, ctx2)


def rank_loss(
    Z1: np.ndarray,
    Z2: np.ndarray,
    negs: np.ndarray,
    margin: float = 0.0,
    sim_kind: str = "dot",
    symmetric: bool = False,
) -> LossOutput:
    """Mean over (anchor, negative) pairs of ``max(0, margin - (sim+ - sim-))``."""
    _check_inputs(Z1, Z2)
    negs = _check_negatives(negs, Z1.shape[0])
    value, dZ1, dZ2 = _rank_one_way(Z1, Z2, negs, margin, sim_kind)
    if symmetric:
        v2, d2, d1 = _rank_one_way(Z2, Z1, negs, margin, sim_kind)
        value, dZ1, dZ2 = 0.5 * (value + v2), 0.5 * (dZ1 + d1), 0.5 * (dZ2 + d2)
    return LossOutput(value, dZ1, dZ2)


# -- InfoNCE --------------------------------------------------------------------------


def _nce_sampled(U1, U2, negs, tau):
    n, k = negs.shape
    logits = np.empty((n, k + 1), dtype=U1.dtype)
    logits[:, 0] = np.einsum("ij,ij->i", U1, U2)
    logits[:, 1:] = np.einsum("ij,ikj->ik", U1, U2[negs])
    logits /= tau
    shift = logits.max(axis=1, keepdims=True)
    expl = np.exp(logits - shift)
    denom = expl.sum(axis=1, keepdims=True)
    value = float(np.mean(np.log(denom[:, 0]) + shift[:, 0] - logits[:, 0]))

    dlog = expl / denom
    dlog[:, 0] -= 1.0
    dlog /= tau * n
    dU1 = dlog[:, :1] * U2 + np.einsum("ik,ikj->ij", dlog[:, 1:], U2[negs])
    dU2 = dlog[:, :1] * U1 + _scatter_rows(dlog[:, 1:], negs, U1)
    return value, dU1, dU2


def _nce_all(U1, U2, tau, block=2048):
    # row blocks bound memory at block x n; reduction order is fixed by the block order
    n = U1.shape[0]
    dU1 = np.empty_like(U1)
    dU2 = np.zeros_like(U2)
    total = 0.0
    for start in range(0, n, block):
        stop = min(start + block, n)
        S = U1[start:stop] @ U2.T
        S /= tau
        rows = np.arange(stop - start)
        pos = S[rows, rows + start].copy()
        shift = S.max(axis=1, keepdims=True)
        S -= shift
        np.exp(S, out=S)
        denom = S.sum(axis=1, keepdims=True)
        total += float(np.sum(np.log(denom[:, 0]) + shift[:, 0] - pos))
        S /= denom
        S[rows, rows + start] -= 1.0
        S /= tau * n
        dU1[start:stop] = S @ U2
        dU2 += S.T @ U1[start:stop]
    return total / n, dU1, dU2


def _nce_one_way(Z1, Z2, negs, tau, kind):
    U1, ctx1 = _prepare(Z1, kind)
    U2, ctx2 = _prepare(Z2, kind)
    if isinstance(negs, str):
        value, dU1, dU2 = _nce_all(U1, U2, tau)
    else:
        value, dU1, dU2 = _nce_sampled(U1, U2, negs, tau)
    return value, _pullback(dU1, ctx1), _pullback(dU2, ctx2)


def infonce_loss(
    Z1: np.ndarray,
    Z2: np.ndarray,
    negs,
    tau: float = 0.5,
    sim_kind: str = "dot",
    symmetric: bool = False,
) -> LossOutput:
    """Mean over anchors of ``-log(exp(s+/tau) / (exp(s+/tau) + sum_j exp(s-_j/tau)))``.

    ``negs`` is an (n, k) index array, or ``"all"`` to contrast every anchor
    with every other node of view 2.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    _check_inputs(Z1, Z2)
    if isinstance(negs, str):
        if negs != ALL_NODES:
            raise ValueError(f"unknown negative mode {negs!r}")
    else:
        negs = _check_negatives(negs, Z1.shape[0])
    value, dZ1, dZ2 = _nce_one_way(Z1, Z2, negs, tau, sim_kind)
    if symmetric:
        v2, d2, d1 = _nce_one_way(Z2, Z1, negs, tau, sim_kind)
        value, dZ1, dZ2 = 0.5 * (value + v2), 0.5 * (dZ1 + d1), 0.5 * (dZ2 + d2)
    if not np.isfinite(value):
        raise DivergenceError("InfoNCE loss is not finite")
    return LossOutput(value, dZ1, dZ2)
