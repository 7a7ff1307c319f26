"""CTC forward-backward targets and best-path decoding.

The blank is the last channel (index ``C`` of a ``T x (C+1)`` output).
Both lattice variables include the emission at their own frame:

    log_fw[t, u]  log P(frames 0..t emit the prefix ending in state u)
    log_bw[t, u]  log P(frames t..T-1 emit the suffix starting in state u)

so for every frame ``logsumexp_u(log_fw + log_bw - log z[t, label(u)])``
equals ``log_prob``. Targets are the per-frame label posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .numerics import as_matrix, logsumexp

LOG_FLOOR = 1e-300


class CtcInfeasibleError(ValueError):
    pass


@dataclass
class CtcLattice:
    log_fw: np.ndarray
    log_bw: np.ndarray
    log_prob: float
    extended: np.ndarray  # blank-interleaved labeling, length 2k+1


def extend_labels(labels, blank: int) -> np.ndarray:
    labels = [int(l) for l in labels]
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def min_frames(labels) -> int:
    """Fewest frames that can emit ``labels`` (repeats need a blank between)."""
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def ctc_lattice(z, labels) -> CtcLattice:
    z = as_matrix(z, "z")
    T, K = z.shape
    blank = K - 1
    labels = [int(l) for l in labels]
    if any(l < 0 or l >= blank for l in labels):
        raise ValueError("labels must be concept channels 0..C-1")
    if T < min_frames(labels):
        raise CtcInfeasibleError("sequence too short")
    ext = extend_labels(labels, blank)
    S = len(ext)
    logz = np.log(np.maximum(z[:, ext], LOG_FLOOR))  # T x S emissions

    # skip transition u-2 -> u allowed into non-blank states whose label
    # differs from the one two steps back
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    fw, bw = _kernels.ctc_forward_backward(np.ascontiguousarray(logz), skip)

    tail = fw[T - 1, -2:] if S > 1 else fw[T - 1, -1:]
    log_prob = logsumexp(tail)
    if not np.isfinite(log_prob):
        raise CtcInfeasibleError("labeling has zero probability under z")
    return CtcLattice(fw, bw, log_prob, ext)


def ctc_target(lattice: CtcLattice, z) -> np.ndarray:
    """Per-frame posterior over channels, rows normalized to sum to 1."""
    z = as_matrix(z, "z")
    T, K = z.shape
    ext = lattice.extended
    logz = np.log(np.maximum(z[:, ext], LOG_FLOOR))
    occ = lattice.log_fw + lattice.log_bw - logz
    occ = np.exp(occ - occ.max(axis=1, keepdims=True))
    y = np.zeros((T, K))
    for u, c in enumerate(ext):
        y[:, c] += occ[:, u]
    sums = y.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("degenerate all-zero target row")
    return y / sums


def ctc_delta(z, y) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {y.shape}")
    return z - y


def best_path_decode(z, blank: int | None = None) -> list[int]:
    """Argmax per frame (lowest index wins ties), merge repeats, drop blanks."""
    z = np.asarray(z)
    if blank is None:
        blank = z.shape[1] - 1
    best = np.argmax(z, axis=1)
    out = []
    last = -1
    for c in best:
        c = int(c)
        if c != last and c != blank:
            out.append(c)
        last = c
    return out


def ctc_loss(z, labels) -> float:
    """Negative log-likelihood of ``labels`` under ``z``."""
    return -ctc_lattice(z, labels).log_prob
