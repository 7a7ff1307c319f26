"""Cross-modal training targets: plain swap and max pooling over shared concepts."""

from __future__ import annotations

import numpy as np

MODES = ("original", "pooled")
GATES = ("channel", "timestep")


def shared_channel_mask(transcript_v, transcript_a, perm, C: int) -> np.ndarray:
    """Boolean mask over ``C + 1`` channels for one modality.

    Channel ``perm[s]`` is set for every concept ``s`` present in both
    transcripts; the blank channel is always set.
    """
    shared = set(int(s) for s in transcript_v) & set(int(s) for s in transcript_a)
    mask = np.zeros(C + 1, dtype=bool)
    mask[C] = True
    for s in shared:
        mask[int(perm[s])] = True
    return mask


def recode_channels(y, perm_from, perm_to) -> np.ndarray:
    """Move each concept's column from channel ``perm_from[s]`` to
    ``perm_to[s]``; the blank (last) column stays put."""
    y = np.asarray(y, dtype=np.float64)
    C = len(perm_from)
    if y.ndim != 2 or y.shape[1] != C + 1 or len(perm_to) != C:
        raise ValueError(f"cannot recode {y.shape} with {C} concepts")
    src = np.empty(C + 1, dtype=np.int64)
    src[np.asarray(perm_to)] = np.asarray(perm_from)
    src[C] = C
    return y[:, src]


def pooled_target(y_own, y_warped, mask, gate: str = "channel") -> np.ndarray:
    """Elementwise max with the warped target on shared channels, own target
    elsewhere; rows renormalized.

    With ``gate="timestep"`` a frame is pooled only when its own target's
    dominant channel is shared; other frames keep the own target whole.
    """
    y_own = np.asarray(y_own, dtype=np.float64)
    y_warped = np.asarray(y_warped, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if y_own.shape != y_warped.shape:
        raise ValueError(f"shape mismatch {y_own.shape} vs {y_warped.shape}")
    if mask.shape != (y_own.shape[1],):
        raise ValueError(f"mask has {mask.shape} entries, expected {y_own.shape[1]}")
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}")
    pool = np.broadcast_to(mask, y_own.shape)
    if gate == "timestep":
        pool = pool & mask[np.argmax(y_own, axis=1)][:, None]
    pooled = np.where(pool, np.maximum(y_own, y_warped), y_own)
    return pooled / pooled.sum(axis=1, keepdims=True)


def multimodal_delta(z, y_own, y_warped, mask, mode: str, gate: str = "channel") -> np.ndarray:
    """``z - target`` with the target picked by ``mode``."""
    z = np.asarray(z, dtype=np.float64)
    if mode == "original":
        target = np.asarray(y_warped, dtype=np.float64)
    elif mode == "pooled":
        target = pooled_target(y_own, y_warped, mask, gate)
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    if target.shape != z.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {target.shape}")
    return z - target
