"""EM-style binding of semantic concepts to output channels.

Orientation: ``z_hat[channel, concept]`` is the evidence that ``concept`` is
coded by ``channel``. An assignment is an integer array ``perm`` with
``perm[concept] = channel``. The blank channel never takes part.
"""

from __future__ import annotations

import numpy as np

Z_FLOOR = 1e-12
GAMMA_FLOOR = 1e-6


class UnknownConceptError(KeyError):
    pass


def init_concept_vectors(C: int) -> np.ndarray:
    """All-ones concept vectors: the first evidence reads raw output means."""
    return np.ones((C, C))


def _concept_log_probs(z, C):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < C:
        raise ValueError(f"z must be T x (C+1) with C={C}, got {z.shape}")
    return np.log(np.maximum(z[:, :C], Z_FLOOR))


def _powered(gamma, logz):
    # P[i, t, ch] = z[t, ch] ** gamma[i, ch]
    return np.exp(gamma[:, None, :] * logz[None, :, :])


def concept_evidence(z, gamma) -> np.ndarray:
    """``z_hat[:, i] = mean_t z_t[:C] ** gamma[i]`` (elementwise power)."""
    gamma = np.asarray(gamma, dtype=np.float64)
    C = gamma.shape[0]
    if gamma.shape != (C, C):
        raise ValueError("gamma must be C x C")
    logz = _concept_log_probs(z, C)
    return _powered(gamma, logz).mean(axis=1).T


def row_column_elimination(z_hat) -> np.ndarray:
    """Greedy assignment: take the largest surviving entry, bind its column
    (concept) to its row (channel), strike both out; repeat ``C`` times.

    Ties go to the smaller row, then the smaller column.
    """
    m = np.array(z_hat, dtype=np.float64)
    C = m.shape[0]
    if m.shape != (C, C) or not np.all(np.isfinite(m)):
        raise ValueError("z_hat must be a finite square matrix")
    perm = np.full(C, -1, dtype=np.int64)
    alive = np.ones((C, C), dtype=bool)
    for _ in range(C):
        masked = np.where(alive, m, -np.inf)
        # argmax on the flattened row-major array already prefers the
        # smaller row, then the smaller column
        row, col = divmod(int(np.argmax(masked)), C)
        perm[col] = row
        alive[row, :] = False
        alive[:, col] = False
    return perm


def assignment_targets(perm) -> np.ndarray:
    """Column ``i`` is the one-hot channel vector bound to concept ``i``."""
    perm = np.asarray(perm)
    C = len(perm)
    e = np.zeros((C, C))
    e[perm, np.arange(C)] = 1.0
    return e


def concept_costs(gamma, z, perm) -> np.ndarray:
    """``cost_i = || z_hat_i - e_i / C ||^2`` for each concept ``i``."""
    C = len(perm)
    resid = concept_evidence(z, gamma) - assignment_targets(perm) / C
    return (resid ** 2).sum(axis=0)


def concept_gradient(gamma, z, perm) -> np.ndarray:
    """Analytic gradient of ``cost_i`` w.r.t. ``gamma[i]`` (row ``i``)."""
    gamma = np.asarray(gamma, dtype=np.float64)
    C = gamma.shape[0]
    logz = _concept_log_probs(z, C)
    P = _powered(gamma, logz)  # C x T x C
    z_hat_rows = P.mean(axis=1)  # [concept, channel]
    dz_hat = (P * logz[None, :, :]).mean(axis=1)
    resid = z_hat_rows - assignment_targets(perm).T / C
    return 2.0 * resid * dz_hat


def update_concept_vectors(gamma, z, perm, lr: float) -> np.ndarray:
    """One gradient step on every concept vector; result clamped >= 1e-6."""
    new = np.asarray(gamma, dtype=np.float64) - lr * concept_gradient(gamma, z, perm)
    return np.maximum(new, GAMMA_FLOOR)


def relabel_transcript(transcript, perm) -> list[int]:
    """Replace each concept by the channel it is bound to."""
    C = len(perm)
    out = []
    for s in transcript:
        s = int(s)
        if not 0 <= s < C:
            raise UnknownConceptError(s)
        out.append(int(perm[s]))
    return out


def inverse_assignment(perm) -> np.ndarray:
    """``inv[channel] = concept``."""
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def is_bijection(perm, C: int | None = None) -> bool:
    perm = np.asarray(perm)
    C = len(perm) if C is None else C
    return len(perm) == C and sorted(perm.tolist()) == list(range(C))
