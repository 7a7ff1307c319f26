"""Dynamic time warping between the two networks' output sequences.

Paths are lists of ``(t_visual, t_audio)`` pairs from ``(0, 0)`` to
``(T1 - 1, T2 - 1)``; every step advances one or both indices by one.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class AlignmentError(ValueError):
    pass


def distance_table(a, b) -> np.ndarray:
    """Euclidean distances between every row of ``a`` and every row of ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise AlignmentError(f"incompatible shapes {a.shape} and {b.shape}")
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def accumulate(dist) -> np.ndarray:
    """Cumulative DTW table: ``D[i, j] = dist[i, j] + min`` of the diagonal,
    upper and left predecessors."""
    return _kernels.dtw_accumulate(np.ascontiguousarray(dist, dtype=np.float64))


def backtrace(D) -> list[tuple[int, int]]:
    """Walk back from the end; ties prefer the diagonal, then ``(i-1, j)``."""
    i, j = D.shape[0] - 1, D.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path


def dtw(z_v, z_a) -> tuple[float, list[tuple[int, int]]]:
    """Align two output sequences; returns ``(total_cost, path)``."""
    dist = distance_table(z_v, z_a)
    if dist.size == 0:
        raise AlignmentError("empty sequence")
    D = accumulate(dist)
    return float(D[-1, -1]), backtrace(D)


def check_path(path, T1: int, T2: int) -> None:
    if not path or tuple(path[0]) != (0, 0) or tuple(path[-1]) != (T1 - 1, T2 - 1):
        raise AlignmentError("path must run from (0, 0) to the last cell")
    for (a, b), (c, d) in zip(path, path[1:]):
        if (c - a, d - b) not in ((1, 0), (0, 1), (1, 1)):
            raise AlignmentError(f"illegal step {(a, b)} -> {(c, d)}")


def warp_targets(y_src, path, target_len: int, direction: str) -> np.ndarray:
    """Carry ``y_src`` onto the other modality's time axis along ``path``.

    ``direction`` is ``"v2a"`` (source is the first index of each pair) or
    ``"a2v"``. Several source frames landing on one target frame are
    averaged; rows are renormalized.
    """
    if direction not in ("v2a", "a2v"):
        raise ValueError(f"unknown direction {direction!r}")
    y_src = np.asarray(y_src, dtype=np.float64)
    pairs = np.asarray(path, dtype=np.int64).reshape(-1, 2)
    src, dst = (pairs[:, 0], pairs[:, 1]) if direction == "v2a" else (pairs[:, 1], pairs[:, 0])
    if src.max(initial=-1) >= y_src.shape[0] or dst.max(initial=-1) >= target_len:
        raise AlignmentError("path indices exceed sequence lengths")
    out = np.zeros((target_len, y_src.shape[1]))
    counts = np.zeros(target_len)
    np.add.at(out, dst, y_src[src])
    np.add.at(counts, dst, 1.0)
    if np.any(counts == 0):
        raise AlignmentError("target timestep without an aligned source frame")
    out /= counts[:, None]
    return out / out.sum(axis=1, keepdims=True)
