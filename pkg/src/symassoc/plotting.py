"""Figures written next to the CSV/JSON outputs. Files only, no display."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_sweep(rows, path, title: str | None = None) -> Path:
    """AAcc (with resampling std) and both LERs against the missing count,
    one line per mode."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for mode in sorted({r["mode"] for r in rows}):
        sel = sorted((r for r in rows if r["mode"] == mode), key=lambda r: r["missing"])
        x = [r["missing"] for r in sel]
        ax1.errorbar(x, [100 * r["aacc_mean"] for r in sel],
                     yerr=[100 * r["aacc_std"] for r in sel], marker="o", capsize=3, label=mode)
        ax2.plot(x, [100 * r["ler_v"] for r in sel], marker="o", label=f"{mode} visual")
        ax2.plot(x, [100 * r["ler_a"] for r in sel], marker="s", ls="--", label=f"{mode} audio")
    ax1.set(xlabel="missing elements", ylabel="AAcc (%)", ylim=(0, 105))
    ax2.set(xlabel="missing elements", ylabel="LER (%)")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
        ax.xaxis.get_major_locator().set_params(integer=True)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_report(report, path) -> Path:
    """Per-missing-count breakdown of one evaluation."""
    rows = report.by_missing
    fig, ax = plt.subplots(figsize=(6, 3.6))
    if rows:
        x = np.array([r["missing"] for r in rows])
        w = 0.27
        ax.bar(x - w, [100 * r["aacc"] for r in rows], w, label="AAcc")
        ax.bar(x, [100 * r["ler_visual"] for r in rows], w, label="LER visual")
        ax.bar(x + w, [100 * r["ler_audio"] for r in rows], w, label="LER audio")
        ax.set_xticks(x)
    ax.set(xlabel="missing elements", ylabel="%",
           title=f"AAcc {100 * report.aacc:.1f} ± {100 * report.aacc_std:.1f}")
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_dtw(dist, path_pairs, out, title: str | None = None) -> Path:
    """Frame distance matrix with the warping path on top."""
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(dist, origin="lower", aspect="auto", cmap="viridis")
    p = np.asarray(path_pairs)
    ax.plot(p[:, 1], p[:, 0], color="w", lw=1.2)
    ax.set(xlabel="audio frame", ylabel="visual frame")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="distance")
    return _save(fig, out)


def plot_diagnostics(records, path, window: int = 100) -> Path:
    """Running mean of the per-step losses and assignment churn."""
    recs = [r for r in records if not r.get("skipped")]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    if recs:
        steps = np.array([r["step"] for r in recs])
        k = max(1, min(window, len(recs)))
        kernel = np.ones(k) / k
        for key, label in (("loss_v", "visual"), ("loss_a", "audio")):
            ax1.plot(steps[k - 1:], np.convolve([r[key] for r in recs], kernel, "valid"), label=label)
        for key, label in (("assignment_churn_v", "visual"), ("assignment_churn_a", "audio")):
            ax2.plot(steps[k - 1:], np.convolve([r[key] for r in recs], kernel, "valid"), label=label)
    ax1.set(xlabel="step", ylabel="mean |delta|^2", yscale="log")
    ax2.set(xlabel="step", ylabel="assignment churn")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    return _save(fig, path)
