"""Association accuracy, label error rate and related sequence metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np


class MetricError(ValueError):
    pass


def lcs2(a, b) -> int:
    a, b = list(a), list(b)
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def lcs4(out_a, out_v, gt_a, gt_v) -> int:
    """Length of the longest sequence that is a subsequence of all four."""
    s = [list(x) for x in (out_a, out_v, gt_a, gt_v)]
    if any(len(x) == 0 for x in s):
        return 0
    # only symbols present in all four inputs can contribute
    common = set(s[0]).intersection(*s[1:])
    if not common:
        return 0
    A, B, G, H = ([c for c in x if c in common] for x in s)
    nb, ng, nh = len(B), len(G), len(H)
    L = np.zeros((len(A) + 1, nb + 1, ng + 1, nh + 1), dtype=np.int64)
    for i in range(1, len(A) + 1):
        a = A[i - 1]
        for j in range(1, nb + 1):
            b = B[j - 1]
            for k in range(1, ng + 1):
                g = G[k - 1]
                for l in range(1, nh + 1):
                    if a == b == g == H[l - 1]:
                        L[i, j, k, l] = L[i - 1, j - 1, k - 1, l - 1] + 1
                    else:
                        L[i, j, k, l] = max(L[i - 1, j, k, l], L[i, j - 1, k, l],
                                            L[i, j, k - 1, l], L[i, j, k, l - 1])
    return int(L[-1, -1, -1, -1])


def edit_distance(a, b) -> int:
    """Levenshtein distance with unit costs."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def association_accuracy(batch) -> float:
    """``sum lcs4(out_a, out_v, gt_a, gt_v) / sum lcs2(gt_a, gt_v)``."""
    num = den = 0
    for out_a, out_v, gt_a, gt_v in batch:
        num += lcs4(out_a, out_v, gt_a, gt_v)
        den += lcs2(gt_a, gt_v)
    if den == 0:
        raise MetricError("no shared ground truth")
    return num / den


def label_error_rate(batch) -> float:
    rates = []
    for output, gt in batch:
        if len(gt) == 0:
            raise MetricError("empty ground truth")
        rates.append(edit_distance(output, gt) / len(gt))
    if not rates:
        raise MetricError("empty batch")
    return float(np.mean(rates))


def binding_consistency(assign_v, assign_a, vocab=None) -> float:
    """Fraction of concepts bound to the same channel by both modalities."""
    assign_v, assign_a = np.asarray(assign_v), np.asarray(assign_a)
    concepts = range(len(assign_v)) if vocab is None else list(vocab)
    concepts = list(concepts)
    if not concepts:
        return 0.0
    return sum(int(assign_v[c] == assign_a[c]) for c in concepts) / len(concepts)


@dataclass
class SampleScore:
    """Per-sample integer terms; batch metrics are sums/means of these."""

    lcs4: int
    lcs2: int
    ed_v: int
    len_v: int
    ed_a: int
    len_a: int
    missing: int = 0


def score_sample(out_v, out_a, gt_v, gt_a, missing: int = 0) -> SampleScore:
    return SampleScore(lcs4(out_a, out_v, gt_a, gt_v), lcs2(gt_a, gt_v),
                       edit_distance(out_v, gt_v), len(gt_v),
                       edit_distance(out_a, gt_a), len(gt_a), missing)


def summarize(scores) -> dict:
    scores = list(scores)
    den = sum(s.lcs2 for s in scores)
    if den == 0:
        raise MetricError("no shared ground truth")
    return {
        "aacc": sum(s.lcs4 for s in scores) / den,
        "ler_visual": float(np.mean([s.ed_v / s.len_v for s in scores])),
        "ler_audio": float(np.mean([s.ed_a / s.len_a for s in scores])),
    }


@dataclass
class EvalReport:
    aacc: float
    aacc_std: float
    ler_visual: float
    ler_visual_std: float
    ler_audio: float
    ler_audio_std: float
    binding_consistency: float
    n_samples: int
    repeats: int
    by_missing: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["missing", "n", "aacc", "ler_v", "ler_a"])
        for row in self.by_missing:
            w.writerow([row["missing"], row["n"], f"{row['aacc']:.6f}",
                        f"{row['ler_visual']:.6f}", f"{row['ler_audio']:.6f}"])
        return buf.getvalue()


def build_report(scores, binding: float, rng, repeats: int = 5,
                 fraction: float = 0.5) -> EvalReport:
    """Mean and std of the metrics over ``repeats`` random subsets.

    Each subset holds ``fraction`` of the samples drawn without replacement.
    """
    scores = list(scores)
    n = len(scores)
    if n == 0:
        raise MetricError("no samples to evaluate")
    k = max(1, int(round(fraction * n)))
    runs = []
    for _ in range(repeats):
        idx = rng.choice(n, k)
        runs.append(summarize(scores[i] for i in idx))
    mean = {key: float(np.mean([r[key] for r in runs])) for key in runs[0]}
    std = {key: float(np.std([r[key] for r in runs])) for key in runs[0]}

    by_missing = []
    for m in sorted({s.missing for s in scores}):
        group = [s for s in scores if s.missing == m]
        try:
            row = summarize(group)
        except MetricError:
            continue
        by_missing.append({"missing": m, "n": len(group), **row})

    return EvalReport(mean["aacc"], std["aacc"], mean["ler_visual"], std["ler_visual"],
                      mean["ler_audio"], std["ler_audio"], binding, n, repeats, by_missing)
