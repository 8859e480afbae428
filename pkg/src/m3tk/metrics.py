"""Geometric and linguistic evaluation metrics.

Joint/vertex sequences are compared after exact dynamic-time-warping
alignment (full O(T1*T2) dynamic program), with optional per-frame rigid
Procrustes alignment before the error measurement; the DTW path itself is
always computed on raw positions so both modes share one alignment. Text
quality uses corpus BLEU-4 and sentence-averaged ROUGE-L.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, UsageError

Step = tuple[int, int]


@dataclass(frozen=True)
class AlignmentPath:
    """Monotone DTW path from (0,0) to (T1-1, T2-1) in steps of
    (1,0), (0,1), or (1,1)."""

    pairs: tuple[Step, ...]

    def __post_init__(self):
        if not self.pairs or self.pairs[0] != (0, 0):
            raise UsageError("alignment path must start at (0, 0)")
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                raise UsageError(f"invalid path step {(i0, j0)} -> {(i1, j1)}")

    def __len__(self) -> int:
        return len(self.pairs)


def dtw(a: Sequence, b: Sequence,
        frame_dist: Callable) -> tuple[float, AlignmentPath]:
    """Minimal cumulative frame distance over all valid monotone paths.

    Backtracking prefers diagonal, then the shorter-in-a step, which makes
    the returned path deterministic among cost ties.
    """
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise UsageError("dtw requires non-empty sequences")
    cost = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            cost[i, j] = frame_dist(a[i], b[j])

    acc = np.full((n, m), np.inf)
    acc[0, 0] = cost[0, 0]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        for j in range(1, m):
            acc[i, j] = cost[i, j] + min(acc[i - 1, j - 1], acc[i - 1, j],
                                         acc[i, j - 1])

    pairs: list[Step] = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            options = (acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            pick = int(np.argmin(options))
            if pick == 0:
                i, j = i - 1, j - 1
            elif pick == 1:
                i -= 1
            else:
                j -= 1
        pairs.append((i, j))
    pairs.reverse()
    return float(acc[n - 1, m - 1]), AlignmentPath(tuple(pairs))


# ---------------------------------------------------------------------------
# rigid alignment


def procrustes_align(x: np.ndarray, y: np.ndarray):
    """Least-squares rigid transform (R, t) minimizing ||R x + t - y||^2.

    No scaling; det(R) = +1 is enforced even for reflection-related sets.
    Requires at least 3 non-collinear points.
    """
    x = np.asarray(x, np.float64)
    y = np.asarray(y, np.float64)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != 3:
        raise UsageError(f"point sets must both be (N, 3), got {x.shape}, {y.shape}")
    if x.shape[0] < 3:
        raise UsageError("need at least 3 points for rigid alignment")

    cx = x.mean(axis=0)
    cy = y.mean(axis=0)
    x0 = x - cx
    y0 = y - cy
    cross = x0.T @ y0
    u, s, vt = np.linalg.svd(cross)
    # collinear (or coincident) point sets leave the rotation underdetermined
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise NumericError("degenerate point configuration (collinear points)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    correction = np.diag([1.0, 1.0, d])
    rotation = vt.T @ correction @ u.T
    translation = cy - rotation @ cx
    aligned = x @ rotation.T + translation
    return rotation, translation, aligned


def _frame_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b))


def dtw_jpe(pred: np.ndarray, gt: np.ndarray, align: str = "none") -> float:
    """Mean per-joint L2 error along the DTW path.

    ``align='procrustes'`` rigidly aligns each predicted frame to its
    matched reference frame before measuring (the DTW path itself always
    comes from raw positions, so both modes share one temporal alignment).
    Works for joints or vertices alike; frames are (T, N, 3).
    """
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    for name, arr in (("pred", pred), ("gt", gt)):
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise UsageError(f"{name} must be (T, N, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise UsageError(f"{name} contains non-finite values")
    if pred.shape[1] != gt.shape[1]:
        raise UsageError(
            f"joint count mismatch: pred {pred.shape[1]}, gt {gt.shape[1]}")
    if align not in ("none", "procrustes"):
        raise UsageError(f"align must be 'none' or 'procrustes', got '{align}'")

    _, path = dtw(pred, gt, _frame_l2)
    total = 0.0
    for i, j in path.pairs:
        frame = pred[i]
        if align == "procrustes":
            _, _, frame = procrustes_align(frame, gt[j])
        total += float(np.mean(np.linalg.norm(frame - gt[j], axis=1)))
    return total / len(path)


def dtw_vpe(pred: np.ndarray, gt: np.ndarray, align: str = "none") -> float:
    """Vertex-set alias of dtw_jpe (same contract, vertices as points)."""
    return dtw_jpe(pred, gt, align=align)


# ---------------------------------------------------------------------------
# text metrics


def _ngrams(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def _as_reference_lists(references: Sequence) -> list[list[list[str]]]:
    out = []
    for ref in references:
        if ref and isinstance(ref[0], (list, tuple)):
            out.append([list(r) for r in ref])
        else:
            out.append([list(ref)])
    return out


def bleu4(hypotheses: Sequence[Sequence[str]], references: Sequence,
          max_order: int = 4, smoothing: str = "add1") -> float:
    """Corpus-level BLEU: geometric mean of modified 1..4-gram precisions
    times the brevity penalty.

    Each reference entry is a token list or a list of alternative token
    lists. ``smoothing='add1'`` replaces zero-match orders with
    (0 + 1) / (total + 1); ``'none'`` lets them zero the score. Orders
    longer than every hypothesis are skipped.
    """
    if smoothing not in ("add1", "none"):
        raise UsageError(f"unknown smoothing '{smoothing}'")
    hyps = [list(h) for h in hypotheses]
    refs = _as_reference_lists(references)
    if not hyps or len(hyps) != len(refs):
        raise UsageError("need equally many hypotheses and references, at least one")

    matches = np.zeros(max_order)
    totals = np.zeros(max_order)
    hyp_len = 0
    ref_len = 0
    for hyp, ref_list in zip(hyps, refs):
        hyp_len += len(hyp)
        # effective reference length: closest to the hypothesis length
        lengths = [len(r) for r in ref_list]
        ref_len += min(lengths, key=lambda L: (abs(L - len(hyp)), L))
        for order in range(1, max_order + 1):
            hyp_counts = _ngrams(hyp, order)
            if not hyp_counts:
                continue
            best = Counter()
            for ref in ref_list:
                for gram, count in _ngrams(ref, order).items():
                    best[gram] = max(best[gram], count)
            totals[order - 1] += sum(hyp_counts.values())
            matches[order - 1] += sum(min(c, best[g]) for g, c in hyp_counts.items())

    log_sum = 0.0
    used = 0
    for order in range(max_order):
        if totals[order] == 0:
            continue  # no n-grams of this order exist in the corpus
        used += 1
        if matches[order] > 0:
            precision = matches[order] / totals[order]
        elif smoothing == "add1":
            precision = 1.0 / (totals[order] + 1.0)
        else:
            return 0.0
        log_sum += math.log(precision)
    if used == 0 or hyp_len == 0:
        raise UsageError("empty corpus")
    geo_mean = math.exp(log_sum / used)
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return geo_mean * brevity


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hypotheses: Sequence[Sequence[str]], references: Sequence,
            beta_sq: float = 8.0) -> float:
    """Sentence-level LCS F-measure (recall-weighted, beta^2 = 8 by
    default), averaged over the corpus. Multiple references per sentence
    score by the best F."""
    hyps = [list(h) for h in hypotheses]
    refs = _as_reference_lists(references)
    if not hyps or len(hyps) != len(refs):
        raise UsageError("need equally many hypotheses and references, at least one")

    total = 0.0
    for hyp, ref_list in zip(hyps, refs):
        best = 0.0
        for ref in ref_list:
            lcs = _lcs_length(hyp, ref)
            if lcs == 0 or not hyp or not ref:
                score = 0.0
            else:
                precision = lcs / len(hyp)
                recall = lcs / len(ref)
                score = ((1 + beta_sq) * precision * recall
                         / (recall + beta_sq * precision))
            best = max(best, score)
        total += best
    return total / len(hyps)


# ---------------------------------------------------------------------------
# metric report


METRIC_KEYS = ("dtw_jpe", "dtw_pa_jpe", "dtw_vpe", "bleu4", "rouge_l")


def format_metric_report(per_sequence: Sequence[dict], corpus: dict) -> str:
    """Structured text with stable keys, one line per sequence plus the
    corpus aggregate."""
    lines = ["m3tk-metrics v1"]
    for idx, values in enumerate(per_sequence):
        parts = [f"{k}={values[k]:.9g}" for k in METRIC_KEYS if k in values]
        lines.append(f"seq {idx} " + " ".join(parts))
    parts = [f"{k}={corpus[k]:.9g}" for k in METRIC_KEYS if k in corpus]
    lines.append("corpus " + " ".join(parts))
    return "\n".join(lines) + "\n"


def parse_metric_report(text: str) -> tuple[list[dict], dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "m3tk-metrics v1":
        raise UsageError("not a m3tk-metrics v1 report")
    per_sequence: list[dict] = []
    corpus: dict = {}
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "seq":
            values = {k: float(v) for k, v in (p.split("=", 1) for p in parts[2:])}
            per_sequence.append(values)
        elif parts[0] == "corpus":
            corpus = {k: float(v) for k, v in (p.split("=", 1) for p in parts[1:])}
    return per_sequence, corpus
