"""Evaluation metrics: text overlap, detection matching, classification.

Text metrics share one pinned tokenizer so scores are comparable across
runs; its identifier is embedded in every report. METEOR here is the
exact-unigram variant: maximal match count, then the minimum chunk count
over all maximal matchings (searched exactly, not greedily).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InvalidRange, MismatchedIds, UnknownLabel
from .geometry import RotatedBox, count_class, rotated_iou, size_class

TOKENIZER_VERSION = "lower-alnum-v1"
EVAL_SCHEMA = "earthdial-eval/1"

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# METEOR parameters: F-mean recall weight, penalty exponent, penalty weight.
_METEOR_ALPHA = 0.9
_METEOR_BETA = 3.0
_METEOR_GAMMA = 0.5

_CHUNK_SEARCH_BUDGET = 200_000


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""

    return _TOKEN_RE.findall(text.lower())


def _as_tokens(x: str | Sequence[str]) -> list[str]:
    return tokenize(x) if isinstance(x, str) else list(x)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str | Sequence[str], reference: str | Sequence[str], n: int = 1) -> float:
    """Clipped n-gram overlap F1. Zero when either side has no n-grams."""

    if n < 1:
        raise InvalidRange(f"n must be >= 1, got {n}")
    cand = _ngrams(_as_tokens(candidate), n)
    ref = _ngrams(_as_tokens(reference), n)
    total_c = sum(cand.values())
    total_r = sum(ref.values())
    if total_c == 0 or total_r == 0:
        return 0.0
    overlap = sum((cand & ref).values())
    if overlap == 0:
        return 0.0
    p = overlap / total_c
    r = overlap / total_r
    return 2.0 * p * r / (p + r)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a)*len(b))."""

    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str | Sequence[str], reference: str | Sequence[str]) -> float:
    """LCS-based F1. Zero when either side is empty."""

    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2.0 * p * r / (p + r)


def _min_chunks(cand: list[str], ref: list[str], need: dict[str, int]) -> int:
    """Minimum chunk count over all maximal exact-unigram matchings.

    Branch-and-bound over candidate positions in order; ref (and skip)
    choices only branch for duplicated tokens, so ordinary sentences are
    cheap. A node budget caps adversarial inputs; past it the best complete
    alignment found so far is returned (still a valid maximal matching).
    """

    ref_pos: dict[str, list[int]] = {}
    for j, t in enumerate(ref):
        if need.get(t, 0) > 0:
            ref_pos.setdefault(t, []).append(j)
    total = sum(need.values())
    # Candidate occurrence counts at or after each position, per token.
    suffix: list[dict[str, int]] = [dict() for _ in range(len(cand) + 1)]
    running: Counter = Counter()
    for i in range(len(cand) - 1, -1, -1):
        if need.get(cand[i], 0) > 0:
            running[cand[i]] += 1
        suffix[i] = dict(running)

    best = total + 1
    nodes = 0

    def dfs(i: int, rem: dict[str, int], used: set[int], last: tuple[int, int] | None,
            chunks: int, matched: int) -> None:
        nonlocal best, nodes
        if chunks >= best:
            return
        if matched == total:
            best = chunks
            return
        if nodes >= _CHUNK_SEARCH_BUDGET:
            return
        nodes += 1
        t = cand[i]
        n_need = rem.get(t, 0)
        if n_need == 0:
            dfs(i + 1, rem, used, last, chunks, matched)
            return
        options = [j for j in ref_pos[t] if j not in used]
        # Prefer the continuation of the current run so good bounds come early.
        if last is not None and last[0] == i - 1:
            options.sort(key=lambda j: (j != last[1] + 1,))
        for j in options:
            cont = last is not None and last == (i - 1, j - 1)
            rem[t] = n_need - 1
            used.add(j)
            dfs(i + 1, rem, used, (i, j), chunks + (0 if cont else 1), matched + 1)
            used.discard(j)
            rem[t] = n_need
        if suffix[i].get(t, 0) > n_need:
            dfs(i + 1, rem, used, last, chunks, matched)

    dfs(0, dict(need), set(), None, 0, 0)
    return best if best <= total else total


def meteor(candidate: str | Sequence[str], reference: str | Sequence[str]) -> float:
    """Exact-unigram METEOR with fragmentation penalty.

    F_mean = P*R / (alpha*P + (1-alpha)*R); penalty =
    gamma * (chunks/matches)**beta; score = F_mean * (1 - penalty).
    """

    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not cand or not ref:
        return 0.0
    c_counts = Counter(cand)
    r_counts = Counter(ref)
    need = {t: min(c, r_counts[t]) for t, c in c_counts.items() if t in r_counts}
    matches = sum(need.values())
    if matches == 0:
        return 0.0
    p = matches / len(cand)
    r = matches / len(ref)
    f_mean = p * r / (_METEOR_ALPHA * p + (1.0 - _METEOR_ALPHA) * r)
    chunks = _min_chunks(cand, ref, need)
    penalty = _METEOR_GAMMA * (chunks / matches) ** _METEOR_BETA
    return f_mean * (1.0 - penalty)


@dataclass(frozen=True)
class DetectionResult:
    iou_threshold: float
    total_gt: int
    total_pred: int
    matched: int
    by_size: dict
    by_count: dict

    @property
    def accuracy_at_iou(self) -> float:
        return self.matched / self.total_gt

    @property
    def precision(self) -> float:
        return self.matched / self.total_pred if self.total_pred else 0.0

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "total_gt": self.total_gt,
            "total_pred": self.total_pred,
            "matched": self.matched,
            "accuracy_at_iou": self.accuracy_at_iou,
            "precision": self.precision,
            "by_size": self.by_size,
            "by_count": self.by_count,
        }


def _bucket_rate(bucket: dict) -> None:
    for stats in bucket.values():
        stats["accuracy"] = stats["matched"] / stats["total"] if stats["total"] else 0.0


def detection_scores(
    predictions: Mapping[str, Sequence[RotatedBox]],
    ground_truth: Mapping[str, Sequence[RotatedBox]],
    iou_threshold: float = 0.5,
) -> DetectionResult:
    """Greedy one-to-one matching in descending IoU order, per image.

    A ground-truth box counts as detected when matched at or above the
    threshold. Matched counts are invariant to prediction order.
    """

    if not 0.0 < iou_threshold <= 1.0:
        raise InvalidRange(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    if set(predictions) != set(ground_truth):
        missing = set(ground_truth) ^ set(predictions)
        raise MismatchedIds(f"prediction/ground-truth ids differ on {sorted(missing)[:5]}")
    total_gt = sum(len(v) for v in ground_truth.values())
    if total_gt == 0:
        raise InvalidRange("ground truth contains no boxes")
    total_pred = 0
    matched = 0
    by_size = {k: {"matched": 0, "total": 0} for k in ("small", "medium", "large")}
    by_count = {k: {"matched": 0, "total": 0} for k in ("single", "multiple")}
    for image_id in sorted(ground_truth):
        gts = list(ground_truth[image_id])
        preds = list(predictions[image_id])
        total_pred += len(preds)
        if not gts:
            continue
        cc = count_class(len(gts))
        by_count[cc]["total"] += len(gts)
        for g in gts:
            by_size[size_class(g)]["total"] += 1
        pairs = []
        for gi, g in enumerate(gts):
            for pi, p in enumerate(preds):
                iou = rotated_iou(g, p)
                if iou >= iou_threshold:
                    pairs.append((iou, gi, pi))
        pairs.sort(key=lambda x: (-x[0], x[1], x[2]))
        used_g: set[int] = set()
        used_p: set[int] = set()
        for iou, gi, pi in pairs:
            if gi in used_g or pi in used_p:
                continue
            used_g.add(gi)
            used_p.add(pi)
            matched += 1
            by_size[size_class(gts[gi])]["matched"] += 1
            by_count[cc]["matched"] += 1
    _bucket_rate(by_size)
    _bucket_rate(by_count)
    return DetectionResult(
        iou_threshold=iou_threshold,
        total_gt=total_gt,
        total_pred=total_pred,
        matched=matched,
        by_size=by_size,
        by_count=by_count,
    )


def _norm_label(label: str) -> str:
    return label.strip().lower()


def classification_scores(
    predictions: Sequence[str],
    ground_truth: Sequence[str],
    classes: Sequence[str],
    unknown: str = "error",
) -> dict:
    """Accuracy plus per-class and unweighted-average recall.

    Labels match case-insensitively after trimming. A prediction outside
    ``classes`` raises UnknownLabel, or simply scores wrong when
    ``unknown="wrong"``; out-of-set ground truth always raises.
    """

    if unknown not in ("error", "wrong"):
        raise InvalidRange(f"unknown policy must be 'error' or 'wrong', got {unknown!r}")
    if len(predictions) != len(ground_truth):
        raise MismatchedIds(
            f"{len(predictions)} predictions vs {len(ground_truth)} ground-truth labels"
        )
    if not ground_truth:
        raise InvalidRange("no samples to score")
    class_set = [_norm_label(c) for c in classes]
    if len(set(class_set)) != len(class_set) or not class_set:
        raise InvalidRange("classes must be non-empty and unique")
    support: Counter = Counter()
    hits: Counter = Counter()
    correct = 0
    for pred, gt in zip(predictions, ground_truth):
        g = _norm_label(gt)
        if g not in class_set:
            raise UnknownLabel(f"ground-truth label {gt!r} not in class set")
        p = _norm_label(pred)
        if p not in class_set:
            if unknown == "error":
                raise UnknownLabel(f"predicted label {pred!r} not in class set")
            p = None
        support[g] += 1
        if p == g:
            hits[g] += 1
            correct += 1
    per_class = {
        c: {
            "support": support[c],
            "recall": hits[c] / support[c] if support[c] else 0.0,
        }
        for c in class_set
    }
    present = [c for c in class_set if support[c]]
    return {
        "accuracy": correct / len(ground_truth),
        "average_recall": sum(per_class[c]["recall"] for c in present) / len(present),
        "per_class": per_class,
        "n": len(ground_truth),
    }


def multilabel_scores(
    predictions: Sequence[Iterable[str]], ground_truth: Sequence[Iterable[str]]
) -> dict:
    """Mean per-example F1 and exact subset accuracy over label sets."""

    if len(predictions) != len(ground_truth):
        raise MismatchedIds(
            f"{len(predictions)} predictions vs {len(ground_truth)} ground-truth sets"
        )
    if not ground_truth:
        raise InvalidRange("no samples to score")
    f1_sum = 0.0
    exact = 0
    for pred, gt in zip(predictions, ground_truth):
        p = {_norm_label(x) for x in pred}
        g = {_norm_label(x) for x in gt}
        if p == g:
            exact += 1
        if not p and not g:
            f1_sum += 1.0
        elif p and g:
            f1_sum += 2.0 * len(p & g) / (len(p) + len(g))
    n = len(ground_truth)
    return {"example_f1": f1_sum / n, "subset_accuracy": exact / n, "n": n}


@dataclass(frozen=True)
class EvalReport:
    """Serializable evaluation result, one per eval run."""

    task: str
    sample_count: int
    scores: dict
    config: dict = field(default_factory=dict)
    schema: str = EVAL_SCHEMA

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "task": self.task,
            "sample_count": self.sample_count,
            "tokenizer": TOKENIZER_VERSION,
            "config": dict(self.config),
            "scores": dict(self.scores),
        }
