"""Independent reference implementations used to pin the library's results.

Everything here is deliberately naive: exhaustive search, dense per-pixel
loops, Monte-Carlo sampling. None of it shares code with the package.
"""

from __future__ import annotations

import numpy as np

from earthdial.geometry import RotatedBox, corners


def brute_force_grid(width: int, height: int, min_tiles: int, max_tiles: int) -> float:
    """Minimum achievable |cols/rows - w/h| over the candidate set."""

    target = width / height
    best = float("inf")
    for cols in range(1, max_tiles + 1):
        for rows in range(1, max_tiles + 1):
            if min_tiles <= cols * rows <= max_tiles:
                best = min(best, abs(cols / rows - target))
    return best


def dense_bilinear(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Scalar per-pixel bilinear resize with half-pixel centers."""

    in_h, in_w, ch = src.shape
    out = np.zeros((out_h, out_w, ch), dtype=np.float64)
    for i in range(out_h):
        ry = min(max((i + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1.0)
        y0 = int(ry)
        y1 = min(y0 + 1, in_h - 1)
        fy = ry - y0
        for j in range(out_w):
            rx = min(max((j + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1.0)
            x0 = int(rx)
            x1 = min(x0 + 1, in_w - 1)
            fx = rx - x0
            for k in range(ch):
                out[i, j, k] = (
                    src[y0, x0, k] * (1 - fy) * (1 - fx)
                    + src[y0, x1, k] * (1 - fy) * fx
                    + src[y1, x0, k] * fy * (1 - fx)
                    + src[y1, x1, k] * fy * fx
                )
    return out


def _inside(quad: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # CCW orientation, then points must be left of (or on) every edge.
    x = quad[:, 0]
    y = quad[:, 1]
    if float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)) < 0.0:
        quad = quad[::-1]
    mask = np.ones(len(pts), dtype=bool)
    for e in range(4):
        ex, ey = quad[e]
        dx = quad[(e + 1) % 4, 0] - ex
        dy = quad[(e + 1) % 4, 1] - ey
        mask &= dx * (pts[:, 1] - ey) - dy * (pts[:, 0] - ex) >= 0.0
    return mask


def mc_iou(a: RotatedBox, b: RotatedBox, n: int, rng: np.random.Generator) -> float:
    """Monte-Carlo IoU over the union's bounding box."""

    qa = corners(a)
    qb = corners(b)
    both = np.vstack([qa, qb])
    lo = both.min(axis=0)
    hi = both.max(axis=0)
    pts = lo + rng.random((n, 2)) * (hi - lo)
    in_a = _inside(qa, pts)
    in_b = _inside(qb, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def lcs_by_subsets(a: list[str], b: list[str]) -> int:
    """LCS length by enumerating subsequences of the shorter list.

    Checks subsets in decreasing-size order and returns at the first hit,
    so it is exact but only viable for short lists.
    """

    if len(a) > len(b):
        a, b = b, a
    n = len(a)
    if n == 0:
        return 0
    subsets = sorted(range(1 << n), key=lambda s: -bin(s).count("1"))
    for s in subsets:
        sub = [a[i] for i in range(n) if s >> i & 1]
        if _is_subseq(sub, b):
            return len(sub)
    return 0


def _is_subseq(sub: list[str], seq: list[str]) -> bool:
    it = iter(seq)
    return all(tok in it for tok in sub)


def min_chunks_exhaustive(cand: list[str], ref: list[str]) -> int:
    """Minimum chunk count over all maximal matchings, by full enumeration."""

    from collections import Counter

    c_counts = Counter(cand)
    r_counts = Counter(ref)
    need = {t: min(c, r_counts[t]) for t, c in c_counts.items() if t in r_counts}
    total = sum(need.values())
    if total == 0:
        return 0
    ref_pos = {}
    for j, t in enumerate(ref):
        if need.get(t, 0):
            ref_pos.setdefault(t, []).append(j)

    best = [total]

    def walk(i: int, rem: dict, used: frozenset, pairs: tuple) -> None:
        if len(pairs) == total:
            chunks = 1
            for (pc, pr), (cc, cr) in zip(pairs, pairs[1:]):
                if (cc, cr) != (pc + 1, pr + 1):
                    chunks += 1
            best[0] = min(best[0], chunks)
            return
        if i >= len(cand):
            return
        t = cand[i]
        if rem.get(t, 0):
            for j in ref_pos[t]:
                if j not in used:
                    rem[t] -= 1
                    walk(i + 1, rem, used | {j}, pairs + ((i, j),))
                    rem[t] += 1
        # Skipping is always explored; branches that cannot still reach a
        # maximal matching simply never complete.
        walk(i + 1, rem, used, pairs)

    walk(0, dict(need), frozenset(), ())
    return best[0]
