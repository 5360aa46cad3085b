"""numba-compiled twins of the kernels in ``_kernels``.

Imported lazily; importing this module requires numba. The functions must
implement exactly the same float64 arithmetic as the numpy fallbacks.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def bilinear_resize(src, out_h, out_w):  # pragma: no cover - jit code
    in_h, in_w, ch = src.shape
    out = np.empty((out_h, out_w, ch), dtype=np.float64)
    sy = in_h / out_h
    sx = in_w / out_w
    for i in range(out_h):
        ry = (i + 0.5) * sy - 0.5
        if ry < 0.0:
            ry = 0.0
        elif ry > in_h - 1.0:
            ry = in_h - 1.0
        y0 = int(np.floor(ry))
        y1 = min(y0 + 1, in_h - 1)
        fy = ry - y0
        for j in range(out_w):
            rx = (j + 0.5) * sx - 0.5
            if rx < 0.0:
                rx = 0.0
            elif rx > in_w - 1.0:
                rx = in_w - 1.0
            x0 = int(np.floor(rx))
            x1 = min(x0 + 1, in_w - 1)
            fx = rx - x0
            for k in range(ch):
                # Lerp in v0 + f*(v1 - v0) form so constant inputs
                # reproduce exactly.
                tl = src[y0, x0, k]
                bl = src[y1, x0, k]
                top = tl + fx * (src[y0, x1, k] - tl)
                bot = bl + fx * (src[y1, x1, k] - bl)
                out[i, j, k] = top + fy * (bot - top)
    return out


@njit(cache=True)
def polygon_area(pts):  # pragma: no cover - jit code
    n = pts.shape[0]
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += pts[i, 0] * pts[j, 1] - pts[j, 0] * pts[i, 1]
    return 0.5 * abs(acc)


@njit(cache=True)
def quad_intersection_area(quad_a, quad_b):  # pragma: no cover - jit code
    a = np.empty((4, 2), dtype=np.float64)
    b = np.empty((4, 2), dtype=np.float64)
    sa = 0.0
    sb = 0.0
    for i in range(4):
        j = (i + 1) % 4
        sa += quad_a[i, 0] * quad_a[j, 1] - quad_a[j, 0] * quad_a[i, 1]
        sb += quad_b[i, 0] * quad_b[j, 1] - quad_b[j, 0] * quad_b[i, 1]
    for i in range(4):
        src = i if sa >= 0.0 else 3 - i
        a[i, 0] = quad_a[src, 0]
        a[i, 1] = quad_a[src, 1]
        src = i if sb >= 0.0 else 3 - i
        b[i, 0] = quad_b[src, 0]
        b[i, 1] = quad_b[src, 1]

    # Clipping a quad against four half-planes yields at most 8 vertices.
    poly = np.empty((16, 2), dtype=np.float64)
    nxt = np.empty((16, 2), dtype=np.float64)
    n = 4
    for i in range(4):
        poly[i, 0] = a[i, 0]
        poly[i, 1] = a[i, 1]
    for e in range(4):
        ex = b[e, 0]
        ey = b[e, 1]
        dx = b[(e + 1) % 4, 0] - ex
        dy = b[(e + 1) % 4, 1] - ey
        m = 0
        for j in range(n):
            px = poly[j, 0]
            py = poly[j, 1]
            qx = poly[(j + 1) % n, 0]
            qy = poly[(j + 1) % n, 1]
            dp = dx * (py - ey) - dy * (px - ex)
            dq = dx * (qy - ey) - dy * (qx - ex)
            if dp >= 0.0:
                if dq >= 0.0:
                    nxt[m, 0] = qx
                    nxt[m, 1] = qy
                    m += 1
                else:
                    t = dp / (dp - dq)
                    nxt[m, 0] = px + t * (qx - px)
                    nxt[m, 1] = py + t * (qy - py)
                    m += 1
            elif dq >= 0.0:
                t = dp / (dp - dq)
                nxt[m, 0] = px + t * (qx - px)
                nxt[m, 1] = py + t * (qy - py)
                m += 1
                nxt[m, 0] = qx
                nxt[m, 1] = qy
                m += 1
        if m < 3:
            return 0.0
        for j in range(m):
            poly[j, 0] = nxt[j, 0]
            poly[j, 1] = nxt[j, 1]
        n = m
    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    return 0.5 * abs(acc)
