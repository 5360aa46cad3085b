"""Numeric kernels with a numba fast path and a pure-numpy fallback.

The active backend is chosen at import time from ``EARTHDIAL_BACKEND``
("numba" or "numpy"); when the variable is unset, numba is used if it
imports. :func:`use_backend` switches at runtime. Both implementations run
the same float64 arithmetic, so results are interchangeable.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import UnknownBackend

_SIMPLEX_EPS = 1e-12


def _sample_positions(n_in: int, n_out: int) -> np.ndarray:
    """Half-pixel-center source coordinates for a 1-D resize, edge clamped."""

    scale = n_in / n_out
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    return np.clip(pos, 0.0, n_in - 1.0)


def _bilinear_resize_numpy(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w, _ = src.shape
    ry = _sample_positions(in_h, out_h)
    rx = _sample_positions(in_w, out_w)
    y0 = np.floor(ry).astype(np.intp)
    x0 = np.floor(rx).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ry - y0)[:, None, None]
    fx = (rx - x0)[None, :, None]
    # Lerp in v0 + f*(v1 - v0) form so constant inputs reproduce exactly.
    tl = src[y0[:, None], x0[None, :], :]
    bl = src[y1[:, None], x0[None, :], :]
    top = tl + fx * (src[y0[:, None], x1[None, :], :] - tl)
    bot = bl + fx * (src[y1[:, None], x1[None, :], :] - bl)
    return top + fy * (bot - top)


def _polygon_area_numpy(pts: np.ndarray) -> float:
    if pts.shape[0] < 3:
        return 0.0
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def _ccw_numpy(quad: np.ndarray) -> np.ndarray:
    x = quad[:, 0]
    y = quad[:, 1]
    signed = float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    return quad if signed >= 0.0 else quad[::-1]


def _quad_intersection_area_numpy(quad_a: np.ndarray, quad_b: np.ndarray) -> float:
    subject = _ccw_numpy(quad_a)
    clipper = _ccw_numpy(quad_b)
    poly = [tuple(p) for p in subject]
    for e in range(4):
        ex, ey = clipper[e]
        nx_, ny_ = clipper[(e + 1) % 4]
        dx = nx_ - ex
        dy = ny_ - ey
        out: list[tuple[float, float]] = []
        n = len(poly)
        for j in range(n):
            px, py = poly[j]
            qx, qy = poly[(j + 1) % n]
            dp = dx * (py - ey) - dy * (px - ex)
            dq = dx * (qy - ey) - dy * (qx - ex)
            if dp >= 0.0:
                if dq >= 0.0:
                    out.append((qx, qy))
                else:
                    t = dp / (dp - dq)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
            elif dq >= 0.0:
                t = dp / (dp - dq)
                out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
        if len(out) < 3:
            return 0.0
        poly = out
    return _polygon_area_numpy(np.asarray(poly, dtype=np.float64))


_NUMPY_IMPL = {
    "bilinear_resize": _bilinear_resize_numpy,
    "polygon_area": _polygon_area_numpy,
    "quad_intersection_area": _quad_intersection_area_numpy,
}


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _load_numba_impl() -> dict:
    from . import _kernels_numba as knb

    return {
        "bilinear_resize": knb.bilinear_resize,
        "polygon_area": knb.polygon_area,
        "quad_intersection_area": knb.quad_intersection_area,
    }


_state = {"name": "numpy", "impl": _NUMPY_IMPL}


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _numba_available() else ("numpy",)


def use_backend(name: str) -> None:
    """Select the kernel backend ("numba" or "numpy") for this process."""

    if name == "numpy":
        _state["name"] = "numpy"
        _state["impl"] = _NUMPY_IMPL
        return
    if name == "numba":
        if not _numba_available():
            raise UnknownBackend("backend 'numba' requested but numba is not importable")
        _state["name"] = "numba"
        _state["impl"] = _load_numba_impl()
        return
    raise UnknownBackend(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def backend() -> str:
    return _state["name"]


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize ``(h, w, c)`` float data with half-pixel-center bilinear sampling.

    Identity when the output shape equals the input shape; constant inputs
    stay constant. Values are treated as continuous samples, edge clamped.
    """

    arr = np.ascontiguousarray(src, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (h, w, c) array, got shape {arr.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output shape must be positive, got {(out_h, out_w)}")
    if (out_h, out_w) == arr.shape[:2]:
        return arr.copy()
    return _state["impl"]["bilinear_resize"](arr, int(out_h), int(out_w))


def polygon_area(pts: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as an (n, 2) vertex array."""

    arr = np.ascontiguousarray(pts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (n, 2) array, got shape {arr.shape}")
    return float(_state["impl"]["polygon_area"](arr))


def quad_intersection_area(quad_a: np.ndarray, quad_b: np.ndarray) -> float:
    """Intersection area of two convex quads via Sutherland-Hodgman clipping."""

    a = np.ascontiguousarray(quad_a, dtype=np.float64)
    b = np.ascontiguousarray(quad_b, dtype=np.float64)
    if a.shape != (4, 2) or b.shape != (4, 2):
        raise ValueError(f"expected (4, 2) quads, got {a.shape} and {b.shape}")
    return float(_state["impl"]["quad_intersection_area"](a, b))


use_backend(os.environ.get("EARTHDIAL_BACKEND") or ("numba" if _numba_available() else "numpy"))
