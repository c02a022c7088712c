"""Composite Gauss-Legendre panel quadrature helpers.

All contour and real-line integrals in the package run over panel
decompositions built here: uniform panels for smooth integrands,
geometrically graded panels toward a point where the integrand has
structure on a much finer scale (kernel ridges, spectral edges).
"""
from __future__ import annotations

import numpy as np

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gl_rule(order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1], cached."""
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def panel_nodes(breaks: np.ndarray, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Gauss-Legendre on the given panel breaks.

    ``breaks`` is an increasing 1-d array; each consecutive pair is one panel
    carrying ``order`` nodes.  Returns flat arrays (nodes, weights).
    """
    breaks = np.asarray(breaks, dtype=float)
    if breaks.ndim != 1 or breaks.size < 2:
        raise ValueError("need at least one panel")
    if np.any(np.diff(breaks) <= 0):
        raise ValueError("panel breaks must be strictly increasing")
    x, w = gl_rule(order)
    lo = breaks[:-1][:, None]
    hi = breaks[1:][:, None]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo) + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def uniform_breaks(lo: float, hi: float, max_width: float) -> np.ndarray:
    """Uniform panel breaks over [lo, hi] with panel width <= max_width."""
    if hi <= lo:
        raise ValueError("empty interval")
    n = max(1, int(np.ceil((hi - lo) / max_width)))
    return np.linspace(lo, hi, n + 1)


def graded_breaks(lo: float, hi: float, point: float, fine: float,
                  max_width: float, ratio: float = 2.0) -> np.ndarray:
    """Panel breaks on [lo, hi] graded geometrically toward ``point``.

    Panels have width ~``fine`` next to ``point`` and grow by ``ratio``
    until they reach ``max_width``; away from the graded zone the panels
    are uniform with width <= max_width.  ``point`` may lie outside
    [lo, hi], in which case only the near side is refined.
    """
    if hi <= lo:
        raise ValueError("empty interval")
    cuts = {lo, hi}
    # walk outward from the projection of `point` onto [lo, hi]
    anchor = min(max(point, lo), hi)
    for direction in (-1.0, 1.0):
        d = fine
        x = anchor
        while True:
            x_next = x + direction * d
            if direction < 0 and x_next <= lo:
                break
            if direction > 0 and x_next >= hi:
                break
            cuts.add(x_next)
            x = x_next
            d = min(d * ratio, max_width)
    if lo < anchor < hi:
        cuts.add(anchor)
    breaks = np.array(sorted(cuts))
    # split any leftover over-wide panels (far from the anchor)
    out = [breaks[0]]
    for b in breaks[1:]:
        w = b - out[-1]
        if w > max_width * 1.0000001:
            k = int(np.ceil(w / max_width))
            out.extend(np.linspace(out[-1], b, k + 1)[1:])
        else:
            out.append(b)
    return np.asarray(out)


def merge_breaks(*break_sets: np.ndarray) -> np.ndarray:
    """Union of several break arrays over the same interval."""
    allb = np.unique(np.concatenate([np.asarray(b, float) for b in break_sets]))
    keep = [allb[0]]
    for b in allb[1:]:
        if b - keep[-1] > 1e-15 * max(1.0, abs(b)):
            keep.append(b)
    return np.asarray(keep)
