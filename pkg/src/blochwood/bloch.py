"""Bloch-Floquet transform for cell-indexed data and Brillouin-cell quadrature.

The forward transform of a field with compact cell support is the finite sum

    (J f)(alpha, x) = sum_j f_j(x) exp(2 pi i alpha . j),

an alpha-quasi-periodic field on the reference cell; the inverse recovers the
cell-j restriction by integrating over I = (-1/2, 1/2)^2,

    f_j(x) = integral_I (J f)(alpha, x) exp(-2 pi i alpha . j) d alpha.

Solution families are only square-root smooth across the cutoff circles
|alpha + j| = k, so the quadrature rule is a composite tensor Gauss-Legendre
rule whose panels are dyadically refined toward every cutoff arc of the
truncated mode set.  Nodes that land inside the cutoff tolerance band are
nudged radially off the band (weights are kept, the shift is below the band
width and irrelevant at quadrature accuracy).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .modes import default_cutoff_tol, mode_lattice


@dataclass(frozen=True)
class CellIndexedField:
    """Complex data attached to finitely many lattice cells."""

    cells: np.ndarray   # (m, 2) integer cell indices
    values: np.ndarray  # (m, ...) one field array per cell

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=int).reshape(-1, 2)
        v = np.asarray(self.values, dtype=complex)
        if v.shape[0] != c.shape[0]:
            raise ValueError("one value array per cell required")
        object.__setattr__(self, "cells", c)
        object.__setattr__(self, "values", v)

    def shifted(self, offset) -> "CellIndexedField":
        return CellIndexedField(self.cells + np.asarray(offset, dtype=int), self.values)


def bloch_forward(f: CellIndexedField, alpha) -> np.ndarray:
    """Finite phase-weighted sum over the support cells; exact."""
    a = np.asarray(alpha, dtype=float).reshape(2)
    phases = np.exp(2j * np.pi * (f.cells @ a))
    return np.tensordot(phases, f.values, axes=(0, 0))


def bloch_inverse(samples: np.ndarray, quad: "AlphaQuadrature", cell) -> np.ndarray:
    """Quadrature of the alpha-family against exp(-2 pi i alpha . j).

    ``samples`` holds one field array per quadrature node along axis 0.
    """
    j = np.asarray(cell, dtype=float).reshape(2)
    w = quad.weights * np.exp(-2j * np.pi * (quad.nodes @ j))
    return np.tensordot(w, np.asarray(samples, dtype=complex), axes=(0, 0))


# ---------------------------------------------------------------------------
# graded quadrature


@lru_cache(maxsize=32)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@dataclass(frozen=True)
class AlphaQuadrature:
    """Nodes and weights on the Brillouin cell with cutoff-arc grading."""

    nodes: np.ndarray    # (n, 2)
    weights: np.ndarray  # (n,)
    k: float
    M: int
    cutoff_tol: float
    arcs: np.ndarray     # modes whose cutoff circle meets the closed cell
    n_base: int
    levels: int
    gl_order: int
    panels: np.ndarray = field(repr=False, default=None)  # (p, 4) lo1, lo2, hi1, hi2
    shifted_nodes: int = 0

    @property
    def n(self) -> int:
        return self.nodes.shape[0]


def _circle_crosses_rect(center, k, lo, hi) -> bool:
    # min/max distance from center to the axis-aligned rectangle
    cx = np.clip(center, lo, hi)
    dmin = np.hypot(cx[0] - center[0], cx[1] - center[1])
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    dmax = np.max(np.hypot(corners[:, 0] - center[0], corners[:, 1] - center[1]))
    return dmin <= k <= dmax


def _circle_near_rect(center, k, lo, hi) -> bool:
    # crossing, or within half a panel diameter of the arc: panels adjacent to
    # the kink must shrink with their neighbours or they dominate the error
    cx = np.clip(center, lo, hi)
    dmin = np.hypot(cx[0] - center[0], cx[1] - center[1])
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    dmax = np.max(np.hypot(corners[:, 0] - center[0], corners[:, 1] - center[1]))
    margin = 0.5 * np.hypot(hi[0] - lo[0], hi[1] - lo[1])
    return dmin - margin <= k <= dmax + margin


def cutoff_arcs(k: float, M: int) -> np.ndarray:
    """Modes of the truncated set whose cutoff circle meets the closed cell."""
    lo = np.array([-0.5, -0.5])
    hi = np.array([0.5, 0.5])
    hits = [j for j in mode_lattice(M) if _circle_crosses_rect(-j.astype(float), k, lo, hi)]
    return np.asarray(hits, dtype=int).reshape(-1, 2)


def build_alpha_quadrature(k: float, M: int, n_base: int = 16, levels: int = 4,
                           gl_order: int = 5, cutoff_tol: float | None = None,
                           gl_order_fine: int | None = None) -> AlphaQuadrature:
    """Tensor Gauss-Legendre base rule with dyadic refinement toward cutoff arcs.

    Refined panels default to a lower local order: near the arcs the error is
    set by the square-root kink, not by the panel rule.
    """
    if n_base < 2:
        raise ValueError("need at least a 2x2 base partition")
    if cutoff_tol is None:
        cutoff_tol = default_cutoff_tol(k)
    if gl_order_fine is None:
        gl_order_fine = max(3, gl_order - 2)
    arcs = cutoff_arcs(k, M)
    centers = -arcs.astype(float)

    h = 1.0 / n_base
    stack = [(np.array([-0.5 + i * h, -0.5 + j * h]),
              np.array([-0.5 + (i + 1) * h, -0.5 + (j + 1) * h]), 0)
             for i in range(n_base) for j in range(n_base)]
    leaves = []
    while stack:
        lo, hi, lvl = stack.pop()
        near = any(_circle_near_rect(c, k, lo, hi) for c in centers)
        if near and lvl < levels:
            mid = 0.5 * (lo + hi)
            stack.extend([
                (lo, mid, lvl + 1),
                (np.array([mid[0], lo[1]]), np.array([hi[0], mid[1]]), lvl + 1),
                (np.array([lo[0], mid[1]]), np.array([mid[0], hi[1]]), lvl + 1),
                (mid, hi, lvl + 1),
            ])
        else:
            leaves.append((lo, hi, lvl))

    nodes = []
    weights = []
    for lo, hi, lvl in leaves:
        gx, gw = _gauss(gl_order if lvl == 0 else gl_order_fine)
        sx = 0.5 * (hi[0] - lo[0])
        sy = 0.5 * (hi[1] - lo[1])
        x = lo[0] + sx * (gx + 1.0)
        y = lo[1] + sy * (gx + 1.0)
        X, Y = np.meshgrid(x, y, indexing="ij")
        W = np.outer(gw * sx, gw * sy)
        nodes.append(np.stack([X.ravel(), Y.ravel()], axis=1))
        weights.append(W.ravel())
    nodes = np.concatenate(nodes, axis=0)
    weights = np.concatenate(weights)

    shifted = 0
    if arcs.size:
        for c in centers:
            d = nodes - c[None, :]
            r = np.hypot(d[:, 0], d[:, 1])
            bad = np.abs(r - k) < cutoff_tol
            if np.any(bad):
                # push radially just outside the band, keeping the weight
                target = np.where(r[bad] >= k, k + cutoff_tol, k - cutoff_tol)
                scale = np.where(r[bad] > 0, target / np.maximum(r[bad], 1e-300), 1.0)
                nodes[bad] = c[None, :] + d[bad] * scale[:, None]
                shifted += int(np.count_nonzero(bad))

    panels = np.array([[lo[0], lo[1], hi[0], hi[1]] for lo, hi, _ in leaves])
    return AlphaQuadrature(nodes=nodes, weights=weights, k=k, M=M, cutoff_tol=cutoff_tol,
                           arcs=arcs, n_base=n_base, levels=levels, gl_order=gl_order,
                           panels=panels, shifted_nodes=shifted)


def graded_interval_rule(a: float, b: float, singularities, n_base: int = 4,
                         levels: int = 60, gl_order: int = 5):
    """1D composite Gauss-Legendre rule dyadically refined toward given points.

    The model integrand class is f1 + sqrt|t| f2 around each singular point;
    refinement makes the unresolved panel negligible.
    """
    sing = np.atleast_1d(np.asarray(singularities, dtype=float))
    h = (b - a) / n_base
    stack = [(a + i * h, a + (i + 1) * h, 0) for i in range(n_base)]
    leaves = []
    while stack:
        lo, hi, lvl = stack.pop()
        touches = np.any((sing >= lo - 1e-15) & (sing <= hi + 1e-15))
        if touches and lvl < levels:
            mid = 0.5 * (lo + hi)
            stack.append((lo, mid, lvl + 1))
            stack.append((mid, hi, lvl + 1))
        else:
            leaves.append((lo, hi))
    gx, gw = _gauss(gl_order)
    xs, ws = [], []
    for lo, hi in leaves:
        s = 0.5 * (hi - lo)
        xs.append(lo + s * (gx + 1.0))
        ws.append(gw * s)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    order = np.argsort(x)
    return x[order], w[order]


def parseval_mismatch(f: CellIndexedField, quad: AlphaQuadrature, cell_volumes: float = 1.0) -> float:
    """Relative gap between sum_j ||f_j||^2 and the quadrature of ||J f(alpha)||^2."""
    direct = float(np.sum(np.abs(f.values) ** 2)) * cell_volumes
    acc = 0.0
    for alpha, w in zip(quad.nodes, quad.weights):
        g = bloch_forward(f, alpha)
        acc += w * float(np.sum(np.abs(g) ** 2)) * cell_volumes
    return abs(acc - direct) / max(direct, 1e-300)
