"""Grid-graph oracle for the 2D control distance.

The metric ds^2 = dx1^2 + f(x1)^-2 dx2^2 is sampled on a node-centred
rectangular grid; neighbouring nodes (8-connected) are joined by edges
whose length is the trapezoidal average of the local metric length at the
two end nodes.  Single-source shortest paths give the numeric distance.
f is extended evenly to x1 < 0; columns where f underflows to 0 carry no
vertical or diagonal edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .geometry import Geometry

__all__ = ["GridOracle", "OutOfBoundsError", "oracle_around"]


class OutOfBoundsError(ValueError):
    pass


_OFFSETS_8 = ((1, 0), (0, 1), (1, 1), (1, -1))


@dataclass
class GridOracle:
    """Immutable weighted grid graph over ``[x1_lo, x1_hi] x [x2_lo, x2_hi]``.

    ``coef`` overrides f: pass a callable of x1 (used for e.g. f = 1).
    """

    geometry: Geometry | None
    bounds: tuple
    shape: tuple
    coef: object = None
    _graph: object = field(init=False, repr=False)

    def __post_init__(self):
        (a1, b1), (a2, b2) = self.bounds
        n1, n2 = self.shape
        if n1 < 2 or n2 < 2 or not (a1 < b1 and a2 < b2):
            raise ValueError("degenerate grid")
        self.x1 = np.linspace(a1, b1, n1)
        self.x2 = np.linspace(a2, b2, n2)
        self.h1 = (b1 - a1) / (n1 - 1)
        self.h2 = (b2 - a2) / (n2 - 1)
        fcol = self.coefficient(self.x1)
        with np.errstate(divide="ignore"):
            inv = np.where(fcol > 0, 1.0 / np.where(fcol > 0, fcol, 1.0), np.inf)
        self.fcol = fcol

        idx = np.arange(n1 * n2).reshape(n1, n2)
        rows, cols, wts = [], [], []
        for d1, d2 in _OFFSETS_8:
            i0, i1 = 0, n1 - d1
            j0, j1 = max(0, -d2), n2 - max(0, d2)
            src = idx[i0:i1, j0:j1]
            dst = idx[i0 + d1:i1 + d1, j0 + d2:j1 + d2]
            dx = d1 * self.h1
            dy = d2 * self.h2
            ia = inv[i0:i1][:, None]
            ib = inv[i0 + d1:i1 + d1][:, None]
            with np.errstate(invalid="ignore"):
                w = 0.5 * (np.sqrt(dx**2 + (dy * ia) ** 2) + np.sqrt(dx**2 + (dy * ib) ** 2))
            w = np.broadcast_to(w, src.shape)
            ok = np.isfinite(w)
            rows.append(src[ok])
            cols.append(dst[ok])
            wts.append(w[ok])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        wts = np.concatenate(wts)
        self._graph = coo_matrix((wts, (rows, cols)), shape=(n1 * n2, n1 * n2)).tocsr()

    def coefficient(self, x1):
        x1 = np.abs(np.asarray(x1, dtype=float))
        if self.coef is not None:
            return np.broadcast_to(np.asarray(self.coef(x1), dtype=float), x1.shape).copy()
        return self.geometry.f(x1)

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    def node(self, p) -> tuple:
        """Index of the grid node nearest to point ``p``."""
        (a1, b1), (a2, b2) = self.bounds
        tol = 1e-9
        if not (a1 - tol * self.h1 <= p[0] <= b1 + tol * self.h1
                and a2 - tol * self.h2 <= p[1] <= b2 + tol * self.h2):
            raise OutOfBoundsError(f"point {p} outside oracle rectangle")
        i = int(round((p[0] - a1) / self.h1))
        j = int(round((p[1] - a2) / self.h2))
        return min(max(i, 0), self.shape[0] - 1), min(max(j, 0), self.shape[1] - 1)

    def distances_from(self, p) -> np.ndarray:
        """Distances from the node nearest ``p`` to every node, shape ``self.shape``."""
        i, j = self.node(p)
        d = dijkstra(self._graph, directed=False, indices=i * self.shape[1] + j)
        return d.reshape(self.shape)

    def numeric_distance(self, p, q) -> float:
        i, j = self.node(q)
        return float(self.distances_from(p)[i, j])

    def ball_mask(self, p, r, dist=None) -> np.ndarray:
        dist = self.distances_from(p) if dist is None else dist
        return dist <= r

    def ball_area(self, p, r, dist=None) -> float:
        return float(np.count_nonzero(self.ball_mask(p, r, dist))) * self.cell_area

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")


def oracle_around(g: Geometry, center, half_width: float, half_height: float,
                  n: int = 257, m: int | None = None, coef=None) -> GridOracle:
    """Oracle on a rectangle centred at ``center`` with an odd node count so
    that the centre is a grid node."""
    n = n | 1
    m = n if m is None else (m | 1)
    c1, c2 = center
    return GridOracle(g, ((c1 - half_width, c1 + half_width),
                          (c2 - half_height, c2 + half_height)), (n, m), coef)
