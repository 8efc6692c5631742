"""Tensor-product Legendre bases of total degree p on axis-aligned boxes.

Each element carries shifted Legendre polynomials scaled to be orthonormal
over its bounding box; restricting the tensor products to total degree p
gives C(p + dim, dim) local functions.  On box-shaped elements the set is
orthonormal as-is; general polytopes apply an extra Cholesky transform of
the element Gram matrix (see :mod:`heterodg.space`).
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np


@lru_cache(maxsize=64)
def total_degree_indices(dim, p):
    """Multi-indices of total degree <= p in graded lexicographic order."""
    idx = []
    if dim == 2:
        ranges = ((a, b) for a in range(p + 1) for b in range(p + 1))
    else:
        ranges = ((a, b, c) for a in range(p + 1)
                  for b in range(p + 1) for c in range(p + 1))
    for alpha in ranges:
        if sum(alpha) <= p:
            idx.append(alpha)
    idx.sort(key=lambda a: (sum(a), a))
    out = np.array(idx, dtype=np.int64)
    out.setflags(write=False)
    return out


def dofs_per_element(dim, p):
    return comb(p + dim, dim)


def _legendre_table(t, pmax):
    """Values and derivatives of Legendre polynomials P_0..P_pmax at t."""
    t = np.asarray(t, dtype=float)
    vals = np.empty((t.size, pmax + 1))
    ders = np.empty((t.size, pmax + 1))
    vals[:, 0] = 1.0
    ders[:, 0] = 0.0
    if pmax >= 1:
        vals[:, 1] = t
        ders[:, 1] = 1.0
    for k in range(2, pmax + 1):
        vals[:, k] = ((2 * k - 1) * t * vals[:, k - 1]
                      - (k - 1) * vals[:, k - 2]) / k
        ders[:, k] = ders[:, k - 2] + (2 * k - 1) * vals[:, k - 1]
    return vals, ders


class BoxBasis:
    """Orthonormal tensor-Legendre basis of total degree p on a box."""

    def __init__(self, lo, hi, p):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.dim = self.lo.size
        self.p = p
        self.indices = total_degree_indices(self.dim, p)
        self.n_loc = self.indices.shape[0]
        self._scale = np.sqrt(
            (2.0 * np.arange(p + 1) + 1.0)[None, :]
            / (self.hi - self.lo)[:, None]
        )                                             # (dim, p+1)

    def _tables(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.empty((self.dim, pts.shape[0], self.p + 1))
        ders = np.empty_like(vals)
        for d in range(self.dim):
            length = self.hi[d] - self.lo[d]
            t = 2.0 * (pts[:, d] - self.lo[d]) / length - 1.0
            v, dv = _legendre_table(t, self.p)
            vals[d] = v * self._scale[d]
            ders[d] = dv * self._scale[d] * (2.0 / length)
        return vals, ders

    def eval(self, pts):
        """Basis values at points: array of shape (n_points, n_loc)."""
        vals, _ = self._tables(pts)
        out = np.ones((vals.shape[1], self.n_loc))
        for d in range(self.dim):
            out *= vals[d][:, self.indices[:, d]]
        return out

    def eval_grad(self, pts):
        """Basis gradients at points: array of shape (n_points, n_loc, dim)."""
        vals, ders = self._tables(pts)
        npts = vals.shape[1]
        out = np.empty((npts, self.n_loc, self.dim))
        for g in range(self.dim):
            acc = np.ones((npts, self.n_loc))
            for d in range(self.dim):
                table = ders[d] if d == g else vals[d]
                acc *= table[:, self.indices[:, d]]
            out[:, :, g] = acc
        return out
