"""Gauss quadrature on boxes, segments, triangles and cone-decomposed polytopes.

Box rules are tensor Gauss-Legendre.  Simplex rules use the collapsed
(Duffy) transform of a tensor rule, with the point count adjusted so the
stated polynomial order is integrated exactly despite the extra Jacobian
factors.  General polytopal elements integrate over the cone decomposition
induced by their faces (apex at the element's inside point).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=128)
def _gauss01(n):
    """n-point Gauss-Legendre nodes/weights on [0, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _points_for(order):
    # exact for 1D polynomials of degree <= order
    return max(1, (order + 2) // 2)


def box_rule(lo, hi, order):
    """Tensor Gauss rule on an axis-aligned box, exact per-axis to ``order``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dim = lo.size
    n = _points_for(order)
    x, w = _gauss01(n)
    grids = np.meshgrid(*[lo[d] + (hi[d] - lo[d]) * x for d in range(dim)],
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*[(hi[d] - lo[d]) * w for d in range(dim)],
                         indexing="ij")
    weights = np.ones(n ** dim)
    for g in wgrids:
        weights = weights * g.ravel()
    return pts, weights


def segment_rule(v0, v1, order):
    """Gauss rule on the segment [v0, v1] (points given in 2D coordinates)."""
    v0 = np.asarray(v0, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    x, w = _gauss01(_points_for(order))
    pts = v0[None, :] + x[:, None] * (v1 - v0)[None, :]
    return pts, w * np.linalg.norm(v1 - v0)


def triangle_rule(v0, v1, v2, order):
    """Collapsed Gauss rule on a triangle, exact for total degree ``order``.

    Works for triangles embedded in 2D or 3D space.
    """
    v0 = np.asarray(v0, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    # the Duffy Jacobian raises the u-degree by one
    n = _points_for(order + 1)
    x, w = _gauss01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    xi = u.ravel()
    eta = (v * (1.0 - u)).ravel()
    wref = (wu * wv * (1.0 - u)).ravel()          # reference triangle, area 1/2

    e1, e2 = v1 - v0, v2 - v0
    if v0.size == 2:
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
    else:
        jac = np.linalg.norm(np.cross(e1, e2))
    pts = v0[None, :] + np.outer(xi, e1) + np.outer(eta, e2)
    return pts, wref * jac


def tetrahedron_rule(v0, v1, v2, v3, order):
    """Doubly collapsed Gauss rule on a tetrahedron, exact to ``order``."""
    v0 = np.asarray(v0, dtype=float)
    e = [np.asarray(v, dtype=float) - v0 for v in (v1, v2, v3)]
    n = _points_for(order + 2)
    x, w = _gauss01(n)
    u, v, t = np.meshgrid(x, x, x, indexing="ij")
    wu, wv, wt = np.meshgrid(w, w, w, indexing="ij")
    xi = u.ravel()
    eta = (v * (1.0 - u)).ravel()
    zeta = (t * (1.0 - u) * (1.0 - v)).ravel()
    wref = (wu * wv * wt * (1.0 - u) ** 2 * (1.0 - v)).ravel()

    jac = abs(np.linalg.det(np.stack(e, axis=0)))
    pts = (v0[None, :] + np.outer(xi, e[0]) + np.outer(eta, e[1])
           + np.outer(zeta, e[2]))
    return pts, wref * jac


def element_rule(mesh, e, order):
    """Quadrature over element ``e``: tensor Gauss on boxes, composite
    simplex rule over the face-cone decomposition otherwise."""
    if mesh.elem_is_box[e]:
        return box_rule(mesh.elem_bbox[e, 0], mesh.elem_bbox[e, 1], order)
    apex = mesh.vertices[mesh.elem_vertices[e]].mean(axis=0)
    pts_all, w_all = [], []
    for f in mesh.elem_faces[e]:
        corners = mesh.vertices[mesh.face_vertices[f]]
        if mesh.dim == 2:
            p, w = triangle_rule(apex, corners[0], corners[1], order)
        else:
            p, w = tetrahedron_rule(apex, corners[0], corners[1], corners[2],
                                    order)
        pts_all.append(p)
        w_all.append(w)
    return np.concatenate(pts_all), np.concatenate(w_all)


def face_rule(mesh, f, order):
    """Quadrature over face ``f`` (segment in 2D, triangle in 3D)."""
    corners = mesh.vertices[mesh.face_vertices[f]]
    if mesh.dim == 2:
        return segment_rule(corners[0], corners[1], order)
    return triangle_rule(corners[0], corners[1], corners[2], order)
