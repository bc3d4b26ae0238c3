"""Clipping of triangles against a piecewise-linear level set."""

import numpy as np


def clip_triangles(tris, lvl):
    """Clip triangles to ``{l <= 0}`` where ``l`` is affine on each triangle.

    Parameters
    ----------
    tris : (m, 3, 2) counterclockwise corners
    lvl : (m, 3) values of the affine function at the corners

    Returns
    -------
    fragments : (k, 3, 2) counterclockwise triangles covering the clipped region
    parent : (k,) index of the source triangle of each fragment
    """
    tris = np.asarray(tris, dtype=float)
    lvl = np.asarray(lvl, dtype=float)
    inside = lvl <= 0.0
    n_in = inside.sum(axis=1)
    rows = np.arange(len(tris))

    out_tris = [tris[n_in == 3]]
    out_parent = [rows[n_in == 3]]

    one = np.flatnonzero(n_in == 1)
    if len(one):
        i = np.argmax(inside[one], axis=1)
        A, B, C, lA, lB, lC = _rotate(tris[one], lvl[one], i)
        rAB = A + (lA / (lA - lB))[:, None] * (B - A)
        rAC = A + (lA / (lA - lC))[:, None] * (C - A)
        out_tris.append(np.stack([A, rAB, rAC], axis=1))
        out_parent.append(one)

    two = np.flatnonzero(n_in == 2)
    if len(two):
        o = np.argmin(inside[two], axis=1)
        A, B, C, lA, lB, lC = _rotate(tris[two], lvl[two], o)
        rAB = B + (lB / (lB - lA))[:, None] * (A - B)
        rCA = C + (lC / (lC - lA))[:, None] * (A - C)
        first = np.stack([B, C, rCA], axis=1)
        second = np.stack([B, rCA, rAB], axis=1)
        pair = np.stack([first, second], axis=1).reshape(-1, 3, 2)
        out_tris.append(pair)
        out_parent.append(np.repeat(two, 2))

    frags = np.concatenate(out_tris) if out_tris else np.zeros((0, 3, 2))
    parent = np.concatenate(out_parent).astype(np.int64)
    order = np.argsort(parent, kind="stable")
    return frags[order], parent[order]


def _rotate(p, l, start):
    r = np.arange(len(p))
    i0, i1, i2 = start, (start + 1) % 3, (start + 2) % 3
    return p[r, i0], p[r, i1], p[r, i2], l[r, i0], l[r, i1], l[r, i2]
