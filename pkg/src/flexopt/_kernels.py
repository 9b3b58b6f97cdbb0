"""Element-loop kernels with a numba path and a pure-numpy fallback.

Set ``FLEXOPT_NUMBA=0`` before import to force the numpy path. Both paths
accumulate in element order so results agree to round-off and each path is
bit-reproducible on its own.
"""
from __future__ import annotations

import os

import numpy as np

_WANT_NUMBA = os.environ.get("FLEXOPT_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError
    import numba as nb
except ImportError:
    nb = None

BACKEND = "numba" if nb is not None else "numpy"


# numpy implementations

def scatter_numpy(positions, weights, ke_flat, size):
    vals = (weights[:, None] * ke_flat[None, :]).ravel()
    return np.bincount(positions.ravel(), weights=vals, minlength=size)


def quadratic_numpy(u, edof, ke):
    ue = u[edof]
    return 0.5 * np.einsum("ei,ij,ej->e", ue, ke, ue)


def bilinear_numpy(a, b, edof, ke):
    return np.einsum("ei,ij,ej->e", a[edof], ke, b[edof])


def gather_add_numpy(values, edof, size):
    return np.bincount(edof.ravel(), weights=values.ravel(), minlength=size)


# numba implementations

if nb is not None:

    @nb.njit(cache=True)
    def scatter_numba(positions, weights, ke_flat, size):
        out = np.zeros(size)
        ne, nk = positions.shape
        for e in range(ne):
            w = weights[e]
            for k in range(nk):
                out[positions[e, k]] += w * ke_flat[k]
        return out

    @nb.njit(cache=True)
    def quadratic_numba(u, edof, ke):
        ne, nd = edof.shape
        out = np.empty(ne)
        ue = np.empty(nd)
        for e in range(ne):
            for i in range(nd):
                ue[i] = u[edof[e, i]]
            acc = 0.0
            for i in range(nd):
                row = 0.0
                for j in range(nd):
                    row += ke[i, j] * ue[j]
                acc += ue[i] * row
            out[e] = 0.5 * acc
        return out

    @nb.njit(cache=True)
    def bilinear_numba(a, b, edof, ke):
        ne, nd = edof.shape
        out = np.empty(ne)
        ae = np.empty(nd)
        be = np.empty(nd)
        for e in range(ne):
            for i in range(nd):
                ae[i] = a[edof[e, i]]
                be[i] = b[edof[e, i]]
            acc = 0.0
            for i in range(nd):
                row = 0.0
                for j in range(nd):
                    row += ke[i, j] * be[j]
                acc += ae[i] * row
            out[e] = acc
        return out

    @nb.njit(cache=True)
    def gather_add_numba(values, edof, size):
        out = np.zeros(size)
        ne, nd = edof.shape
        for e in range(ne):
            for i in range(nd):
                out[edof[e, i]] += values[e, i]
        return out

    scatter = scatter_numba
    quadratic = quadratic_numba
    bilinear = bilinear_numba
    gather_add = gather_add_numba
else:
    scatter = scatter_numpy
    quadratic = quadratic_numpy
    bilinear = bilinear_numpy
    gather_add = gather_add_numpy


def element_quadratic(u, edof, ke):
    """``0.5 * u_e^T ke u_e`` for every element."""
    return quadratic(np.ascontiguousarray(u, dtype=float), edof, np.ascontiguousarray(ke))


def element_bilinear(a, b, edof, ke):
    """``a_e^T ke b_e`` for every element."""
    return bilinear(np.ascontiguousarray(a, dtype=float), np.ascontiguousarray(b, dtype=float),
                    edof, np.ascontiguousarray(ke))


def scatter_weighted(positions, weights, ke_flat, size):
    """Accumulate ``weights[e] * ke_flat[k]`` into ``out[positions[e, k]]``."""
    return scatter(positions, np.ascontiguousarray(weights, dtype=float),
                   np.ascontiguousarray(ke_flat), size)


def gather_element_vectors(values, edof, size):
    """Sum per-element vectors ``values[e, i]`` into global index ``edof[e, i]``."""
    return gather_add(np.ascontiguousarray(values, dtype=float), edof, size)
