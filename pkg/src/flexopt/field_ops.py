"""Density filter, Heaviside projection, SIMP interpolation and symmetry,
each with its chain rule."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .mesh import Mesh

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class FilterOperator:
    H: sp.csr_matrix = field(repr=False)
    radius: float

    @property
    def n(self) -> int:
        return self.H.shape[0]


def build_filter(mesh: Mesh, r: float) -> FilterOperator:
    """Row-normalized conic filter with weights ``max(0, r - distance)``."""
    r = float(r)
    if not r >= 1.0:
        raise ConfigurationError(f"filter radius must be >= 1 element, got {r}")
    dims = np.array(mesh.dims)
    idx = np.indices(mesh.dims).reshape(mesh.ndim, -1)
    reach = int(np.floor(r))
    rows, cols, vals = [], [], []
    for off in product(range(-reach, reach + 1), repeat=mesh.ndim):
        off = np.array(off)
        w = r - np.sqrt(np.sum(off**2))
        if w <= 0.0:
            continue
        nb = idx + off[:, None]
        ok = np.all((nb >= 0) & (nb < dims[:, None]), axis=0)
        src = np.flatnonzero(ok)
        rows.append(src)
        cols.append(np.ravel_multi_index(tuple(nb[:, ok]), mesh.dims))
        vals.append(np.full(src.size, w))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    W = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_elements, mesh.n_elements))
    W.sum_duplicates()
    W.sort_indices()
    H = sp.diags(1.0 / np.asarray(W.sum(axis=1)).ravel()) @ W
    return FilterOperator(H=H.tocsr(), radius=r)


def _check_len(H: FilterOperator, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (H.n,):
        raise ValueError(f"expected vector of length {H.n}, got shape {v.shape}")
    return v


def apply_filter(H: FilterOperator, x) -> np.ndarray:
    return H.H @ _check_len(H, x)


def filter_chain_rule(H: FilterOperator, s) -> np.ndarray:
    """Sensitivities w.r.t. unfiltered variables from those w.r.t. filtered ones."""
    return H.H.T @ _check_len(H, s)


def heaviside_project(xf, beta: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed Heaviside (tanh) projection and its derivative."""
    if not 0.0 < eta < 1.0:
        raise ConfigurationError(f"projection threshold must lie in (0, 1), got {eta}")
    if beta < 0:
        raise ConfigurationError(f"projection steepness must be >= 0, got {beta}")
    xf = np.asarray(xf, dtype=float)
    if beta == 0.0:
        return xf.copy(), np.ones_like(xf)
    a = np.tanh(beta * eta)
    denom = a + np.tanh(beta * (1.0 - eta))
    t = np.tanh(beta * (xf - eta))
    xp = (a + t) / denom
    dxp = beta * (1.0 - t * t) / denom
    return xp, dxp


def simp(xp, p: float = 3.0, eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Modified SIMP modulus fraction ``eps + (1 - eps) x^p`` and its slope."""
    if p < 1:
        raise ConfigurationError(f"SIMP penalty must be >= 1, got {p}")
    if not 0.0 < eps < 1.0:
        raise ConfigurationError(f"stiffness ratio must lie in (0, 1), got {eps}")
    xp = np.asarray(xp, dtype=float)
    fraction = eps + (1.0 - eps) * xp**p
    gamma = (1.0 - eps) * p * xp ** (p - 1.0)
    return fraction, gamma


def _axis_ids(axes, ndim: int) -> list[int]:
    out = []
    for a in axes or ():
        if isinstance(a, str):
            if a not in _AXES or _AXES[a] >= ndim:
                raise ConfigurationError(f"invalid symmetry axis {a!r} for a {ndim}D mesh")
            out.append(_AXES[a])
        else:
            out.append(int(a))
    return out


def symmetrize(x, mesh: Mesh, axes) -> np.ndarray:
    """Average mirror pairs across the mid-plane normal to each named axis."""
    g = mesh.to_grid(np.asarray(x, dtype=float))
    for ax in _axis_ids(axes, mesh.ndim):
        g = 0.5 * (g + np.flip(g, ax))
    return g.ravel()


def symmetrize_gradient(s, mesh: Mesh, axes) -> np.ndarray:
    # the averaging operator is an orthogonal projection, so it is its own adjoint
    return symmetrize(s, mesh, axes)


@dataclass
class DesignState:
    """Layered design fields for one iteration."""

    x: np.ndarray
    filtered: np.ndarray
    eroded: np.ndarray | None = None
    intermediate: np.ndarray | None = None
    dilated: np.ndarray | None = None
    d_eroded: np.ndarray | None = field(default=None, repr=False)
    d_intermediate: np.ndarray | None = field(default=None, repr=False)
    d_dilated: np.ndarray | None = field(default=None, repr=False)
    beta: float = 0.0
    eta: float = 0.5
    deta: float = 0.0

    @property
    def robust(self) -> bool:
        return self.eroded is not None

    def physical(self, which: str = "nominal") -> np.ndarray:
        """Projected field feeding the material law."""
        if which == "nominal":
            return self.intermediate if self.robust else self.filtered
        return getattr(self, which)

    def projection_slope(self, which: str = "nominal") -> np.ndarray:
        if not self.robust:
            return np.ones_like(self.filtered)
        key = "intermediate" if which == "nominal" else which
        return getattr(self, "d_" + key)


def project_design(x, H: FilterOperator, mesh: Mesh, symmetry_axes=(), robust: bool = False,
                   beta: float = 1.0, eta: float = 0.5, deta: float = 0.0) -> DesignState:
    """Symmetrize, filter and (in robust mode) project the raw design."""
    xs = symmetrize(x, mesh, symmetry_axes)
    xf = apply_filter(H, xs)
    state = DesignState(x=np.asarray(x, dtype=float), filtered=xf, beta=beta, eta=eta, deta=deta)
    if robust:
        state.eroded, state.d_eroded = heaviside_project(xf, beta, eta + deta)
        state.intermediate, state.d_intermediate = heaviside_project(xf, beta, eta)
        state.dilated, state.d_dilated = heaviside_project(xf, beta, eta - deta)
    return state


def backpropagate(state: DesignState, sens, which: str, H: FilterOperator, mesh: Mesh,
                  symmetry_axes=()) -> np.ndarray:
    """Chain sensitivities w.r.t. a physical field back to the raw design."""
    s = np.asarray(sens, dtype=float) * state.projection_slope(which)
    s = filter_chain_rule(H, s)
    return symmetrize_gradient(s, mesh, symmetry_axes)
