"""Structured grids of unit bilinear quads (2D) and trilinear hexes (3D).

Numbering follows C order over the grid axes ``(x, y[, z])`` so that in 2D a
node index is ``ix * (nely + 1) + iy``; elements use the same rule on the
element grid. The last axis (y in 2D, z in 3D) is the loading axis: its
minimum face is the fixed interface and its maximum face is prescribed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# local corner offsets, counterclockwise from the lower-left corner
_QUAD_CORNERS = np.array([(0, 0), (1, 0), (1, 1), (0, 1)])
_HEX_CORNERS = np.array([
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
])


@dataclass(frozen=True)
class Mesh:
    """Immutable structured mesh with unit element size."""

    dims: tuple[int, ...]
    connectivity: np.ndarray = field(repr=False)
    edof: np.ndarray = field(repr=False)
    coords: np.ndarray = field(repr=False)
    interface_bottom: np.ndarray = field(repr=False)
    interface_top: np.ndarray = field(repr=False)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def nelx(self) -> int:
        return self.dims[0]

    @property
    def nely(self) -> int:
        return self.dims[1]

    @property
    def nelz(self) -> int | None:
        return self.dims[2] if self.ndim == 3 else None

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.dims))

    @property
    def node_dims(self) -> tuple[int, ...]:
        return tuple(d + 1 for d in self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_dims))

    @property
    def n_dofs(self) -> int:
        return self.ndim * self.n_nodes

    @property
    def element_centers(self) -> np.ndarray:
        idx = np.indices(self.dims).reshape(self.ndim, -1).T
        return idx + 0.5

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape per-element values to the ``(nelx, nely[, nelz])`` grid."""
        return np.asarray(values).reshape(self.dims)


def build_mesh(nelx: int, nely: int, nelz: int | None = None) -> Mesh:
    dims = (nelx, nely) if nelz is None else (nelx, nely, nelz)
    for d in dims:
        if isinstance(d, bool) or int(d) != d or d < 1:
            raise ValueError(f"element counts must be positive integers, got {dims}")
    dims = tuple(int(d) for d in dims)
    ndim = len(dims)
    node_dims = tuple(d + 1 for d in dims)
    corners = _QUAD_CORNERS if ndim == 2 else _HEX_CORNERS

    origin = np.indices(dims).reshape(ndim, -1)  # (ndim, N)
    conn = np.empty((origin.shape[1], len(corners)), dtype=np.int64)
    for k, off in enumerate(corners):
        conn[:, k] = np.ravel_multi_index(tuple(origin + off[:, None]), node_dims)

    comps = np.arange(ndim)
    edof = (ndim * conn[:, :, None] + comps).reshape(conn.shape[0], -1)

    coords = np.indices(node_dims).reshape(ndim, -1).T.astype(float)
    load = coords[:, -1]
    bottom = np.flatnonzero(load == 0.0)
    top = np.flatnonzero(load == dims[-1])

    for arr in (conn, edof, coords, bottom, top):
        arr.setflags(write=False)
    return Mesh(dims, conn, edof, coords, bottom, top)


def element_dof_map(mesh: Mesh, e: int) -> np.ndarray:
    """Global displacement indices of element ``e`` in local order."""
    if not 0 <= e < mesh.n_elements:
        raise ValueError(f"element index {e} out of range [0, {mesh.n_elements})")
    return mesh.edof[e].copy()


def interface_sets(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Node indices on the minimal and maximal face of the loading axis."""
    return mesh.interface_bottom.copy(), mesh.interface_top.copy()


def interface_dofs(mesh: Mesh) -> np.ndarray:
    """Sorted displacement indices of all interface nodes (all components)."""
    nodes = np.concatenate([mesh.interface_bottom, mesh.interface_top])
    dofs = (mesh.ndim * nodes[:, None] + np.arange(mesh.ndim)).ravel()
    return np.sort(dofs)
