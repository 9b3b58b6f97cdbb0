"""Mechanism degrees and their prescribed interface displacements.

A degree is a rigid-body motion of the top interface relative to the fixed
bottom interface, addressed by its string id (``"tx"``, ``"ry"``, ...).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .mesh import Mesh, interface_dofs

DEGREES_2D = ("tx", "ty", "rz")
DEGREES_3D = ("tx", "ty", "tz", "rx", "ry", "rz")
_AXIS = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class PrescribedField:
    """Prescribed values on the sorted interface displacement indices."""

    indices: np.ndarray
    values: np.ndarray
    n_dofs: int

    def full(self) -> np.ndarray:
        u = np.zeros(self.n_dofs)
        u[self.indices] = self.values
        return u

    def scaled(self, c: float) -> "PrescribedField":
        return PrescribedField(self.indices, c * self.values, self.n_dofs)


def _field_from_top(mesh: Mesh, top_disp: np.ndarray) -> PrescribedField:
    u = np.zeros(mesh.n_dofs)
    top = mesh.interface_top
    for k in range(mesh.ndim):
        u[mesh.ndim * top + k] = top_disp[:, k]
    idx = interface_dofs(mesh)
    return PrescribedField(idx, u[idx], mesh.n_dofs)


def prescribed_2d(degree: str, mesh: Mesh, rz_mode: str = "table") -> PrescribedField:
    """Unit-stroke prescribed field for a planar degree.

    ``rz_mode="table"`` prescribes ``u = 1`` with ``v = 1 - 2 x / nelx`` on the
    top interface. ``rz_mode="centered"`` uses the same rotation angle about the
    domain centre, giving ``u = nely / nelx`` (identical on square domains).
    """
    if mesh.ndim != 2:
        raise ValueError("prescribed_2d requires a 2D mesh")
    if degree not in DEGREES_2D:
        raise ValueError(f"unknown 2D degree {degree!r}; expected one of {DEGREES_2D}")
    x = mesh.coords[mesh.interface_top, 0]
    disp = np.zeros((x.size, 2))
    if degree == "tx":
        disp[:, 0] = 1.0
    elif degree == "ty":
        disp[:, 1] = 1.0
    else:
        if rz_mode == "table":
            disp[:, 0] = 1.0
        elif rz_mode == "centered":
            disp[:, 0] = mesh.nely / mesh.nelx
        else:
            raise ValueError(f"unknown rz_mode {rz_mode!r}")
        disp[:, 1] = 1.0 - 2.0 * x / mesh.nelx
    return _field_from_top(mesh, disp)


def prescribed_3d(degree: str, mesh: Mesh, scale: float = 1.0) -> PrescribedField:
    """Unit translation or linearized unit rotation about the domain centroid."""
    if mesh.ndim != 3:
        raise ValueError("prescribed_3d requires a 3D mesh")
    if degree not in DEGREES_3D:
        raise ValueError(f"unknown 3D degree {degree!r}; expected one of {DEGREES_3D}")
    r = mesh.coords[mesh.interface_top]
    axis = np.zeros(3)
    axis[_AXIS[degree[1]]] = scale
    if degree[0] == "t":
        disp = np.broadcast_to(axis, r.shape).copy()
    else:
        centroid = 0.5 * np.asarray(mesh.dims, dtype=float)
        disp = np.cross(axis, r - centroid)
    return _field_from_top(mesh, disp)


def prescribed_field(degree: str, mesh: Mesh, rz_mode: str = "table") -> PrescribedField:
    if mesh.ndim == 2:
        return prescribed_2d(degree, mesh, rz_mode=rz_mode)
    return prescribed_3d(degree, mesh)


@dataclass(frozen=True)
class DegreeSets:
    doc: tuple[str, ...]
    dof: tuple[str, ...]

    @property
    def active(self) -> tuple[str, ...]:
        return self.doc + self.dof


def _as_list(ids) -> list[str]:
    if ids is None:
        return []
    if isinstance(ids, str):
        return [s for s in ids.replace(",", " ").split() if s]
    return [str(s) for s in ids]


def validate_degree_sets(doc, dof, ndim: int = 2) -> DegreeSets:
    """Check the DOC and DOF lists: known ids, no duplicates, no overlap, both nonempty."""
    allowed = DEGREES_2D if ndim == 2 else DEGREES_3D
    doc_l, dof_l = _as_list(doc), _as_list(dof)
    if not doc_l:
        raise ConfigurationError("at least one degree of constraint (doc) is required")
    if not dof_l:
        raise ConfigurationError("at least one degree of freedom (dof) is required")
    for name, ids in (("doc", doc_l), ("dof", dof_l)):
        for d in ids:
            if d not in allowed:
                raise ConfigurationError(f"unknown degree {d!r} in {name}; allowed: {allowed}")
        seen = set()
        for d in ids:
            if d in seen:
                raise ConfigurationError(f"duplicate degree {d!r} in {name}")
            seen.add(d)
    overlap = [d for d in doc_l if d in dof_l]
    if overlap:
        raise ConfigurationError(f"degree {overlap[0]!r} appears in both doc and dof")
    return DegreeSets(tuple(doc_l), tuple(dof_l))
