"""Objective and constraint responses with design sensitivities.

Energy responses are self-adjoint: ``dE/dxp_j = gamma_j * eps_j`` with
``eps_j`` the element strain energy at solid modulus, so no extra solve is
needed. The aggregated stress constraint needs one adjoint solve per
constrained load case.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DegenerateProblemError
from .fem import DegreeSolution, GlobalSystem, adjoint_solve, constitutive_matrix, strain_displacement
from .mesh import Mesh


def evaluate_energies(solutions: Mapping[str, DegreeSolution], gamma: np.ndarray,
                      references: Mapping[str, float],
                      chain: Callable[[np.ndarray], np.ndarray] | None = None,
                      ) -> tuple[dict[str, float], dict[str, np.ndarray]]:
    """Normalized energies ``alpha_i = E_i / E_i^0`` and their sensitivities.

    Without ``chain`` the sensitivities are w.r.t. the physical field; ``chain``
    maps them back to the raw design.
    """
    alpha, dalpha = {}, {}
    for deg, sol in solutions.items():
        e0 = references[deg]
        if not e0 > 0.0:
            raise DegenerateProblemError(f"degree {deg!r} has zero reference strain energy")
        alpha[deg] = sol.energy / e0
        d = gamma * sol.element_energies / e0
        dalpha[deg] = chain(d) if chain is not None else d
    return alpha, dalpha


def objective(alphas: Sequence[float], weights: Sequence[float] | None = None,
              mode: str = "sum") -> tuple[float, np.ndarray]:
    """Combine DOC energies into ``f`` and ``df/dalpha``.

    ``mode="sum"`` is the weighted sum. ``mode="smoothmin"`` is a weighted
    harmonic mean scaled by the weight total, so it equals the sum when all
    alphas coincide and is dominated by the smallest alpha otherwise.
    """
    a = np.asarray(alphas, dtype=float)
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=float)
    if a.size < 1:
        raise ConfigurationError("objective needs at least one DOC")
    if mode == "sum":
        return float(w @ a), w.copy()
    if mode == "smoothmin":
        h = np.sum(w / a)
        W = np.sum(w)
        return float(W * W / h), W * W * w / (a * a * h * h)
    raise ConfigurationError(f"unknown objective mode {mode!r}")


def dof_constraints(alphas: Sequence[float], emax: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """``g_j = alpha_j / emax_j - 1`` and ``dg_j/dalpha_j``."""
    a = np.asarray(alphas, dtype=float)
    e = np.asarray(emax, dtype=float)
    if a.shape != e.shape:
        raise ConfigurationError(f"{a.size} DOFs but {e.size} emax values")
    if np.any(e <= 0):
        raise ConfigurationError(f"emax values must be positive, got {list(e)}")
    return a / e - 1.0, 1.0 / e


def volume_constraint(xp, vmax: float) -> tuple[float, np.ndarray]:
    xp = np.asarray(xp, dtype=float)
    if not 0.0 < vmax <= 1.0:
        raise ConfigurationError(f"vmax must lie in (0, 1], got {vmax}")
    return float(np.mean(xp) / vmax - 1.0), np.full(xp.size, 1.0 / (vmax * xp.size))


class StressEvaluator:
    """Centroidal stresses at solid modulus and their von Mises measure."""

    def __init__(self, mesh: Mesh, nu: float, young: float = 1.0):
        self.mesh = mesh
        ndim = mesh.ndim
        D = constitutive_matrix(nu, ndim, young)
        B = strain_displacement(np.full(ndim, 0.5), ndim)
        self.S = D @ B
        if ndim == 2:
            V = np.array([[1.0, -0.5, 0.0], [-0.5, 1.0, 0.0], [0.0, 0.0, 3.0]])
        else:
            V = np.zeros((6, 6))
            V[:3, :3] = -0.5
            V[np.arange(3), np.arange(3)] = 1.0
            V[np.arange(3, 6), np.arange(3, 6)] = 3.0
        self.V = V

    def stresses(self, u: np.ndarray) -> np.ndarray:
        return u[self.mesh.edof] @ self.S.T

    def von_mises(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-element von Mises stress and the Voigt stress vectors."""
        sig = self.stresses(u)
        vm2 = np.einsum("ei,ij,ej->e", sig, self.V, sig)
        return np.sqrt(np.maximum(vm2, 0.0)), sig

    def dvm_du(self, sig: np.ndarray, vm: np.ndarray) -> np.ndarray:
        """d(vm_e)/d(u_e) per element, shape (N, element dofs)."""
        safe = np.where(vm > 1e-30, vm, 1.0)
        dvds = (sig @ self.V) / safe[:, None]
        dvds[vm <= 1e-30] = 0.0
        return dvds @ self.S


def von_mises(mesh: Mesh, u: np.ndarray, nu: float = 0.3) -> np.ndarray:
    return StressEvaluator(mesh, nu).von_mises(np.asarray(u, dtype=float))[0]


def relaxed_stress(vm, xp, q: float = 0.5) -> np.ndarray:
    """Relaxed stress measure ``xp^q * vm``."""
    return np.power(np.maximum(xp, 0.0), q) * vm


def stress_constraint(vm, xp, sigma_bar: float, P: float = 10.0, q: float = 0.5,
                      scale: float = 1.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Aggregated relaxed stress constraint.

    ``g = scale * mean(s^P)^(1/P) - 1`` with ``s = xp^q vm / sigma_bar``.
    Returns ``g`` with its partials w.r.t. ``vm`` and (explicitly) ``xp``.
    """
    if P < 1:
        raise ConfigurationError(f"aggregation exponent must be >= 1, got {P}")
    if not sigma_bar > 0:
        raise ConfigurationError(f"allowable stress must be positive, got {sigma_bar}")
    vm = np.asarray(vm, dtype=float)
    xp = np.asarray(xp, dtype=float)
    n = vm.size
    xq = np.power(np.maximum(xp, 0.0), q)
    s = xq * vm / sigma_bar
    smax = np.max(s)
    if smax <= 0.0:
        return -1.0, np.zeros(n), np.zeros(n)
    # factor out the max to keep s^P finite
    r = s / smax
    mean_p = np.mean(r**P)
    agg = smax * mean_p ** (1.0 / P)
    g = scale * agg - 1.0
    dg_ds = scale * mean_p ** (1.0 / P - 1.0) * r ** (P - 1.0) / n
    dg_dvm = dg_ds * xq / sigma_bar
    dxq = q * np.power(np.maximum(xp, 1e-12), q - 1.0)
    dg_dxp = dg_ds * dxq * vm / sigma_bar
    return float(g), dg_dvm, dg_dxp


def stress_sensitivity(system: GlobalSystem, evaluator: StressEvaluator, u: np.ndarray,
                       sig: np.ndarray, vm: np.ndarray, dg_dvm: np.ndarray,
                       dg_dxp_explicit: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Total ``dg/dxp`` via one adjoint solve on the existing factorization."""
    mesh = system.mesh
    dvdu = evaluator.dvm_du(sig, vm)
    dgdu = _kernels.gather_element_vectors(dg_dvm[:, None] * dvdu, mesh.edof, mesh.n_dofs)
    lam = np.zeros(mesh.n_dofs)
    lam[system.free] = adjoint_solve(system, dgdu[system.free])
    implicit = system.young * gamma * _kernels.element_bilinear(lam, u, mesh.edof, system.ke)
    return dg_dxp_explicit - implicit


@dataclass
class ResponseSet:
    """Objective, constraints and sensitivities w.r.t. the raw design."""

    f: float
    df: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    names: list[str]
    alpha: dict[str, float]
    energies: dict[str, float]
    references: dict[str, float]
    max_stress: dict[str, float]
