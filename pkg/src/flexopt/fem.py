"""Linear elastic finite elements on unit quads/hexes, assembly and
partitioned solves for prescribed-displacement load cases."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import NumericalSingularityError
from .mesh import Mesh, _HEX_CORNERS, _QUAD_CORNERS

# relative pivot threshold below which K_ff is declared singular
PIVOT_RTOL = 1e-10


@dataclass(frozen=True)
class ElementStiffness:
    matrix: np.ndarray
    poisson: float

    @property
    def ndim(self) -> int:
        return 2 if self.matrix.shape[0] == 8 else 3


def _check_nu(nu: float) -> float:
    nu = float(nu)
    if not (0.0 <= nu < 0.5):
        raise ValueError(f"Poisson ratio must satisfy 0 <= nu < 0.5, got {nu}")
    return nu


def constitutive_matrix(nu: float, ndim: int, young: float = 1.0) -> np.ndarray:
    """Plane-stress (2D) or isotropic (3D) elasticity matrix in Voigt form.

    Shear components are engineering strains, ordered ``xy`` in 2D and
    ``yz, xz, xy`` in 3D.
    """
    if ndim == 2:
        return young / (1 - nu**2) * np.array([
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, (1 - nu) / 2],
        ])
    lam = young * nu / ((1 + nu) * (1 - 2 * nu))
    mu = young / (2 * (1 + nu))
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2 * mu
    D[np.arange(3, 6), np.arange(3, 6)] = mu
    return D


def strain_displacement(point, ndim: int) -> np.ndarray:
    """Strain-displacement matrix of the unit element at a local point in [0, 1]^ndim."""
    point = np.asarray(point, dtype=float)
    corners = _QUAD_CORNERS if ndim == 2 else _HEX_CORNERS
    nn = len(corners)
    # d N_a / d x_k for bilinear / trilinear shape functions
    dN = np.empty((ndim, nn))
    for a, c in enumerate(corners):
        factors = np.where(c == 1, point, 1.0 - point)
        for k in range(ndim):
            rest = np.prod(np.delete(factors, k))
            dN[k, a] = rest if c[k] == 1 else -rest
    if ndim == 2:
        B = np.zeros((3, 2 * nn))
        B[0, 0::2] = dN[0]
        B[1, 1::2] = dN[1]
        B[2, 0::2] = dN[1]
        B[2, 1::2] = dN[0]
        return B
    B = np.zeros((6, 3 * nn))
    B[0, 0::3] = dN[0]
    B[1, 1::3] = dN[1]
    B[2, 2::3] = dN[2]
    B[3, 1::3] = dN[2]
    B[3, 2::3] = dN[1]
    B[4, 0::3] = dN[2]
    B[4, 2::3] = dN[0]
    B[5, 0::3] = dN[1]
    B[5, 1::3] = dN[0]
    return B


def element_stiffness_2d(nu: float) -> ElementStiffness:
    """Closed-form plane-stress bilinear quad on the unit square, unit modulus."""
    nu = _check_nu(nu)
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    ke = k[idx] / (1 - nu**2)
    return ElementStiffness(ke, nu)


def element_stiffness_3d(nu: float) -> ElementStiffness:
    """Trilinear hex on the unit cube, unit modulus, 2x2x2 Gauss quadrature."""
    nu = _check_nu(nu)
    D = constitutive_matrix(nu, 3)
    g = 0.5 / np.sqrt(3.0)
    pts = (0.5 - g, 0.5 + g)
    ke = np.zeros((24, 24))
    for p in product(pts, repeat=3):
        B = strain_displacement(p, 3)
        ke += 0.125 * B.T @ D @ B
    ke = 0.5 * (ke + ke.T)
    return ElementStiffness(ke, nu)


def element_stiffness(nu: float, ndim: int) -> ElementStiffness:
    return element_stiffness_2d(nu) if ndim == 2 else element_stiffness_3d(nu)


@dataclass
class SolverStats:
    """Call accounting for the linear solver seam."""

    factorizations: int = 0
    substitutions: int = 0
    adjoint_substitutions: int = 0

    def reset(self) -> None:
        self.factorizations = self.substitutions = self.adjoint_substitutions = 0

    def snapshot(self) -> tuple[int, int, int]:
        return self.factorizations, self.substitutions, self.adjoint_substitutions


class Assembler:
    """Precomputed CSC pattern for repeated assembly on a fixed mesh."""

    def __init__(self, mesh: Mesh, ke: np.ndarray):
        self.mesh = mesh
        self.ke = 0.5 * (ke + ke.T)
        nd = ke.shape[0]
        n = mesh.n_dofs
        rows = np.repeat(mesh.edof, nd, axis=1).ravel()
        cols = np.tile(mesh.edof, (1, nd)).ravel()
        keys = cols * n + rows
        uniq, inverse = np.unique(keys, return_inverse=True)
        self._positions = inverse.reshape(mesh.n_elements, nd * nd).astype(np.int64)
        self._indices = (uniq % n).astype(np.int32)
        ucols = uniq // n
        self._indptr = np.searchsorted(ucols, np.arange(n + 1)).astype(np.int32)
        # permutation mapping each stored entry to its transpose partner
        tkeys = (uniq % n) * n + ucols
        self._transpose = np.searchsorted(uniq, tkeys)
        self._ke_flat = self.ke.ravel()

    @property
    def nnz(self) -> int:
        return len(self._indices)

    def assemble(self, fractions: np.ndarray, young: float = 1.0) -> sp.csc_matrix:
        fractions = np.asarray(fractions, dtype=float)
        if fractions.shape != (self.mesh.n_elements,):
            raise ValueError(
                f"expected {self.mesh.n_elements} modulus fractions, got shape {fractions.shape}")
        data = _kernels.scatter_weighted(self._positions, young * fractions, self._ke_flat, self.nnz)
        data = 0.5 * (data + data[self._transpose])
        n = self.mesh.n_dofs
        return sp.csc_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(n, n))


# solver seam

class SparseLDLSolver:
    """Symmetric sparse factorization without numerical pivoting.

    SuperLU with a symmetric fill-reducing ordering and zero pivot threshold
    computes ``P A P^T = L D L^T``-equivalent factors; every pivot of an SPD
    matrix is positive, so nonpositive pivots flag indefiniteness.
    """

    name = "cholesky"

    def __init__(self, A: sp.csc_matrix):
        scale = float(np.abs(A.diagonal()).max()) if A.shape[0] else 1.0
        try:
            self._lu = spla.splu(
                A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            # SuperLU gives no location; a vanishing diagonal is the usual culprit
            zero = np.flatnonzero(~(np.abs(A.diagonal()) > PIVOT_RTOL * scale))
            index = int(zero[0]) if zero.size else None
            where = f" (zero diagonal at free index {index})" if index is not None else ""
            raise NumericalSingularityError(f"factorization failed: {exc}{where}", index=index) from exc
        piv = self._lu.U.diagonal()
        bad = np.flatnonzero(~(piv > PIVOT_RTOL * scale))
        if bad.size:
            j = int(bad[0])
            col = int(self._lu.perm_c[j])
            raise NumericalSingularityError(
                f"nonpositive pivot {piv[j]:.3e} at free index {col}", index=col)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


class DenseCholeskySolver:
    """Dense Cholesky, intended for small test problems."""

    name = "dense"

    def __init__(self, A):
        A = A.toarray() if sp.issparse(A) else np.asarray(A)
        try:
            self._c = scipy.linalg.cho_factor(A, lower=True)
        except np.linalg.LinAlgError as exc:
            # leading minor order is reported 1-based in the message
            msg = str(exc)
            idx = None
            for tok in msg.replace("-", " ").split():
                if tok.isdigit():
                    idx = int(tok) - 1
                    break
            raise NumericalSingularityError(f"dense Cholesky failed: {msg}", index=idx) from exc
        scale = float(np.abs(np.diag(A)).max()) if A.shape[0] else 1.0
        piv = np.diag(self._c[0]) ** 2
        bad = np.flatnonzero(~(piv > PIVOT_RTOL * scale))
        if bad.size:
            raise NumericalSingularityError(
                f"nonpositive pivot at free index {int(bad[0])}", index=int(bad[0]))

    def solve(self, b):
        return scipy.linalg.cho_solve(self._c, np.asarray(b, dtype=float))


SOLVERS = {"cholesky": SparseLDLSolver, "dense": DenseCholeskySolver}


@dataclass
class GlobalSystem:
    K: sp.csc_matrix
    mesh: Mesh
    fractions: np.ndarray
    young: float = 1.0
    ke: np.ndarray | None = field(default=None, repr=False)
    prescribed: np.ndarray | None = None
    free: np.ndarray | None = None
    K_ff: sp.csc_matrix | None = field(default=None, repr=False)
    K_fp: sp.csc_matrix | None = field(default=None, repr=False)
    handle: object | None = field(default=None, repr=False)
    stats: SolverStats = field(default_factory=SolverStats)


def assemble(mesh: Mesh, modulus_fractions, ke: ElementStiffness | np.ndarray | None = None,
             young: float = 1.0, assembler: Assembler | None = None,
             stats: SolverStats | None = None) -> GlobalSystem:
    """K = sum_e fraction_e * young * k_e, symmetrized."""
    if assembler is None:
        if ke is None:
            ke = element_stiffness(0.3, mesh.ndim)
        mat = ke.matrix if isinstance(ke, ElementStiffness) else np.asarray(ke)
        assembler = Assembler(mesh, mat)
    fr = np.asarray(modulus_fractions, dtype=float)
    if fr.shape != (mesh.n_elements,):
        raise ValueError(f"expected {mesh.n_elements} modulus fractions, got shape {fr.shape}")
    K = assembler.assemble(fr, young)
    return GlobalSystem(K=K, mesh=mesh, fractions=fr, young=young, ke=assembler.ke,
                        stats=stats if stats is not None else SolverStats())


def factor(system: GlobalSystem, prescribed, solver: str = "cholesky") -> GlobalSystem:
    """Partition K on the prescribed index set and factorize K_ff in place."""
    n = system.K.shape[0]
    p = np.unique(np.asarray(prescribed, dtype=np.int64))
    if p.size and (p[0] < 0 or p[-1] >= n):
        raise ValueError("prescribed indices out of range")
    mask = np.ones(n, dtype=bool)
    mask[p] = False
    f = np.flatnonzero(mask)
    Kc = system.K
    K_ff = Kc[:, f][f, :].tocsc()
    K_fp = Kc[:, p][f, :].tocsc()
    try:
        handle = SOLVERS[solver](K_ff)
    except NumericalSingularityError as exc:
        if exc.index is not None:
            dof = int(f[exc.index])
            raise NumericalSingularityError(
                f"{exc} (global displacement index {dof})", index=dof) from exc
        raise
    system.prescribed, system.free = p, f
    system.K_ff, system.K_fp, system.handle = K_ff, K_fp, handle
    system.stats.factorizations += 1
    return system


@dataclass
class DegreeSolution:
    u: np.ndarray
    energy: float
    element_energies: np.ndarray


def solve_degree(system: GlobalSystem, u_p) -> DegreeSolution:
    """Solve K_ff u_f = -K_fp u_p and evaluate strain energies.

    ``element_energies`` are evaluated at full solid modulus so that the
    energy equals ``sum(fractions * element_energies)``.
    """
    if system.handle is None:
        raise RuntimeError("system has not been factorized")
    u_p = np.asarray(u_p, dtype=float)
    if u_p.shape != system.prescribed.shape:
        raise ValueError(
            f"prescribed vector has length {u_p.size}, expected {system.prescribed.size}")
    u = np.zeros(system.K.shape[0])
    u[system.prescribed] = u_p
    if np.any(u_p):
        u[system.free] = system.handle.solve(-(system.K_fp @ u_p))
    system.stats.substitutions += 1
    elem = system.young * _kernels.element_quadratic(u, system.mesh.edof, system.ke)
    energy = 0.5 * float(u @ (system.K @ u))
    return DegreeSolution(u=u, energy=energy, element_energies=elem)


def adjoint_solve(system: GlobalSystem, rhs_free: np.ndarray) -> np.ndarray:
    """Solve K_ff lam = rhs with the existing factorization."""
    system.stats.adjoint_substitutions += 1
    return system.handle.solve(rhs_free)


ORACLE_MAX_ELEMENTS = 10_000


def condensed_energy_oracle(mesh: Mesh, fractions, u_p, prescribed, nu: float = 0.3) -> float:
    """Dense Schur-complement strain energy, for verification only."""
    if mesh.n_elements > ORACLE_MAX_ELEMENTS:
        raise ValueError(f"oracle refused: {mesh.n_elements} elements exceeds {ORACLE_MAX_ELEMENTS}")
    ke = element_stiffness(nu, mesh.ndim).matrix
    n = mesh.n_dofs
    K = np.zeros((n, n))
    for e in range(mesh.n_elements):
        dofs = mesh.edof[e]
        for a in range(len(dofs)):
            for b in range(len(dofs)):
                K[dofs[a], dofs[b]] += fractions[e] * ke[a, b]
    p = np.asarray(prescribed)
    u_p = np.asarray(u_p, dtype=float)
    if not np.any(u_p):
        return 0.0
    f = np.setdiff1d(np.arange(n), p)
    Kff = K[np.ix_(f, f)]
    Kfp = K[np.ix_(f, p)]
    Kpp = K[np.ix_(p, p)]
    schur = Kpp - Kfp.T @ np.linalg.solve(Kff, Kfp)
    return 0.5 * float(u_p @ schur @ u_p)
