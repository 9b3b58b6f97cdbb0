"""Method of moving asymptotes with a primal-dual interior-point subsolver,
an oscillation-driven move limit and termination checks.

The problem handled is::

    min f0(x)  s.t.  g_i(x) <= 0,  xmin <= x <= xmax

with the usual artificial variables ``y`` (penalized with ``c``) and ``z``
(``a0 = 1, a = 0, d = 1``) so that every subproblem is feasible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

_EPSIMIN = 1e-7
_RAA0 = 1e-5
_ALBEFA = 0.1
_ASYINIT = 0.5
_ASYINCR = 1.2
_ASYDECR = 0.7


@dataclass
class Multipliers:
    y: np.ndarray
    z: float
    lam: np.ndarray
    xsi: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    zet: float
    s: np.ndarray


@dataclass
class OptimizerState:
    """History and internals carried between MMA steps."""

    n: int
    m: int
    xmin: np.ndarray
    xmax: np.ndarray
    k: int = 0
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    movelimit: float = 0.2
    c: float = 1000.0
    asymax: float = 10.0
    raa0: float = _RAA0
    multipliers: Multipliers | None = field(default=None, repr=False)
    infeasible: bool = False

    @classmethod
    def create(cls, n: int, m: int, xmin: float | np.ndarray = 1e-3,
               xmax: float | np.ndarray = 1.0, movelimit: float = 0.2,
               c: float = 1000.0, asymax: float = 10.0, raa0: float = _RAA0) -> "OptimizerState":
        return cls(n=n, m=m, xmin=np.broadcast_to(np.asarray(xmin, float), (n,)).copy(),
                   xmax=np.broadcast_to(np.asarray(xmax, float), (n,)).copy(),
                   movelimit=movelimit, c=c, asymax=asymax, raa0=raa0)


def _subsolv(m, n, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d, epsimin=_EPSIMIN):
    """Primal-dual Newton solution of the separable convex MMA subproblem."""
    een = np.ones(n)
    eem = np.ones(m)
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = eem.copy()
    z = 1.0
    lam = eem.copy()
    xsi = np.maximum(een / (x - alfa), een)
    eta = np.maximum(een / (beta - x), een)
    mu = np.maximum(eem, 0.5 * c)
    zet = 1.0
    s = eem.copy()

    def residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1 = upp - x
        xl1 = x - low
        plam = p0 + P.T @ lam
        qlam = q0 + Q.T @ lam
        gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
        dpsidx = plam / ux1**2 - qlam / xl1**2
        res = np.concatenate([
            dpsidx - xsi + eta,
            c + d * y - mu - lam,
            [a0 - zet - a @ lam],
            gvec - a * z - y + s - b,
            xsi * (x - alfa) - epsi,
            eta * (beta - x) - epsi,
            mu * y - epsi,
            [zet * z - epsi],
            lam * s - epsi,
        ])
        return res

    while epsi > epsimin:
        res = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        residunorm = np.linalg.norm(res)
        residumax = np.max(np.abs(res))
        ittt = 0
        while residumax > 0.9 * epsi and ittt < 200:
            ittt += 1
            ux1 = upp - x
            xl1 = x - low
            ux2 = ux1 * ux1
            xl2 = xl1 * xl1
            ux3 = ux1 * ux2
            xl3 = xl1 * xl2
            uxinv1 = 1.0 / ux1
            xlinv1 = 1.0 / xl1
            uxinv2 = 1.0 / ux2
            xlinv2 = 1.0 / xl2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ uxinv1 + Q @ xlinv1
            GG = P * uxinv2 - Q * xlinv2
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2.0 * (plam / ux3 + qlam / xl3) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglam = s / lam
            diaglamyi = diaglam + 1.0 / diagy
            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                bb = np.concatenate([blam, [delz]])
                Alam = np.diag(diaglamyi) + (GG / diagx) @ GG.T
                AA = np.block([[Alam, a[:, None]], [a[None, :], np.array([[-zet / z]])]])
                sol = np.linalg.solve(AA, bb)
                dlam = sol[:m]
                dz = sol[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + GG.T @ (GG / diaglamyi[:, None])
                azz = zet / z + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                AA = np.block([[Axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                sol = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx = sol[:n]
                dz = sol[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalfa = np.max(-1.01 * dx / (x - alfa))
            stmbeta = np.max(1.01 * dx / (beta - x))
            steg = 1.0 / max(stmalfa, stmbeta, stmxx, 1.0)

            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            itto = 0
            resinew = 2.0 * residunorm
            while resinew > residunorm and itto < 50:
                itto += 1
                x = old[0] + steg * dx
                y = old[1] + steg * dy
                z = old[2] + steg * dz
                lam = old[3] + steg * dlam
                xsi = old[4] + steg * dxsi
                eta = old[5] + steg * deta
                mu = old[6] + steg * dmu
                zet = old[7] + steg * dzet
                s = old[8] + steg * ds
                res = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                resinew = np.linalg.norm(res)
                steg /= 2.0
            residunorm = resinew
            residumax = np.max(np.abs(res))
        epsi *= 0.1
    return x, Multipliers(y, z, lam, xsi, eta, mu, zet, s)


def step(x, f0, df0, g, dg, state: OptimizerState) -> tuple[np.ndarray, OptimizerState]:
    """One MMA update of ``x`` inside the move-limited box."""
    x = np.asarray(x, dtype=float)
    df0 = np.asarray(df0, dtype=float)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    dg = np.asarray(dg, dtype=float).reshape(g.size, x.size)
    for name, arr in (("x", x), ("f0", f0), ("df0", df0), ("g", g), ("dg", dg)):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite values in optimizer input {name}")
    n, m = x.size, g.size
    if n != state.n or m != state.m:
        raise ValueError("problem size differs from optimizer state")
    xmin, xmax = state.xmin, state.xmax
    rng = xmax - xmin
    state.k += 1
    if state.k <= 2 or state.low is None:
        low = x - _ASYINIT * rng
        upp = x + _ASYINIT * rng
    else:
        zzz = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones(n)
        factor[zzz > 0] = _ASYINCR
        factor[zzz < 0] = _ASYDECR
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - state.asymax * rng, x - 0.01 * rng)
        upp = np.clip(upp, x + 0.01 * rng, x + state.asymax * rng)

    ml = state.movelimit
    alfa = np.maximum.reduce([low + _ALBEFA * (x - low), x - ml * rng, xmin])
    beta = np.minimum.reduce([upp - _ALBEFA * (upp - x), x + ml * rng, xmax])

    xmami = np.maximum(rng, 1e-5)
    ux1 = upp - x
    xl1 = x - low
    ux2 = ux1 * ux1
    xl2 = xl1 * xl1
    p0 = np.maximum(df0, 0.0)
    q0 = np.maximum(-df0, 0.0)
    pq0 = 0.001 * (p0 + q0) + state.raa0 / xmami
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2
    P = np.maximum(dg, 0.0)
    Q = np.maximum(-dg, 0.0)
    PQ = 0.001 * (P + Q) + state.raa0 / xmami
    P = (P + PQ) * ux2
    Q = (Q + PQ) * xl2
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - g

    a = np.zeros(m)
    c = np.full(m, state.c)
    d = np.ones(m)
    xnew, mult = _subsolv(m, n, low, upp, alfa, beta, p0, q0, P, Q, 1.0, a, b, c, d)

    state.xold2 = x.copy() if state.xold1 is None else state.xold1
    state.xold1 = x.copy()
    state.low, state.upp = low, upp
    state.multipliers = mult
    state.infeasible = bool(m and np.max(mult.y) > 1e-6)
    if state.infeasible:
        logger.debug("MMA subproblem needed artificial variables (max y=%.2e)", np.max(mult.y))
    return xnew, state


def kkt_residual(x, df0, g, dg, state: OptimizerState) -> float:
    """Euclidean norm of the KKT residual of the original problem at ``x``,
    using the multipliers of the last subproblem."""
    mult = state.multipliers
    if mult is None:
        return float("inf")
    g = np.atleast_1d(g)
    dg = np.asarray(dg).reshape(g.size, -1)
    a = np.zeros(g.size)
    c = np.full(g.size, state.c)
    res = np.concatenate([
        df0 + dg.T @ mult.lam - mult.xsi + mult.eta,
        c + mult.y - mult.mu - mult.lam,
        [1.0 - mult.zet - a @ mult.lam],
        g - a * mult.z - mult.y + mult.s,
        mult.xsi * (x - state.xmin),
        mult.eta * (state.xmax - x),
        mult.mu * mult.y,
        [mult.zet * mult.z],
        mult.lam * mult.s,
    ])
    return float(np.linalg.norm(res))


def update_movelimit(x, x_prev, x_prev2, ml: float, ml_incr: float = 1.2, ml_decr: float = 0.5,
                     ml_min: float = 0.01, ml_max: float = 0.5, threshold: float = 0.2,
                     active: float = 0.0, weighted: bool = False) -> float:
    """Shrink the move limit when many variables oscillate, otherwise grow it.

    Only variables whose last step exceeds ``active * ml`` are counted, so
    round-off jitter of settled variables does not throttle the others. With
    ``weighted`` each variable counts with the size of its last step.
    """
    if x_prev is None or x_prev2 is None:
        return ml
    d1 = np.asarray(x) - np.asarray(x_prev)
    d0 = np.asarray(x_prev) - np.asarray(x_prev2)
    moving = np.abs(d1) > active * ml
    if not np.any(moving):
        return float(min(max(ml * ml_incr, ml_min), ml_max))
    flips = np.sign(d1[moving]) * np.sign(d0[moving]) < 0
    if weighted:
        w = np.abs(d1[moving])
        osc = float(w[flips].sum() / w.sum())
    else:
        osc = float(np.mean(flips))
    ml = ml * (ml_decr if osc > threshold else ml_incr)
    return float(min(max(ml, ml_min), ml_max))


@dataclass
class TerminationReport:
    converged: bool
    reason: str | None
    change: float
    kkt_norm: float
    feasible: bool
    stop: bool = False


def check_termination(change: float, kkt_norm: float, g, k: int, max_iter: int = 500,
                      tol_change: float = 1e-3, tol_kkt: float = 1e-4,
                      tol_feas: float = 1e-4, allow: bool = True) -> TerminationReport:
    """Converged when feasible and either the design change or the KKT norm is small.

    ``allow=False`` defers convergence (e.g. during a continuation schedule)
    while still honouring the iteration limit.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    feasible = bool(g.size == 0 or np.max(g) <= tol_feas)
    reason = None
    converged = False
    if allow and feasible:
        if change < tol_change:
            converged, reason = True, "design-change"
        elif kkt_norm < tol_kkt:
            converged, reason = True, "kkt"
    stop = converged
    if not converged and k >= max_iter:
        reason, stop = "max-iterations", True
    return TerminationReport(converged, reason, float(change), float(kkt_norm), feasible, stop)
