"""One design evaluation: fields, analyses, responses and sensitivities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .degrees import DegreeSets, prescribed_field
from .fem import (Assembler, DegreeSolution, GlobalSystem, SolverStats, assemble,
                  element_stiffness, factor, solve_degree)
from .field_ops import DesignState, backpropagate, build_filter, project_design, simp
from .mesh import Mesh, interface_dofs
from .responses import (ResponseSet, StressEvaluator, dof_constraints, evaluate_energies,
                        objective, relaxed_stress, stress_constraint, stress_sensitivity,
                        volume_constraint)
from .variants import RunPlan


@dataclass
class Evaluation:
    responses: ResponseSet
    state: DesignState
    solutions: dict[str, dict[str, DegreeSolution]] = field(repr=False)
    systems: dict[str, GlobalSystem] = field(repr=False)
    stress_ratio: dict[str, float] = field(default_factory=dict)


class FlexureProblem:
    """Binds mesh, degrees, run plan and material constants.

    Reference energies are captured on the first call to :meth:`evaluate`
    and kept fixed afterwards, per physical field.
    """

    def __init__(self, mesh: Mesh, sets: DegreeSets, plan: RunPlan, emax,
                 emax_mode: str = "normalized", weights=None, objective_mode: str = "sum",
                 volume_fraction: float | None = None, symmetry=(), eps: float = 1e-6,
                 nu: float = 0.3, penal: float = 3.0, rz_mode: str = "table",
                 solver: str = "cholesky", displacement_scale: float = 1.0):
        self.mesh = mesh
        self.sets = sets
        self.plan = plan
        self.emax = np.asarray(emax, dtype=float)
        self.emax_mode = emax_mode
        self.weights = weights
        self.objective_mode = objective_mode
        self.volume_fraction = volume_fraction
        self.symmetry = tuple(symmetry)
        self.eps, self.nu, self.penal = eps, nu, penal
        self.solver = solver
        self.ke = element_stiffness(nu, mesh.ndim).matrix
        self.assembler = Assembler(mesh, self.ke)
        self.filter = build_filter(mesh, plan.radius)
        self.prescribed = interface_dofs(mesh)
        self.fields = {d: prescribed_field(d, mesh, rz_mode=rz_mode).scaled(displacement_scale)
                       for d in sets.active}
        self.stats = SolverStats()
        self.references: dict[tuple[str, str], float] | None = None
        self.stress_eval = StressEvaluator(mesh, nu)
        self.stress_scale = {d: 1.0 for d in plan.stress_dofs}
        if plan.robust:
            self.groups = {"eroded": sets.doc, "dilated": sets.dof}
        else:
            self.groups = {"nominal": sets.active}

    # fields and analysis

    def design_state(self, x, beta: float | None = None) -> DesignState:
        plan = self.plan
        if plan.robust:
            b = plan.beta_init if beta is None else beta
            return project_design(x, self.filter, self.mesh, self.symmetry, robust=True, beta=b,
                                  eta=plan.thresholds["intermediate"],
                                  deta=plan.thresholds["eroded"] - plan.thresholds["intermediate"])
        return project_design(x, self.filter, self.mesh, self.symmetry)

    def analyze(self, xp: np.ndarray, degrees) -> tuple[GlobalSystem, dict[str, DegreeSolution], np.ndarray]:
        """Assemble and factor once, then solve every requested degree."""
        fraction, gamma = simp(xp, self.penal, self.eps)
        system = assemble(self.mesh, fraction, assembler=self.assembler, stats=self.stats)
        factor(system, self.prescribed, solver=self.solver)
        sols = {d: solve_degree(system, self.fields[d].values) for d in degrees}
        return system, sols, gamma

    def chain(self, state: DesignState, which: str):
        return lambda s: backpropagate(state, s, which, self.filter, self.mesh, self.symmetry)

    def _capture_references(self, state: DesignState, solutions) -> dict[tuple[str, str], float]:
        if self.plan.robust and self.plan.reference_field == "nominal":
            # one extra analysis: both fields share the intermediate-design reference
            _, sols, _ = self.analyze(state.intermediate, self.sets.active)
            return {(w, d): sols[d].energy for w, degs in self.groups.items() for d in degs}
        return {(w, d): s.energy for w, sols in solutions.items() for d, s in sols.items()}

    # responses

    def evaluate(self, x, beta: float | None = None) -> Evaluation:
        state = self.design_state(x, beta)
        systems, solutions, gammas = {}, {}, {}
        for which, degs in self.groups.items():
            systems[which], solutions[which], gammas[which] = self.analyze(state.physical(which), degs)
        if self.references is None:
            self.references = self._capture_references(state, solutions)

        alpha_all: dict[str, float] = {}
        dalpha_phys: dict[str, np.ndarray] = {}
        energies: dict[str, float] = {}
        refs: dict[str, float] = {}
        for which, sols in solutions.items():
            r = {d: self.references[(which, d)] for d in sols}
            a, da = evaluate_energies(sols, gammas[which], r)
            alpha_all.update(a)
            dalpha_phys.update(da)
            energies.update({d: s.energy for d, s in sols.items()})
            refs.update(r)

        obj_field = self.plan.objective_field
        con_field = self.plan.constraint_field
        chain_obj = self.chain(state, obj_field)
        chain_con = self.chain(state, con_field)

        doc = self.sets.doc
        f, dfda = objective([alpha_all[d] for d in doc], self.weights, self.objective_mode)
        df = chain_obj(sum(w * dalpha_phys[d] for w, d in zip(dfda, doc)))

        g_list, dg_list, names = [], [], []
        dof = self.sets.dof
        if self.emax_mode == "raw":
            vals = [energies[d] for d in dof]
            dvals = [dalpha_phys[d] * refs[d] for d in dof]
        else:
            vals = [alpha_all[d] for d in dof]
            dvals = [dalpha_phys[d] for d in dof]
        g_dof, dgda = dof_constraints(vals, self.emax)
        for d, gj, s, dv in zip(dof, g_dof, dgda, dvals):
            g_list.append(float(gj))
            dg_list.append(chain_con(s * dv))
            names.append(f"energy:{d}")

        stress_ratio, max_stress = {}, {}
        if self.plan.stress:
            xp = state.physical(con_field)
            sys_c = systems[con_field]
            gamma_c = gammas[con_field]
            for d in self.plan.stress_dofs:
                sol = solutions[con_field][d]
                vm, sig = self.stress_eval.von_mises(sol.u)
                sbar = self.plan.sigma_bar[d]
                gs, dgdvm, dgdxp = stress_constraint(vm, xp, sbar, self.plan.p_agg, self.plan.q,
                                                     self.stress_scale[d])
                total = stress_sensitivity(sys_c, self.stress_eval, sol.u, sig, vm, dgdvm, dgdxp, gamma_c)
                g_list.append(gs)
                dg_list.append(chain_con(total))
                names.append(f"stress:{d}")
                s = relaxed_stress(vm, xp, self.plan.q)
                max_stress[d] = float(np.max(s))
                agg = (gs + 1.0) / self.stress_scale[d] * sbar
                stress_ratio[d] = max_stress[d] / agg if agg > 0 else 1.0

        if self.volume_fraction is not None:
            xp = state.physical(con_field)
            gv, dgv = volume_constraint(xp, self.volume_fraction)
            g_list.append(gv)
            dg_list.append(chain_con(dgv))
            names.append("volume")

        resp = ResponseSet(f=f, df=df, g=np.array(g_list), dg=np.array(dg_list).reshape(len(g_list), -1),
                           names=names, alpha=alpha_all, energies=energies, references=refs,
                           max_stress=max_stress)
        return Evaluation(resp, state, solutions, systems, stress_ratio)

    # reporting helpers (not part of the optimization loop accounting)

    def field_energies(self, x, which: str, beta: float | None = None) -> dict[str, float]:
        """Raw strain energies of every active degree on one physical field."""
        state = self.design_state(x, beta)
        _, sols, _ = self.analyze(state.physical(which), self.sets.active)
        return {d: s.energy for d, s in sols.items()}

    def max_stress(self, x, beta: float | None = None, q: float | None = None) -> dict[str, float]:
        """Maximum relaxed von Mises stress per DOF load case."""
        q = self.plan.q if q is None else q
        state = self.design_state(x, beta)
        which = self.plan.constraint_field
        xp = state.physical(which)
        _, sols, _ = self.analyze(xp, self.sets.dof)
        out = {}
        for d, sol in sols.items():
            vm, _ = self.stress_eval.von_mises(sol.u)
            out[d] = float(np.max(relaxed_stress(vm, xp, q)))
        return out
