"""Run plans for the base, robust (erode/dilate) and stress-constrained modes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .degrees import DegreeSets
from .errors import ConfigurationError

MODES = ("base", "robust", "stress", "robust+stress")


@dataclass
class VariantConfig:
    mode: str = "base"
    # robust
    eta: float = 0.5
    deta: float = 0.2
    beta_init: float = 1.0
    beta_max: float = 64.0
    beta_interval: int = 50
    radius: float | None = None
    reference_field: str = "per-field"
    # stress
    sigma_bar: float | None = None
    sigma_bar_fraction: float | None = None
    sigma_reference: str | None = None
    stress_dofs: list[str] | None = None
    p_agg: float = 10.0
    q: float = 0.5
    adaptive_stress: bool = True


@dataclass
class RunPlan:
    mode: str
    robust: bool
    stress: bool
    objective_field: str
    constraint_field: str
    thresholds: dict[str, float] = field(default_factory=dict)
    beta_init: float = 0.0
    beta_max: float = 0.0
    beta_interval: int = 50
    radius: float = 2.0
    reference_field: str = "per-field"
    sigma_bar: dict[str, float] = field(default_factory=dict)
    stress_dofs: tuple[str, ...] = ()
    p_agg: float = 10.0
    q: float = 0.5
    adaptive_stress: bool = True

    @property
    def factorizations_per_iteration(self) -> int:
        return 2 if self.robust else 1

    @property
    def adjoints_per_iteration(self) -> int:
        return len(self.stress_dofs) if self.stress else 0

    def beta_at(self, stage: int) -> float:
        if not self.robust:
            return 0.0
        return min(self.beta_init * 2.0**stage, self.beta_max)

    @property
    def final_stage(self) -> int:
        if not self.robust or self.beta_max <= self.beta_init:
            return 0
        stage = 0
        while self.beta_at(stage) < self.beta_max:
            stage += 1
        return stage


def reference_max_stress(path: str | Path, dof: str | None = None) -> float:
    """Maximum relaxed von Mises stress stored in a prior run's report."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read stress reference {path}: {exc}") from exc
    table = data.get("max_stress") or {}
    if not table:
        raise ConfigurationError(f"reference report {path} has no max_stress entries")
    if dof is not None and dof in table:
        return float(table[dof])
    return float(max(table.values()))


def configure_variant(sets: DegreeSets, variant: VariantConfig, radius: float = 2.0) -> RunPlan:
    """Translate a variant configuration into an executable plan."""
    mode = variant.mode
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")
    robust = "robust" in mode
    stress = "stress" in mode
    plan = RunPlan(mode=mode, robust=robust, stress=stress,
                   objective_field="eroded" if robust else "nominal",
                   constraint_field="dilated" if robust else "nominal",
                   radius=float(variant.radius if (robust and variant.radius) else radius))
    if robust:
        eta, deta = variant.eta, variant.deta
        if not 0.0 < deta < min(eta, 1.0 - eta):
            raise ConfigurationError(
                f"need 0 < deta < min(eta, 1 - eta); got eta={eta}, deta={deta}")
        if variant.beta_init <= 0 or variant.beta_max < variant.beta_init:
            raise ConfigurationError("beta schedule must satisfy 0 < beta_init <= beta_max")
        if variant.beta_interval < 1:
            raise ConfigurationError("beta_interval must be >= 1")
        plan.thresholds = {"eroded": eta + deta, "intermediate": eta, "dilated": eta - deta}
        plan.beta_init = float(variant.beta_init)
        plan.beta_max = float(variant.beta_max)
        plan.beta_interval = int(variant.beta_interval)
        if variant.reference_field not in ("per-field", "nominal"):
            raise ConfigurationError(
                f"reference_field must be 'per-field' or 'nominal', got {variant.reference_field!r}")
        plan.reference_field = variant.reference_field
    if stress:
        dofs = tuple(variant.stress_dofs) if variant.stress_dofs else sets.dof
        unknown = [d for d in dofs if d not in sets.dof]
        if unknown:
            raise ConfigurationError(f"stress constraints apply to DOFs only; got {unknown[0]!r}")
        if variant.p_agg < 1:
            raise ConfigurationError(f"aggregation exponent must be >= 1, got {variant.p_agg}")
        bars = {}
        for d in dofs:
            if variant.sigma_reference is not None:
                frac = variant.sigma_bar_fraction if variant.sigma_bar_fraction is not None else 1.0
                bars[d] = frac * reference_max_stress(variant.sigma_reference, d)
            elif variant.sigma_bar is not None:
                bars[d] = float(variant.sigma_bar)
            else:
                raise ConfigurationError("stress mode needs sigma_bar or sigma_reference")
            if not bars[d] > 0:
                raise ConfigurationError(f"allowable stress must be positive, got {bars[d]}")
        plan.sigma_bar = bars
        plan.stress_dofs = dofs
        plan.p_agg = float(variant.p_agg)
        plan.q = float(variant.q)
        plan.adaptive_stress = bool(variant.adaptive_stress)
    return plan
