"""Topology optimization of short-stroke flexures from strain-energy responses."""
from ._kernels import BACKEND
from .degrees import DEGREES_2D, DEGREES_3D, prescribed_2d, prescribed_3d, validate_degree_sets
from .driver import RunConfig, RunResult, export_density, measure_non_discreteness, run, write_log
from .errors import ConfigurationError, DegenerateProblemError, NumericalSingularityError
from .mesh import Mesh, build_mesh, element_dof_map, interface_sets
from .variants import VariantConfig, configure_variant

__all__ = [
    "BACKEND", "DEGREES_2D", "DEGREES_3D", "ConfigurationError", "DegenerateProblemError",
    "Mesh", "NumericalSingularityError", "RunConfig", "RunResult", "VariantConfig",
    "build_mesh", "configure_variant", "element_dof_map", "export_density", "interface_sets",
    "measure_non_discreteness", "prescribed_2d", "prescribed_3d", "run",
    "validate_degree_sets", "write_log",
]
