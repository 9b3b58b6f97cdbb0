"""Shared builders for the test modules."""
import numpy as np

from flexopt import VariantConfig, build_mesh, configure_variant, validate_degree_sets
from flexopt.problem import FlexureProblem


def make_problem(nelx=8, nely=8, doc=("ty",), dof=("tx",), emax=(1.0,), variant=None,
                 nelz=None, **kw):
    mesh = build_mesh(nelx, nely, nelz)
    sets = validate_degree_sets(list(doc), list(dof), mesh.ndim)
    plan = configure_variant(sets, variant or VariantConfig(), radius=kw.pop("radius", 2.0))
    return FlexureProblem(mesh, sets, plan, list(emax), **kw)


def central_fd(fun, x, h=1e-6):
    """Central differences of a scalar function, one component at a time."""
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


def relative_error(analytic, fd):
    return float(np.max(np.abs(analytic - fd)) / np.max(np.abs(fd)))
