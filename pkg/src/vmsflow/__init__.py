"""Stabilized mixed finite elements for incompressible flow.

Velocity/pressure discretizations (triangle Lagrange and tensor B-spline),
residual-based stabilization with a discretely divergence-free fine-scale
model, steady Oseen and Navier-Stokes solvers, a midpoint time integrator
with dynamic or quasi-static subscales, and manufactured-solution
verification drivers.
"""

__version__ = "0.1.0"

from .discretization import (
    BasisEval,
    MixedSpace,
    QuadratureRule,
    ScalarSpace,
    StructuredTriMesh,
    Tabulation,
    TensorKnotMesh,
    build_knot_mesh,
    build_spline_taylor_hood,
    build_taylor_hood,
    build_tri_mesh,
    eval_basis,
    quadrature_for,
    square_rule,
    triangle_rule,
)

__all__ = [
    "__version__",
    "BasisEval",
    "MixedSpace",
    "QuadratureRule",
    "ScalarSpace",
    "StructuredTriMesh",
    "Tabulation",
    "TensorKnotMesh",
    "build_knot_mesh",
    "build_spline_taylor_hood",
    "build_taylor_hood",
    "build_tri_mesh",
    "eval_basis",
    "quadrature_for",
    "square_rule",
    "triangle_rule",
]
