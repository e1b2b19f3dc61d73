"""Meshfree quadrature for singular nonlocal kernels and bond-based peridynamics.

Quadrature weights are generated per particle by a constrained
least-squares problem that reproduces the constant plus kernel-weighted
polynomials exactly, giving truncation error O(delta^(n-1)) for the
bond kernel and convergence to the local elasticity solution at a fixed
horizon/spacing ratio.  The package also provides static/implicit-dynamic
solvers with bond-breaking damage and the verification experiments.
"""

from .assembly import (FloatingParticleError, GlobalSystem, SolveError, apply_dirichlet,
                       assemble_static, solve_linear)
from .config import ConfigError, RunConfig, load_config
from .dynamics import (BondTable, ImplicitDynamics, SimulationState, bond_strain,
                       fragment_count, measure_crack_angle, preprocess_cracks,
                       step_implicit)
from .geometry import (Domain2D, LatticeSpec, PointCloud, build_perturbed_lattice,
                       fill_distance, segment_intersects_bond)
from .kernels import (MaterialModel, PeridynamicKernel, critical_strain, kernel_matrix,
                      material_constant)
from .linalg import InfeasibleConstraintsError, min_norm_solve, residual_inf_norm
from .quadrature import (QuadratureRule, ReproducingSpace, UnisolvencyError, apply_operator,
                         build_basis, exact_moments, generate_weights, numeric_moments)
from .verification import (convergence_slope, error_norms, eval_local_trig,
                           eval_nonlocal_poly, eval_typeI)

__version__ = "0.1.0"

__all__ = [
    "BondTable", "ConfigError", "Domain2D", "FloatingParticleError", "GlobalSystem",
    "ImplicitDynamics", "InfeasibleConstraintsError", "LatticeSpec", "MaterialModel",
    "PeridynamicKernel", "PointCloud", "QuadratureRule", "ReproducingSpace", "RunConfig",
    "SimulationState", "SolveError", "UnisolvencyError", "apply_dirichlet",
    "apply_operator", "assemble_static", "bond_strain", "build_basis",
    "build_perturbed_lattice", "convergence_slope", "critical_strain", "error_norms",
    "eval_local_trig", "eval_nonlocal_poly", "eval_typeI", "exact_moments",
    "fill_distance", "fragment_count", "generate_weights", "kernel_matrix",
    "load_config", "material_constant", "measure_crack_angle", "min_norm_solve",
    "numeric_moments", "preprocess_cracks", "residual_inf_norm",
    "segment_intersects_bond", "solve_linear", "step_implicit",
]
