"""Differentiable sparse PDE solvers with reverse-mode AD.

The heavy lifting lives in the C++ extension ``adjointpde._core``; this
package re-exports its public surface.
"""

from ._core import (
    ConfigError,
    GradientMap,
    LuFactorization,
    Mlp,
    NewtonDivergenceError,
    SingularMatrixError,
    SparseMatrix,
    Tape,
    VarId,
    generate_observations,
    gradcheck_example,
    heat_spacetime_matrix,
    known_examples,
    kron,
    mlp_parameter_count,
    poisson1d_solution,
    poisson1d_stiffness,
    run_example,
    shift_matrix,
    to_matrix_market,
)

__all__ = [
    "ConfigError",
    "GradientMap",
    "LuFactorization",
    "Mlp",
    "NewtonDivergenceError",
    "SingularMatrixError",
    "SparseMatrix",
    "Tape",
    "VarId",
    "generate_observations",
    "gradcheck_example",
    "heat_spacetime_matrix",
    "known_examples",
    "kron",
    "mlp_parameter_count",
    "poisson1d_solution",
    "poisson1d_stiffness",
    "run_example",
    "shift_matrix",
    "to_matrix_market",
]

__version__ = "0.1.0"
