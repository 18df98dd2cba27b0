"""Robust quantile hedging on a dyadic path lattice under model uncertainty."""
from .approx import (ErrorBudget, ExtendedStrategy, error_budget, evaluate_success, extend_strategy,
                     target_adjust)
from .exceptions import (ArbitrageError, ConfigurationError, DomainError, QHedgeError,
                         ResourceLimitError, SolverError, StructuralError)
from .lattice import MarketSpec, PathLattice, PayoffSpec, build_lattice, cell, payoff_vector, snap
from .linprog import LinearProgram, LPSolution, solve, vertex_enumerate
from .models import (AtomicBaseModel, KernelSet, MismatchReport, ModelPolytope, full_simplex,
                     induce_kernels, joint_polytope_from_kernels, lambda_modify, mismatch_report,
                     polytope_from_constraints)
from .pricing import (MartingaleCone, NACertificate, Strategy, build_cone, certify_na,
                      strategy_box_bounds, superhedge_price, superhedge_strategy)
from .quantile import (QuantilePriceResult, SuccessTest, ValuePoint, direct_price_oracle,
                       invert_price, split_price, value_function, verify_saddle)

__all__ = [
    "ArbitrageError", "AtomicBaseModel", "build_cone", "build_lattice", "cell", "certify_na",
    "ConfigurationError", "direct_price_oracle", "DomainError", "error_budget", "ErrorBudget",
    "evaluate_success", "extend_strategy", "ExtendedStrategy", "full_simplex", "induce_kernels",
    "invert_price", "joint_polytope_from_kernels", "KernelSet", "lambda_modify", "LinearProgram",
    "LPSolution", "MarketSpec", "MartingaleCone", "mismatch_report", "MismatchReport",
    "ModelPolytope", "NACertificate", "PathLattice", "payoff_vector", "PayoffSpec",
    "polytope_from_constraints", "QHedgeError", "QuantilePriceResult", "ResourceLimitError", "snap",
    "solve", "SolverError", "split_price", "Strategy", "strategy_box_bounds", "StructuralError",
    "SuccessTest", "superhedge_price", "superhedge_strategy", "target_adjust", "value_function",
    "ValuePoint", "verify_saddle", "vertex_enumerate",
]

__version__ = "0.1.0"
