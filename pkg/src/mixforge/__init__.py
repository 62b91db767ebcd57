"""
mixforge: mixed-quantum-gate synthesis.

Pauli-transfer-matrix algebra, error-map metrics with certified diamond
distances, convex weighting programs over ensembles of gate
implementations, robust pulse generation, and a randomized benchmarking
simulator.
"""

from .exceptions import (BranchCutError, ConvergenceError, InfeasibleError, MixforgeError,
                         SchemaError, SizeError, ValidationError)
from .pauli import (ProcessMatrix, VectorizedState, apply, compose, pauli_basis, pauli_operator,
                    ptm_from_kraus, ptm_from_unitary, rotation, vectorize_state)
from .metrics import (ErrorGenerator, ErrorMap, agi, check_diamond_convexity, error_generator,
                      error_map, mixture_error_map, off_diagonal_vector, truncated_error_map)
from .diamond import (DiamondResult, choi_matrix, diamond_distance, diamond_result, metric_report,
                      unitary_diamond_distance)
from .simplex import SimplexProblem, SimplexSolution, minimize_on_simplex, project_simplex
from .synthesis import (GateEnsemble, EnsembleMember, HullCertificate, MixtureWeights, Program,
                        SynthesisConfig, acorn_ensemble, hull_contains_origin, program_objective,
                        sample_member, solve, solve_agi_constrained, solve_agi_weighted,
                        solve_diamond_direct, solve_generator_exact, solve_pauli_exact,
                        solve_robust, solve_sparse)
from .control import (BangBangOptions, ControlPulse, GrapeOptions, HamiltonianModel,
                      QuadratureScheme, bangbang_family, build_ensemble, grape_optimize,
                      propagate, sensitivity_scan)
from .rb import (GateSource, PulseImplementation, RBConfig, RBResult, clifford_table, fit_decay,
                 acorn_sources, run_rb)
from .io import load, save

__version__ = "0.1.0"
