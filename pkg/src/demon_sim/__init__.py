"""Simulation of an autonomous dissipative Maxwell demon acting on a spin-1 system.

The block map ``B = A U`` (free evolution followed by a laser pulse with
conditional optical pumping) drives the two-point-measurement statistics, the
efficacy ``gamma`` of the generalized Sagawa-Ueda-Tasaki relation, trajectory
entropies and energy-extraction bounds.
"""

from .demon import DemonConfig, DemonMap, build_block, evolve, spectral_gap, steady_state
from .errors import (
    BudgetExceeded,
    ConfigError,
    ConvergenceError,
    DemonSimError,
    InvariantViolation,
    NonUniqueSteadyState,
)
from .fluctuation import (
    EfficacyReport,
    SteadyStateDecomposition,
    decompose_steady_state,
    efficacy_analytic_nv,
    efficacy_asymptotic,
    efficacy_numeric,
    solve_eta_star_bisection,
    solve_eta_star_cubic,
    solve_ness_condition,
    sut_check,
    unitality_witness,
)
from .qutrit import EigenSystem, HamiltonianSpec, ThermalState, eigensystem, preparation_gate, thermal_state
from .statistics import TpmStatistics, characteristic_function, conditional_probabilities, tpm_statistics
from .trajectories import (
    BoundsReport,
    TrajectoryRecord,
    bounds_report,
    enumerate_trajectories,
    extraction_phase_diagram,
    shannon_entropy,
)

__version__ = "0.1.0"
