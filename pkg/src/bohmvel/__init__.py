"""Guided-trajectory ensembles and their asymptotic velocity distributions.

The package simulates ensembles of de Broglie-Bohm trajectories driven
by evolving wave functions (spectral Schrodinger and free 1+1D Dirac),
estimates the distribution of their limiting velocities k(t)/t, and
compares it against the velocity distribution carried by the quantum
state itself, including under Lorentz boosts and across flat foliations.
Natural units hbar = c = 1 throughout.
"""

from .core import (
    Configuration,
    EmpiricalMeasure,
    EnsembleRun,
    PoincareElement,
    SampledTrajectory,
    VelocityPoint,
    WorldLineFlag,
    validate_worldline,
    velocity_estimate_at,
)
from .errors import (
    BohmvelError,
    ConfigurationError,
    DomainError,
    InvalidInputError,
    NodeProximityError,
    NonConvergedError,
    NumericalFailureError,
    RegularityError,
)
from .wavefunction import (
    GridSpec,
    GridWavefunction,
    OutgoingAsymptote,
    PotentialSpec,
    evolve_dirac,
    evolve_schrodinger,
    gaussian_packet,
    momentum_density,
    outgoing_asymptote,
    project_positive_energy,
    superposed_gaussians,
)
from .guidance import (
    NodePolicy,
    check_equivariance,
    integrate_ensemble,
    sample_initial,
    velocity_at,
)
from .asymptotics import (
    AsymptoticEstimate,
    RegularityReport,
    VelocityDistribution,
    dirac_velocity_distribution,
    estimate_asymptotic_measure,
    estimate_asymptotic_velocity,
    free_velocity_distribution,
    rotating_trajectory_family,
    scattering_velocity_distribution,
    velocity_measure_at,
    verify_distribution_equality,
    weak_convergence_residuals,
)
from .relativity import (
    FoliationLabel,
    Reparameterization,
    boost_dirac_state,
    boost_worldline,
    check_boost_velocity_consistency,
    foliation_sweep,
    transform_velocity,
    verify_boost_covariance,
)
from .stats import (
    ComparisonReport,
    compare_measures,
    ks_critical_value,
    ks_distance,
    test_function_dictionary,
    test_function_integrals,
    wasserstein1_1d,
)
from .pipeline import PipelineParams, PipelineResult, run_guided_pipeline

__version__ = "0.1.0"
