"""Stochastically forced 2D Navier-Stokes on a beta-plane channel, with
Karman-Howarth-Monin budget diagnostics for the direct enstrophy cascade."""

__version__ = "0.1.0"

from .fields import (
    ChannelGrid,
    PhysicalField,
    SpectralField,
    PaddedField,
    VelocityPair,
    L2Norms,
    transform_forward,
    transform_inverse,
    velocity_from_vorticity,
    extend_by_zero,
    l2_norms,
)
from .forcing import (
    ForcingBasis,
    RngState,
    build_forcing_basis,
    sample_vorticity_increment,
    forcing_correlations_at,
)
from .dynamics import (
    PhysicsParams,
    FlowState,
    SpinupCriterion,
    RunResult,
    CFLViolationError,
    NumericalBlowupError,
    NonConvergenceError,
    rest_state,
    step,
    run_to_stationarity,
)
from .statistics import (
    CORRELATION_KINDS,
    FORCING_KINDS,
    STRUCTURE_KINDS,
    SeparationGrid,
    DiagnosticSeries,
    KHMBudget,
    BalanceReport,
    CascadeFit,
    EnergySpectrum,
    two_point_spherical,
    forcing_spherical,
    structure_function_spherical,
    khm_velocity_budget,
    khm_vorticity_budget,
    balance_residuals,
    cascade_fit,
    energy_spectrum,
)
from .io import (
    SnapshotFormatError,
    SnapshotChecksumError,
    SnapshotVersionError,
    SnapshotTruncatedError,
    SnapshotHeader,
    write_snapshot,
    read_snapshot,
    read_snapshot_header,
)
from .config import (
    ConfigError,
    RunConfig,
    ForcingConfig,
    TimeConfig,
    AnalysisConfig,
    load_config,
    parse_config,
    config_text,
    echo_config,
)
from .oracle import OracleReport, run_oracle_suite

__all__ = [
    "ChannelGrid",
    "PhysicalField",
    "SpectralField",
    "PaddedField",
    "VelocityPair",
    "L2Norms",
    "transform_forward",
    "transform_inverse",
    "velocity_from_vorticity",
    "extend_by_zero",
    "l2_norms",
    "ForcingBasis",
    "RngState",
    "build_forcing_basis",
    "sample_vorticity_increment",
    "forcing_correlations_at",
    "PhysicsParams",
    "FlowState",
    "SpinupCriterion",
    "RunResult",
    "CFLViolationError",
    "NumericalBlowupError",
    "NonConvergenceError",
    "rest_state",
    "step",
    "run_to_stationarity",
    "CORRELATION_KINDS",
    "FORCING_KINDS",
    "STRUCTURE_KINDS",
    "SeparationGrid",
    "DiagnosticSeries",
    "KHMBudget",
    "BalanceReport",
    "CascadeFit",
    "EnergySpectrum",
    "two_point_spherical",
    "forcing_spherical",
    "structure_function_spherical",
    "khm_velocity_budget",
    "khm_vorticity_budget",
    "balance_residuals",
    "cascade_fit",
    "energy_spectrum",
    "SnapshotFormatError",
    "SnapshotChecksumError",
    "SnapshotVersionError",
    "SnapshotTruncatedError",
    "SnapshotHeader",
    "write_snapshot",
    "read_snapshot",
    "read_snapshot_header",
    "ConfigError",
    "RunConfig",
    "ForcingConfig",
    "TimeConfig",
    "AnalysisConfig",
    "load_config",
    "parse_config",
    "config_text",
    "echo_config",
    "OracleReport",
    "run_oracle_suite",
    "__version__",
]
