"""Core data models for two-speed dispatching analysis and simulation."""

from .core import (
    PolicyFamily,
    ServerClass,
    ServiceKind,
    # Diagnostic types
    DiagnosticSeverity,
    SolverDiagnostic,
    # System and policy types
    SystemConfig,
    PolicyParams,
    ServiceDistribution,
    derive_rates,
    second_moment,
    # Analysis results
    RhoFixedPoint,
    GeometricQueueDist,
    ClassResponse,
    TailDistribution,
    # Optimization results
    OptMethod,
    OptCandidate,
    OptResult,
    # Simulation types
    PolicyKind,
    DispatchPolicy,
    QueueLengthBin,
    SimReport,
    OracleMetrics,
    # Experiment types
    RecipeName,
    ExperimentRecipe,
    SweepCell,
    SweepState,
    CellState,
    # Reducer functions
    merge_rows,
    append_issues,
)

__all__ = [
    "PolicyFamily",
    "ServerClass",
    "ServiceKind",
    # Diagnostic types
    "DiagnosticSeverity",
    "SolverDiagnostic",
    # System and policy types
    "SystemConfig",
    "PolicyParams",
    "ServiceDistribution",
    "derive_rates",
    "second_moment",
    # Analysis results
    "RhoFixedPoint",
    "GeometricQueueDist",
    "ClassResponse",
    "TailDistribution",
    # Optimization results
    "OptMethod",
    "OptCandidate",
    "OptResult",
    # Simulation types
    "PolicyKind",
    "DispatchPolicy",
    "QueueLengthBin",
    "SimReport",
    "OracleMetrics",
    # Experiment types
    "RecipeName",
    "ExperimentRecipe",
    "SweepCell",
    "SweepState",
    "CellState",
    # Reducer functions
    "merge_rows",
    "append_issues",
]
