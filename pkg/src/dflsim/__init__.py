"""Deterministic simulator and certification harness for decentralized
federated learning under bounded update delays.

Two iteration engines are provided: a consensus-averaging baseline and an
augmented-Lagrangian consensus method tolerant of stale parameter versions.
Every convergence condition the method's analysis relies on is executable at
runtime: step/delay certificates, per-iteration inequality monitors, and a
stationarity detector.
"""

from __future__ import annotations

from .certify import (
    CERTIFICATE_VARIANTS,
    CONSERVATIVE,
    NOMINAL,
    CertificateReport,
    ClientCertificate,
    ConvergenceReport,
    MonitorSlack,
    certificate_report,
    cumulative_descent_monitor,
    descent_coefficient,
    detect_stationarity,
    dual_increment_bound,
    dual_increment_monitor,
    empirical_grad_lipschitz,
    objective_floor,
)
from .cfa import (
    BLEND_MODES,
    CfaEngine,
    local_gradient_step,
    mixing_coefficient,
    neighborhood_blend,
)
from .config import (
    ALGORITHMS,
    RunConfig,
    config_from_mapping,
    load_config,
)
from .consensus import (
    DEFAULT_RADIUS,
    ConsensusEngine,
    consensus_update,
    lagrangian_value,
    multiplier_update,
    primal_step,
    project_ball,
    run_sync_reference,
)
from .errors import (
    ColdStartError,
    ConfigurationError,
    NonFiniteError,
    ShapeError,
    StalenessViolationError,
)
from .harness import (
    EXIT_IO,
    EXIT_NONFINITE,
    EXIT_OK,
    EXIT_STALENESS,
    EXIT_UNCERTIFIED,
    EXIT_USAGE,
    ExperimentResult,
    build_engine,
    build_models,
    build_schedule,
    resolve_penalties,
    run_experiment,
)
from .losses import (
    LOSS_KINDS,
    PARTITION_SCHEMES,
    Dataset,
    LeastSquaresLoss,
    LogisticLoss,
    Partition,
    QuadraticLoss,
    SigmoidLoss,
    client_losses,
    generate_synthetic,
    load_dataset,
    partition_dataset,
    save_dataset,
    stable_sum,
    top_eigenvalue,
    weighted_global_gradient,
    weighted_global_objective,
)
from .metrics import (
    CompareReport,
    MetricsWriter,
    compare_trajectories,
    format_row,
    read_metrics,
)
from .staleness import (
    SCHEDULE_KINDS,
    DelaySchedule,
    NeighborVersionStore,
    VersionCache,
    validate_schedule,
)
from .topology import (
    TOPOLOGY_KINDS,
    Topology,
    build_topology,
    edge_list_text,
)
from .trace import TRACE_FIELDS, TraceRow

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BLEND_MODES",
    "CERTIFICATE_VARIANTS",
    "CONSERVATIVE",
    "DEFAULT_RADIUS",
    "EXIT_IO",
    "EXIT_NONFINITE",
    "EXIT_OK",
    "EXIT_STALENESS",
    "EXIT_UNCERTIFIED",
    "EXIT_USAGE",
    "LOSS_KINDS",
    "NOMINAL",
    "PARTITION_SCHEMES",
    "SCHEDULE_KINDS",
    "TOPOLOGY_KINDS",
    "TRACE_FIELDS",
    "CertificateReport",
    "CfaEngine",
    "ClientCertificate",
    "ColdStartError",
    "CompareReport",
    "ConfigurationError",
    "ConsensusEngine",
    "ConvergenceReport",
    "Dataset",
    "DelaySchedule",
    "ExperimentResult",
    "LeastSquaresLoss",
    "LogisticLoss",
    "MetricsWriter",
    "MonitorSlack",
    "NeighborVersionStore",
    "NonFiniteError",
    "Partition",
    "QuadraticLoss",
    "RunConfig",
    "ShapeError",
    "SigmoidLoss",
    "StalenessViolationError",
    "Topology",
    "TraceRow",
    "VersionCache",
    "build_engine",
    "build_models",
    "build_schedule",
    "build_topology",
    "certificate_report",
    "client_losses",
    "compare_trajectories",
    "config_from_mapping",
    "consensus_update",
    "cumulative_descent_monitor",
    "descent_coefficient",
    "detect_stationarity",
    "dual_increment_bound",
    "dual_increment_monitor",
    "edge_list_text",
    "empirical_grad_lipschitz",
    "format_row",
    "generate_synthetic",
    "lagrangian_value",
    "load_config",
    "load_dataset",
    "local_gradient_step",
    "mixing_coefficient",
    "multiplier_update",
    "neighborhood_blend",
    "objective_floor",
    "partition_dataset",
    "primal_step",
    "project_ball",
    "read_metrics",
    "resolve_penalties",
    "run_experiment",
    "run_sync_reference",
    "save_dataset",
    "stable_sum",
    "top_eigenvalue",
    "validate_schedule",
    "weighted_global_gradient",
    "weighted_global_objective",
]
