"""Experiment orchestration: build a problem from a config, run it, stream
metrics, evaluate certificates, and map failures to the exit-code contract.

Exit codes: 0 ok (including "ran the full horizon without converging"),
1 usage or configuration, 2 certification failure (certify subcommand) or
oracle deviation beyond tolerance (compare subcommand), 3 staleness
violation, 4 non-finite state, 5 I/O failure.

Seeding: every random ingredient derives from the master seed through a
distinct fixed channel (dataset, centers, per-client curvature, partition),
while the delay schedule and topology consume the master seed directly.
Identical (config, seed) therefore reproduces metrics byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certify import CertificateReport, ConvergenceReport, certificate_report
from .cfa import CfaEngine
from .config import RunConfig
from .consensus import ConsensusEngine
from .errors import NonFiniteError, StalenessViolationError
from .losses import (
    QuadraticLoss,
    client_losses,
    generate_synthetic,
    partition_dataset,
)
from .metrics import MetricsWriter
from .staleness import DelaySchedule
from .topology import build_topology

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UNCERTIFIED = 2
EXIT_STALENESS = 3
EXIT_NONFINITE = 4
EXIT_IO = 5

# channels for deriving independent streams from the master seed
_SEED_DATASET = 1
_SEED_CENTERS = 2
_SEED_CURVATURE = 3
_SEED_PARTITION = 4


def build_models(config: RunConfig) -> list:
    """Instantiate the per-client loss models a config describes."""
    if config.loss_kind == "quadratic":
        share = 1.0 / config.clients
        centers = (config.center_spread
                   * np.random.default_rng((config.seed, _SEED_CENTERS))
                   .standard_normal((config.clients, config.dimension)))
        models = []
        for k in range(config.clients):
            rng = np.random.default_rng((config.seed, _SEED_CURVATURE, k))
            b = rng.standard_normal((config.dimension, config.dimension))
            matrix = config.curvature_scale * (b @ b.T) / config.dimension
            models.append(QuadraticLoss(matrix, centers[k], weight=share))
        return models
    dataset = generate_synthetic(config.loss_kind, config.samples, config.dimension,
                                 seed=(config.seed, _SEED_DATASET), noise=config.noise)
    part = partition_dataset(dataset, config.clients, scheme=config.partition,
                             seed=(config.seed, _SEED_PARTITION))
    return client_losses(dataset, part, config.loss_kind)


def build_schedule(config: RunConfig) -> DelaySchedule:
    return DelaySchedule(config.delay_kind, config.delay_bounds,
                         seed=config.seed, offset=config.delay_offset)


def resolve_penalties(config: RunConfig, models) -> tuple:
    if config.penalties is not None:
        return config.penalties
    return tuple(config.penalty_rule * m.weighted_grad_bound() for m in models)


def build_engine(config: RunConfig):
    """Models + schedule + algorithm-specific assembly. Returns the engine;
    the consensus certificate is evaluated separately."""
    models = build_models(config)
    schedule = build_schedule(config)
    if config.algorithm == "consensus":
        return ConsensusEngine(models, resolve_penalties(config, models), schedule,
                               radius=config.radius)
    topology = build_topology(config.topology_kind, config.clients,
                              p=config.edge_probability, seed=config.seed)
    return CfaEngine(models, topology, schedule,
                     step_size=config.step_size, mix_base=config.mix_base,
                     mix_decay_time=config.mix_decay_time, mode=config.blend_mode)


def evaluate_certificate(config: RunConfig, engine) -> CertificateReport | None:
    if config.algorithm != "consensus":
        return None
    triples = zip(engine.penalties, engine.grad_bounds, engine.delay_bounds)
    return certificate_report(list(triples), gate_variant=config.alpha_variant)


def metrics_path_for(config: RunConfig) -> str:
    if config.out:
        return config.out
    return "metrics.csv" if config.format == "csv" else "metrics.jsonl"


def summary_path_for(metrics_path: str) -> str:
    return str(Path(metrics_path).with_suffix(".summary.json"))


@dataclass(frozen=True)
class ExperimentResult:
    exit_code: int
    summary: dict
    metrics_path: str
    summary_path: str
    rows: tuple

    @property
    def converged_at(self):
        return self.summary["convergence"]["converged_at"]


def run_experiment(config: RunConfig) -> ExperimentResult:
    """Execute one run end to end. Build errors raise; runtime failures are
    converted to exit codes, with all rows up to the failure already flushed."""
    start = time.perf_counter()
    engine = build_engine(config)
    certificate = evaluate_certificate(config, engine)
    metrics_path = metrics_path_for(config)
    summary_path = summary_path_for(metrics_path)

    rows = []
    exit_code = EXIT_OK
    status = "ok"
    error = None
    converged_at = None
    streak = 0
    minima = {"slack_lemma1": math.inf, "slack_lemma3": math.inf,
              "lemma4_margin": math.inf}

    writer = None
    try:
        writer = MetricsWriter(metrics_path, config.format)
        for _ in range(config.iterations):
            row = engine.step()
            writer.write(row)
            rows.append(row)
            minima["slack_lemma1"] = min(minima["slack_lemma1"], row.slack_lemma1)
            minima["slack_lemma3"] = min(minima["slack_lemma3"], row.slack_lemma3)
            minima["lemma4_margin"] = min(minima["lemma4_margin"], row.lemma4_margin)
            if row.dwk_max <= config.tol and row.dw <= config.tol:
                streak += 1
            else:
                streak = 0
            if converged_at is None and streak >= config.window:
                converged_at = row.t
                if config.stop_on_convergence:
                    break
    except StalenessViolationError as exc:
        exit_code, status, error = EXIT_STALENESS, "staleness-violation", str(exc)
    except NonFiniteError as exc:
        exit_code, status, error = EXIT_NONFINITE, "non-finite", str(exc)
    except OSError as exc:
        exit_code, status, error = EXIT_IO, "io-error", str(exc)
    finally:
        if writer is not None:
            writer.close()

    if rows:
        convergence = ConvergenceReport(
            converged_at=converged_at, tolerance=config.tol, window=config.window,
            final_client_residual=rows[-1].dwk_max,
            final_consensus_residual=rows[-1].dw)
    else:
        convergence = ConvergenceReport(
            converged_at=None, tolerance=config.tol, window=config.window,
            final_client_residual=math.nan, final_consensus_residual=math.nan)

    certified = (certificate is not None and certificate.certified
                 and exit_code == EXIT_OK)
    summary = {
        "algorithm": config.algorithm,
        "exit_code": exit_code,
        "status": status,
        "error": error,
        "stamp": "CERTIFIED" if certified else "UNCERTIFIED",
        "iterations_run": len(rows),
        "wall_time_s": time.perf_counter() - start,
        "config_warnings": list(config.warnings),
        "certificate": None if certificate is None else certificate.as_dict(),
        "convergence": convergence.as_dict(),
        "monitors": {
            "min_slack_lemma1": _or_none(minima["slack_lemma1"]),
            "min_slack_lemma3": _or_none(minima["slack_lemma3"]),
            "min_lemma4_margin": _or_none(minima["lemma4_margin"]),
            "max_dual_residual": (engine.dual_residual_max
                                  if config.algorithm == "consensus" else 0.0),
        },
    }
    try:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        if exit_code == EXIT_OK:
            exit_code, status = EXIT_IO, "io-error"
            summary["exit_code"], summary["status"], summary["error"] = (
                EXIT_IO, "io-error", str(exc))

    return ExperimentResult(exit_code=exit_code, summary=summary,
                            metrics_path=metrics_path, summary_path=summary_path,
                            rows=tuple(rows))


def _or_none(value: float):
    return None if math.isinf(value) else value
