"""Step/delay certificates and runtime verification of convergence conditions.

The consensus engine's analysis rests on a per-client scalar certificate
combining the coupling penalty, the gradient Lipschitz bound, and the delay
bound. Two published forms of that scalar disagree; both are computed here.
The "conservative" form is the coefficient that actually appears in the
cumulative descent inequality (re-derived independently before
implementation), so it is the default safety gate and always the one used by
the descent monitor. The looser "nominal" form is the one stated as the
method's standing assumption; the gate variant is selectable per run and both
values are always reported.

Monitors turn proved inequalities into executable checks. Each returns a
slack (bound minus observed); non-negative slack means the inequality held on
the trajectory. All monitors are pure functions over trace data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

CONSERVATIVE = "conservative"
NOMINAL = "nominal"
CERTIFICATE_VARIANTS = (CONSERVATIVE, NOMINAL)

PENALTY_RATIO_FLOOR = 7.0


def descent_coefficient(penalty: float, grad_bound: float, delay_bound: int,
                        variant: str = CONSERVATIVE) -> float:
    """Certificate scalar for one client.

    conservative: e/2 - (1/e + 7m/(2e^2)) m^2 (T+1)^2 - m T^2 / 2
    nominal:      e - 2 (1/e - 7m/(2e^2)) m^2 (T+1)^2 + m T^2

    with e the penalty, m the gradient Lipschitz bound, T the delay bound.
    Positivity (together with e > 7m) certifies cumulative descent of the
    coupled objective despite delays.
    """
    e = float(penalty)
    m = float(grad_bound)
    T = int(delay_bound)
    if e <= 0.0:
        raise ConfigurationError(f"penalty must be positive, got {penalty!r}")
    if m < 0.0:
        raise ConfigurationError(f"gradient bound must be non-negative, got {grad_bound!r}")
    if T < 0:
        raise ConfigurationError(f"delay bound must be non-negative, got {delay_bound!r}")
    window_sq = m * m * (T + 1) ** 2
    if variant == NOMINAL:
        return e - 2.0 * (1.0 / e - 7.0 * m / (2.0 * e * e)) * window_sq + m * T * T
    if variant == CONSERVATIVE:
        return 0.5 * e - (1.0 / e + 7.0 * m / (2.0 * e * e)) * window_sq - 0.5 * m * T * T
    raise ConfigurationError(f"unknown certificate variant {variant!r}")


@dataclass(frozen=True)
class ClientCertificate:
    penalty: float
    grad_bound: float
    delay_bound: int
    coefficient_conservative: float
    coefficient_nominal: float
    penalty_margin: float

    @property
    def passes_conservative(self) -> bool:
        return self.coefficient_conservative > 0.0 and self.penalty_margin > 0.0

    @property
    def passes_nominal(self) -> bool:
        return self.coefficient_nominal > 0.0 and self.penalty_margin > 0.0

    def passes(self, variant: str) -> bool:
        if variant == CONSERVATIVE:
            return self.passes_conservative
        if variant == NOMINAL:
            return self.passes_nominal
        raise ConfigurationError(f"unknown certificate variant {variant!r}")


@dataclass(frozen=True)
class CertificateReport:
    clients: tuple
    gate_variant: str

    @property
    def certified(self) -> bool:
        return all(c.passes(self.gate_variant) for c in self.clients)

    @property
    def all_conservative(self) -> bool:
        return all(c.passes_conservative for c in self.clients)

    def as_dict(self) -> dict:
        return {
            "gate_variant": self.gate_variant,
            "certified": self.certified,
            "clients": [
                {
                    "penalty": c.penalty,
                    "grad_bound": c.grad_bound,
                    "delay_bound": c.delay_bound,
                    "coefficient_conservative": c.coefficient_conservative,
                    "coefficient_nominal": c.coefficient_nominal,
                    "penalty_margin": c.penalty_margin,
                    "passes_conservative": c.passes_conservative,
                    "passes_nominal": c.passes_nominal,
                }
                for c in self.clients
            ],
        }


def certificate_report(clients, gate_variant: str = CONSERVATIVE) -> CertificateReport:
    """Evaluate the certificate for every (penalty, grad_bound, delay_bound).

    The pass condition per client is strict: certificate > 0 AND
    penalty > 7 * grad_bound. Equality on either fails.
    """
    if gate_variant not in CERTIFICATE_VARIANTS:
        raise ConfigurationError(f"unknown certificate variant {gate_variant!r}")
    rows = []
    for penalty, grad_bound, delay_bound in clients:
        rows.append(ClientCertificate(
            penalty=float(penalty),
            grad_bound=float(grad_bound),
            delay_bound=int(delay_bound),
            coefficient_conservative=descent_coefficient(penalty, grad_bound, delay_bound, CONSERVATIVE),
            coefficient_nominal=descent_coefficient(penalty, grad_bound, delay_bound, NOMINAL),
            penalty_margin=float(penalty) - PENALTY_RATIO_FLOOR * float(grad_bound),
        ))
    return CertificateReport(clients=tuple(rows), gate_variant=gate_variant)


@dataclass(frozen=True)
class MonitorSlack:
    """Outcome of one inequality check at one transition.

    slack = bound - observed; slack >= 0 means the inequality held.
    """

    check: str
    slack: float
    t: int | None = None
    per_client: tuple = ()


def dual_increment_bound(grad_bound: float, delay_bound: int, step_sq_window) -> float:
    """m^2 (T+1) * sum of the last <= T+1 squared consensus steps.

    Transitions before the start of a run contribute zero, which keeps the
    bound valid from the first transition (every telescoping index the dual
    increment can span is inside the retained window).
    """
    take = list(step_sq_window)[-(int(delay_bound) + 1):]
    return grad_bound * grad_bound * (delay_bound + 1) * math.fsum(take)


def dual_increment_monitor(w_history, multipliers_before, multipliers_after,
                           grad_bounds, delay_bounds, start_index: int | None = None):
    """Check the dual-step bound at the latest transition in ``w_history``.

    ``w_history`` holds consecutive consensus vectors, oldest first, ending at
    the transition being checked; ``multipliers_before``/``after`` hold each
    client's dual vector at the two ends of that transition. ``start_index``
    is the iteration index of ``w_history[0]``; when it equals 1 the history
    is complete and missing earlier transitions count as zero movement.
    Returns None when the window is too short to decide (not an error).
    """
    n = len(w_history)
    if n < 2:
        return None
    need = max(int(b) for b in delay_bounds) + 1
    from_start = start_index == 1
    if n - 1 < need and not from_start:
        return None
    steps_sq = [float(np.sum((np.asarray(w_history[i + 1]) - np.asarray(w_history[i])) ** 2))
                for i in range(n - 1)]
    per_client = []
    for k, (m, T) in enumerate(zip(grad_bounds, delay_bounds)):
        bound = dual_increment_bound(m, T, steps_sq)
        observed = float(np.sum((np.asarray(multipliers_after[k]) - np.asarray(multipliers_before[k])) ** 2))
        per_client.append(bound - observed)
    t = None if start_index is None else start_index + n - 2
    return MonitorSlack(check="dual-increment", slack=min(per_client), t=t,
                        per_client=tuple(per_client))


def descent_budget_coefficients(penalties, grad_bounds, delay_bounds):
    """Per-client coefficients of the cumulative descent inequality.

    Returns (client_coeffs, consensus_coeff): the (e_k - 7 m_k)/2 weights on
    squared client steps and the summed conservative certificates weighting
    squared consensus steps.
    """
    client_coeffs = np.array([(e - PENALTY_RATIO_FLOOR * m) / 2.0
                              for e, m in zip(penalties, grad_bounds)])
    consensus_coeff = math.fsum(
        descent_coefficient(e, m, T, CONSERVATIVE)
        for e, m, T in zip(penalties, grad_bounds, delay_bounds)
    )
    return client_coeffs, consensus_coeff


def cumulative_descent_monitor(initial_lagrangian: float, lagrangians,
                               client_steps_sq, consensus_steps_sq,
                               penalties, grad_bounds, delay_bounds) -> np.ndarray:
    """Slack of the cumulative descent bound after every transition.

    slack_t = [L(1) - sum_{i<=t} sum_k (e_k - 7 m_k)/2 ||dx_k^i||^2
                    - sum_{i<=t} sum_k cert_k ||dw^i||^2] - L(t+1)

    using conservative certificates regardless of the gate variant: that is
    the coefficient the inequality is actually proved with, and it stays valid
    (merely looser) when a certificate is negative.
    """
    client_steps_sq = np.asarray(client_steps_sq, dtype=float)
    consensus_steps_sq = np.asarray(consensus_steps_sq, dtype=float)
    lagrangians = np.asarray(lagrangians, dtype=float)
    client_coeffs, consensus_coeff = descent_budget_coefficients(
        penalties, grad_bounds, delay_bounds)
    per_iter = client_steps_sq @ client_coeffs + consensus_coeff * consensus_steps_sq
    budget = np.cumsum(per_iter)
    return (initial_lagrangian - budget) - lagrangians


def objective_floor(grad_bounds, radius: float) -> float:
    """Lower bound on the coupled objective over a feasible ball of the given
    radius: -(2R)^2 * sum_k m_k / 2."""
    radius = float(radius)
    if not math.isfinite(radius) or radius <= 0:
        raise ConfigurationError(f"feasible radius must be finite and positive, got {radius!r}")
    diameter_sq = (2.0 * radius) ** 2
    return -diameter_sq * math.fsum(float(m) for m in grad_bounds) / 2.0


@dataclass(frozen=True)
class ConvergenceReport:
    converged_at: int | None
    tolerance: float
    window: int
    final_client_residual: float
    final_consensus_residual: float

    def as_dict(self) -> dict:
        return {
            "converged_at": self.converged_at,
            "tolerance": self.tolerance,
            "window": self.window,
            "final_client_residual": self.final_client_residual,
            "final_consensus_residual": self.final_consensus_residual,
        }


def detect_stationarity(client_residuals, consensus_residuals,
                        tol: float, window: int) -> ConvergenceReport:
    """First transition t such that both residual families stayed <= tol for
    the last ``window`` transitions ending at t; None if that never happens.

    ``client_residuals[i]`` is max_k ||x_k change|| at transition i+1 and
    ``consensus_residuals[i]`` the consensus-vector change there.
    """
    if tol <= 0:
        raise ConfigurationError("tolerance must be positive")
    if window < 1:
        raise ConfigurationError("window must be at least 1")
    client_residuals = np.asarray(client_residuals, dtype=float)
    consensus_residuals = np.asarray(consensus_residuals, dtype=float)
    if client_residuals.shape != consensus_residuals.shape or client_residuals.ndim != 1:
        raise ConfigurationError("residual arrays must be 1-D and equally long")
    if client_residuals.size == 0:
        raise ConfigurationError("empty trace")
    converged_at = None
    streak = 0
    for i in range(client_residuals.size):
        if client_residuals[i] <= tol and consensus_residuals[i] <= tol:
            streak += 1
            if streak >= window:
                converged_at = i + 1
                break
        else:
            streak = 0
    return ConvergenceReport(
        converged_at=converged_at,
        tolerance=float(tol),
        window=int(window),
        final_client_residual=float(client_residuals[-1]),
        final_consensus_residual=float(consensus_residuals[-1]),
    )


def empirical_grad_lipschitz(model, trials: int = 100, seed=0, spread: float = 3.0) -> float:
    """Sampled lower estimate of the gradient Lipschitz constant.

    Max of ||grad(x) - grad(y)|| / ||x - y|| over seeded random pairs; always
    at most the analytic bound (up to 1e-9 relative), used to sanity-check it.
    """
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    d = model.dimension
    best = 0.0
    for _ in range(trials):
        x = spread * rng.standard_normal(d)
        y = spread * rng.standard_normal(d)
        gap = np.linalg.norm(x - y)
        if gap == 0.0:
            continue
        ratio = np.linalg.norm(model.gradient(x) - model.gradient(y)) / gap
        best = max(best, float(ratio))
    return best
