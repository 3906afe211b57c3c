"""Delay-tolerant consensus solver with a penalized coupling objective.

Clients hold local models and dual variables; a shared consensus vector ties
them together. Each transition does, in order:

1. consensus update: projected penalty-weighted average of client states and
   duals,
2. the new consensus vector is published (version index = new state index),
3. every client reads a possibly stale published version, as dictated by its
   delay schedule, and takes the closed-form minimizer of its local
   augmented term,
4. dual ascent on the coupling residual.

Under zero delay step 3 reads the vector published in step 2, so the run
coincides with the fully synchronous method; that equivalence is a test.

The dual update algebraically pins each multiplier to the negative gradient
of the local objective at the read (stale) vector. The engine computes the
multiplier through the ascent formula and separately checks it against the
gradient route each transition; the gap is reported as the dual residual and
is expected to sit at rounding level. Collapsing the two routes would make
the check vacuous, so they stay distinct on purpose.

Every transition also evaluates the runtime monitors: the dual-increment
bound, the cumulative descent inequality (always with the conservative
certificate), and the objective floor margin.
"""

from __future__ import annotations

import math

import numpy as np

from .certify import (
    descent_budget_coefficients,
    dual_increment_bound,
    objective_floor,
)
from .errors import ConfigurationError, NonFiniteError, StalenessViolationError
from .losses import stable_sum
from .staleness import DelaySchedule, VersionCache
from .trace import TraceRow

DEFAULT_RADIUS = 1e6


def project_ball(vector, radius: float):
    """Euclidean projection onto the origin-centered ball of the given radius.

    The norm is computed with rescaling: squaring entries beyond ~1e154
    overflows a plain sum of squares, which would read as an infinite norm
    and collapse the projection to zero instead of the boundary point.
    """
    vector = np.asarray(vector, dtype=float)
    norm = float(np.linalg.norm(vector))
    if not math.isfinite(norm):
        scale = float(np.max(np.abs(vector)))
        if math.isfinite(scale):
            norm = scale * float(np.linalg.norm(vector / scale))
    if norm <= radius:
        return vector
    return vector * (radius / norm)


def consensus_update(params_list, multipliers, penalties, radius: float):
    """Projected minimizer of the coupling terms over the shared vector:
    (sum_k lam_k + e_k x_k) / (sum_k e_k), clipped to the feasible ball."""
    numerator = np.zeros_like(np.asarray(params_list[0], dtype=float))
    for x, lam, e in zip(params_list, multipliers, penalties):
        numerator = numerator + np.asarray(lam, dtype=float) + e * np.asarray(x, dtype=float)
    return project_ball(numerator / math.fsum(penalties), radius)


def primal_step(consensus, multiplier, grad_at_read, penalty: float):
    """Closed-form local minimizer: fresh consensus vector minus the scaled
    dual-plus-gradient correction, the gradient taken at the read version."""
    return consensus - (multiplier + grad_at_read) / penalty


def multiplier_update(multiplier, penalty: float, params_new, consensus_new):
    return multiplier + penalty * (params_new - consensus_new)


def lagrangian_value(models, params_list, multipliers, penalties, consensus) -> float:
    """Coupled objective: sum of local values, linear coupling terms, and
    quadratic penalties. Overflowing terms yield nan rather than an error."""
    terms = []
    for model, x, lam, e in zip(models, params_list, multipliers, penalties):
        diff = x - consensus
        terms.append(model.weighted_value(x) + float(lam @ diff)
                     + 0.5 * e * float(diff @ diff))
    return stable_sum(terms)


def _normalize_penalties(penalties, client_count: int):
    if np.isscalar(penalties):
        penalties = [penalties] * client_count
    penalties = tuple(float(e) for e in penalties)
    if len(penalties) != client_count:
        raise ConfigurationError(
            f"expected {client_count} penalties, got {len(penalties)}")
    bad = [e for e in penalties if not (e > 0 and math.isfinite(e))]
    if bad:
        raise ConfigurationError(f"penalties must be finite and positive, got {bad}")
    return penalties


class ConsensusEngine:
    """Stateful runner for the delay-tolerant consensus method.

    ``models`` must expose dimension, weighted_value, weighted_gradient and
    weighted_grad_bound (see the loss module). One schedule client per model.
    State indices are 1-based with the all-zeros initial state at index 1;
    trace rows count transitions from 1.
    """

    def __init__(self, models, penalties, schedule: DelaySchedule,
                 radius: float = DEFAULT_RADIUS, record_states: bool = False):
        models = list(models)
        if not models:
            raise ConfigurationError("at least one client model is required")
        dims = {m.dimension for m in models}
        if len(dims) != 1:
            raise ConfigurationError(f"client models disagree on dimension: {sorted(dims)}")
        if schedule.client_count != len(models):
            raise ConfigurationError(
                f"delay schedule covers {schedule.client_count} clients, "
                f"models define {len(models)}")
        if not (math.isfinite(radius) and radius > 0):
            raise ConfigurationError(f"feasible radius must be finite and positive, got {radius!r}")

        self.models = models
        self.dimension = models[0].dimension
        self.client_count = len(models)
        self.penalties = _normalize_penalties(penalties, self.client_count)
        self.schedule = schedule
        self.radius = float(radius)
        self.grad_bounds = tuple(m.weighted_grad_bound() for m in models)
        self.delay_bounds = schedule.bounds

        d = self.dimension
        self.t = 1
        self.consensus = np.zeros(d)
        self.params = [np.zeros(d) for _ in models]
        self.multipliers = [-m.weighted_gradient(self.consensus) for m in models]
        self._cache = VersionCache(schedule.max_bound + 1)
        self._cache.push(1, self.consensus)

        self.initial_lagrangian = lagrangian_value(
            self.models, self.params, self.multipliers, self.penalties, self.consensus)
        self.floor = objective_floor(self.grad_bounds, self.radius)
        self._client_coeffs, self._consensus_coeff = descent_budget_coefficients(
            self.penalties, self.grad_bounds, self.delay_bounds)
        self._budget = 0.0
        # squared consensus steps for the dual-increment window; transitions
        # before the start contribute zero, so starting empty is exact
        self._steps_sq: list[float] = []
        self._steps_cap = schedule.max_bound + 1
        self.dual_residual_max = 0.0
        self.record_states = record_states
        self.history: list[dict] = []
        if record_states:
            self._snapshot()

    def _snapshot(self):
        self.history.append({
            "t": self.t,
            "consensus": self.consensus.copy(),
            "params": [x.copy() for x in self.params],
            "multipliers": [lam.copy() for lam in self.multipliers],
        })

    def step(self) -> TraceRow:
        """Advance one transition and return its trace row."""
        t_new = self.t + 1
        row_t = self.t  # transition counter: first step emits t = 1

        consensus_new = consensus_update(
            self.params, self.multipliers, self.penalties, self.radius)
        self._cache.push(t_new, consensus_new)

        params_new = []
        multipliers_new = []
        dual_residual = 0.0
        for k, model in enumerate(self.models):
            idx = self.schedule.version_index(k, t_new)
            age = t_new - idx
            if age > self.delay_bounds[k]:
                raise StalenessViolationError(
                    f"client {k}: version {idx} read at iteration {t_new} is "
                    f"{age} old, bound is {self.delay_bounds[k]}")
            read = self._cache.fetch(idx)
            grad = model.weighted_gradient(read)
            x_new = primal_step(consensus_new, self.multipliers[k], grad, self.penalties[k])
            lam_new = multiplier_update(self.multipliers[k], self.penalties[k],
                                        x_new, consensus_new)
            dual_residual = max(dual_residual, float(np.linalg.norm(lam_new + grad)))
            params_new.append(x_new)
            multipliers_new.append(lam_new)

        lagrangian = lagrangian_value(
            self.models, params_new, multipliers_new, self.penalties, consensus_new)
        objective = stable_sum(m.weighted_value(consensus_new) for m in self.models)
        if not (math.isfinite(lagrangian) and math.isfinite(objective)
                and np.all(np.isfinite(consensus_new))
                and all(np.all(np.isfinite(x)) for x in params_new)
                and all(np.all(np.isfinite(lam)) for lam in multipliers_new)):
            raise NonFiniteError(f"non-finite state at iteration {t_new}")

        dw_sq = float(np.sum((consensus_new - self.consensus) ** 2))
        self._steps_sq.append(dw_sq)
        if len(self._steps_sq) > self._steps_cap:
            self._steps_sq.pop(0)

        slack1 = math.inf
        dlambda_max = 0.0
        for k in range(self.client_count):
            inc_sq = float(np.sum((multipliers_new[k] - self.multipliers[k]) ** 2))
            dlambda_max = max(dlambda_max, math.sqrt(inc_sq))
            bound = dual_increment_bound(
                self.grad_bounds[k], self.delay_bounds[k], self._steps_sq)
            slack1 = min(slack1, bound - inc_sq)

        step_budget = [self._consensus_coeff * dw_sq]
        dwk_max = 0.0
        for k in range(self.client_count):
            dx_sq = float(np.sum((params_new[k] - self.params[k]) ** 2))
            dwk_max = max(dwk_max, math.sqrt(dx_sq))
            step_budget.append(self._client_coeffs[k] * dx_sq)
        self._budget += stable_sum(step_budget)
        slack3 = (self.initial_lagrangian - self._budget) - lagrangian

        gap = max(float(np.linalg.norm(x - consensus_new)) for x in params_new)

        self.t = t_new
        self.consensus = consensus_new
        self.params = params_new
        self.multipliers = multipliers_new
        self.dual_residual_max = max(self.dual_residual_max, dual_residual)
        if self.record_states:
            self._snapshot()

        return TraceRow(
            t=row_t,
            L=lagrangian,
            dw=math.sqrt(dw_sq),
            dwk_max=dwk_max,
            dlambda_max=dlambda_max,
            consensus_gap=gap,
            objective=objective,
            slack_lemma1=slack1,
            slack_lemma3=slack3,
            lemma4_margin=lagrangian - self.floor,
        )

    def run(self, iterations: int) -> list[TraceRow]:
        if iterations < 0:
            raise ConfigurationError("iteration count must be non-negative")
        return [self.step() for _ in range(iterations)]


def run_sync_reference(models, penalties, iterations: int,
                       radius: float = DEFAULT_RADIUS) -> list[TraceRow]:
    """Run the method with a zero-delay schedule (the synchronous baseline
    the delayed runs are compared against)."""
    models = list(models)
    schedule = DelaySchedule("zero", (0,) * len(models))
    engine = ConsensusEngine(models, penalties, schedule, radius=radius)
    return engine.run(iterations)
