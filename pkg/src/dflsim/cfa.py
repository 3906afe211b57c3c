"""Gossip-style averaging baseline over an explicit topology.

Each round every client blends its parameters toward (possibly stale)
neighbor versions, with blend weights proportional to dataset sizes over the
closed neighborhood, then takes a plain gradient step on its raw local loss.
The blend strength decays harmonically, which is what lets the method shrink
the consensus gap while the gradient noise from heterogeneous clients stays
bounded.

Two blend orientations exist because the published update rule and its
evident intent disagree on a sign. "attract" moves a client toward its
neighbors and is the default; "literal" applies the flipped inner sign as
stated, pushing away from them, and is kept selectable for side-by-side
comparison rather than for use.

No dual variables exist here, so trace rows carry zeros in the dual and
monitor columns; the consensus column tracks the size-weighted mean of the
client parameters.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, NonFiniteError
from .losses import stable_sum
from .staleness import DelaySchedule, NeighborVersionStore, VersionCache
from .topology import Topology
from .trace import TraceRow

BLEND_MODES = ("attract", "literal")


def mixing_coefficient(base: float, decay_time: float, t: int) -> float:
    """Blend strength at round t: base / (1 + t / decay_time). An infinite
    decay time keeps it constant."""
    if base < 0:
        raise ConfigurationError(f"blend strength must be non-negative, got {base!r}")
    if decay_time <= 0:
        raise ConfigurationError(f"decay time must be positive, got {decay_time!r}")
    if math.isinf(decay_time):
        return base
    return base / (1.0 + t / decay_time)


def neighborhood_blend(own_params, own_size, neighbor_payloads, mix: float,
                       mode: str = "attract"):
    """Blend a client's parameters with neighbor versions.

    ``neighbor_payloads`` is a sequence of (params, size) pairs; weights are
    sizes normalized over the closed neighborhood (own size included). With
    no neighbors, or mix 0, the parameters pass through unchanged.
    """
    if mode not in BLEND_MODES:
        raise ConfigurationError(f"unknown blend mode {mode!r}")
    own_params = np.asarray(own_params, dtype=float)
    if not neighbor_payloads:
        return own_params.copy()
    total = math.fsum([float(own_size)] + [float(s) for _, s in neighbor_payloads])
    if total <= 0:
        raise ConfigurationError("neighborhood sizes must sum to a positive value")
    pull = np.zeros_like(own_params)
    for vec, size in neighbor_payloads:
        weight = float(size) / total
        pull = pull + weight * (own_params - np.asarray(vec, dtype=float))
    if mode == "attract":
        return own_params - mix * pull
    return own_params + mix * pull


def local_gradient_step(params, gradient, rate: float):
    if rate < 0:
        raise ConfigurationError(f"step size must be non-negative, got {rate!r}")
    return np.asarray(params, dtype=float) - rate * np.asarray(gradient, dtype=float)


class CfaEngine:
    """Stateful runner for the averaging baseline.

    ``models`` expose dimension, weight, value and gradient (raw local loss;
    the blend weights come from the model weights, which are proportional to
    dataset sizes). Round t reads neighbor versions indexed by the delay
    schedule at t, so a zero schedule reads current neighbor states and
    reproduces the synchronous method.
    """

    def __init__(self, models, topology: Topology, schedule: DelaySchedule,
                 step_size: float, mix_base: float = 1.0,
                 mix_decay_time: float = math.inf, mode: str = "attract"):
        models = list(models)
        if not models:
            raise ConfigurationError("at least one client model is required")
        dims = {m.dimension for m in models}
        if len(dims) != 1:
            raise ConfigurationError(f"client models disagree on dimension: {sorted(dims)}")
        if topology.client_count != len(models):
            raise ConfigurationError(
                f"topology has {topology.client_count} clients, models define {len(models)}")
        if schedule.client_count != len(models):
            raise ConfigurationError(
                f"delay schedule covers {schedule.client_count} clients, "
                f"models define {len(models)}")
        if not (step_size >= 0 and math.isfinite(step_size)):
            raise ConfigurationError(f"step size must be finite and non-negative, got {step_size!r}")
        if mode not in BLEND_MODES:
            raise ConfigurationError(f"unknown blend mode {mode!r}")
        # constructor validation; per-round values come from mixing_coefficient
        mixing_coefficient(mix_base, mix_decay_time, 1)

        self.models = models
        self.dimension = models[0].dimension
        self.client_count = len(models)
        self.topology = topology
        self.schedule = schedule
        self.step_size = float(step_size)
        self.mix_base = float(mix_base)
        self.mix_decay_time = float(mix_decay_time)
        self.mode = mode
        self.sizes = tuple(float(m.weight) for m in models)
        self.neighbors = tuple(topology.in_neighbors(k) for k in range(self.client_count))

        d = self.dimension
        self.t = 1
        self.params = [np.zeros(d) for _ in models]
        self._caches = [VersionCache(schedule.max_bound + 1) for _ in models]
        for cache, x in zip(self._caches, self.params):
            cache.push(1, x)
        self._store = NeighborVersionStore(schedule.bounds)
        self.mean = self._weighted_mean(self.params)

    def _weighted_mean(self, params_list):
        total = math.fsum(self.sizes)
        mean = np.zeros(self.dimension)
        for size, x in zip(self.sizes, params_list):
            mean = mean + (size / total) * x
        return mean

    def step(self) -> TraceRow:
        """Advance one round and return its trace row."""
        row_t = self.t
        t_new = self.t + 1
        mix = mixing_coefficient(self.mix_base, self.mix_decay_time, row_t)

        # delivery: each client receives the scheduled version of every
        # in-neighbor; the store ignores reorderings that would go backwards
        for k in range(self.client_count):
            idx = self.schedule.version_index(k, self.t)
            for p in self.neighbors[k]:
                self._store.deliver(k, p, idx, self._caches[p].fetch(idx))

        params_new = []
        for k, model in enumerate(self.models):
            payloads = []
            for p in self.neighbors[k]:
                vec, _age = self._store.latest_available(k, p, self.t)
                payloads.append((vec, self.sizes[p]))
            blended = neighborhood_blend(self.params[k], self.sizes[k], payloads,
                                         mix, self.mode)
            grad = model.gradient(self.params[k])
            params_new.append(local_gradient_step(blended, grad, self.step_size))

        mean_new = self._weighted_mean(params_new)
        objective = stable_sum(m.weighted_value(mean_new) for m in self.models)
        if not (math.isfinite(objective)
                and all(np.all(np.isfinite(x)) for x in params_new)):
            raise NonFiniteError(f"non-finite state at round {t_new}")

        dwk_max = 0.0
        for old, new in zip(self.params, params_new):
            dwk_max = max(dwk_max, float(np.linalg.norm(new - old)))
        dw = float(np.linalg.norm(mean_new - self.mean))
        gap = max(float(np.linalg.norm(x - mean_new)) for x in params_new)

        self.t = t_new
        self.params = params_new
        self.mean = mean_new
        for cache, x in zip(self._caches, params_new):
            cache.push(t_new, x)

        return TraceRow(
            t=row_t,
            L=objective,
            dw=dw,
            dwk_max=dwk_max,
            dlambda_max=0.0,
            consensus_gap=gap,
            objective=objective,
            slack_lemma1=0.0,
            slack_lemma3=0.0,
            lemma4_margin=0.0,
        )

    def run(self, iterations: int) -> list[TraceRow]:
        if iterations < 0:
            raise ConfigurationError("iteration count must be non-negative")
        return [self.step() for _ in range(iterations)]
