"""Run configuration: strict parsing and cross-field validation.

Configs are TOML with a fixed schema. Parsing is deliberately unforgiving:
unknown keys and sections are rejected, as is anything irrelevant to the
selected algorithm, because a silently ignored penalty or delay bound would
invalidate every certificate downstream. All violations are collected and
reported together rather than one at a time.

Keys that are legal but inadvisable (a penalty rule that can never satisfy
the certificate gate) produce warnings carried on the config; the run is
allowed and its report comes out stamped uncertified.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .certify import CERTIFICATE_VARIANTS, CONSERVATIVE
from .cfa import BLEND_MODES
from .errors import ConfigurationError
from .losses import LOSS_KINDS, PARTITION_SCHEMES
from .staleness import SCHEDULE_KINDS
from .topology import TOPOLOGY_KINDS

ALGORITHMS = ("consensus", "cfa")
OUTPUT_FORMATS = ("csv", "jsonl")
DATA_KINDS = ("least-squares", "logistic", "sigmoid-nonconvex")

DEFAULT_PENALTY_RULE = 8.0
DEFAULT_RADIUS = 1e6
DEFAULT_TOL = 1e-7
DEFAULT_WINDOW = 50

_PENALTY_RULE = re.compile(r"^\s*([0-9.eE+-]+)\s*\*\s*M\s*$")


@dataclass(frozen=True)
class RunConfig:
    algorithm: str
    seed: int
    iterations: int
    out: str | None
    format: str

    loss_kind: str
    clients: int
    dimension: int
    samples: int | None
    noise: float | None
    partition: str | None
    curvature_scale: float | None
    center_spread: float | None

    topology_kind: str | None
    edge_probability: float | None

    delay_kind: str
    delay_bounds: tuple
    delay_offset: int | None

    penalty_rule: float | None
    penalties: tuple | None
    radius: float
    step_size: float | None
    mix_base: float
    mix_decay_time: float
    blend_mode: str

    tol: float
    window: int
    alpha_variant: str
    stop_on_convergence: bool

    warnings: tuple = ()

    def override(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


class _Checker:
    """Accumulates violations while pulling typed values out of the mapping."""

    def __init__(self, data: dict):
        self.data = dict(data)
        self.violations: list[str] = []
        self.warnings: list[str] = []

    def flag(self, message: str):
        self.violations.append(message)

    def section(self, name: str) -> dict:
        value = self.data.pop(name, None)
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.flag(f"[{name}] must be a section/table")
            return {}
        return dict(value)

    def take(self, mapping: dict, key: str, kinds, where: str, default=None,
             required: bool = False):
        if key not in mapping:
            if required:
                self.flag(f"{where}: missing required key '{key}'")
            return default
        value = mapping.pop(key)
        if kinds is bool:
            if not isinstance(value, bool):
                self.flag(f"{where}: '{key}' must be a boolean, got {value!r}")
                return default
            return value
        if kinds is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.flag(f"{where}: '{key}' must be an integer, got {value!r}")
                return default
            return value
        if kinds is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.flag(f"{where}: '{key}' must be a number, got {value!r}")
                return default
            return float(value)
        if kinds is str:
            if not isinstance(value, str):
                self.flag(f"{where}: '{key}' must be a string, got {value!r}")
                return default
            return value
        return value

    def choice(self, mapping: dict, key: str, options, where: str, default=None,
               required: bool = False):
        value = self.take(mapping, key, str, where, default=None, required=required)
        if value is None:
            return default
        if value not in options:
            self.flag(f"{where}: '{key}' must be one of {', '.join(options)}; got {value!r}")
            return default
        return value

    def reject_unknown(self, mapping: dict, where: str):
        for key in mapping:
            self.flag(f"{where}: unknown key '{key}'")

    def forbid(self, mapping: dict, key: str, where: str, reason: str):
        if key in mapping:
            mapping.pop(key)
            self.flag(f"{where}: '{key}' is not used {reason}")


def _parse_penalty(checker: _Checker, step: dict, clients: int):
    """Returns (rule coefficient, explicit penalties); exactly one is set."""
    value = step.pop("penalty", f"{DEFAULT_PENALTY_RULE:g}*M")
    where = "[step]"
    if isinstance(value, str):
        m = _PENALTY_RULE.match(value)
        if not m:
            checker.flag(f"{where}: penalty rule {value!r} does not match 'c*M'")
            return None, None
        try:
            c = float(m.group(1))
        except ValueError:
            checker.flag(f"{where}: penalty rule coefficient {m.group(1)!r} is not a number")
            return None, None
        if not (c > 0 and math.isfinite(c)):
            checker.flag(f"{where}: penalty rule coefficient must be finite and positive, got {c!r}")
            return None, None
        if c <= 7.0:
            checker.warnings.append(
                f"penalty rule {c:g}*M cannot satisfy the certificate gate "
                f"(needs a coefficient above 7); the run will be uncertified")
        return c, None
    if isinstance(value, bool):
        checker.flag(f"{where}: 'penalty' must be a rule string, number, or array")
        return None, None
    if isinstance(value, (int, float)):
        value = [float(value)] * clients
    if isinstance(value, list):
        try:
            pens = tuple(float(v) for v in value)
        except (TypeError, ValueError):
            checker.flag(f"{where}: penalty array must contain numbers")
            return None, None
        if len(pens) != clients:
            checker.flag(f"{where}: penalty array has {len(pens)} entries for {clients} clients")
            return None, None
        bad = [e for e in pens if not (e > 0 and math.isfinite(e))]
        if bad:
            checker.flag(f"{where}: penalties must be finite and positive, got {bad}")
            return None, None
        return None, pens
    checker.flag(f"{where}: 'penalty' must be a rule string, number, or array")
    return None, None


def _parse_delay(checker: _Checker, delay: dict, clients: int):
    where = "[delay]"
    kind = checker.choice(delay, "kind", SCHEDULE_KINDS, where, default="zero")
    bound = checker.take(delay, "bound", int, where)
    bounds = delay.pop("bounds", None)
    offset = checker.take(delay, "offset", int, where)
    checker.reject_unknown(delay, where)

    if bound is not None and bounds is not None:
        checker.flag(f"{where}: give either 'bound' or 'bounds', not both")
        bounds = None
    if bounds is not None:
        if (not isinstance(bounds, list)
                or any(isinstance(b, bool) or not isinstance(b, int) for b in bounds)):
            checker.flag(f"{where}: 'bounds' must be an array of integers")
            bounds = None
        elif len(bounds) != clients:
            checker.flag(f"{where}: 'bounds' has {len(bounds)} entries for {clients} clients")
            bounds = None
    if bounds is None:
        bounds = [0 if bound is None else bound] * clients
    if any(b < 0 for b in bounds):
        checker.flag(f"{where}: delay bounds must be non-negative, got {bounds}")
        bounds = [0] * clients

    if kind == "fixed":
        if offset is None:
            checker.flag(f"{where}: kind 'fixed' requires 'offset'")
        elif offset < 0:
            checker.flag(f"{where}: 'offset' must be non-negative, got {offset}")
    elif offset is not None:
        checker.flag(f"{where}: 'offset' only applies to kind 'fixed'")
        offset = None
    return kind, tuple(bounds), offset


def config_from_mapping(data: dict) -> RunConfig:
    """Validate a parsed mapping and produce a RunConfig, or raise with every
    violation found."""
    checker = _Checker(data)
    top = "top level"

    algorithm = checker.choice(checker.data, "algorithm", ALGORITHMS, top, required=True)
    seed = checker.take(checker.data, "seed", int, top, default=0)
    if seed is not None and seed < 0:
        checker.flag(f"{top}: 'seed' must be non-negative, got {seed}")
        seed = 0
    iterations = checker.take(checker.data, "iterations", int, top, required=True)
    if iterations is not None and iterations < 1:
        checker.flag(f"{top}: 'iterations' must be at least 1, got {iterations}")
        iterations = 1
    out = checker.take(checker.data, "out", str, top)
    fmt = checker.choice(checker.data, "format", OUTPUT_FORMATS, top, default="csv")

    loss = checker.section("loss")
    where = "[loss]"
    loss_kind = checker.choice(loss, "kind", LOSS_KINDS, where, required=True)
    clients = checker.take(loss, "clients", int, where, required=True)
    if clients is not None and clients < 1:
        checker.flag(f"{where}: 'clients' must be at least 1, got {clients}")
        clients = 1
    dimension = checker.take(loss, "dimension", int, where, required=True)
    if dimension is not None and dimension < 1:
        checker.flag(f"{where}: 'dimension' must be at least 1, got {dimension}")
        dimension = 1
    clients = clients or 1
    dimension = dimension or 1

    samples = noise = partition = None
    curvature_scale = center_spread = None
    if loss_kind in DATA_KINDS:
        samples = checker.take(loss, "samples", int, where, required=True)
        if samples is not None and samples < clients:
            checker.flag(f"{where}: 'samples' ({samples}) must cover every client ({clients})")
        noise = checker.take(loss, "noise", float, where, default=0.1)
        if noise is not None and not (0.0 <= noise and math.isfinite(noise)):
            checker.flag(f"{where}: 'noise' must be finite and non-negative, got {noise}")
        partition = checker.choice(loss, "partition", PARTITION_SCHEMES, where, default="iid")
        checker.forbid(loss, "curvature_scale", where, f"with kind {loss_kind!r}")
        checker.forbid(loss, "center_spread", where, f"with kind {loss_kind!r}")
    elif loss_kind == "quadratic":
        curvature_scale = checker.take(loss, "curvature_scale", float, where, default=1.0)
        if curvature_scale is not None and not (curvature_scale > 0 and math.isfinite(curvature_scale)):
            checker.flag(f"{where}: 'curvature_scale' must be finite and positive")
        center_spread = checker.take(loss, "center_spread", float, where, default=1.0)
        if center_spread is not None and not (center_spread >= 0 and math.isfinite(center_spread)):
            checker.flag(f"{where}: 'center_spread' must be finite and non-negative")
        for key in ("samples", "noise", "partition"):
            checker.forbid(loss, key, where, "with kind 'quadratic'")
    checker.reject_unknown(loss, where)

    topology = checker.section("topology")
    topology_kind = None
    edge_probability = None
    if algorithm == "cfa":
        where = "[topology]"
        if not topology:
            checker.flag(f"{where}: required for algorithm 'cfa'")
        topology_kind = checker.choice(topology, "kind", TOPOLOGY_KINDS, where,
                                       required=bool(topology))
        edge_probability = checker.take(topology, "p", float, where)
        if topology_kind == "erdos-renyi":
            if edge_probability is None:
                checker.flag(f"{where}: kind 'erdos-renyi' requires 'p'")
            elif not (0.0 < edge_probability <= 1.0):
                checker.flag(f"{where}: 'p' must be in (0, 1], got {edge_probability}")
        elif edge_probability is not None:
            checker.flag(f"{where}: 'p' only applies to kind 'erdos-renyi'")
        if clients < 2:
            checker.flag(f"[loss]: algorithm 'cfa' needs at least 2 clients")
        checker.reject_unknown(topology, where)
    elif topology:
        checker.flag("[topology]: only used by algorithm 'cfa'")

    delay = checker.section("delay")
    delay_kind, delay_bounds, delay_offset = _parse_delay(checker, delay, clients)

    step = checker.section("step")
    where = "[step]"
    penalty_rule = None
    penalties = None
    radius = DEFAULT_RADIUS
    step_size = None
    mix_base = 1.0
    mix_decay_time = math.inf
    blend_mode = "attract"
    if algorithm == "consensus":
        penalty_rule, penalties = _parse_penalty(checker, step, clients)
        radius = checker.take(step, "radius", float, where, default=DEFAULT_RADIUS)
        if radius is not None and not (radius > 0 and math.isfinite(radius)):
            checker.flag(f"{where}: 'radius' must be finite and positive, got {radius}")
            radius = DEFAULT_RADIUS
        for key in ("step_size", "mix", "mix_decay", "blend"):
            checker.forbid(step, key, where, "by algorithm 'consensus'")
    else:
        step_size = checker.take(step, "step_size", float, where, required=True)
        if step_size is not None and not (step_size >= 0 and math.isfinite(step_size)):
            checker.flag(f"{where}: 'step_size' must be finite and non-negative")
        mix_base = checker.take(step, "mix", float, where, default=1.0)
        if mix_base is not None and not (mix_base >= 0 and math.isfinite(mix_base)):
            checker.flag(f"{where}: 'mix' must be finite and non-negative")
        mix_decay_time = checker.take(step, "mix_decay", float, where, default=math.inf)
        if mix_decay_time is not None and not mix_decay_time > 0:
            checker.flag(f"{where}: 'mix_decay' must be positive")
        blend_mode = checker.choice(step, "blend", BLEND_MODES, where, default="attract")
        for key in ("penalty", "radius"):
            checker.forbid(step, key, where, "by algorithm 'cfa'")
    checker.reject_unknown(step, where)

    certificate = checker.section("certificate")
    where = "[certificate]"
    tol = checker.take(certificate, "tol", float, where, default=DEFAULT_TOL)
    if tol is not None and not (tol > 0 and math.isfinite(tol)):
        checker.flag(f"{where}: 'tol' must be finite and positive, got {tol}")
        tol = DEFAULT_TOL
    window = checker.take(certificate, "window", int, where, default=DEFAULT_WINDOW)
    if window is not None and window < 1:
        checker.flag(f"{where}: 'window' must be at least 1, got {window}")
        window = DEFAULT_WINDOW
    alpha_variant = CONSERVATIVE
    if algorithm == "consensus":
        alpha_variant = checker.choice(certificate, "variant", CERTIFICATE_VARIANTS,
                                       where, default=CONSERVATIVE)
    else:
        checker.forbid(certificate, "variant", where, "by algorithm 'cfa'")
    stop_on_convergence = checker.take(certificate, "stop_on_convergence", bool,
                                       where, default=True)
    checker.reject_unknown(certificate, where)

    checker.reject_unknown(checker.data, top)

    if checker.violations:
        raise ConfigurationError(
            "invalid configuration:\n  " + "\n  ".join(checker.violations),
            violations=checker.violations)

    return RunConfig(
        algorithm=algorithm, seed=seed, iterations=iterations, out=out, format=fmt,
        loss_kind=loss_kind, clients=clients, dimension=dimension,
        samples=samples, noise=noise, partition=partition,
        curvature_scale=curvature_scale, center_spread=center_spread,
        topology_kind=topology_kind, edge_probability=edge_probability,
        delay_kind=delay_kind, delay_bounds=delay_bounds, delay_offset=delay_offset,
        penalty_rule=penalty_rule, penalties=penalties, radius=radius,
        step_size=step_size, mix_base=mix_base, mix_decay_time=mix_decay_time,
        blend_mode=blend_mode,
        tol=tol, window=window, alpha_variant=alpha_variant,
        stop_on_convergence=stop_on_convergence,
        warnings=tuple(checker.warnings),
    )


def load_config(path: str) -> RunConfig:
    """Parse and validate a TOML config file. Duplicate keys are rejected by
    the TOML parser itself."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"TOML parse error in {path}: {exc}") from exc
    return config_from_mapping(data)
