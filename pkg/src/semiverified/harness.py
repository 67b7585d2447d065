"""Seeded trial execution, parameter sweeps and report files.

Seed derivation
---------------
Every random stream of trial ``i`` is seeded with
``derive_seed(derive_seed(base_seed, i), label)`` for ``label`` in
``planted``, ``provider``, ``oracle`` and ``algorithm``. ``derive_seed``
hashes its integer parts (string labels go through CRC-32) with numpy's
``SeedSequence``, so trials are independent of each other and of
execution order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import os
import statistics
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .baselines import (
    MAX_ENUMERATION_N,
    cluster_count,
    enumerate_satisfying,
    majority_baseline,
    vc_recover,
    vc_sample_bound,
)
from .csp import Assignment, hamming_error
from .errors import AdversaryInfeasible, ConfigError, EmptyConstraint
from .oracle import VerifiedOracle
from .recovery import ALGORITHMS, FailEvent, RecoveryConfig
from .sim import (
    Adversary,
    ConstraintProvider,
    SimConfig,
    derive_seed,
    gen_planted,
    materialize,
    mixture_distribution,
    random_sound_instance,
)

log = logging.getLogger(__name__)

ALGORITHM_NAMES = ("r2", "basic", "efficient", "vc", "majority")
BASIC_MAX_TUPLES = 10_000
SWEEP_KEYS = ("n", "alpha", "p", "epsilon", "m_per_tuple", "adversary")

REPORT_COLUMNS = (
    "algorithm", "n", "r0", "alpha", "p", "m_per_tuple", "adversary", "epsilon", "delta", "trials",
    "success_rate", "median_error", "mean_error", "median_verified_used", "median_wall_ms",
    "fail_rate", "breach_rate",
)


def _strict(data: Any, allowed: Iterable[str], where: str, required: Iterable[str] = ()) -> dict:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(data)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    return dict(data)


def sim_config_from_dict(data: Mapping) -> SimConfig:
    names = [f.name for f in dataclasses.fields(SimConfig)]
    d = _strict(data, names, "sim", required=("n", "r0", "alpha"))
    try:
        if "adversary" in d:
            d["adversary"] = Adversary.parse(str(d["adversary"]))
        return SimConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from None


def sim_config_to_dict(cfg: SimConfig) -> dict:
    return {
        "n": cfg.n, "r0": cfg.r0, "alpha": cfg.alpha, "p": cfg.p,
        "m_per_tuple": cfg.m_per_tuple, "adversary": str(cfg.adversary), "seed": cfg.seed,
    }


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig
    recovery: RecoveryConfig
    algorithm: str = "efficient"
    trials: int = 1
    base_seed: int = 0
    output_path: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHM_NAMES:
            raise ConfigError(f"algorithm must be one of {ALGORITHM_NAMES}, got {self.algorithm!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.base_seed < 0 or self.base_seed >= 2**64:
            raise ConfigError("base_seed must be a 64-bit unsigned integer")
        if self.recovery.r0 != self.sim.r0:
            raise ConfigError("recovery.r0 and sim.r0 differ")

    @classmethod
    def from_dict(cls, data: Mapping) -> ExperimentConfig:
        names = [f.name for f in dataclasses.fields(cls)]
        d = _strict(data, names, "config", required=("sim", "recovery"))
        sim = sim_config_from_dict(d.pop("sim"))
        rec = _strict(d.pop("recovery"), [f.name for f in dataclasses.fields(RecoveryConfig)], "recovery",
                      required=("epsilon", "delta"))
        rec.setdefault("r0", sim.r0)
        try:
            recovery = RecoveryConfig(**rec)
            return cls(sim=sim, recovery=recovery, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "sim": sim_config_to_dict(self.sim),
            "recovery": dataclasses.asdict(self.recovery),
            "algorithm": self.algorithm,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "output_path": self.output_path,
        }


def load_json(path: str) -> Any:
    with open(path) as fh:
        return json.load(fh)


def validate(cfg: ExperimentConfig) -> None:
    """Algorithm and adversary preconditions, checked before any trial runs."""
    sim = cfg.sim
    if cfg.algorithm == "r2" and sim.r0 != 2:
        raise ConfigError("algorithm r2 needs r0 = 2")
    if cfg.algorithm == "basic" and math.comb(sim.n, sim.r0) > BASIC_MAX_TUPLES:
        raise ConfigError(f"algorithm basic needs C(n, r0) <= {BASIC_MAX_TUPLES}")
    if cfg.algorithm == "vc" and sim.n > MAX_ENUMERATION_N:
        raise ConfigError(f"algorithm vc needs n <= {MAX_ENUMERATION_N}")
    try:
        for q in range(1 << sim.r0):
            mixture_distribution(sim, q)
    except AdversaryInfeasible as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class TrialReport:
    trial_index: int
    seed: int
    error_fraction: float
    verified_used: int
    phases: int
    fail_events: list[dict] = field(default_factory=list)
    soundness_breaches: int = 0
    wall_time_ms: float = 0.0
    config_echo: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(e.get("fatal", True) for e in self.fail_events)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrialContext:
    """Everything a trial is built from, exposed for tests and tooling."""

    seed: int
    planted: Assignment
    provider: ConstraintProvider
    oracle: VerifiedOracle
    algorithm_seed: int


def trial_context(cfg: ExperimentConfig, trial_index: int) -> TrialContext:
    seed = derive_seed(cfg.base_seed, trial_index)
    planted = gen_planted(cfg.sim.n, derive_seed(seed, "planted"))
    provider = ConstraintProvider(replace(cfg.sim, seed=derive_seed(seed, "provider")), planted)
    oracle = VerifiedOracle(planted, derive_seed(seed, "oracle"))
    return TrialContext(seed, planted, provider, oracle, derive_seed(seed, "algorithm"))


def _run_algorithm(cfg: ExperimentConfig, ctx: TrialContext) -> tuple[Assignment, int, list[FailEvent]]:
    n = cfg.sim.n
    if cfg.algorithm in ALGORITHMS:
        out = ALGORITHMS[cfg.algorithm](ctx.provider, ctx.oracle, cfg.recovery, seed=ctx.algorithm_seed)
        return out.assignment, out.phases, out.fail_events
    fill = Assignment.constant(n, True)
    if cfg.algorithm == "majority":
        return majority_baseline(ctx.provider, seed=ctx.algorithm_seed), 0, []
    # vc
    try:
        solutions = enumerate_satisfying(ctx.provider)
    except EmptyConstraint as exc:
        return fill, 0, [FailEvent("EmptyConstraint", 0, "materialize", str(exc))]
    if len(solutions) == 0:
        return fill, 0, [FailEvent("NoSolution", 0, "enumerate", "constraints are unsatisfiable")]
    k = vc_sample_bound(cfg.recovery.epsilon, cfg.recovery.delta, cfg.sim.r0)
    return vc_recover(solutions, ctx.oracle, k), 0, []


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialReport:
    ctx = trial_context(cfg, trial_index)
    start = time.perf_counter()
    output, phases, events = _run_algorithm(cfg, ctx)
    wall_ms = (time.perf_counter() - start) * 1000
    return TrialReport(
        trial_index=trial_index,
        seed=ctx.seed,
        error_fraction=hamming_error(output, ctx.planted),
        verified_used=ctx.oracle.used,
        phases=phases,
        fail_events=[e.to_dict() for e in events],
        soundness_breaches=ctx.provider.soundness_breaches,
        wall_time_ms=wall_ms,
        config_echo=cfg.to_dict(),
    )


def run_trials(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialReport]:
    indices = range(cfg.trials)
    if jobs <= 1 or cfg.trials == 1:
        return [run_trial(cfg, i) for i in indices]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map preserves trial order regardless of completion order
        return list(pool.map(run_trial, itertools.repeat(cfg), indices))


def _median(xs):
    return statistics.median(xs) if xs else None


def aggregate(cfg: ExperimentConfig, reports: Sequence[TrialReport]) -> dict:
    eps = cfg.recovery.epsilon
    errors = [r.error_fraction for r in reports]
    row = {
        "algorithm": cfg.algorithm,
        "n": cfg.sim.n,
        "r0": cfg.sim.r0,
        "alpha": cfg.sim.alpha,
        "p": cfg.sim.p,
        "m_per_tuple": cfg.sim.m_per_tuple,
        "adversary": str(cfg.sim.adversary),
        "epsilon": eps,
        "delta": cfg.recovery.delta,
        "trials": cfg.trials,
        "success_rate": sum(e <= eps for e in errors) / len(reports) if reports else 0.0,
        "median_error": _median(errors),
        "mean_error": statistics.fmean(errors) if errors else None,
        "median_verified_used": _median([r.verified_used for r in reports]),
        "median_wall_ms": _median([r.wall_time_ms for r in reports]),
        "fail_rate": sum(r.failed for r in reports) / len(reports) if reports else 1.0,
        "breach_rate": sum(r.soundness_breaches > 0 for r in reports) / len(reports) if reports else None,
    }
    return {k: row[k] for k in REPORT_COLUMNS}


def apply_point(template: ExperimentConfig, point: Mapping[str, Any]) -> ExperimentConfig:
    sim_updates = {k: v for k, v in point.items() if k in ("n", "alpha", "p", "m_per_tuple", "adversary")}
    if "adversary" in sim_updates and isinstance(sim_updates["adversary"], str):
        sim_updates["adversary"] = Adversary.parse(sim_updates["adversary"])
    try:
        sim = replace(template.sim, **sim_updates)
        recovery = template.recovery
        if "epsilon" in point:
            recovery = replace(recovery, epsilon=point["epsilon"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid point {dict(point)}: {exc}") from None
    return replace(template, sim=sim, recovery=recovery)


def grid_points(grid: Mapping[str, Sequence]) -> list[dict]:
    if not grid:
        raise ConfigError("sweep grid is empty")
    unknown = set(grid) - set(SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"grid keys must be among {SWEEP_KEYS}, got {sorted(unknown)}")
    for k, vals in grid.items():
        if isinstance(vals, (str, bytes)) or not isinstance(vals, Sequence) or len(vals) == 0:
            raise ConfigError(f"grid values for {k!r} must be a non-empty list")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _failed_point_row(template: ExperimentConfig, point: Mapping[str, Any]) -> dict:
    row = dict.fromkeys(REPORT_COLUMNS)
    row.update(
        algorithm=template.algorithm, n=point.get("n", template.sim.n), r0=template.sim.r0,
        alpha=point.get("alpha", template.sim.alpha), p=point.get("p", template.sim.p),
        m_per_tuple=point.get("m_per_tuple", template.sim.m_per_tuple),
        adversary=str(point.get("adversary", template.sim.adversary)),
        epsilon=point.get("epsilon", template.recovery.epsilon), delta=template.recovery.delta,
        trials=0, success_rate=0.0, fail_rate=1.0,
    )
    return row


def run_sweep(template: ExperimentConfig, grid: Mapping[str, Sequence], jobs: int = 1) -> list[dict]:
    """One aggregated row per grid point; invalid points yield a row with
    ``trials=0`` and ``fail_rate=1`` and the sweep continues."""
    rows = []
    for point in grid_points(grid):
        try:
            cfg = apply_point(template, point)
            validate(cfg)
        except ConfigError as exc:
            log.warning("skipping grid point %s: %s", point, exc)
            rows.append(_failed_point_row(template, point))
            continue
        rows.append(aggregate(cfg, run_trials(cfg, jobs)))
    return rows


def load_sweep(data: Mapping) -> tuple[ExperimentConfig, dict]:
    d = _strict(data, ("template", "grid"), "sweep", required=("template", "grid"))
    template = ExperimentConfig.from_dict(d["template"])
    grid = d["grid"]
    if not isinstance(grid, Mapping):
        raise ConfigError("sweep.grid must be an object")
    grid_points(grid)
    return template, dict(grid)


# ---------------------------------------------------------------------------
# enumerable-instance checks


def oracle_check(cfg: ExperimentConfig, *, instance_kind: str = "simulated") -> list[dict]:
    """Compare every recovery tier against the brute-force solution set on
    ``cfg.trials`` enumerable instances."""
    n, r0 = cfg.sim.n, cfg.sim.r0
    eps = cfg.recovery.epsilon
    if n > MAX_ENUMERATION_N:
        raise ConfigError(f"oracle-check needs n <= {MAX_ENUMERATION_N}")
    if instance_kind not in ("simulated", "sound"):
        raise ConfigError("instance kind must be 'simulated' or 'sound'")
    validate(replace(cfg, algorithm="efficient"))
    k_bound = vc_sample_bound(eps, 0.5, r0)
    rows = []
    for i in range(cfg.trials):
        ctx = trial_context(cfg, i)
        source = ctx.provider
        if instance_kind == "sound":
            source = random_sound_instance(ctx.planted, r0, derive_seed(ctx.seed, "sound"))
        row: dict[str, Any] = {"instance": i, "n": n, "r0": r0, "epsilon": eps}
        try:
            constraints = materialize(source)
        except EmptyConstraint:
            row.update(solutions=0, planted_in_solutions=False, soundness_breaches=source.soundness_breaches,
                       passed=False, note="empty constraint")
            rows.append(row)
            continue
        solutions = enumerate_satisfying(constraints, n)
        breaches = source.soundness_breaches
        row["solutions"] = len(solutions)
        row["planted_in_solutions"] = ctx.planted in solutions
        row["soundness_breaches"] = breaches
        row["clusters"] = cluster_count(solutions, eps) if len(solutions) else 0
        row["cluster_bound_log2"] = k_bound
        within = True
        tiers = ["basic", "efficient"] + (["r2"] if r0 == 2 else [])
        for tier in tiers:
            oracle = VerifiedOracle(ctx.planted, derive_seed(ctx.seed, "oracle", tier))
            out = ALGORITHMS[tier](source, oracle, cfg.recovery, seed=derive_seed(ctx.seed, tier))
            err = hamming_error(out.assignment, ctx.planted)
            row[f"{tier}_error"] = err
            within &= err <= eps
        if len(solutions):
            oracle = VerifiedOracle(ctx.planted, derive_seed(ctx.seed, "oracle", "vc"))
            vc = vc_recover(solutions, oracle, vc_sample_bound(eps, cfg.recovery.delta, r0))
            row["vc_error"] = hamming_error(vc, ctx.planted)
        sound_ok = breaches > 0 or row["planted_in_solutions"]
        row["passed"] = bool(within and sound_ok and row["clusters"] <= 2**k_bound)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# report files


class ReportIOError(OSError):
    pass


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def render_report(rows: Sequence[Mapping], fmt: str) -> str:
    if not rows:
        raise ValueError("no rows to report")
    if fmt == "json":
        return json.dumps([dict(r) for r in rows], indent=2, default=_json_default) + "\n"
    if fmt == "csv":
        columns = list(rows[0])
        for r in rows[1:]:
            columns.extend(k for k in r if k not in columns)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(rows: Sequence[Mapping], fmt: str, path: str) -> None:
    """Write rows as CSV or JSON, replacing ``path`` atomically."""
    text = render_report(rows, fmt)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(prefix=".report-", dir=directory)
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc


def _coerce(text: str):
    if text == "":
        return None
    if text in ("True", "False"):
        return text == "True"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_report(path: str, fmt: str | None = None) -> list[dict]:
    fmt = fmt or ("json" if path.endswith(".json") else "csv")
    try:
        with open(path, newline="") as fh:
            if fmt == "json":
                return json.load(fh)
            return [{k: _coerce(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    except OSError as exc:
        raise ReportIOError(f"cannot read report {path}: {exc}") from exc
