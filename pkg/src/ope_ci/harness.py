"""Experiment driver: repeated-trial coverage studies across methods,
ground-truth computation with optional caching, and CSV/JSON emission.

Per-trial seeds come from a splitmix64 chain so trials never share generator
state regardless of execution order; the mix function is recorded in every
config digest.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import aug_is_baseline, dm_baseline, dr_baseline, is_baseline
from .cpgen import EpsConfig, cp_gen_detailed
from .drppi import DrPpiConfig, dr_ppi_estimate, interval_from_estimate
from .envs import (
    InventoryEnv,
    inventory_policy_pair,
    monte_carlo_value,
    oracle_value,
    small_finite_mdp,
)
from .mdp import ConfidenceInterval, State
from .models import GaussianRegressionModel, OracleModel, RewardOffsetModel
from .reweighting import ClipPolicy, CorrectionKind

CACHE_ENV_VAR = "OPE_CI_CACHE_DIR"
SEED_MIX = "splitmix64-v1"
_MASK64 = (1 << 64) - 1
_GT_STREAM = 1 << 40  # sentinel index far outside any trial range


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, index: int) -> int:
    """64-bit mixed per-trial seed; collisions across indices are negligible."""
    return _splitmix64(_splitmix64(base & _MASK64) ^ (index & _MASK64))


def config_digest(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class EnvSpec:
    """Environment plus the policy pair and evaluation target for a study.

    ``s0`` switches the ground truth (and cpgen queries) to the value of that
    fixed initial state instead of the population value.
    """

    name: str
    env: object
    behavior: object
    target: object
    discount: float
    s0: State | None = None
    value_rollouts: int = 100_000

    def d0_sampler(self):
        return self.env.sample_initial_states

    def describe(self) -> dict:
        return {
            "name": self.name,
            "env": repr(self.env),
            "behavior": repr(self.behavior),
            "target": repr(self.target),
            "discount": self.discount,
            "s0": None if self.s0 is None else list(self.s0),
            "value_rollouts": self.value_rollouts,
        }


def make_env_spec(name: str, s0: State | None = None, discount: float = 1.0) -> EnvSpec:
    if name == "inventory":
        env = InventoryEnv()
        behavior, target = inventory_policy_pair(env.params.capacity)
        return EnvSpec("inventory", env, behavior, target, discount, s0)
    if name == "finite":
        mdp, behavior, target = small_finite_mdp()
        return EnvSpec("finite", mdp, behavior, target, discount, s0)
    raise ValueError(f"unknown environment {name!r}; use 'inventory' or 'finite'")


@dataclass(frozen=True)
class StudyConfig:
    """Knobs shared by the method adapters; defaults match the CLI."""

    model: str = "gaussian"  # "gaussian" | "oracle" | "biased"
    model_degree: int = 2
    bias_fraction: float = 0.2  # reward offset of the "biased" model, as a
    # fraction of the true mean return spread over the horizon
    n_model_rollouts: int = 1000
    pairs_per_trajectory: int = 8
    crossfit: bool = True
    clip: str = "auto"
    cpgen_m: int = 4
    cpgen_n_gen: int = 4
    cpgen_rollouts: int = 256
    n_synth: int | None = None  # None: 10x the dataset size
    dm_rollouts: int = 1000
    n_boot: int = 2000
    q_degree: int = 2

    def clip_policy(self) -> ClipPolicy:
        return ClipPolicy(mode=self.clip)

    def describe(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class CoverageReport:
    method: str
    trials: int
    empirical_coverage: float
    mean_width: float
    mean_point_error: float
    ground_truth: float
    alpha: float
    config_digest: str


@dataclass(frozen=True)
class TrialDetails:
    lowers: np.ndarray
    uppers: np.ndarray
    points: np.ndarray
    variances: np.ndarray  # nan where the method has no plug-in variance
    covered: np.ndarray


def ground_truth_value(
    env_spec: EnvSpec, seed: int, cache_dir: str | Path | None = None
) -> float:
    """Exact value for the finite oracle; a cached high-budget Monte Carlo
    estimate otherwise."""
    if env_spec.name == "finite":
        return oracle_value(
            env_spec.env, env_spec.target, env_spec.discount, env_spec.s0
        )
    key = config_digest(
        {
            "env": env_spec.describe(),
            "target": repr(env_spec.target),
            "rollouts": env_spec.value_rollouts,
            "seed": seed,
        }
    )
    cache_dir = cache_dir if cache_dir is not None else os.environ.get(CACHE_ENV_VAR)
    cache_file = None
    if cache_dir:
        cache_file = Path(cache_dir) / f"ground_truth_{key}.json"
        if cache_file.exists():
            return float(json.loads(cache_file.read_text())["value"])
    rng = np.random.default_rng(derive_seed(seed, _GT_STREAM))
    value, _ = monte_carlo_value(
        env_spec.env,
        env_spec.target,
        env_spec.value_rollouts,
        rng,
        discount=env_spec.discount,
        initial_state=env_spec.s0,
    )
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(json.dumps({"value": value}) + "\n")
    return value


def make_model_factory(env_spec: EnvSpec, config: StudyConfig, ground_truth: float):
    if config.model == "gaussian":
        box = env_spec.env.state_box

        def factory():
            return GaussianRegressionModel(degree=config.model_degree, state_box=box)

        return factory
    if config.model == "oracle":
        return lambda: OracleModel(env_spec.env)
    if config.model == "biased":
        offset = config.bias_fraction * ground_truth / env_spec.env.horizon

        def factory():
            return RewardOffsetModel(OracleModel(env_spec.env), offset)

        return factory
    raise ValueError(f"unknown model kind {config.model!r}")


def _parse_method(method: str) -> tuple[str, str | None]:
    parts = method.split(":")
    if len(parts) == 1:
        return parts[0], None
    if len(parts) == 2:
        return parts[0], parts[1]
    raise ValueError(f"cannot parse method spec {method!r}")


def make_method(method: str, env_spec: EnvSpec, config: StudyConfig, ground_truth: float):
    """Adapter (dataset, alpha, rng) -> (ConfidenceInterval, variance | None)."""
    name, qualifier = _parse_method(method)
    factory = make_model_factory(env_spec, config, ground_truth)
    clip = config.clip_policy()
    d0 = env_spec.d0_sampler()

    if name in ("is", "wis", "pdis"):
        kind = CorrectionKind(name)
        bound = qualifier or "clt"

        def run(dataset, alpha, rng):
            ci = is_baseline(
                dataset, env_spec.behavior, env_spec.target, alpha,
                kind, bound, clip, rng, config.n_boot,
            )
            return ci, None

        return run

    if name == "augis":
        bound = qualifier or "clt"

        def run(dataset, alpha, rng):
            n_synth = (
                config.n_synth if config.n_synth is not None else 10 * len(dataset)
            )
            model = factory().fit(dataset)
            ci = aug_is_baseline(
                dataset, model, env_spec.behavior, env_spec.target,
                n_synth, alpha, bound, clip, rng,
                d0_sampler=d0, n_boot=config.n_boot,
            )
            return ci, None

        return run

    if name == "dm":

        def run(dataset, alpha, rng):
            model = factory().fit(dataset)
            ci = dm_baseline(
                model, env_spec.target, d0, config.dm_rollouts, alpha, rng,
                dataset.horizon, dataset.discount, config.n_boot,
            )
            return ci, None

        return run

    if name in ("dr", "augdr"):

        def run(dataset, alpha, rng):
            augment = None
            if name == "augdr":
                n_synth = (
                    config.n_synth if config.n_synth is not None else 10 * len(dataset)
                )
                augment = (factory().fit(dataset), n_synth)
            ci = dr_baseline(
                dataset, env_spec.behavior, env_spec.target, alpha,
                augment=augment, clip=clip, rng=rng,
            )
            return ci, None

        return run

    if name == "drppi":
        correction = CorrectionKind(qualifier or "pdis")

        def run(dataset, alpha, rng):
            cfg = DrPpiConfig(
                n_model_rollouts=config.n_model_rollouts,
                pairs_per_trajectory=config.pairs_per_trajectory,
                correction=correction,
                clip=clip,
                cross_fit=config.crossfit,
                alpha=alpha,
            )
            value, variance = dr_ppi_estimate(
                dataset, env_spec.behavior, env_spec.target, cfg, factory, rng, d0
            )
            return interval_from_estimate(value, variance, alpha), variance

        return run

    if name == "cpgen":
        if env_spec.s0 is None:
            raise ValueError("cpgen studies need an EnvSpec with a fixed s0")

        def run(dataset, alpha, rng):
            result = cp_gen_detailed(
                dataset, env_spec.behavior, env_spec.target, env_spec.s0, alpha,
                M=config.cpgen_m, N_gen=config.cpgen_n_gen,
                n_pe_rollouts=config.cpgen_rollouts,
                cfg=EpsConfig(), model_factory=factory, rng=rng,
            )
            return result.interval, None

        return run

    raise ValueError(f"unknown method {method!r}")


def run_coverage_study(
    env_spec: EnvSpec,
    method: str,
    n_trajectories: int,
    trials: int,
    alpha: float,
    seed: int,
    config: StudyConfig = StudyConfig(),
    cache_dir: str | Path | None = None,
    return_details: bool = False,
):
    """Repeated-trial coverage of one method against the ground truth.

    Each trial draws a fresh behavior dataset from a derived seed, runs the
    method, and records whether the interval covers the ground truth; the
    whole study is deterministic given ``seed``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    ground_truth = ground_truth_value(env_spec, seed, cache_dir)
    run = make_method(method, env_spec, config, ground_truth)

    lowers = np.empty(trials)
    uppers = np.empty(trials)
    points = np.empty(trials)
    variances = np.full(trials, np.nan)
    covered = np.zeros(trials, dtype=bool)
    for t in range(trials):
        trial_rng = np.random.default_rng(derive_seed(seed, t))
        data_rng, method_rng = trial_rng.spawn(2)
        dataset = env_spec.env.sample_dataset(
            env_spec.behavior, n_trajectories, data_rng, env_spec.discount
        )
        ci, variance = run(dataset, alpha, method_rng)
        lowers[t] = ci.lower
        uppers[t] = ci.upper
        points[t] = ci.point if ci.point is not None else 0.5 * (ci.lower + ci.upper)
        if variance is not None:
            variances[t] = variance
        covered[t] = ci.contains(ground_truth)

    digest = config_digest(
        {
            "env": env_spec.describe(),
            "method": method,
            "n_trajectories": n_trajectories,
            "trials": trials,
            "alpha": alpha,
            "seed": seed,
            "seed_mix": SEED_MIX,
            "config": config.describe(),
        }
    )
    report = CoverageReport(
        method=method,
        trials=trials,
        empirical_coverage=float(covered.sum() / trials),
        mean_width=float((uppers - lowers).mean()),
        mean_point_error=float(np.abs(points - ground_truth).mean()),
        ground_truth=float(ground_truth),
        alpha=alpha,
        config_digest=digest,
    )
    if return_details:
        return report, TrialDetails(lowers, uppers, points, variances, covered)
    return report


CSV_COLUMNS = (
    "method",
    "trials",
    "coverage",
    "mean_width",
    "mean_point_error",
    "ground_truth",
    "alpha",
    "config_digest",
)


def _report_row(report: CoverageReport) -> dict:
    return {
        "method": report.method,
        "trials": report.trials,
        "coverage": report.empirical_coverage,
        "mean_width": report.mean_width,
        "mean_point_error": report.mean_point_error,
        "ground_truth": report.ground_truth,
        "alpha": report.alpha,
        "config_digest": report.config_digest,
    }


def emit_results(reports, path, fmt: str = "csv") -> None:
    """Write reports sorted by method name; floats go through repr so the
    emitted file parses back to identical values."""
    reports = sorted(reports, key=lambda r: r.method)
    if not reports:
        raise ValueError("no reports to emit")
    path = Path(path)
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for report in reports:
            row = _report_row(report)
            lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in CSV_COLUMNS))
        path.write_text("\n".join(lines) + "\n")
        return
    if fmt == "json":
        path.write_text(
            json.dumps([_report_row(r) for r in reports], indent=2) + "\n"
        )
        return
    raise ValueError(f"unknown format {fmt!r}; use 'csv' or 'json'")
