"""Importance-sampling return corrections (IS, WIS, PDIS), ratio clipping,
and the CLT / bootstrap interval primitives shared by every estimator."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import (
    DegenerateWeights,
    InsufficientSamples,
    ZeroBehaviorProbability,
)
from .mdp import ConfidenceInterval, Trajectory, TrajectoryDataset
from .policies import policy_probs


class CorrectionKind(enum.Enum):
    IS = "is"
    WIS = "wis"
    PDIS = "pdis"


@dataclass(frozen=True)
class ClipPolicy:
    """Ratio clipping at sqrt(n).

    ``mode`` is "on", "off", or "auto"; auto enables clipping once the sample
    count reaches ``auto_min_n``.  The clip constant is exactly n**0.5.
    """

    mode: str = "auto"
    auto_min_n: int = 100

    def __post_init__(self) -> None:
        if self.mode not in ("auto", "on", "off"):
            raise ValueError("mode must be one of 'auto', 'on', 'off'")

    @classmethod
    def on(cls) -> "ClipPolicy":
        return cls(mode="on")

    @classmethod
    def off(cls) -> "ClipPolicy":
        return cls(mode="off")

    def enabled_for(self, n: int) -> bool:
        if self.mode == "on":
            return True
        if self.mode == "off":
            return False
        return n >= self.auto_min_n

    def constant(self, n: int) -> float:
        return math.sqrt(n)

    def threshold(self, n: int) -> float:
        return self.constant(n) if self.enabled_for(n) else math.inf


def clip_ratio(rho: float, n: int, clip: ClipPolicy) -> float:
    if rho < 0:
        raise ValueError("importance ratios must be nonnegative")
    if clip.enabled_for(n):
        return min(rho, clip.constant(n))
    return rho


def normal_quantile(p: float) -> float:
    """Standard normal quantile via the stdlib inverse CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    return NormalDist().inv_cdf(p)


# ---------------------------------------------------------------------------
# Per-step ratio tables.  Datasets may hold trajectories of different length;
# padded cells carry a neutral ratio of 1 and a reward of 0 and are masked by
# the lengths vector.


def step_ratio_table(
    dataset: TrajectoryDataset, target, behavior
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (ratios (n, T), rewards (n, T), lengths (n,))."""
    n = len(dataset)
    T = max(len(t) for t in dataset)
    lengths = np.array([len(t) for t in dataset], dtype=np.int64)
    d = dataset.state_dim
    flat_states = np.empty((int(lengths.sum()), d))
    flat_actions: list = []
    rewards = np.zeros((n, T))
    pos = 0
    for i, traj in enumerate(dataset):
        L = len(traj)
        flat_states[pos : pos + L] = traj.states()
        flat_actions.extend(traj.actions())
        rewards[i, :L] = traj.rewards()
        pos += L
    p_behavior = policy_probs(behavior, flat_states, np.asarray(flat_actions))
    if (p_behavior == 0.0).any():
        raise ZeroBehaviorProbability(
            "behavior policy assigns zero probability to an observed action"
        )
    p_target = policy_probs(target, flat_states, np.asarray(flat_actions))
    flat_ratios = p_target / p_behavior
    ratios = np.ones((n, T))
    pos = 0
    for i, L in enumerate(lengths):
        ratios[i, :L] = flat_ratios[pos : pos + L]
        pos += L
    return ratios, rewards, lengths


def trajectory_ratios(dataset: TrajectoryDataset, target, behavior) -> np.ndarray:
    """Full-trajectory likelihood ratios for every trajectory in the dataset."""
    ratios, _, _ = step_ratio_table(dataset, target, behavior)
    return ratios.prod(axis=1)


def is_returns(
    dataset: TrajectoryDataset, target, behavior, clip: ClipPolicy = ClipPolicy()
) -> np.ndarray:
    """Per-trajectory clipped ratio times return."""
    n = len(dataset)
    rho = trajectory_ratios(dataset, target, behavior)
    rho = np.minimum(rho, clip.threshold(n))
    return rho * dataset.returns()


def wis_returns(
    dataset: TrajectoryDataset, target, behavior, clip: ClipPolicy = ClipPolicy()
) -> np.ndarray:
    """Self-normalized variant: n * rho_i / sum(rho) * return_i.

    Ratios are clipped before normalization; normalization happens within
    whatever sample set the function is handed.
    """
    n = len(dataset)
    rho = trajectory_ratios(dataset, target, behavior)
    rho = np.minimum(rho, clip.threshold(n))
    total = rho.sum()
    if total == 0.0:
        raise DegenerateWeights("all importance ratios are zero")
    return n * rho / total * dataset.returns()


def _pdis_from_table(
    ratios: np.ndarray,
    rewards: np.ndarray,
    lengths: np.ndarray,
    discount: float,
    cap: float,
) -> np.ndarray:
    # The cap applies to each cumulative prefix product; clipping one prefix
    # does not propagate into later prefixes.
    prefixes = np.minimum(np.cumprod(ratios, axis=1), cap)
    T = ratios.shape[1]
    gammas = discount ** np.arange(T)
    mask = np.arange(T)[None, :] < lengths[:, None]
    # grouped as gamma * (prefix * reward) so the stepwise doubly-robust
    # value with a zero Q reduces to this expression bit for bit
    return (gammas[None, :] * (prefixes * rewards) * mask).sum(axis=1)


def pdis_returns(
    dataset: TrajectoryDataset, target, behavior, clip: ClipPolicy = ClipPolicy()
) -> np.ndarray:
    """Per-decision values: sum_t gamma^(t-1) * clipped prefix ratio * r_t."""
    ratios, rewards, lengths = step_ratio_table(dataset, target, behavior)
    cap = clip.threshold(len(dataset))
    return _pdis_from_table(ratios, rewards, lengths, dataset.discount, cap)


def pdis_return(
    traj: Trajectory,
    target,
    behavior,
    discount: float,
    clip: ClipPolicy = ClipPolicy(),
    n: int = 1,
) -> float:
    """Single-trajectory per-decision value; ``n`` sets the clip scale."""
    single = TrajectoryDataset((traj,), discount, len(traj))
    ratios, rewards, lengths = step_ratio_table(single, target, behavior)
    cap = clip.threshold(n)
    return float(_pdis_from_table(ratios, rewards, lengths, discount, cap)[0])


def reweighted_returns(
    dataset: TrajectoryDataset,
    target,
    behavior,
    kind: CorrectionKind,
    clip: ClipPolicy = ClipPolicy(),
) -> np.ndarray:
    if kind is CorrectionKind.IS:
        return is_returns(dataset, target, behavior, clip)
    if kind is CorrectionKind.WIS:
        return wis_returns(dataset, target, behavior, clip)
    if kind is CorrectionKind.PDIS:
        return pdis_returns(dataset, target, behavior, clip)
    raise ValueError(f"unknown correction kind {kind!r}")


# ---------------------------------------------------------------------------
# Interval primitives.


def clt_interval(samples, alpha: float) -> ConfidenceInterval:
    """mean +/- z_{1-alpha/2} * sd / sqrt(n) with the n-1 sample deviation."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise InsufficientSamples("clt_interval needs at least 2 samples")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    mean = float(samples.mean())
    half = normal_quantile(1.0 - alpha / 2.0) * float(
        samples.std(ddof=1) / math.sqrt(samples.size)
    )
    return ConfidenceInterval(mean - half, mean + half, 1.0 - alpha, point=mean)


def bootstrap_interval(
    samples,
    alpha: float,
    n_boot: int,
    rng: np.random.Generator,
) -> ConfidenceInterval:
    """Percentile bootstrap over resampled means."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise InsufficientSamples("bootstrap_interval needs at least 2 samples")
    if n_boot < 100:
        raise ValueError("bootstrap needs at least 100 replicates")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    n = samples.size
    means = np.empty(n_boot)
    # Chunked so huge (B, n) index blocks never materialize at once.
    chunk = max(1, int(5_000_000 // max(n, 1)))
    done = 0
    while done < n_boot:
        take = min(chunk, n_boot - done)
        idx = rng.integers(0, n, size=(take, n))
        means[done : done + take] = samples[idx].mean(axis=1)
        done += take
    lo, hi = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
    return ConfidenceInterval(
        float(lo), float(hi), 1.0 - alpha, point=float(samples.mean())
    )
