"""Per-initial-state conformal value intervals from paired real/generated
trajectories (the `cpgen` estimator).

The pipeline: split the behavior data, fit a dynamics model on the first
half, pair every trajectory with model rollouts from the same initial state
under the behavior policy, estimate shift weights by averaging pair
likelihood ratios over an epsilon-ball of similar (initial state, score)
points, build the weighted score band, and shift it by a model-based point
estimate of the value at the queried initial state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DatasetTooSmall, DegenerateWeights, EmptyBand, NoTrainingPairs
from .mdp import ConfidenceInterval, State, TrajectoryDataset
from .reweighting import step_ratio_table

_EPS_FLOOR = 1e-9
_MASS_TOL = 1e-9


@dataclass(frozen=True)
class ScorePair:
    """One (real, generated) trajectory pair reduced to what the band needs:
    the shared initial state, the return difference, and the pair ratio."""

    initial_state: State
    score: float
    pair_ratio: float

    def __post_init__(self) -> None:
        if self.pair_ratio < 0:
            raise ValueError("pair ratios must be nonnegative")


@dataclass(frozen=True)
class EpsConfig:
    """Ball radii for weight estimation; ``None`` means resolve from data
    (half the median pairwise spread).  Empty balls fall back to the
    ``k_nearest`` pairs under the radius-scaled max distance."""

    eps_state: float | None = None
    eps_score: float | None = None
    k_nearest: int = 5

    def __post_init__(self) -> None:
        if self.eps_state is not None and self.eps_state <= 0:
            raise ValueError("eps_state must be positive")
        if self.eps_score is not None and self.eps_score <= 0:
            raise ValueError("eps_score must be positive")
        if self.k_nearest < 1:
            raise ValueError("k_nearest must be at least 1")


@dataclass(frozen=True)
class GridSpec:
    """Candidate scores for band inversion: either explicit values or a
    uniform grid padded beyond the calibration score range."""

    n_points: int = 512
    pad: float = 0.25
    values: tuple[float, ...] | None = None

    def resolve(self, scores: np.ndarray) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        lo, hi = float(scores.min()), float(scores.max())
        span = hi - lo
        return np.linspace(lo - self.pad * span, hi + self.pad * span, self.n_points)


@dataclass(frozen=True)
class WeightedScoreDistribution:
    """Discrete score distribution with an explicit point mass at +infinity."""

    scores: np.ndarray
    weights: np.ndarray
    tail_mass: float

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if scores.shape != weights.shape:
            raise ValueError("scores and weights must align")
        if (weights < 0).any() or self.tail_mass < 0:
            raise ValueError("masses must be nonnegative")
        total = weights.sum() + self.tail_mass
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"masses must sum to 1 within 1e-12, got {total!r}")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "weights", weights)


def _pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    states = np.array([p.initial_state for p in pairs], dtype=float)
    scores = np.array([p.score for p in pairs], dtype=float)
    ratios = np.array([p.pair_ratio for p in pairs], dtype=float)
    return states, scores, ratios


def _median_pairwise(values: np.ndarray) -> float:
    """Median pairwise distance, deterministically subsampled for large sets."""
    n = values.shape[0]
    if n < 2:
        return 0.0
    if n > 512:
        keep = np.unique(np.linspace(0, n - 1, 512).astype(int))
        values = values[keep]
        n = values.shape[0]
    if values.ndim == 1:
        diffs = np.abs(values[:, None] - values[None, :])
    else:
        diffs = np.sqrt(((values[:, None, :] - values[None, :, :]) ** 2).sum(-1))
    upper = diffs[np.triu_indices(n, k=1)]
    return float(np.median(upper))


def resolve_eps(train_pairs, cfg: EpsConfig) -> tuple[float, float]:
    if len(train_pairs) == 0:
        raise NoTrainingPairs("cannot resolve ball radii without training pairs")
    if cfg.eps_state is not None and cfg.eps_score is not None:
        return cfg.eps_state, cfg.eps_score
    states, scores, _ = _pair_arrays(train_pairs)
    eps_s = cfg.eps_state
    if eps_s is None:
        eps_s = max(0.5 * _median_pairwise(states), _EPS_FLOOR)
    eps_r = cfg.eps_score
    if eps_r is None:
        eps_r = max(0.5 * _median_pairwise(scores), _EPS_FLOOR)
    return eps_s, eps_r


def _eps_ball_weights(
    query_states: np.ndarray,
    query_scores: np.ndarray,
    train_states: np.ndarray,
    train_scores: np.ndarray,
    train_ratios: np.ndarray,
    eps_state: float,
    eps_score: float,
    k_nearest: int,
) -> np.ndarray:
    """Mean pair ratio over the ball around each query; nearest-k fallback."""
    d_state = np.sqrt(
        ((query_states[:, None, :] - train_states[None, :, :]) ** 2).sum(-1)
    )
    d_score = np.abs(query_scores[:, None] - train_scores[None, :])
    inside = (d_state <= eps_state) & (d_score <= eps_score)
    counts = inside.sum(axis=1)
    sums = inside @ train_ratios
    out = np.empty(query_states.shape[0])
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled]
    if (~filled).any():
        k = min(k_nearest, train_ratios.shape[0])
        scaled = np.maximum(d_state[~filled] / eps_state, d_score[~filled] / eps_score)
        nearest = np.argpartition(scaled, k - 1, axis=1)[:, :k]
        out[~filled] = train_ratios[nearest].mean(axis=1)
    return out


def estimate_weight_eps(
    query_state: State,
    query_score: float,
    train_pairs,
    cfg: EpsConfig = EpsConfig(),
) -> float:
    """Shift weight at one (initial state, score) query point."""
    if len(train_pairs) == 0:
        raise NoTrainingPairs("weight estimation needs at least one training pair")
    eps_s, eps_r = resolve_eps(train_pairs, cfg)
    states, scores, ratios = _pair_arrays(train_pairs)
    return float(
        _eps_ball_weights(
            np.asarray([query_state], dtype=float),
            np.asarray([query_score], dtype=float),
            states,
            scores,
            ratios,
            eps_s,
            eps_r,
            cfg.k_nearest,
        )[0]
    )


def weighted_distribution(
    cal_pairs, cal_weights, query_weight: float
) -> WeightedScoreDistribution:
    """Normalize calibration weights against the query weight; the query's
    share becomes the +infinity tail mass."""
    weights = np.asarray(cal_weights, dtype=float)
    if (weights < 0).any() or query_weight < 0:
        raise ValueError("weights must be nonnegative")
    total = weights.sum() + query_weight
    if total == 0.0:
        raise DegenerateWeights("weight normalizer is zero")
    scores = np.array([p.score for p in cal_pairs], dtype=float)
    return WeightedScoreDistribution(scores, weights / total, query_weight / total)


def weighted_quantile(dist: WeightedScoreDistribution, beta: float) -> float:
    """Smallest score v with CDF(v) >= beta; +inf when the finite mass below
    the level is insufficient."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    order = np.argsort(dist.scores, kind="stable")
    cum = np.cumsum(dist.weights[order])
    idx = np.searchsorted(cum, beta - _MASS_TOL, side="left")
    if idx >= cum.size:
        return math.inf
    return float(dist.scores[order][idx])


def conformal_band(
    cal_pairs,
    train_pairs,
    query_state: State,
    alpha: float,
    cfg: EpsConfig = EpsConfig(),
    grid: GridSpec = GridSpec(),
    weight_fn=None,
    return_info: bool = False,
):
    """Weighted two-sided conformal band over score candidates.

    For each grid candidate delta the query weight is evaluated at
    (query_state, delta), the calibration weights (which do not depend on
    delta) are normalized against it, and delta is accepted when it lies
    between the alpha/2 and 1 - alpha/2 weighted quantiles.  The hull of
    accepted candidates is returned.

    ``weight_fn(state_tuple, score) -> weight`` overrides the epsilon-ball
    estimator, e.g. with exactly enumerated weights.
    """
    if len(cal_pairs) == 0:
        raise ValueError("calibration pairs must be nonempty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    cal_states, cal_scores, _ = _pair_arrays(cal_pairs)
    query = np.asarray(query_state, dtype=float)

    if weight_fn is not None:
        cal_weights = np.array(
            [weight_fn(tuple(s), float(v)) for s, v in zip(cal_states, cal_scores)]
        )

        def query_weights(deltas: np.ndarray) -> np.ndarray:
            return np.array([weight_fn(tuple(query), float(d)) for d in deltas])

    else:
        if len(train_pairs) == 0:
            raise NoTrainingPairs("band construction needs training pairs")
        eps_s, eps_r = resolve_eps(train_pairs, cfg)
        t_states, t_scores, t_ratios = _pair_arrays(train_pairs)
        cal_weights = _eps_ball_weights(
            cal_states, cal_scores, t_states, t_scores, t_ratios,
            eps_s, eps_r, cfg.k_nearest,
        )

        def query_weights(deltas: np.ndarray) -> np.ndarray:
            tiled = np.tile(query, (deltas.size, 1))
            return _eps_ball_weights(
                tiled, deltas, t_states, t_scores, t_ratios,
                eps_s, eps_r, cfg.k_nearest,
            )

    if (cal_weights < 0).any():
        raise ValueError("weights must be nonnegative")

    deltas = grid.resolve(cal_scores)
    q_weights = query_weights(deltas)
    total_cal = cal_weights.sum()
    if total_cal == 0.0 and (q_weights == 0.0).all():
        raise DegenerateWeights("all calibration and query weights are zero")

    order = np.argsort(cal_scores, kind="stable")
    sorted_scores = cal_scores[order]
    cum = np.cumsum(cal_weights[order])
    normalizer = total_cal + q_weights

    lo_target = (alpha / 2.0 - _MASS_TOL) * normalizer
    hi_target = (1.0 - alpha / 2.0 - _MASS_TOL) * normalizer
    lo_idx = np.searchsorted(cum, lo_target, side="left")
    hi_idx = np.searchsorted(cum, hi_target, side="left")
    n = sorted_scores.size
    lo_q = np.where(lo_idx < n, sorted_scores[np.minimum(lo_idx, n - 1)], math.inf)
    hi_q = np.where(hi_idx < n, sorted_scores[np.minimum(hi_idx, n - 1)], math.inf)

    atol = _MASS_TOL * max(1.0, float(np.abs(cal_scores).max()))
    accepted = (lo_q <= deltas + atol) & ((hi_q == math.inf) | (deltas <= hi_q + atol))
    if not accepted.any():
        raise EmptyBand("no grid candidate satisfied the band condition")
    lo = float(deltas[accepted].min())
    hi = float(deltas[accepted].max())
    if return_info:
        info = {
            "cal_weights": cal_weights,
            "query_weights": q_weights,
            "grid": deltas,
            "accepted": accepted,
        }
        return lo, hi, info
    return lo, hi


# ---------------------------------------------------------------------------
# Full pipeline.


@dataclass(frozen=True)
class CpGenResult:
    interval: ConfidenceInterval
    band_lower: float
    band_upper: float
    point: float
    n_cal_pairs: int
    eps_state: float
    eps_score: float


def generation_score_pairs(
    model,
    behavior,
    target,
    trajectories,
    per_trajectory: int,
    horizon: int,
    discount: float,
    rng: np.random.Generator,
    clip_cap: float = math.inf,
) -> list[ScorePair]:
    """Pair each real trajectory with model rollouts from its initial state
    under the behavior policy and reduce each pair to a ScorePair."""
    trajectories = list(trajectories)
    real = TrajectoryDataset(tuple(trajectories), discount, horizon)
    real_ratio = step_ratio_table(real, target, behavior)[0].prod(axis=1)
    real_return = real.returns()

    starts = np.repeat(real.initial_states(), per_trajectory, axis=0)
    batch = model.rollout_batch(behavior, starts, horizon, rng)
    gen_dataset = TrajectoryDataset(tuple(batch.trajectories()), discount, horizon)
    gen_ratio = step_ratio_table(gen_dataset, target, behavior)[0].prod(axis=1)
    gen_return = batch.returns(discount)

    pairs = []
    for i, traj in enumerate(trajectories):
        for m in range(per_trajectory):
            j = i * per_trajectory + m
            ratio = min(real_ratio[i] * gen_ratio[j], clip_cap)
            pairs.append(
                ScorePair(
                    traj.initial_state,
                    float(real_return[i] - gen_return[j]),
                    float(ratio),
                )
            )
    return pairs


def cp_gen_detailed(
    dataset: TrajectoryDataset,
    behavior,
    target,
    initial_state: State,
    alpha: float,
    M: int = 4,
    N_gen: int = 4,
    n_pe_rollouts: int = 256,
    cfg: EpsConfig = EpsConfig(),
    model_factory=None,
    rng: np.random.Generator | None = None,
    grid: GridSpec = GridSpec(),
    clip_pair_ratios: bool = False,
) -> CpGenResult:
    if len(dataset) < 4:
        raise DatasetTooSmall("the pipeline needs at least 4 trajectories")
    if model_factory is None or rng is None:
        raise ValueError("model_factory and rng are required")
    rng_train, rng_cal, rng_point = rng.spawn(3)

    train_data, cal_data = dataset.split_half()
    model = model_factory().fit(train_data)

    train_cap = math.inf
    cal_cap = math.inf
    if clip_pair_ratios:
        train_cap = math.sqrt(len(train_data) * M)
        cal_cap = math.sqrt(len(cal_data) * N_gen)
    train_pairs = generation_score_pairs(
        model, behavior, target, train_data.trajectories,
        M, dataset.horizon, dataset.discount, rng_train, train_cap,
    )
    cal_pairs = generation_score_pairs(
        model, behavior, target, cal_data.trajectories,
        N_gen, dataset.horizon, dataset.discount, rng_cal, cal_cap,
    )

    eps_s, eps_r = resolve_eps(train_pairs, cfg)
    resolved = EpsConfig(eps_s, eps_r, cfg.k_nearest)
    band_lo, band_hi = conformal_band(
        cal_pairs, train_pairs, initial_state, alpha, resolved, grid
    )

    starts = np.tile(np.asarray(initial_state, dtype=float), (n_pe_rollouts, 1))
    point = float(
        model.rollout_batch(target, starts, dataset.horizon, rng_point)
        .returns(dataset.discount)
        .mean()
    )
    interval = ConfidenceInterval(
        point + band_lo, point + band_hi, 1.0 - alpha, point=point
    )
    return CpGenResult(
        interval, band_lo, band_hi, point, len(cal_pairs), eps_s, eps_r
    )


def cp_gen_interval(
    dataset: TrajectoryDataset,
    behavior,
    target,
    initial_state: State,
    alpha: float,
    M: int = 4,
    N_gen: int = 4,
    n_pe_rollouts: int = 256,
    cfg: EpsConfig = EpsConfig(),
    model_factory=None,
    rng: np.random.Generator | None = None,
    grid: GridSpec = GridSpec(),
) -> ConfidenceInterval:
    """Conformal interval for the value of ``initial_state`` under the target
    policy: model-based point estimate plus the shifted score band."""
    return cp_gen_detailed(
        dataset, behavior, target, initial_state, alpha,
        M, N_gen, n_pe_rollouts, cfg, model_factory, rng, grid,
    ).interval
