"""Comparison estimators: reweighted-return intervals with CLT or bootstrap
bounds, their augmented variant that pools synthetic rollouts, a direct
model-rollout method, and a stepwise doubly-robust baseline built on
least-squares fitted-Q iteration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ConfidenceInterval, RolloutBatch, TrajectoryDataset
from .models import polynomial_features, solve_least_squares
from .policies import policy_probs
from .reweighting import (
    ClipPolicy,
    CorrectionKind,
    bootstrap_interval,
    clt_interval,
    reweighted_returns,
    step_ratio_table,
)


def _interval(values, alpha, bound, rng, n_boot):
    if bound == "clt":
        return clt_interval(values, alpha)
    if bound == "bootstrap":
        if rng is None:
            raise ValueError("bootstrap bounds need a generator")
        return bootstrap_interval(values, alpha, n_boot, rng)
    raise ValueError(f"unknown bound {bound!r}; use 'clt' or 'bootstrap'")


def is_baseline(
    dataset: TrajectoryDataset,
    behavior,
    target,
    alpha: float,
    kind: CorrectionKind = CorrectionKind.IS,
    bound: str = "clt",
    clip: ClipPolicy = ClipPolicy(),
    rng: np.random.Generator | None = None,
    n_boot: int = 2000,
) -> ConfidenceInterval:
    values = reweighted_returns(dataset, target, behavior, kind, clip)
    return _interval(values, alpha, bound, rng, n_boot)


def aug_is_baseline(
    dataset: TrajectoryDataset,
    model,
    behavior,
    target,
    n_synth: int,
    alpha: float,
    bound: str = "clt",
    clip: ClipPolicy = ClipPolicy(),
    rng: np.random.Generator | None = None,
    kind: CorrectionKind = CorrectionKind.IS,
    d0_sampler=None,
    n_boot: int = 2000,
) -> ConfidenceInterval:
    """Pools the reweighted real returns with raw returns of synthetic
    rollouts generated under the target policy (each with unit weight)."""
    if n_synth == 0:
        return is_baseline(dataset, behavior, target, alpha, kind, bound, clip, rng, n_boot)
    if rng is None:
        raise ValueError("synthetic generation needs a generator")
    rng_synth, rng_bound = rng.spawn(2)
    if d0_sampler is None:
        inits = dataset.initial_states()
        starts = inits[rng_synth.integers(0, len(dataset), size=n_synth)]
    else:
        starts = d0_sampler(rng_synth, n_synth)
    synth = model.rollout_batch(target, starts, dataset.horizon, rng_synth).returns(
        dataset.discount
    )
    real = reweighted_returns(dataset, target, behavior, kind, clip)
    pooled = np.concatenate([real, synth])
    return _interval(pooled, alpha, bound, rng_bound, n_boot)


def dm_baseline(
    model,
    target,
    d0_sampler,
    n_rollouts: int,
    alpha: float,
    rng: np.random.Generator,
    horizon: int,
    discount: float = 1.0,
    n_boot: int = 2000,
) -> ConfidenceInterval:
    """Bootstrap interval over model-rollout returns under the target policy."""
    rng_roll, rng_boot = rng.spawn(2)
    starts = d0_sampler(rng_roll, n_rollouts)
    returns = model.rollout_batch(target, starts, horizon, rng_roll).returns(discount)
    return bootstrap_interval(returns, alpha, n_boot, rng_boot)


# ---------------------------------------------------------------------------
# Fitted-Q machinery for the doubly-robust baseline.


@dataclass(frozen=True)
class FittedQSpec:
    degree: int = 2
    ridge: float = 1e-6
    sweeps: int | None = None  # defaults to the dataset horizon


class PolynomialQ:
    """Action-value function linear in polynomial features of (state, action)."""

    def __init__(self, coef: np.ndarray, degree: int):
        self.coef = np.asarray(coef, dtype=float)
        self.degree = degree

    def q_values(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        z = np.column_stack([states, np.asarray(actions, dtype=float)[:, None]])
        return polynomial_features(z, self.degree) @ self.coef

    def expected_q(self, states: np.ndarray, policy) -> np.ndarray:
        """E_{a ~ policy} Q(s, a) over the policy's (constant) support."""
        states = np.asarray(states, dtype=float)
        support = policy.support(tuple(map(float, states[0])))
        total = np.zeros(states.shape[0])
        for action in support:
            acts = np.full(states.shape[0], action)
            total += policy_probs(policy, states, acts) * self.q_values(states, acts)
        return total


class ZeroQ:
    """Identically-zero action-value function (reduces stepwise DR to PDIS)."""

    def q_values(self, states, actions):
        return np.zeros(len(actions))

    def expected_q(self, states, policy):
        return np.zeros(np.asarray(states).shape[0])


def _transition_rows(dataset: TrajectoryDataset, extra: RolloutBatch | None):
    states, actions, rewards, next_states, terminal = [], [], [], [], []
    for traj in dataset:
        s = traj.states()
        a = np.asarray(traj.actions(), dtype=float)
        r = traj.rewards()
        states.append(s)
        actions.append(a)
        rewards.append(r)
        nxt = np.vstack([s[1:], np.zeros((1, s.shape[1]))])
        next_states.append(nxt)
        term = np.zeros(len(traj), dtype=bool)
        term[-1] = True
        terminal.append(term)
    if extra is not None:
        mask = extra.step_mask()
        for i in range(extra.size):
            L = int(extra.lengths[i])
            s = extra.states[i, :L]
            states.append(s)
            actions.append(extra.actions[i, :L].astype(float))
            rewards.append(extra.rewards[i, :L])
            next_states.append(np.vstack([s[1:], np.zeros((1, s.shape[1]))]))
            term = np.zeros(L, dtype=bool)
            term[-1] = True
            terminal.append(term)
        del mask
    return (
        np.concatenate(states),
        np.concatenate(actions),
        np.concatenate(rewards),
        np.concatenate(next_states),
        np.concatenate(terminal),
    )


def fit_q(
    dataset: TrajectoryDataset,
    target,
    spec: FittedQSpec = FittedQSpec(),
    synthetic: RolloutBatch | None = None,
) -> PolynomialQ:
    """Least-squares fitted-Q iteration with backward sweeps.

    Each sweep regresses r + gamma * E_{a' ~ target} Q(s', a') (zero beyond
    each trajectory's last step) onto polynomial features of (s, a).
    Synthetic rollouts, when given, join the regression data only.
    """
    states, actions, rewards, next_states, terminal = _transition_rows(
        dataset, synthetic
    )
    feats = polynomial_features(
        np.column_stack([states, actions[:, None]]), spec.degree
    )
    sweeps = spec.sweeps if spec.sweeps is not None else dataset.horizon
    q = PolynomialQ(np.zeros(feats.shape[1]), spec.degree)
    cont = ~terminal
    for _ in range(sweeps):
        targets = rewards.copy()
        if cont.any():
            targets[cont] += dataset.discount * q.expected_q(next_states[cont], target)
        q = PolynomialQ(solve_least_squares(feats, targets, spec.ridge), spec.degree)
    return q


def stepwise_dr_values(
    dataset: TrajectoryDataset,
    target,
    behavior,
    q,
    clip: ClipPolicy = ClipPolicy(),
) -> np.ndarray:
    """Per-trajectory stepwise doubly-robust values.

    sum_t gamma^(t-1) [ rho_{1:t} (r_t - Q(s_t, a_t)) + rho_{1:t-1} E_pi Q(s_t, .) ]
    with rho_{1:0} = 1 and every prefix product clipped at sqrt(n).
    """
    ratios, rewards, lengths = step_ratio_table(dataset, target, behavior)
    n, T = ratios.shape
    cap = clip.threshold(n)
    prefixes = np.minimum(np.cumprod(ratios, axis=1), cap)
    prev = np.column_stack([np.ones(n), prefixes[:, :-1]])

    flat_states = np.concatenate([t.states() for t in dataset])
    flat_actions = np.concatenate(
        [np.asarray(t.actions(), dtype=float) for t in dataset]
    )
    q_sa_flat = q.q_values(flat_states, flat_actions)
    eq_flat = q.expected_q(flat_states, target)
    q_sa = np.zeros((n, T))
    eq = np.zeros((n, T))
    pos = 0
    for i, L in enumerate(lengths):
        q_sa[i, :L] = q_sa_flat[pos : pos + L]
        eq[i, :L] = eq_flat[pos : pos + L]
        pos += L

    gammas = dataset.discount ** np.arange(T)
    mask = np.arange(T)[None, :] < lengths[:, None]
    terms = gammas[None, :] * (prefixes * (rewards - q_sa) + prev * eq) * mask
    return terms.sum(axis=1)


def dr_baseline(
    dataset: TrajectoryDataset,
    behavior,
    target,
    alpha: float,
    q_spec: FittedQSpec | None = None,
    q=None,
    augment: tuple | None = None,
    clip: ClipPolicy = ClipPolicy(),
    rng: np.random.Generator | None = None,
) -> ConfidenceInterval:
    """CLT interval over stepwise doubly-robust per-trajectory values.

    Pass ``q`` to supply an action-value function directly; otherwise one is
    fitted from the dataset per ``q_spec``.  ``augment=(model, n_synth)``
    adds synthetic target-policy rollouts to the Q-fitting data only, with
    initial states bootstrap-resampled from the dataset.
    """
    if q is None:
        synthetic = None
        if augment is not None:
            model, n_synth = augment
            if n_synth > 0:
                if rng is None:
                    raise ValueError("augmentation needs a generator")
                inits = dataset.initial_states()
                starts = inits[rng.integers(0, len(dataset), size=n_synth)]
                synthetic = model.rollout_batch(
                    target, starts, dataset.horizon, rng
                )
        q = fit_q(dataset, target, q_spec or FittedQSpec(), synthetic)
    values = stepwise_dr_values(dataset, target, behavior, q, clip)
    return clt_interval(values, alpha)
