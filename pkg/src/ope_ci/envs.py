"""Ground-truth simulators: a continuous inventory-control environment and a
small enumerable finite MDP used as an exact oracle in tests and studies.

Environments are immutable specifications.  Sampling takes an explicit
generator; concurrent callers must derive independent streams themselves.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples, TooLarge
from .mdp import RolloutBatch, State, Trajectory, TrajectoryDataset
from .policies import SoftmaxOrderUpToPolicy, TabularPolicy, policy_sample


@dataclass(frozen=True)
class InventoryParams:
    capacity: int = 10
    fixed_order_cost: float = 1.0
    unit_cost: float = 2.0
    holding_cost: float = 2.0
    unit_price: float = 4.0
    demand_mean: float = 5.0
    demand_sd: float = 1.0
    horizon: int = 20
    reward_scale: float = 100.0

    def __post_init__(self) -> None:
        if self.capacity < 1 or self.horizon < 1 or self.demand_sd <= 0:
            raise ValueError("capacity, horizon and demand_sd must be positive")


def inventory_step(
    x: float, a: int, demand_draw: float, params: InventoryParams
) -> tuple[float, float]:
    """One day of inventory dynamics.

    The stock after ordering is min(capacity, x + a); the next state is that
    stock minus the demand draw, floored at zero.  The reward nets the fixed
    order cost, holding cost on the opening stock, purchase cost, and revenue
    on units actually sold, all scaled by ``reward_scale``.
    """
    if x < 0:
        raise ValueError("stock level must be nonnegative")
    stocked = min(float(params.capacity), x + a)
    x_next = max(0.0, stocked - demand_draw)
    sold = max(0.0, stocked - x_next)
    reward = params.reward_scale * (
        -params.fixed_order_cost * (1.0 if a > 0 else 0.0)
        - params.holding_cost * x
        - params.unit_cost * (stocked - x)
        + params.unit_price * sold
    )
    return x_next, reward


@dataclass(frozen=True)
class InventoryEnv:
    params: InventoryParams = field(default_factory=InventoryParams)

    @property
    def state_dim(self) -> int:
        return 1

    @property
    def horizon(self) -> int:
        return self.params.horizon

    @property
    def state_box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(1), np.array([float(self.params.capacity)])

    def sample_initial_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(0.0, float(self.params.capacity), size=(n, 1))

    def initial_state(self, rng: np.random.Generator) -> State:
        return (float(self.sample_initial_states(rng, 1)[0, 0]),)

    def step(self, state: State, action: int, rng: np.random.Generator):
        demand = rng.normal(self.params.demand_mean, self.params.demand_sd)
        x_next, reward = inventory_step(state[0], action, demand, self.params)
        return (x_next,), reward

    def step_batch(self, stock: np.ndarray, actions: np.ndarray, rng: np.random.Generator):
        p = self.params
        stocked = np.minimum(float(p.capacity), stock + actions)
        demand = rng.normal(p.demand_mean, p.demand_sd, size=stock.shape)
        x_next = np.maximum(0.0, stocked - demand)
        sold = np.maximum(0.0, stocked - x_next)
        reward = p.reward_scale * (
            -p.fixed_order_cost * (actions > 0)
            - p.holding_cost * stock
            - p.unit_cost * (stocked - stock)
            + p.unit_price * sold
        )
        return x_next, reward

    def rollout_batch(
        self,
        policy,
        initial_states: np.ndarray,
        horizon: int,
        rng: np.random.Generator,
    ) -> RolloutBatch:
        x = np.asarray(initial_states, dtype=float).reshape(-1, 1)[:, 0].copy()
        n = x.shape[0]
        states = np.empty((n, horizon, 1))
        actions = np.empty((n, horizon), dtype=np.int64)
        rewards = np.empty((n, horizon))
        for t in range(horizon):
            a = policy_sample(policy, x[:, None], rng)
            states[:, t, 0] = x
            actions[:, t] = a
            x, rewards[:, t] = self.step_batch(x, a, rng)
        return RolloutBatch(states, actions, rewards, np.full(n, horizon, dtype=np.int64))

    def sample_trajectory(self, policy, rng: np.random.Generator) -> Trajectory:
        batch = self.rollout_batch(
            policy, self.sample_initial_states(rng, 1), self.horizon, rng
        )
        return batch.trajectory(0)

    def sample_dataset(
        self, policy, n: int, rng: np.random.Generator, discount: float = 1.0
    ) -> TrajectoryDataset:
        batch = self.rollout_batch(
            policy, self.sample_initial_states(rng, n), self.horizon, rng
        )
        return TrajectoryDataset(tuple(batch.trajectories()), discount, self.horizon)

    def sample_returns(
        self,
        policy,
        n: int,
        rng: np.random.Generator,
        discount: float = 1.0,
        initial_state: State | None = None,
    ) -> np.ndarray:
        if initial_state is None:
            starts = self.sample_initial_states(rng, n)
        else:
            starts = np.tile(np.asarray(initial_state, dtype=float), (n, 1))
        return self.rollout_batch(policy, starts, self.horizon, rng).returns(discount)


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Tabular MDP small enough for exact path enumeration (horizon <= 4).

    ``transition_probs[s, a]`` is a distribution over next states and
    ``rewards[s, a, s']`` the reward for landing in s'.  States are exposed
    as integer-coded 1-tuples so the rest of the library sees the same state
    representation as the continuous environments.
    """

    transition_probs: np.ndarray
    rewards: np.ndarray
    initial_dist: np.ndarray
    horizon: int
    absorbing: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        P = np.asarray(self.transition_probs, dtype=float)
        R = np.asarray(self.rewards, dtype=float)
        d0 = np.asarray(self.initial_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape:
            raise ValueError("transition_probs and rewards must both be (S, A, S)")
        if np.abs(P.sum(axis=2) - 1.0).max() > 1e-12:
            raise ValueError("every transition distribution must sum to 1 within 1e-12")
        if (P < 0).any() or (d0 < 0).any():
            raise ValueError("probabilities must be nonnegative")
        if abs(d0.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must sum to 1 within 1e-12")
        if not 1 <= self.horizon <= 4:
            raise ValueError("finite MDP horizon must lie in 1..4")
        if any(d0[s] > 0 for s in self.absorbing):
            raise ValueError("initial distribution must avoid absorbing states")
        object.__setattr__(self, "transition_probs", P)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "initial_dist", d0)

    @property
    def state_count(self) -> int:
        return self.transition_probs.shape[0]

    @property
    def action_count(self) -> int:
        return self.transition_probs.shape[1]

    @property
    def state_dim(self) -> int:
        return 1

    @property
    def state_box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(1), np.array([float(self.state_count - 1)])

    def sample_initial_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cdf = np.cumsum(self.initial_dist)
        draws = (cdf < rng.random((n, 1))).sum(axis=1)
        return draws.astype(float)[:, None]

    def initial_state(self, rng: np.random.Generator) -> State:
        return (float(self.sample_initial_states(rng, 1)[0, 0]),)

    def step(self, state: State, action: int, rng: np.random.Generator):
        s = int(state[0])
        cdf = np.cumsum(self.transition_probs[s, int(action)])
        nxt = int((cdf < rng.random()).sum())
        return (float(nxt),), float(self.rewards[s, int(action), nxt])

    def rollout_batch(
        self,
        policy,
        initial_states: np.ndarray,
        horizon: int,
        rng: np.random.Generator,
    ) -> RolloutBatch:
        s = np.asarray(initial_states, dtype=float).reshape(-1, 1)[:, 0].astype(int)
        n = s.shape[0]
        states = np.zeros((n, horizon, 1))
        actions = np.zeros((n, horizon), dtype=np.int64)
        rewards = np.zeros((n, horizon))
        lengths = np.zeros(n, dtype=np.int64)
        absorbing = np.zeros(self.state_count, dtype=bool)
        for idx in self.absorbing:
            absorbing[idx] = True
        active = ~absorbing[s]
        cum_P = np.cumsum(self.transition_probs, axis=2)
        for t in range(horizon):
            if not active.any():
                break
            a = policy_sample(policy, s.astype(float)[:, None], rng)
            u = rng.random(n)
            nxt = (cum_P[s, a] < u[:, None]).sum(axis=1)
            r = self.rewards[s, a, nxt]
            states[active, t, 0] = s[active]
            actions[active, t] = a[active]
            rewards[active, t] = r[active]
            lengths[active] = t + 1
            s = np.where(active, nxt, s)
            active = active & ~absorbing[s]
        return RolloutBatch(states, actions, rewards, lengths)

    def sample_trajectory(self, policy, rng: np.random.Generator) -> Trajectory:
        batch = self.rollout_batch(
            policy, self.sample_initial_states(rng, 1), self.horizon, rng
        )
        return batch.trajectory(0)

    def sample_dataset(
        self, policy, n: int, rng: np.random.Generator, discount: float = 1.0
    ) -> TrajectoryDataset:
        batch = self.rollout_batch(
            policy, self.sample_initial_states(rng, n), self.horizon, rng
        )
        return TrajectoryDataset(tuple(batch.trajectories()), discount, self.horizon)

    def sample_returns(
        self,
        policy,
        n: int,
        rng: np.random.Generator,
        discount: float = 1.0,
        initial_state: State | None = None,
    ) -> np.ndarray:
        if initial_state is None:
            starts = self.sample_initial_states(rng, n)
        else:
            starts = np.tile(np.asarray(initial_state, dtype=float), (n, 1))
        return self.rollout_batch(policy, starts, self.horizon, rng).returns(discount)


def _enumeration_bound(mdp: FiniteMdp) -> int:
    return (mdp.state_count * mdp.action_count) ** mdp.horizon


def enumerate_trajectories(
    mdp: FiniteMdp,
    policy,
    initial_state: State | None = None,
    max_paths: int = 1_000_000,
) -> list[tuple[Trajectory, float]]:
    """All trajectories with their exact path probabilities.

    Probabilities are conditional on the initial state when one is given,
    otherwise they include the initial-state draw.  Zero-probability branches
    are pruned.
    """
    if _enumeration_bound(mdp) > max_paths:
        raise TooLarge(
            f"enumeration bound {_enumeration_bound(mdp)} exceeds budget {max_paths}"
        )
    out: list[tuple[Trajectory, float]] = []

    def walk(s: int, t: int, prob: float, prefix: list):
        if t == mdp.horizon or s in mdp.absorbing:
            out.append(
                (
                    Trajectory.from_arrays(
                        [(float(step[0]),) for step in prefix],
                        [step[1] for step in prefix],
                        [step[2] for step in prefix],
                    ),
                    prob,
                )
            )
            return
        for a in range(mdp.action_count):
            pa = policy.prob((float(s),), a)
            if pa == 0.0:
                continue
            for nxt in range(mdp.state_count):
                pt = mdp.transition_probs[s, a, nxt]
                if pt == 0.0:
                    continue
                prefix.append((s, a, float(mdp.rewards[s, a, nxt])))
                walk(nxt, t + 1, prob * pa * pt, prefix)
                prefix.pop()

    if initial_state is not None:
        walk(int(initial_state[0]), 0, 1.0, [])
    else:
        for s0 in range(mdp.state_count):
            if mdp.initial_dist[s0] > 0.0:
                walk(s0, 0, float(mdp.initial_dist[s0]), [])
    return out


def oracle_value(
    mdp: FiniteMdp,
    policy,
    discount: float,
    initial_state: State | None = None,
    max_paths: int = 1_000_000,
) -> float:
    """Exact policy value by full path enumeration (no memoization)."""
    if _enumeration_bound(mdp) > max_paths:
        raise TooLarge(
            f"enumeration bound {_enumeration_bound(mdp)} exceeds budget {max_paths}"
        )

    def expected_from(s: int, t: int) -> float:
        if t == mdp.horizon or s in mdp.absorbing:
            return 0.0
        total = 0.0
        for a in range(mdp.action_count):
            pa = policy.prob((float(s),), a)
            if pa == 0.0:
                continue
            for nxt in range(mdp.state_count):
                pt = mdp.transition_probs[s, a, nxt]
                if pt == 0.0:
                    continue
                total += pa * pt * (
                    mdp.rewards[s, a, nxt] + discount * expected_from(nxt, t + 1)
                )
        return total

    if initial_state is not None:
        return expected_from(int(initial_state[0]), 0)
    return float(
        sum(
            mdp.initial_dist[s] * expected_from(s, 0)
            for s in range(mdp.state_count)
            if mdp.initial_dist[s] > 0.0
        )
    )


def monte_carlo_value(
    env,
    policy,
    n_rollouts: int,
    rng: np.random.Generator,
    discount: float = 1.0,
    initial_state: State | None = None,
) -> tuple[float, float]:
    """Sample mean and standard error of returns over independent rollouts."""
    if n_rollouts < 2:
        raise InsufficientSamples("monte_carlo_value needs at least 2 rollouts")
    returns = env.sample_returns(
        policy, n_rollouts, rng, discount=discount, initial_state=initial_state
    )
    mean = float(returns.mean())
    se = float(returns.std(ddof=1) / np.sqrt(n_rollouts))
    return mean, se


# ---------------------------------------------------------------------------
# Canonical fixtures used by the CLI, the coverage harness, and the tests.


def inventory_policy_pair(
    capacity: int = 10,
) -> tuple[SoftmaxOrderUpToPolicy, SoftmaxOrderUpToPolicy]:
    """Default (behavior, target) ordering policies with overlapping support.

    The behavior policy restocks toward 6 units with a loose temperature; the
    target restocks toward the same level with a sharper temperature, so every
    action keeps positive probability under both while the action distribution
    genuinely shifts.  Per-step probability ratios stay bounded enough that
    20-step products remain usable by importance-sampling corrections.
    """
    behavior = SoftmaxOrderUpToPolicy(order_up_to=6.0, temperature=1.5, capacity=capacity)
    target = SoftmaxOrderUpToPolicy(order_up_to=6.0, temperature=1.2, capacity=capacity)
    return behavior, target


def small_finite_mdp() -> tuple[FiniteMdp, TabularPolicy, TabularPolicy]:
    """Three-state, two-action, horizon-3 oracle fixture with mild policy shift."""
    P = np.array(
        [
            [[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]],
            [[0.3, 0.5, 0.2], [0.2, 0.2, 0.6]],
            [[0.4, 0.4, 0.2], [0.25, 0.25, 0.5]],
        ]
    )
    base = np.array([[1.0, 0.0], [0.5, 1.5], [-0.5, 2.0]])
    bonus = np.array([0.0, 0.5, 1.0])
    R = base[:, :, None] + bonus[None, None, :]
    d0 = np.array([0.5, 0.3, 0.2])
    mdp = FiniteMdp(P, R, d0, horizon=3)
    behavior = TabularPolicy(((0.6, 0.4), (0.5, 0.5), (0.7, 0.3)))
    target = TabularPolicy(((0.4, 0.6), (0.3, 0.7), (0.5, 0.5)))
    return mdp, behavior, target
