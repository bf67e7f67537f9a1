"""Trajectory, policy, and dataset primitives shared by every estimator.

Conventions: a transition stores the state an action was taken from, the
action, and the reward it produced, so ``transitions[0].state`` is the
initial state and the first reward belongs to step one.  All types are
immutable after construction and all functions are pure; randomness always
enters through an explicit generator argument.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Protocol, runtime_checkable

import numpy as np

from .errors import ZeroBehaviorProbability

State = tuple[float, ...]
Action = "int | tuple[float, ...]"


@dataclass(frozen=True)
class Transition:
    state: State
    action: int | tuple[float, ...]
    reward: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise ValueError(f"reward must be finite, got {self.reward!r}")


@dataclass(frozen=True)
class Trajectory:
    """A nonempty sequence of transitions sharing one episode."""

    transitions: tuple[Transition, ...]

    def __post_init__(self) -> None:
        if len(self.transitions) == 0:
            raise ValueError("a trajectory needs at least one transition")

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self.transitions)

    @property
    def initial_state(self) -> State:
        return self.transitions[0].state

    def states(self) -> np.ndarray:
        return np.array([t.state for t in self.transitions], dtype=float)

    def actions(self) -> list:
        return [t.action for t in self.transitions]

    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions], dtype=float)

    @classmethod
    def from_arrays(cls, states, actions, rewards) -> "Trajectory":
        transitions = tuple(
            Transition(tuple(float(x) for x in s), a, float(r))
            for s, a, r in zip(states, actions, rewards)
        )
        return cls(transitions)


@runtime_checkable
class StochasticPolicy(Protocol):
    """Conditional action distribution: queryable density/pmf plus sampling."""

    def prob(self, state: State, action) -> float: ...

    def sample(self, state: State, rng: np.random.Generator): ...


@dataclass(frozen=True)
class TrajectoryDataset:
    trajectories: tuple[Trajectory, ...]
    discount: float
    horizon: int

    def __post_init__(self) -> None:
        if len(self.trajectories) == 0:
            raise ValueError("dataset must hold at least one trajectory")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        dim = len(self.trajectories[0].initial_state)
        for traj in self.trajectories:
            if len(traj) > self.horizon:
                raise ValueError("trajectory longer than the dataset horizon")
            if len(traj.initial_state) != dim:
                raise ValueError("trajectories must share state dimensionality")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    @property
    def state_dim(self) -> int:
        return len(self.trajectories[0].initial_state)

    def returns(self) -> np.ndarray:
        return np.array(
            [trajectory_return(t, self.discount) for t in self.trajectories]
        )

    def initial_states(self) -> np.ndarray:
        return np.array([t.initial_state for t in self.trajectories], dtype=float)

    def subset(self, indices) -> "TrajectoryDataset":
        picked = tuple(self.trajectories[i] for i in indices)
        return TrajectoryDataset(picked, self.discount, self.horizon)

    def split_half(self) -> tuple["TrajectoryDataset", "TrajectoryDataset"]:
        """Deterministic half split; the first half gets the odd trajectory."""
        if len(self) < 2:
            raise ValueError("cannot split a dataset with fewer than 2 trajectories")
        cut = (len(self) + 1) // 2
        return self.subset(range(cut)), self.subset(range(cut, len(self)))


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    point: float | None = None

    def __post_init__(self) -> None:
        if not self.lower <= self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class RolloutBatch:
    """Padded arrays for a batch of rollouts.

    ``states[b, t]`` is the state action ``actions[b, t]`` was taken from;
    entries at or beyond ``lengths[b]`` are padding and must be ignored.
    """

    states: np.ndarray  # (B, T, d)
    actions: np.ndarray  # (B, T) integer actions
    rewards: np.ndarray  # (B, T)
    lengths: np.ndarray  # (B,)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def step_mask(self) -> np.ndarray:
        t = np.arange(self.states.shape[1])
        return t[None, :] < self.lengths[:, None]

    def returns(self, discount: float) -> np.ndarray:
        gammas = discount ** np.arange(self.states.shape[1])
        return (self.rewards * self.step_mask() * gammas[None, :]).sum(axis=1)

    def trajectory(self, i: int) -> Trajectory:
        n = int(self.lengths[i])
        return Trajectory.from_arrays(
            self.states[i, :n], (int(a) for a in self.actions[i, :n]), self.rewards[i, :n]
        )

    def trajectories(self) -> list[Trajectory]:
        return [self.trajectory(i) for i in range(self.size)]


def trajectory_return(traj: Trajectory, discount: float) -> float:
    """Discounted return over the trajectory's own length."""
    if not 0.0 < discount <= 1.0:
        raise ValueError("discount must lie in (0, 1]")
    total = 0.0
    gamma_t = 1.0
    for tr in traj.transitions:
        total += gamma_t * tr.reward
        gamma_t *= discount
    return total


def likelihood_ratio(
    traj: Trajectory, target: StochasticPolicy, behavior: StochasticPolicy
) -> float:
    """Product over steps of target/behavior action probabilities.

    Raises ZeroBehaviorProbability on an exactly-zero behavior denominator.
    """
    ratio = 1.0
    for tr in traj.transitions:
        denom = behavior.prob(tr.state, tr.action)
        if denom == 0.0:
            raise ZeroBehaviorProbability(
                f"behavior probability is zero at state {tr.state}, action {tr.action}"
            )
        ratio *= target.prob(tr.state, tr.action) / denom
    return ratio


def pair_likelihood_ratio(
    real_traj: Trajectory,
    gen_traj: Trajectory,
    target: StochasticPolicy,
    behavior: StochasticPolicy,
) -> float:
    """Joint ratio for a (real, generated) pair, each over its own length."""
    return likelihood_ratio(real_traj, target, behavior) * likelihood_ratio(
        gen_traj, target, behavior
    )


# ---------------------------------------------------------------------------
# JSON Lines persistence.  One trajectory per line plus a sidecar metadata
# file; floats go through repr so a write/read round trip is bit exact.


def dataset_meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def _encode_action(action):
    if isinstance(action, tuple):
        return list(action)
    return action


def _decode_action(raw):
    if isinstance(raw, list):
        return tuple(float(x) for x in raw)
    return raw


def write_jsonl_dataset(dataset: TrajectoryDataset, path) -> None:
    path = Path(path)
    lines = []
    for traj in dataset:
        record = {
            "states": [list(t.state) for t in traj.transitions],
            "actions": [_encode_action(t.action) for t in traj.transitions],
            "rewards": [t.reward for t in traj.transitions],
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    path.write_text("\n".join(lines) + "\n")
    meta = {
        "gamma": dataset.discount,
        "horizon": dataset.horizon,
        "state_dim": dataset.state_dim,
    }
    dataset_meta_path(path).write_text(json.dumps(meta, separators=(",", ":")) + "\n")


def read_jsonl_dataset(path) -> TrajectoryDataset:
    path = Path(path)
    meta = json.loads(dataset_meta_path(path).read_text())
    trajectories = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        transitions = tuple(
            Transition(tuple(float(x) for x in s), _decode_action(a), float(r))
            for s, a, r in zip(record["states"], record["actions"], record["rewards"])
        )
        trajectories.append(Trajectory(transitions))
    return TrajectoryDataset(
        tuple(trajectories), float(meta["gamma"]), int(meta["horizon"])
    )
