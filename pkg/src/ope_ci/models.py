"""Pluggable generative dynamics models: fit from trajectories, then roll
out conditional trajectories from a requested initial state under a policy.

A fitted model is immutable in practice and safe to share; rollouts with
independent generator streams may run concurrently.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import SingularDesign
from .mdp import RolloutBatch, State, Trajectory, TrajectoryDataset
from .policies import policy_sample


@runtime_checkable
class DynamicsModel(Protocol):
    def fit(self, dataset: TrajectoryDataset) -> "DynamicsModel": ...

    def rollout(
        self, policy, initial_state: State, horizon: int, rng: np.random.Generator
    ) -> Trajectory: ...


def polynomial_features(z: np.ndarray, degree: int) -> np.ndarray:
    """Feature map [1, z_i, (z_i z_j for i <= j when degree == 2)]."""
    z = np.asarray(z, dtype=float)
    cols = [np.ones(z.shape[0]), *z.T]
    if degree == 2:
        p = z.shape[1]
        for i in range(p):
            for j in range(i, p):
                cols.append(z[:, i] * z[:, j])
    return np.column_stack(cols)


def _encode_actions(actions) -> np.ndarray:
    first = actions[0]
    if isinstance(first, tuple):
        return np.array([list(a) for a in actions], dtype=float)
    return np.array(actions, dtype=float)[:, None]


def solve_least_squares(X: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    if X.shape[0] == 0:
        raise SingularDesign("no rows available for the regression")
    coef, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
    if rank < X.shape[1]:
        # Rank-deficient design: fall back to a lightly ridged solve.
        gram = X.T @ X + ridge * np.eye(X.shape[1])
        coef = np.linalg.solve(gram, X.T @ Y)
    return coef


@dataclass
class GaussianRegressionModel:
    """Polynomial-feature regressor for next state and reward with Gaussian
    residual noise; the residual scale per output dimension is fitted from
    the training residuals.

    ``state_box`` optionally clamps generated states to a coordinate box.
    """

    degree: int = 2
    ridge: float = 1e-6
    state_box: tuple[np.ndarray, np.ndarray] | None = None
    _state_coef: np.ndarray | None = field(default=None, repr=False)
    _reward_coef: np.ndarray | None = field(default=None, repr=False)
    _state_scale: np.ndarray | None = field(default=None, repr=False)
    _reward_scale: float | None = field(default=None, repr=False)
    _state_dim: int | None = field(default=None, repr=False)
    _action_dim: int | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.degree not in (1, 2):
            raise ValueError("feature degree must be 1 or 2")

    @property
    def fitted(self) -> bool:
        return self._state_coef is not None

    def fit(self, dataset: TrajectoryDataset) -> "GaussianRegressionModel":
        """Least-squares fit of next-state and reward maps over all transitions.

        Consecutive transitions within each trajectory supply the dynamics
        rows, so trajectories of length one contribute to the reward fit only.
        """
        reward_inputs, rewards = [], []
        dyn_inputs, next_states = [], []
        for traj in dataset:
            states = traj.states()
            acts = _encode_actions(traj.actions())
            z = np.column_stack([states, acts])
            reward_inputs.append(z)
            rewards.append(traj.rewards())
            if len(traj) > 1:
                dyn_inputs.append(z[:-1])
                next_states.append(states[1:])
        Zr = np.concatenate(reward_inputs)
        if not dyn_inputs:
            raise SingularDesign("no consecutive transitions to fit dynamics from")
        Zs = np.concatenate(dyn_inputs)
        Ys = np.concatenate(next_states)
        yr = np.concatenate(rewards)

        Xr = polynomial_features(Zr, self.degree)
        Xs = polynomial_features(Zs, self.degree)
        state_coef = solve_least_squares(Xs, Ys, self.ridge)
        reward_coef = solve_least_squares(Xr, yr, self.ridge)

        self._state_coef = state_coef
        self._reward_coef = reward_coef
        self._state_scale = (Ys - Xs @ state_coef).std(axis=0)
        self._reward_scale = float((yr - Xr @ reward_coef).std())
        self._state_dim = Ys.shape[1]
        self._action_dim = Zr.shape[1] - Ys.shape[1]
        return self

    def _require_fitted(self) -> None:
        if not self.fitted:
            raise SingularDesign("model must be fitted before rolling out")

    def rollout_batch(
        self,
        policy,
        initial_states: np.ndarray,
        horizon: int,
        rng: np.random.Generator,
    ) -> RolloutBatch:
        self._require_fitted()
        x = np.asarray(initial_states, dtype=float).reshape(-1, self._state_dim).copy()
        n = x.shape[0]
        states = np.empty((n, horizon, self._state_dim))
        actions = np.empty((n, horizon), dtype=np.int64)
        rewards = np.empty((n, horizon))
        for t in range(horizon):
            a = policy_sample(policy, x, rng)
            feats = polynomial_features(
                np.column_stack([x, a.astype(float)[:, None]]), self.degree
            )
            states[:, t] = x
            actions[:, t] = a
            rewards[:, t] = (
                feats @ self._reward_coef
                + rng.standard_normal(n) * self._reward_scale
            )
            x = feats @ self._state_coef + rng.standard_normal(
                (n, self._state_dim)
            ) * self._state_scale
            if self.state_box is not None:
                np.clip(x, self.state_box[0], self.state_box[1], out=x)
        return RolloutBatch(states, actions, rewards, np.full(n, horizon, dtype=np.int64))

    def rollout(
        self, policy, initial_state: State, horizon: int, rng: np.random.Generator
    ) -> Trajectory:
        batch = self.rollout_batch(
            policy, np.asarray([initial_state], dtype=float), horizon, rng
        )
        return batch.trajectory(0)

    def to_json(self) -> str:
        self._require_fitted()
        box = None
        if self.state_box is not None:
            box = [list(map(float, self.state_box[0])), list(map(float, self.state_box[1]))]
        payload = {
            "degree": self.degree,
            "ridge": self.ridge,
            "state_box": box,
            "state_coef": self._state_coef.tolist(),
            "reward_coef": self._reward_coef.tolist(),
            "state_scale": self._state_scale.tolist(),
            "reward_scale": self._reward_scale,
            "state_dim": self._state_dim,
            "action_dim": self._action_dim,
        }
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "GaussianRegressionModel":
        payload = json.loads(text)
        box = payload["state_box"]
        model = cls(
            degree=int(payload["degree"]),
            ridge=float(payload["ridge"]),
            state_box=None
            if box is None
            else (np.array(box[0], dtype=float), np.array(box[1], dtype=float)),
        )
        model._state_coef = np.array(payload["state_coef"], dtype=float)
        model._reward_coef = np.array(payload["reward_coef"], dtype=float)
        model._state_scale = np.array(payload["state_scale"], dtype=float)
        model._reward_scale = float(payload["reward_scale"])
        model._state_dim = int(payload["state_dim"])
        model._action_dim = int(payload["action_dim"])
        return model

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "GaussianRegressionModel":
        return cls.from_json(Path(path).read_text())


@dataclass
class OracleModel:
    """Ground-truth environment wrapped as a generative model (zero model
    error ablation); fitting is a no-op."""

    env: object

    def fit(self, dataset: TrajectoryDataset | None = None) -> "OracleModel":
        return self

    def rollout_batch(self, policy, initial_states, horizon, rng) -> RolloutBatch:
        return self.env.rollout_batch(policy, initial_states, horizon, rng)

    def rollout(self, policy, initial_state, horizon, rng) -> Trajectory:
        batch = self.rollout_batch(
            policy, np.asarray([initial_state], dtype=float), horizon, rng
        )
        return batch.trajectory(0)


@dataclass
class RewardOffsetModel:
    """Decorator adding a constant per-step reward offset to a base model.

    Used to study how estimators behave when the generative model is biased.
    """

    base: object
    reward_offset: float

    def fit(self, dataset: TrajectoryDataset | None = None) -> "RewardOffsetModel":
        self.base.fit(dataset)
        return self

    def rollout_batch(self, policy, initial_states, horizon, rng) -> RolloutBatch:
        batch = self.base.rollout_batch(policy, initial_states, horizon, rng)
        return RolloutBatch(
            batch.states,
            batch.actions,
            batch.rewards + self.reward_offset,
            batch.lengths,
        )

    def rollout(self, policy, initial_state, horizon, rng) -> Trajectory:
        batch = self.rollout_batch(
            policy, np.asarray([initial_state], dtype=float), horizon, rng
        )
        return batch.trajectory(0)


def paired_generation(
    model,
    policy,
    real_trajs,
    M: int,
    rng: np.random.Generator,
    horizon: int,
) -> list[tuple[Trajectory, Trajectory]]:
    """Generate M model trajectories per real trajectory, each conditioned on
    the matching real initial state, in deterministic (i, m) order."""
    if M < 1:
        raise ValueError("M must be at least 1")
    real_trajs = list(real_trajs)
    starts = np.repeat(
        np.array([t.initial_state for t in real_trajs], dtype=float), M, axis=0
    )
    batch = model.rollout_batch(policy, starts, horizon, rng)
    pairs = []
    for i, real in enumerate(real_trajs):
        for m in range(M):
            pairs.append((real, batch.trajectory(i * M + m)))
    return pairs
