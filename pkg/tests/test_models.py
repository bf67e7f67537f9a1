import numpy as np
import pytest

from ope_ci.envs import FiniteMdp, InventoryEnv
from ope_ci.errors import SingularDesign
from ope_ci.mdp import Trajectory, TrajectoryDataset, Transition
from ope_ci.models import (
    GaussianRegressionModel,
    OracleModel,
    RewardOffsetModel,
    paired_generation,
    polynomial_features,
)
from ope_ci.policies import TabularPolicy


class ConstantPolicy:
    """Always plays the same action; prob mass 1 on it."""

    def __init__(self, action=0):
        self.action = action

    def prob(self, state, action):
        return 1.0 if action == self.action else 0.0

    def sample(self, state, rng):
        return self.action

    def support(self, state):
        return range(self.action + 1)

    def sample_batch(self, states, rng):
        return np.full(np.asarray(states).shape[0], self.action, dtype=np.int64)

    def prob_batch(self, states, actions):
        return (np.asarray(actions) == self.action).astype(float)


def affine_dataset(rng, n_traj=40, length=6, noise=0.0):
    """Trajectories generated by s' = A s + b a + c + eps, r = w.(s, a) + eps."""
    A = np.array([[0.8, 0.1], [0.0, 0.9]])
    b = np.array([0.5, -0.25])
    c = np.array([0.1, 0.2])
    w = np.array([1.0, -2.0, 0.5])
    trajs = []
    for _ in range(n_traj):
        s = rng.normal(size=2)
        transitions = []
        for _ in range(length):
            a = int(rng.integers(0, 3))
            r = float(w @ np.array([s[0], s[1], a]) + noise * rng.standard_normal())
            transitions.append(Transition(tuple(s), a, r))
            s = A @ s + b * a + c + noise * rng.standard_normal(2)
        trajs.append(Trajectory(tuple(transitions)))
    return TrajectoryDataset(tuple(trajs), 1.0, length), (A, b, c, w)


class TestPolynomialFeatures:
    def test_degree_one_layout(self):
        z = np.array([[2.0, 3.0]])
        feats = polynomial_features(z, 1)
        assert list(feats[0]) == [1.0, 2.0, 3.0]

    def test_degree_two_layout(self):
        z = np.array([[2.0, 3.0]])
        feats = polynomial_features(z, 2)
        assert list(feats[0]) == [1.0, 2.0, 3.0, 4.0, 6.0, 9.0]


class TestGaussianRegressionFit:
    def test_exact_recovery_of_affine_map(self, rng):
        dataset, (A, b, c, w) = affine_dataset(rng, noise=0.0)
        model = GaussianRegressionModel(degree=1).fit(dataset)
        # features are [1, s1, s2, a]; state coef rows follow that order
        expected_state = np.vstack([c, A.T, b[None, :]])
        assert np.allclose(model._state_coef, expected_state, atol=1e-8)
        assert np.allclose(model._reward_coef, [0.0, *w], atol=1e-8)
        assert model._state_scale.max() <= 1e-8
        assert model._reward_scale <= 1e-8

    def test_consistency_under_noise(self, rng):
        dataset, (A, b, c, w) = affine_dataset(rng, n_traj=400, length=25, noise=0.1)
        model = GaussianRegressionModel(degree=1).fit(dataset)
        expected_state = np.vstack([c, A.T, b[None, :]])
        assert np.abs(model._state_coef - expected_state).max() < 0.02
        assert np.abs(model._reward_coef - np.array([0.0, *w])).max() < 0.02
        assert np.abs(model._state_scale - 0.1).max() < 0.02

    def test_fewer_rows_than_features_engages_ridge(self, rng):
        dataset, _ = affine_dataset(rng, n_traj=1, length=3)
        model = GaussianRegressionModel(degree=2).fit(dataset)  # 15 features, 2 rows
        assert model.fitted  # ridge fallback rather than an exception

    def test_no_dynamics_rows_raises(self):
        traj = Trajectory((Transition((0.0,), 0, 1.0),))
        dataset = TrajectoryDataset((traj,), 1.0, 1)
        with pytest.raises(SingularDesign):
            GaussianRegressionModel().fit(dataset)

    def test_unfitted_rollout_rejected(self, rng):
        model = GaussianRegressionModel()
        with pytest.raises(SingularDesign):
            model.rollout(ConstantPolicy(), (0.0, 0.0), 3, rng)


class TestGaussianRegressionRollout:
    def test_initial_state_conditioning(self, rng):
        dataset, _ = affine_dataset(rng)
        model = GaussianRegressionModel(degree=1).fit(dataset)
        for x0 in [(0.0, 0.0), (2.5, -1.0)]:
            traj = model.rollout(ConstantPolicy(), x0, 4, np.random.default_rng(0))
            assert traj.initial_state == x0

    def test_zero_residual_scale_is_deterministic_across_seeds(self, rng):
        dataset, _ = affine_dataset(rng, noise=0.0)
        model = GaussianRegressionModel(degree=1).fit(dataset)
        t1 = model.rollout(ConstantPolicy(1), (1.0, 1.0), 5, np.random.default_rng(1))
        t2 = model.rollout(ConstantPolicy(1), (1.0, 1.0), 5, np.random.default_rng(2))
        for a, b in zip(t1, t2):
            assert a.state == pytest.approx(b.state, abs=1e-12)
            assert a.reward == pytest.approx(b.reward, abs=1e-12)

    def test_state_box_clamps_generated_states(self, rng):
        env = InventoryEnv()
        from ope_ci.envs import inventory_policy_pair

        behavior, _ = inventory_policy_pair()
        dataset = env.sample_dataset(behavior, 40, rng)
        model = GaussianRegressionModel(degree=2, state_box=env.state_box).fit(dataset)
        batch = model.rollout_batch(
            behavior, env.sample_initial_states(rng, 200), 20, rng
        )
        assert batch.states.min() >= 0.0
        assert batch.states.max() <= 10.0

    def test_one_step_error_shrinks_with_data(self):
        # predictive mean error should drop as the dataset grows
        errs = []
        for n_traj in (30, 300):
            fit_rng = np.random.default_rng(7)
            dataset, (A, b, c, _) = affine_dataset(fit_rng, n_traj=n_traj, noise=0.05)
            model = GaussianRegressionModel(degree=1).fit(dataset)
            probe = np.random.default_rng(8).normal(size=(256, 2))
            acts = np.random.default_rng(9).integers(0, 3, size=256)
            feats = polynomial_features(
                np.column_stack([probe, acts.astype(float)[:, None]]), 1
            )
            predicted = feats @ model._state_coef
            truth = probe @ A.T + acts[:, None] * b[None, :] + c
            errs.append(float(np.abs(predicted - truth).mean()))
        assert errs[1] < 0.7 * errs[0]


class TestSerialization:
    def test_reload_reproduces_rollouts_bit_identically(self, rng, tmp_path):
        dataset, _ = affine_dataset(rng, noise=0.2)
        model = GaussianRegressionModel(degree=2).fit(dataset)
        path = tmp_path / "model.json"
        model.save(path)
        clone = GaussianRegressionModel.load(path)
        b1 = model.rollout_batch(
            ConstantPolicy(2), np.zeros((8, 2)), 6, np.random.default_rng(11)
        )
        b2 = clone.rollout_batch(
            ConstantPolicy(2), np.zeros((8, 2)), 6, np.random.default_rng(11)
        )
        assert np.array_equal(b1.states, b2.states)
        assert np.array_equal(b1.rewards, b2.rewards)


class TestOracleModel:
    def test_rollout_matches_env_simulation(self):
        P = np.zeros((2, 1, 2))
        P[0, 0, 1] = 1.0
        P[1, 0, 0] = 1.0
        R = np.arange(4, dtype=float).reshape(2, 1, 2)
        mdp = FiniteMdp(P, R, np.array([1.0, 0.0]), horizon=3)
        policy = TabularPolicy(((1.0,), (1.0,)))
        model = OracleModel(mdp).fit(None)
        want = mdp.rollout_batch(
            policy, np.array([[0.0]]), 3, np.random.default_rng(4)
        ).trajectory(0)
        got = model.rollout(policy, (0.0,), 3, np.random.default_rng(4))
        assert got == want


class TestRewardOffsetModel:
    def test_offset_added_per_step(self, rng):
        env = InventoryEnv()
        from ope_ci.envs import inventory_policy_pair

        behavior, _ = inventory_policy_pair()
        base = OracleModel(env)
        biased = RewardOffsetModel(base, 3.5)
        b1 = base.rollout_batch(behavior, np.full((4, 1), 5.0), 6, np.random.default_rng(2))
        b2 = biased.rollout_batch(behavior, np.full((4, 1), 5.0), 6, np.random.default_rng(2))
        assert np.allclose(b2.rewards - b1.rewards, 3.5)


class TestPairedGeneration:
    def test_counting_and_conditioning_contract(self, finite_fixture, rng):
        mdp, behavior, _ = finite_fixture
        reals = [mdp.sample_trajectory(behavior, rng) for _ in range(3)]
        pairs = paired_generation(
            OracleModel(mdp), behavior, reals, 2, rng, horizon=mdp.horizon
        )
        assert len(pairs) == 6
        for i, real in enumerate(reals):
            for m in range(2):
                got_real, got_gen = pairs[i * 2 + m]
                assert got_real is real
                assert got_gen.initial_state == real.initial_state

    def test_fixed_seed_reproduces_pair_set(self, finite_fixture):
        mdp, behavior, _ = finite_fixture
        reals = [
            mdp.sample_trajectory(behavior, np.random.default_rng(i)) for i in range(3)
        ]
        p1 = paired_generation(
            OracleModel(mdp), behavior, reals, 3, np.random.default_rng(9), mdp.horizon
        )
        p2 = paired_generation(
            OracleModel(mdp), behavior, reals, 3, np.random.default_rng(9), mdp.horizon
        )
        assert p1 == p2

    def test_oracle_model_identical_returns_on_flat_env(self, flat_reward_mdp, rng):
        # action-independent rewards: generated return equals real return
        mdp, behavior, _ = flat_reward_mdp
        reals = [mdp.sample_trajectory(behavior, rng) for _ in range(4)]
        pairs = paired_generation(
            OracleModel(mdp), behavior, reals, 1, rng, mdp.horizon
        )
        for real, gen in pairs:
            assert sum(t.reward for t in real) == sum(t.reward for t in gen)
