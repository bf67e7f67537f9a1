import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ope_ci.envs import FiniteMdp, InventoryEnv, inventory_policy_pair, small_finite_mdp
from ope_ci.policies import TabularPolicy

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def inventory_env():
    return InventoryEnv()


@pytest.fixture
def inventory_policies():
    return inventory_policy_pair()


@pytest.fixture
def finite_fixture():
    return small_finite_mdp()


@pytest.fixture
def flat_reward_mdp():
    """Single-state chain whose return never depends on the actions taken.

    Both policies keep full support but differ, so likelihood ratios vary
    while every trajectory's return is exactly the horizon.  Handy wherever
    a test needs deterministic returns with nontrivial ratios.
    """
    P = np.ones((1, 2, 1))
    R = np.ones((1, 2, 1))
    d0 = np.array([1.0])
    mdp = FiniteMdp(P, R, d0, horizon=2)
    behavior = TabularPolicy(((0.5, 0.5),))
    target = TabularPolicy(((0.8, 0.2),))
    return mdp, behavior, target
