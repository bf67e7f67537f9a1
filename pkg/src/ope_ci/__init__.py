"""Confidence intervals for off-policy evaluation with model-generated
trajectories: per-initial-state conformal bands, a cross-fitted doubly-robust
population estimator, comparison baselines, simulators, and a coverage-study
harness."""

from .baselines import (
    FittedQSpec,
    aug_is_baseline,
    dm_baseline,
    dr_baseline,
    fit_q,
    is_baseline,
    stepwise_dr_values,
)
from .cpgen import (
    CpGenResult,
    EpsConfig,
    GridSpec,
    ScorePair,
    WeightedScoreDistribution,
    conformal_band,
    cp_gen_detailed,
    cp_gen_interval,
    estimate_weight_eps,
    weighted_distribution,
    weighted_quantile,
)
from .drppi import (
    DrPpiConfig,
    HalfEstimate,
    cross_fit_variance,
    dr_ppi_estimate,
    dr_ppi_interval,
    half_estimate,
    interval_from_estimate,
)
from .envs import (
    FiniteMdp,
    InventoryEnv,
    InventoryParams,
    enumerate_trajectories,
    inventory_policy_pair,
    inventory_step,
    monte_carlo_value,
    oracle_value,
    small_finite_mdp,
)
from .errors import (
    DatasetTooSmall,
    DegenerateWeights,
    EmptyBand,
    InsufficientSamples,
    NoTrainingPairs,
    OpeCiError,
    SingularDesign,
    TooLarge,
    ZeroBehaviorProbability,
)
from .harness import (
    CoverageReport,
    EnvSpec,
    StudyConfig,
    TrialDetails,
    config_digest,
    derive_seed,
    emit_results,
    ground_truth_value,
    make_env_spec,
    run_coverage_study,
)
from .mdp import (
    ConfidenceInterval,
    RolloutBatch,
    StochasticPolicy,
    Trajectory,
    TrajectoryDataset,
    Transition,
    likelihood_ratio,
    pair_likelihood_ratio,
    read_jsonl_dataset,
    trajectory_return,
    write_jsonl_dataset,
)
from .models import (
    GaussianRegressionModel,
    OracleModel,
    RewardOffsetModel,
    paired_generation,
)
from .policies import SoftmaxOrderUpToPolicy, TabularPolicy
from .reweighting import (
    ClipPolicy,
    CorrectionKind,
    bootstrap_interval,
    clip_ratio,
    clt_interval,
    is_returns,
    normal_quantile,
    pdis_return,
    pdis_returns,
    wis_returns,
)

__version__ = "0.1.0"
