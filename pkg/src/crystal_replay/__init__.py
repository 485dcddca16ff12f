"""Utility-driven stochastic consolidation for experience-replay buffers.

The package couples a per-experience crystallization state evolving
under a bounded diffusion on [0, 1] with a three-phase replay buffer
(liquid / glass / crystal), phase-stratified sampling, phase-modulated
learning rates, and tabular continual-learning agents, plus the
closed-form theory (stationary Beta law, occupancy, forgetting bounds)
and a Fokker-Planck reference solver used to validate the simulator.
"""

__version__ = "0.1.0"

from .agent import (
    Ablation,
    AgentConfig,
    ContinualMetrics,
    QTable,
    RunResult,
    compute_metrics,
    run_agent,
    run_baseline,
    train_step,
)
from .analysis import (
    fit_exponential_rate,
    forgetting_frequency,
    ks_critical_value,
    ks_statistic,
    multinomial_slack,
    occupancy_fractions,
)
from .betainc import regularized_incomplete_beta
from .config import ConfigError, RunConfig, config_from_dict, default_config, load_config
from .envs import GridTask, TaskSequence, make_reward_flip_sequence, step, value_iteration
from .fp import DensityGrid, FpInstabilityError, fp_convergence_rate, fp_evolve, fp_l1_distance, fp_stationary_error
from .memory import (
    ConsolidationReport,
    PhaseBuffers,
    SamplingConfig,
    Thresholds,
    capacity_bound,
    effective_lr,
    optimal_crystal_fraction,
    qlearning_error_bound,
)
from .rng import noise_row, substream
from .sde import (
    BetaStationary,
    EnsembleSummary,
    FixedPointAnalysis,
    SdeParams,
    em_step,
    fixed_point,
    forgetting_bound_chebyshev,
    forgetting_bound_gaussian,
    mean_trajectory,
    phase_occupancy,
    quasi_potential,
    quasi_potential_drift,
    simulate_ensemble,
    simulate_path,
    stationary_beta,
    weak_error_means,
)
from .utility import (
    Experience,
    InterferenceParams,
    NoveltyTable,
    UtilityWeights,
    detect_interference,
    downstream_value,
    knn,
    novelty,
    state_action_distance,
    td_error,
    utility_score,
)
