"""Recovering a planted assignment from mostly-adversarial constraint data
plus a small number of verified values."""

from .baselines import SolutionSet, cluster_count, enumerate_satisfying, majority_baseline, vc_recover, vc_sample_bound
from .csp import Assignment, ConstraintSet, Implication, forced_exists, hamming_error, implied_value, restrict
from .errors import (
    AdversaryInfeasible,
    AscendFail,
    BudgetExhausted,
    ConfigError,
    EmptyConstraint,
    PhaseFail,
    RecoveryFailure,
    SemiVerifiedError,
    SubsetViolation,
    TooLarge,
)
from .harness import ExperimentConfig, TrialReport, emit_report, read_report, run_sweep, run_trial
from .oracle import VerifiedOracle
from .recovery import RecoveryConfig, RecoveryOutcome, efficient_ascend, find_optimistic, recover_basic, recover_efficient, recover_r2
from .sim import Adversary, ConstraintProvider, SimConfig, build_constraint, gen_planted, sample_reviews

__version__ = "0.1.0"
