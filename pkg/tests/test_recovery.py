import math

import numpy as np
import pytest

from semiverified.baselines import enumerate_satisfying
from semiverified.csp import Assignment, ConstraintSet, hamming_error
from semiverified.errors import AscendFail, TooLarge
from semiverified.harness import ExperimentConfig, run_trials
from semiverified.oracle import VerifiedOracle
from semiverified.recovery import (
    ALGORITHMS,
    OptimisticCache,
    RecoveryConfig,
    RoundPlan,
    efficient_ascend,
    find_optimistic,
    phase_bound,
    recover_basic,
    recover_efficient,
    recover_r2,
    total_verify_calls,
)
from semiverified.sim import (
    ConstraintProvider,
    SimConfig,
    StaticProvider,
    agreement_instance,
    gen_planted,
    no_all_false_instance,
    random_sound_instance,
)

T, F = True, False


def simulated(n, r0, alpha, seed=0, **kw):
    planted = gen_planted(n, seed)
    cfg = SimConfig(n=n, r0=r0, alpha=alpha, seed=seed + 100, **kw)
    return planted, ConstraintProvider(cfg, planted)


def mirror_instance(planted: Assignment, r0: int) -> StaticProvider:
    """Each tuple allows the planted restriction and its complement, so the
    complement of planted satisfies everything too."""
    full = (1 << r0) - 1

    def rule(t):
        q = planted.restrict_index(t)
        return (1 << q) | (1 << (full ^ q))

    return StaticProvider(len(planted), r0, rule)


# --- planning -------------------------------------------------------------


def test_recovery_config_validation():
    for kw in (dict(r0=1), dict(epsilon=0), dict(epsilon=1), dict(delta=0), dict(delta=1.2),
               dict(max_phase_retries=-1)):
        base = dict(r0=2, epsilon=0.1, delta=0.1)
        base.update(kw)
        with pytest.raises(ValueError):
            RecoveryConfig(**base)


def test_round_plan_values():
    cfg = RecoveryConfig(r0=2, epsilon=0.1, delta=0.1)
    assert total_verify_calls(cfg) == 48
    assert phase_bound(2, 0.1) == 23
    plan = RoundPlan.build(cfg, 1000, 1000)
    assert plan.T == 48
    assert plan.eps_x == pytest.approx(0.1 / (2 * math.log(20)))
    # ceil(10 / eps_x * ln(10 * 48 / 0.1)) and ceil(4 * ln(10)**2 / 0.01)
    assert plan.s == 5079
    assert plan.A == 2121
    assert plan.s_i(2) == 4 * plan.s


def test_round_plan_clamps_eps_x():
    cfg = RecoveryConfig(r0=3, epsilon=0.5, delta=0.5)
    plan = RoundPlan.build(cfg, 1000, 10)
    assert plan.eps_x == 1.0
    assert min(plan.T, plan.s, plan.A) >= 1


# --- fixtures -------------------------------------------------------------


@pytest.mark.parametrize("name", ["r2", "basic", "efficient"])
def test_agreement_instance_resolves_to_all_true(name):
    n = 30
    source = agreement_instance(n)
    planted = Assignment.constant(n, True)
    oracle = VerifiedOracle(planted, seed=1)
    out = ALGORITHMS[name](source, oracle, RecoveryConfig(2, 0.1, 0.1), seed=2)
    assert out.assignment == planted
    assert not out.fail_events


@pytest.mark.parametrize("name", ["r2", "basic", "efficient"])
def test_alpha_one_exact(name):
    planted, source = simulated(100, 2, 1.0, m_per_tuple=10)
    oracle = VerifiedOracle(planted, seed=3)
    out = ALGORITHMS[name](source, oracle, RecoveryConfig(2, 0.1, 0.1), seed=4)
    assert hamming_error(out.assignment, planted) == 0
    assert out.verified_used == oracle.used


def test_alpha_one_r3_exact():
    planted, source = simulated(30, 3, 1.0, m_per_tuple=10)
    out = recover_efficient(source, VerifiedOracle(planted, 1), RecoveryConfig(3, 0.1, 0.1), seed=5)
    assert out.assignment == planted


def test_no_all_false_instance_close_to_planted():
    n, r0 = 30, 3
    planted = Assignment(np.array([True] * 29 + [False]))
    source = no_all_false_instance(n, r0)
    eps = 2 * r0 / n
    for name in ("basic", "efficient"):
        out = ALGORITHMS[name](source, VerifiedOracle(planted, 2), RecoveryConfig(r0, eps, 0.1), seed=1)
        assert hamming_error(out.assignment, planted) <= eps


def test_small_instance_against_enumeration():
    n, eps = 12, 0.25
    planted, source = simulated(n, 2, 0.3, seed=7, m_per_tuple=2000)
    solutions = enumerate_satisfying(source)
    assert planted in solutions
    for name in ("r2", "basic", "efficient"):
        out = ALGORITHMS[name](source, VerifiedOracle(planted, 11), RecoveryConfig(2, eps, 0.1), seed=3)
        assert hamming_error(out.assignment, planted) <= eps


def test_alpha_one_large_n_within_plan_budget():
    n, cfg = 10_000, RecoveryConfig(2, 0.1, 0.1)
    planted, source = simulated(n, 2, 1.0, m_per_tuple=4)
    out = recover_efficient(source, VerifiedOracle(planted, 1), cfg, seed=1)
    assert hamming_error(out.assignment, planted) == 0
    worst = RoundPlan.build(cfg, n, math.ceil(cfg.epsilon * n / 2))
    per_phase = worst.s + sum(worst.s_i(i) for i in range(1, cfg.r0))
    assert out.verified_used <= phase_bound(2, 0.1) * per_phase


def test_basic_refuses_large_instances():
    planted, source = simulated(200, 2, 1.0, m_per_tuple=4)
    with pytest.raises(TooLarge):
        recover_basic(source, VerifiedOracle(planted), RecoveryConfig(2, 0.1, 0.1))


def test_r2_needs_pairs():
    planted, source = simulated(10, 3, 1.0, m_per_tuple=4)
    with pytest.raises(ValueError):
        recover_r2(source, VerifiedOracle(planted), RecoveryConfig(3, 0.1, 0.1))


# --- find_optimistic and ascend ------------------------------------------


def test_find_optimistic_full_arity_is_source_constraint():
    planted, source = simulated(20, 2, 0.4, m_per_tuple=500)
    assert find_optimistic(source, (3, 8), 0.01) == source.query((3, 8))
    assert source.distinct_queries == 1


def test_find_optimistic_singleton_on_noiseless_pairs():
    # the planted value forces every partner and its negation contradicts every
    # pair, so both values imply everything and the lex-first value F is removed
    planted, source = simulated(40, 2, 1.0, m_per_tuple=4)
    for x in (planted.values.argmin(), planted.values.argmax()):
        c = find_optimistic(source, (int(x),), 0.01, seed=3)
        assert c.allowed == {(T,)}


def test_find_optimistic_deterministic():
    planted, source = simulated(40, 3, 0.4, m_per_tuple=800)
    a = find_optimistic(source, (2,), 0.05, seed=9)
    b = find_optimistic(source, (2,), 0.05, seed=9)
    assert a == b
    assert isinstance(a, ConstraintSet)


def test_ascend_at_top_level_fails():
    planted, source = simulated(20, 2, 1.0, m_per_tuple=4)
    plan = RoundPlan.build(RecoveryConfig(2, 0.1, 0.1), 20, 20)
    with pytest.raises(AscendFail):
        efficient_ascend(source, VerifiedOracle(planted), np.arange(20), 2, (0, 1), (T, T), plan)


def test_ascend_commits_optimistic_implications():
    # every pair allows FF and TT: F is the lex-first optimistic value of any
    # variable and, when it is also planted, every variable is forced to F
    n = 64
    source = agreement_instance(n)
    planted = Assignment.constant(n, False)
    plan = RoundPlan.build(RecoveryConfig(2, 0.1, 0.1), n, n)
    cache = OptimisticCache(source, np.arange(n), seed=0)
    gamma = plan.delta / plan.T
    assert cache.mask((0,), gamma) == 0b10
    committed, depth = efficient_ascend(source, VerifiedOracle(planted, 1), np.arange(n), 1, (0,), (F,), plan)
    assert depth == 1
    assert len(committed) >= n / 2 ** 3
    assert all(committed[v] == planted[v] for v in committed)


# --- invariants -----------------------------------------------------------


def test_lying_oracle_steers_output():
    n = 40
    truth = gen_planted(n, 1)
    lie = Assignment(~truth.values)
    for r0 in (2, 3):
        source = mirror_instance(truth, r0)
        out = recover_efficient(source, VerifiedOracle(lie, 5), RecoveryConfig(r0, 0.1, 0.1), seed=2)
        assert hamming_error(out.assignment, lie) <= 0.1
        assert hamming_error(out.assignment, truth) >= 0.9


@pytest.mark.parametrize("seed", range(5))
def test_phase_progress_and_bound(seed):
    n, r0, eps = 200, 2, 0.1
    planted, source = simulated(n, r0, 0.35, seed=seed, m_per_tuple=2000)
    out = recover_efficient(source, VerifiedOracle(planted, seed), RecoveryConfig(r0, eps, 0.1), seed=seed)
    assert out.phases <= phase_bound(r0, eps)
    for committed, remaining in zip(out.phase_commits, out.phase_remaining):
        assert committed >= remaining / 2 ** (r0 + 1)
    assert out.unassigned <= eps * n / 2
    assert all(d <= r0 - 1 for d in out.ascend_depths)


@pytest.mark.parametrize("seed", range(6))
def test_tiers_agree_on_noiseless_instances(seed):
    n, eps = 14, 0.25
    planted = gen_planted(n, seed)
    source = random_sound_instance(planted, 2, seed)
    cfg = RecoveryConfig(2, eps, 0.1)
    outs = [ALGORITHMS[name](source, VerifiedOracle(planted, seed + 1), cfg, seed=seed).assignment
            for name in ("r2", "basic", "efficient")]
    for o in outs:
        assert hamming_error(o, planted) <= eps
    for a in outs:
        for b in outs:
            assert hamming_error(a, b) <= 2 * eps


def test_verified_used_matches_oracle():
    planted, source = simulated(60, 2, 0.5, m_per_tuple=500)
    oracle = VerifiedOracle(planted, 0)
    for name in ("r2", "basic", "efficient"):
        before = oracle.used
        out = ALGORITHMS[name](source, oracle, RecoveryConfig(2, 0.1, 0.1))
        assert out.verified_used == oracle.used >= before


def test_uninformative_data_fails_instead_of_guessing():
    planted, source = simulated(100, 2, 0.2, seed=1, m_per_tuple=2000, adversary="anti_planted")
    out = recover_efficient(source, VerifiedOracle(planted, 1), RecoveryConfig(2, 0.1, 0.1), seed=1)
    assert out.failed


def test_retries_are_recorded_as_nonfatal():
    planted, source = simulated(100, 2, 0.2, seed=1, m_per_tuple=2000, adversary="anti_planted")
    cfg = RecoveryConfig(2, 0.1, 0.1, max_phase_retries=2)
    out = recover_efficient(source, VerifiedOracle(planted, 1), cfg, seed=1)
    fatal = [e for e in out.fail_events if e.fatal]
    assert len(fatal) <= 1
    if fatal:
        first_phase = [e for e in out.fail_events if e.phase == fatal[0].phase]
        assert [e.fatal for e in first_phase] == [False, False, True]


@pytest.mark.parametrize("name", ["basic", "efficient"])
def test_small_r3_instance_above_threshold(name):
    # alpha=0.2 exceeds 1/8; the deficit-filling adversary is the strongest one defined there
    cfg = ExperimentConfig.from_dict({
        "sim": {"n": 10, "r0": 3, "alpha": 0.2, "m_per_tuple": 5000, "adversary": "anti_planted"},
        "recovery": {"epsilon": 0.1, "delta": 0.1},
        "algorithm": name, "trials": 50, "base_seed": 3,
    })
    reports = run_trials(cfg)
    assert sum(r.error_fraction <= 0.1 for r in reports) >= 45
