import copy
import math
import random

import numpy as np
import pytest

from kmdp.measure import assess_outcome, assess_policy
from kmdp.model import build_model
from kmdp.policies import GeneralPolicy, SimplePolicy
from kmdp.sim import SimulationResult, TrajectoryStream, estimate_value, sample_batch, sample_outcome
from kmdp.verify import random_markov_policy, random_model, random_simple_policy
from tests.conftest import M1_DOC

A1 = SimplePolicy({1: {"s0": "a1"}})


def test_identical_streams_reproduce_outcomes(m1):
    first = [sample_outcome(m1, None, A1, TrajectoryStream(9, i)) for i in range(50)]
    second = [sample_outcome(m1, None, A1, TrajectoryStream(9, i)) for i in range(50)]
    assert first == second
    other_seed = [sample_outcome(m1, None, A1, TrajectoryStream(10, i)) for i in range(50)]
    assert first != other_seed


def test_degenerate_model_yields_the_unique_way():
    doc = {
        "horizon": {"m": 0, "n": 1},
        "states": [[{"id": "s"}], [{"id": "k", "killed": True}, {"id": "t", "r": 1.0}]],
        "actions": [[{"id": "go", "owner": "s", "q": 0.0, "p": {"t": 1.0, "k": 0.0}}]],
        "allowZeroKill": True,
    }
    model = build_model(doc)
    policy = SimplePolicy({1: {"s": "go"}})
    outcomes = {sample_outcome(model, None, policy, TrajectoryStream(3, i)) for i in range(20)}
    assert len(outcomes) == 1
    assert not next(iter(outcomes)).is_killed


def test_kill_frequency_concentrates(m1):
    result = estimate_value(m1, None, A1, samples=20_000, seed=12)
    n = result.samples
    assert abs(result.kill_rate[1] - 0.1) <= 3.0 * math.sqrt(0.1 * 0.9 / n)


def test_estimate_matches_exact_value(m1):
    exact = assess_policy(m1, "s0", A1)
    result = estimate_value(m1, None, A1, samples=100_000, seed=7)
    assert abs(result.mean - exact) <= 5.0 * result.standard_error


def test_zero_reward_model_estimates_exactly_zero():
    doc = copy.deepcopy(M1_DOC)
    doc["actions"][0][0]["q"] = 0.0
    doc["actions"][0][1]["q"] = 0.0
    doc["states"][1][1]["r"] = 0.0
    doc["states"][1][2]["r"] = 0.0
    model = build_model(doc)
    result = estimate_value(model, None, A1, samples=1000, seed=4)
    assert result.mean == 0.0 and result.deviation == 0.0


def test_result_is_bit_identical_across_runs(m2):
    policy = random_markov_policy(random.Random(2), m2)
    a = estimate_value(m2, None, policy, samples=5_000, seed=77)
    b = estimate_value(m2, None, policy, samples=5_000, seed=77)
    assert a == b
    assert isinstance(a, SimulationResult)


def test_general_wrapper_samples_identically(m2):
    policy = random_markov_policy(random.Random(5), m2)
    p_table, k_table, _ = sample_batch(m2, None, policy, 2_000, seed=21)
    wrapped = GeneralPolicy(policy.distribution)
    p_gen, k_gen, backend = sample_batch(m2, None, wrapped, 2_000, seed=21)
    assert backend == "python"
    assert np.array_equal(p_table, p_gen) and np.array_equal(k_table, k_gen)


def test_batch_payoffs_match_per_outcome_sampler(m2):
    policy = random_simple_policy(random.Random(8), m2)
    payoffs, kills, _ = sample_batch(m2, None, policy, 100, seed=31)
    for i in range(100):
        outcome = sample_outcome(m2, None, policy, TrajectoryStream(31, i))
        assert payoffs[i] == assess_outcome(m2, outcome)
        assert kills[i] == (outcome.kill_stage or 0)


def test_estimates_are_unbiased_at_desk_scale():
    # across 50 independent seeds the pooled estimate hugs the exact value
    rng = random.Random(101)
    model = random_model(rng, min_epochs=2)
    policy = random_markov_policy(rng, model)
    exact = assess_policy(model, None, policy)
    estimates = [
        estimate_value(model, None, policy, samples=4_000, seed=s) for s in range(50)
    ]
    pooled_mean = sum(r.mean for r in estimates) / 50
    pooled_se = math.sqrt(sum(r.standard_error**2 for r in estimates)) / 50
    assert abs(pooled_mean - exact) <= 5.0 * pooled_se


def test_sample_count_precondition(m1):
    with pytest.raises(ValueError):
        estimate_value(m1, None, A1, samples=1, seed=0)


def test_kill_rates_cover_all_stages(m2):
    policy = random_simple_policy(random.Random(14), m2)
    result = estimate_value(m2, None, policy, samples=2_000, seed=3)
    assert set(result.kill_rate) == {1, 2}
    survival = 1.0 - sum(result.kill_rate.values())
    assert 0.0 <= survival <= 1.0
