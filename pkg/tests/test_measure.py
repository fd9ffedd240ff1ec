import copy
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmdp.errors import ExplosionError, InconsistentOutcomeError, ValidationError
from kmdp.measure import (
    action_marginal,
    assess_outcome,
    assess_policy,
    enumerate_outcomes,
    expectation,
    kill_marginal,
    outcome_cap,
    state_marginal,
)
from kmdp.model import AugmentedOutcome, build_model, dump_model
from kmdp.policies import MarkovPolicy, SimplePolicy
from kmdp.verify import (
    random_distribution,
    random_history_policy,
    random_markov_policy,
    random_model,
)
from tests.conftest import M1_DOC

A1 = SimplePolicy({1: {"s0": "a1"}})
A2 = SimplePolicy({1: {"s0": "a2"}})
UNIFORM = MarkovPolicy({1: {"s0": {"a1": 0.5, "a2": 0.5}}})


def test_m1_point_policy_law(m1):
    law = enumerate_outcomes(m1, None, A1)
    masses = {o.path_text(): mass for o, mass in law.masses.items()}
    assert masses == {"s0 a1": pytest.approx(0.1), "s0 a1 g": 0.6, "s0 a1 b": 0.3}
    kinds = {o.path_text(): o.kill_stage for o in law.masses}
    assert kinds["s0 a1"] == 1 and kinds["s0 a1 g"] is None
    assert law.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_m1_assessments(m1):
    assert assess_outcome(m1, AugmentedOutcome.survived(("s0", "g"), ("a1",))) == 11.0
    assert assess_outcome(m1, AugmentedOutcome.killed(("s0",), ("a1",), 1)) == -1.0
    law = enumerate_outcomes(m1, None, A1)
    assert expectation(law, lambda o: 1.0) == pytest.approx(1.0, abs=1e-12)
    assert expectation(law, lambda o: assess_outcome(m1, o)) == pytest.approx(6.8, abs=1e-12)


def test_kill_indicator_expectation(m1):
    law = enumerate_outcomes(m1, None, A2)
    indicator = lambda o: 1.0 if o.kill_stage == 1 else 0.0
    assert expectation(law, indicator) == pytest.approx(0.4, abs=1e-12)


def test_assess_policy_values(m1):
    assert assess_policy(m1, "s0", A1) == pytest.approx(6.8, abs=1e-12)
    assert assess_policy(m1, "s0", A2) == pytest.approx(4.2, abs=1e-12)
    assert assess_policy(m1, None, UNIFORM) == pytest.approx(5.5, abs=1e-12)


def test_assess_policy_killed_start_returns_crash(m2):
    from kmdp.model import derived_model

    cut = derived_model(m2)
    tail = SimplePolicy({2: {"u": "c0", "v": "d0"}})
    assert assess_policy(cut, "k1", tail) == -2.0
    # a start distribution may put mass on the kill state
    mixed = assess_policy(cut, {"k1": 0.5, "u": 0.5}, tail)
    assert mixed == pytest.approx(0.5 * (-2.0) + 0.5 * 2.3, abs=1e-12)


def test_two_point_start_mixes_linearly(m2):
    policy = SimplePolicy({1: {"s0": "a0", "s1": "b0"}, 2: {"u": "c0", "v": "d0"}})
    per_state = [assess_policy(m2, x, policy) for x in ("s0", "s1")]
    mixed = assess_policy(m2, {"s0": 0.5, "s1": 0.5}, policy)
    assert mixed == pytest.approx(sum(per_state) / 2, abs=1e-12)


def test_zero_kill_has_no_killed_outcomes():
    doc = copy.deepcopy(M1_DOC)
    doc["actions"][0][0]["p"] = {"g": 0.7, "b": 0.3, "x*": 0.0}
    doc["actions"][0][1]["p"] = {"g": 0.6, "b": 0.4, "x*": 0.0}
    doc["allowZeroKill"] = True
    model = build_model(doc)
    law = enumerate_outcomes(model, None, UNIFORM)
    assert not any(o.is_killed for o in law.masses)
    assert law.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_outcome_cap_and_env_override(m1, monkeypatch):
    with pytest.raises(ExplosionError):
        enumerate_outcomes(m1, None, UNIFORM, max_outcomes=2)
    monkeypatch.setenv("KMDP_MAX_OUTCOMES", "2")
    assert outcome_cap() == 2
    with pytest.raises(ExplosionError):
        enumerate_outcomes(m1, None, UNIFORM)
    monkeypatch.setenv("KMDP_MAX_OUTCOMES", "definitely-not-a-number")
    with pytest.raises(ValueError):
        outcome_cap()


def test_inconsistent_outcomes_rejected(m1):
    with pytest.raises(InconsistentOutcomeError):
        assess_outcome(m1, AugmentedOutcome.survived(("s0", "nope"), ("a1",)))
    with pytest.raises(InconsistentOutcomeError):
        assess_outcome(m1, AugmentedOutcome.killed(("s0",), ("a1",), 2))
    with pytest.raises(InconsistentOutcomeError):
        # action owned by a different state
        assess_outcome(m1, AugmentedOutcome.survived(("g",), ()))


def test_policy_distribution_validated(m1):
    from kmdp.policies import GeneralPolicy

    lopsided = GeneralPolicy(lambda h: {"a1": 0.7})
    with pytest.raises(ValidationError):
        enumerate_outcomes(m1, None, lopsided)
    stray = GeneralPolicy(lambda h: {"zz": 1.0})
    with pytest.raises(ValidationError):
        enumerate_outcomes(m1, None, stray)


def test_start_validation(m1):
    with pytest.raises(ValidationError):
        enumerate_outcomes(m1, {"s0": 0.7}, A1)
    with pytest.raises(ValidationError):
        enumerate_outcomes(m1, "nope", A1)
    with pytest.raises(ValidationError):
        assess_policy(m1, {"s0": 1.5, "g": -0.5}, A1)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=100_000))
def test_outcome_law_normalizes(seed):
    rng = random.Random(seed)
    model = random_model(rng)
    policy = random_history_policy(rng, model)
    law = enumerate_outcomes(model, None, policy)
    assert law.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert all(mass >= 0.0 for mass in law.masses.values())


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=100_000))
def test_start_linearity(seed):
    # the law built from a distribution start and the per-state mixture are
    # different summation routes to the same value
    rng = random.Random(seed)
    model = random_model(rng)
    policy = random_history_policy(rng, model)
    start = random_distribution(rng, model.non_killed(model.first_stage))
    law = enumerate_outcomes(model, start, policy)
    whole = law.expectation(lambda o: assess_outcome(model, o))
    split = sum(mass * assess_policy(model, x, policy) for x, mass in start.items())
    assert whole == pytest.approx(split, abs=1e-9)
    assert assess_policy(model, start, policy) == pytest.approx(split, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=100_000))
def test_raising_terminal_reward_never_hurts(seed):
    rng = random.Random(seed)
    model = random_model(rng)
    policy = random_markov_policy(rng, model)
    before = assess_policy(model, None, policy)
    doc = dump_model(model)
    for entry in doc["states"][-1]:
        if "r" in entry:
            entry["r"] += rng.uniform(0.0, 3.0)
    raised = build_model(doc)
    assert assess_policy(raised, None, policy) >= before - 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=100_000))
def test_markov_marginals_obey_one_step_recursions(seed):
    # state marginal at t = sum over actions of (action marginal * row mass),
    # and action marginal at t = sum over states of (state marginal * rule)
    rng = random.Random(seed)
    model = random_model(rng)
    policy = random_markov_policy(rng, model)
    law = enumerate_outcomes(model, None, policy)
    for t in model.action_stages:
        states_before = state_marginal(law, t - 1)
        actions_here = action_marginal(law, t)
        for a in model.actions[t]:
            expected = sum(
                mass * policy.rules[t][x].get(a, 0.0)
                for x, mass in states_before.items()
            )
            assert actions_here.get(a, 0.0) == pytest.approx(expected, abs=1e-9)
        states_here = state_marginal(law, t)
        for y in model.non_killed(t):
            expected = sum(
                actions_here.get(a, 0.0) * model.transition[t][a].get(y, 0.0)
                for a in model.actions[t]
            )
            assert states_here.get(y, 0.0) == pytest.approx(expected, abs=1e-9)
    kills = kill_marginal(law)
    assert law.total_mass() == pytest.approx(
        sum(state_marginal(law, model.last_stage).values()) + sum(kills.values()), abs=1e-9
    )
