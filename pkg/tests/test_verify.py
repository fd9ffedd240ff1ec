import json
import random

import pytest

from kmdp.errors import ExplosionError
from kmdp.solver import backward_induction
from kmdp.verify import (
    check_horizon_split,
    CheckReport,
    SizeCaps,
    brute_force_value,
    check_combination,
    check_dominance,
    check_first_step,
    check_oracle,
    check_splice,
    history_policy_to_doc,
    merge_reports,
    random_history_policy,
    random_model,
    replay_counterexample,
    run_check,
    _policy_from_any_doc,
)


def test_brute_force_on_m1(m1):
    table = brute_force_value(m1)
    assert table.values == pytest.approx({"s0": 6.8}, abs=1e-12)


def test_brute_force_cap(m2):
    with pytest.raises(ExplosionError):
        brute_force_value(m2, max_policies=3)


def test_brute_force_agrees_with_induction():
    rng = random.Random(55)
    for _ in range(10):
        model = random_model(rng)
        oracle = brute_force_value(model)
        table = backward_induction(model).values[model.first_stage]
        for x, value in oracle.values.items():
            assert table.values[x] == pytest.approx(value, abs=1e-9)


def test_generator_respects_caps():
    caps = SizeCaps(max_epochs=3, max_states=4, max_actions=3)
    rng = random.Random(60)
    for _ in range(50):
        model = random_model(rng, caps)
        assert 1 <= model.epochs <= 3
        for t in model.stages:
            assert len(model.states[t]) <= 4
        for t in model.action_stages:
            assert 1 <= len(model.actions[t]) <= 3
            dead = model.killed[t]
            for a in model.actions[t]:
                kill = model.transition[t][a].get(dead, 0.0)
                assert 0.05 <= kill <= 0.5


def test_generator_is_seed_deterministic():
    a = random_model(random.Random(1234))
    b = random_model(random.Random(1234))
    assert a == b


@pytest.mark.parametrize(
    "name", ["oracle", "first-step", "extraction", "dominance", "splice", "horizon-split", "combination"]
)
def test_each_check_passes_on_seeded_instances(name):
    report = run_check(name, seed=2024, count=8)
    assert report.passed, f"{name}: max discrepancy {report.max_discrepancy}"
    assert report.instances == 8
    assert report.counterexample is None


def test_simulation_check_passes():
    report = run_check("simulation", seed=11, count=4)
    assert report.passed


def test_run_check_unknown_name():
    with pytest.raises(KeyError):
        run_check("nonsense")


def test_history_policy_doc_round_trip(m2):
    policy = random_history_policy(random.Random(71), m2)
    doc = history_policy_to_doc(policy)
    rebuilt = _policy_from_any_doc(json.loads(json.dumps(doc)))
    assert rebuilt == policy


def test_counterexample_replays_to_same_discrepancy(m1, monkeypatch):
    # break the solver and confirm the failing report's counterexample
    # replays to the identical discrepancy once the bug is restored
    import kmdp.verify as verify_module

    model = random_model(random.Random(81))
    true_report = check_oracle(model)
    assert true_report.passed

    def broken_brute(model, max_policies=1_000_000):
        table = brute_force_value(model, max_policies)
        bumped = {x: v + 0.5 for x, v in table.values.items()}
        return type(table)(table.stage, bumped)

    monkeypatch.setattr(verify_module, "brute_force_value", broken_brute)
    failing = verify_module.check_oracle(model)
    assert not failing.passed
    assert failing.counterexample is not None
    replayed = replay_counterexample(json.loads(json.dumps(failing.counterexample)))
    assert replayed.max_discrepancy == failing.max_discrepancy


def test_counterexample_round_trip_without_bug():
    # replaying a healthy case document reproduces the healthy discrepancy
    rng = random.Random(91)
    model = random_model(rng)
    state = rng.choice(list(model.non_killed(model.first_stage)))
    policy = random_history_policy(rng, model)
    report = check_first_step(model, state, policy)
    from kmdp.model import dump_model

    doc = {
        "check": "first-step",
        "case": {
            "model": dump_model(model),
            "state": state,
            "policy": history_policy_to_doc(policy),
        },
    }
    replayed = replay_counterexample(json.loads(json.dumps(doc)))
    assert replayed.max_discrepancy == report.max_discrepancy


def test_merge_reports_keeps_first_failure():
    good = CheckReport("x", 1, 1e-12, 1e-9, True)
    bad = CheckReport("x", 1, 0.5, 1e-9, False, {"check": "x", "case": {}, "discrepancy": 0.5})
    merged = merge_reports("x", [good, bad, good])
    assert merged.instances == 3
    assert merged.max_discrepancy == 0.5
    assert not merged.passed
    assert merged.counterexample == bad.counterexample


def test_brute_force_all_zero_rewards(m2):
    from kmdp.model import build_model, dump_model

    doc = dump_model(m2)
    for stage in doc["actions"]:
        for action in stage:
            action["q"] = 0.0
    for entry in doc["states"][-1]:
        if "r" in entry:
            entry["r"] = 0.0
    doc.pop("crash", None)
    flat = build_model(doc)
    assert set(brute_force_value(flat).values.values()) == {0.0}


def test_horizon_split_on_reference_model(m2):
    outcome = check_horizon_split(m2, 1)
    assert outcome.passed, outcome.max_discrepancy


def test_check_functions_accept_explicit_instances(m2):
    rng = random.Random(17)
    policy = random_history_policy(rng, m2)
    assert check_first_step(m2, "s0", policy).passed
    assert check_dominance(m2, {"s0": 0.5, "s1": 0.5}, policy).passed
    from kmdp.model import restrict_stages

    head = random_history_policy(rng, restrict_stages(m2, 0, 1, {"u": 0.0, "v": 0.0}))
    tail = random_history_policy(rng, restrict_stages(m2, 1, 2))
    assert check_splice(m2, head, tail, 1).passed


def test_combination_with_exact_family(m2):
    from kmdp.solver import extract_simple_policy

    best = extract_simple_policy(m2, 0.0).policy
    family = {"s0": best, "s1": best}
    starts = [{"s0": 1.0}, {"s1": 1.0}, {"s0": 0.25, "s1": 0.75}]
    report = check_combination(m2, family, 0.0, starts)
    assert report.passed


def test_simulation_check_detects_wrong_exact_value(m1, monkeypatch):
    import kmdp.verify as verify_module

    from kmdp.policies import SimplePolicy

    policy = SimplePolicy({1: {"s0": "a1"}})
    monkeypatch.setattr(verify_module, "assess_policy", lambda *a, **k: 123.0)
    report = verify_module.check_simulation(m1, policy, samples=5_000, seed=1)
    assert not report.passed
