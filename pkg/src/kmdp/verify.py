"""Independent oracles and executable structural checks.

Each check turns one of the library's structural guarantees into a
replayable experiment: build or accept a concrete instance, compute both
sides of the claimed identity by routes as independent as possible, and
report the worst discrepancy. Failing reports always carry a counterexample
document that ``replay_counterexample`` re-runs to the same discrepancy.

The random-model generator here is part of the public test surface: given
the same seed and caps it reproduces the same instances everywhere.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping

from kmdp.errors import ExplosionError, ValidationError
from kmdp.measure import (
    action_marginal,
    assess_outcome,
    assess_policy,
    enumerate_outcomes,
    kill_marginal,
    state_marginal,
)
from kmdp.model import (
    History,
    KilledModel,
    Violation,
    build_model,
    dump_model,
    restrict_stages,
)
from kmdp.policies import (
    MarkovPolicy,
    SimplePolicy,
    combine,
    dominate_simple,
    markovize,
    policy_from_doc,
    policy_to_doc,
    splice,
)
from kmdp.sim import estimate_value
from kmdp.solver import (
    ValueFunction,
    backward_induction,
    dp_value,
    extract_simple_policy,
    first_step_value,
)

TOLERANCE = 1e-9


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class CheckReport:
    """Outcome of one check run: worst discrepancy over all instances and,
    on failure, a counterexample document that replays to it."""

    name: str
    instances: int
    max_discrepancy: float
    tolerance: float
    passed: bool
    counterexample: dict | None = None

    def to_doc(self) -> dict:
        doc = {
            "check": self.name,
            "instances": self.instances,
            "maxDiscrepancy": self.max_discrepancy,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }
        if self.counterexample is not None:
            doc["counterexample"] = self.counterexample
        return doc


def _report(name: str, discrepancy: float, case: dict, tolerance: float = TOLERANCE) -> CheckReport:
    passed = discrepancy <= tolerance
    return CheckReport(
        name=name,
        instances=1,
        max_discrepancy=discrepancy,
        tolerance=tolerance,
        passed=passed,
        counterexample=None if passed else {"check": name, "case": case, "discrepancy": discrepancy},
    )


def merge_reports(name: str, reports: list[CheckReport]) -> CheckReport:
    worst = max((r.max_discrepancy for r in reports), default=0.0)
    tolerance = reports[0].tolerance if reports else TOLERANCE
    failed = next((r for r in reports if not r.passed), None)
    return CheckReport(
        name=name,
        instances=sum(r.instances for r in reports),
        max_discrepancy=worst,
        tolerance=tolerance,
        passed=failed is None,
        counterexample=None if failed is None else failed.counterexample,
    )


# ---------------------------------------------------------------------------
# Seeded random instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SizeCaps:
    """Bounds for generated models; defaults match the desk-scale suite."""

    max_epochs: int = 4
    max_states: int = 4  # per stage, kill state included
    max_actions: int = 3  # per stage
    kill_low: float = 0.05
    kill_high: float = 0.5
    reward_span: float = 5.0


def random_model(
    rng: random.Random,
    caps: SizeCaps = SizeCaps(),
    min_epochs: int = 1,
    zero_kill: bool = False,
) -> KilledModel:
    """A validated random model within ``caps``, fully seed-determined.

    Action counts dominate state counts so that every state's action set is
    nonempty; ``zero_kill`` builds the classical relaxation with all kill
    atoms at exactly zero mass and the allow flag set.
    """
    epochs = rng.randint(min_epochs, caps.max_epochs)
    width = min(caps.max_actions, caps.max_states - 1)
    first_width = min(caps.max_actions, caps.max_states)
    counts = [rng.randint(1, first_width)] + [rng.randint(1, width) for _ in range(epochs)]

    states = []
    for offset, count in enumerate(counts):
        stage_states = [{"id": f"s{offset}_{i}"} for i in range(count)]
        if offset == epochs:
            for entry in stage_states:
                entry["r"] = rng.uniform(-caps.reward_span, caps.reward_span)
        if offset > 0:
            stage_states.insert(0, {"id": f"k{offset}", "killed": True})
        states.append(stage_states)

    actions = []
    for offset in range(1, epochs + 1):
        owners = [f"s{offset - 1}_{i}" for i in range(counts[offset - 1])]
        n_actions = rng.randint(len(owners), caps.max_actions)
        assigned = owners + [rng.choice(owners) for _ in range(n_actions - len(owners))]
        rng.shuffle(assigned)
        stage_actions = []
        for i, owner in enumerate(assigned):
            kill_mass = 0.0 if zero_kill else rng.uniform(caps.kill_low, caps.kill_high)
            weights = [rng.random() + 0.1 for _ in range(counts[offset])]
            scale = (1.0 - kill_mass) / sum(weights)
            row = {}
            if not zero_kill:
                row[f"k{offset}"] = kill_mass
            for j, w in enumerate(weights):
                row[f"s{offset}_{j}"] = w * scale
            stage_actions.append(
                {
                    "id": f"a{offset}_{i}",
                    "owner": owner,
                    "q": rng.uniform(-caps.reward_span, caps.reward_span),
                    "p": row,
                }
            )
        actions.append(stage_actions)

    doc = {"horizon": {"m": 0, "n": epochs}, "states": states, "actions": actions}
    if zero_kill:
        doc["allowZeroKill"] = True
    initial_ids = [f"s0_{i}" for i in range(counts[0])]
    if rng.random() < 1.0 / 3.0 or len(initial_ids) == 1:
        doc["mu"] = {rng.choice(initial_ids): 1.0}
    else:
        weights = [rng.random() + 0.1 for _ in initial_ids]
        total = sum(weights)
        doc["mu"] = {x: w / total for x, w in zip(initial_ids, weights)}
    return build_model(doc)


def all_histories(model: KilledModel):
    """Every survival history with at least one decision left, depth-first
    in declared order."""
    out: list[History] = []

    def walk(history: History) -> None:
        if history.cursor == model.last_stage:
            return
        out.append(history)
        nxt = history.cursor + 1
        dead = model.killed[nxt]
        for action in model.available(nxt, history.state):
            for y in model.states[nxt]:
                if y == dead or model.transition[nxt][action].get(y, 0.0) <= 0.0:
                    continue
                walk(history.extend(action, y))

    for x in model.non_killed(model.first_stage):
        walk(History.start(model.first_stage, x))
    return out


@dataclass(frozen=True)
class HistoryTablePolicy:
    """A history-dependent policy materialized as an explicit table, so
    random instances serialize into counterexamples."""

    table: Mapping[History, Mapping[str, float]]

    def distribution(self, history: History) -> Mapping[str, float]:
        try:
            return self.table[history]
        except KeyError:
            raise ValidationError(
                [Violation("policy-domain", f"history {history}", "no table entry")]
            ) from None


def random_history_policy(rng: random.Random, model: KilledModel) -> HistoryTablePolicy:
    table = {}
    for history in all_histories(model):
        available = model.available(history.decision_stage, history.state)
        weights = [rng.random() + 0.1 for _ in available]
        total = sum(weights)
        table[history] = {a: w / total for a, w in zip(available, weights)}
    return HistoryTablePolicy(table)


def random_markov_policy(rng: random.Random, model: KilledModel) -> MarkovPolicy:
    rules = {}
    for t in model.action_stages:
        stage_rules = {}
        for x in model.non_killed(t - 1):
            available = model.available(t, x)
            weights = [rng.random() + 0.1 for _ in available]
            total = sum(weights)
            stage_rules[x] = {a: w / total for a, w in zip(available, weights)}
        rules[t] = stage_rules
    return MarkovPolicy(rules)


def random_simple_policy(rng: random.Random, model: KilledModel) -> SimplePolicy:
    return SimplePolicy(
        {
            t: {x: rng.choice(model.available(t, x)) for x in model.non_killed(t - 1)}
            for t in model.action_stages
        }
    )


def random_distribution(rng: random.Random, ids) -> dict[str, float]:
    ids = list(ids)
    weights = [rng.random() + 0.1 for _ in ids]
    total = sum(weights)
    return {x: w / total for x, w in zip(ids, weights)}


# ---------------------------------------------------------------------------
# Policy documents for counterexamples
# ---------------------------------------------------------------------------


def history_policy_to_doc(policy: HistoryTablePolicy) -> dict:
    return {
        "kind": "history",
        "records": [
            {
                "firstStage": h.first_stage,
                "states": list(h.states),
                "actions": list(h.actions),
                "dist": dict(dist),
            }
            for h, dist in policy.table.items()
        ],
    }


def _policy_doc(policy) -> dict:
    if isinstance(policy, HistoryTablePolicy):
        return history_policy_to_doc(policy)
    return policy_to_doc(policy)


def _policy_from_any_doc(doc: Mapping):
    if doc.get("kind") == "history":
        table = {
            History(rec["firstStage"], tuple(rec["states"]), tuple(rec["actions"])): dict(rec["dist"])
            for rec in doc["records"]
        }
        return HistoryTablePolicy(table)
    return policy_from_doc(doc)


# ---------------------------------------------------------------------------
# The brute-force oracle
# ---------------------------------------------------------------------------


def brute_force_value(model: KilledModel, max_policies: int = 1_000_000) -> ValueFunction:
    """Best value per start state by trying every deterministic policy.

    Each candidate is evaluated by full path enumeration, so this shares no
    code path with the backward recursion it serves as the oracle for.
    """
    slots = [(t, x) for t in model.action_stages for x in model.non_killed(t - 1)]
    option_lists = [model.available(t, x) for t, x in slots]
    total = math.prod(len(options) for options in option_lists)
    if total > max_policies:
        raise ExplosionError(f"{total} deterministic policies exceed the cap {max_policies}")
    starts = model.non_killed(model.first_stage)
    best: dict[str, float] = {}
    for assignment in itertools.product(*option_lists):
        rules: dict[int, dict[str, str]] = {}
        for (t, x), action in zip(slots, assignment):
            rules.setdefault(t, {})[x] = action
        policy = SimplePolicy(rules)
        for x in starts:
            value = assess_policy(model, x, policy)
            if x not in best or value > best[x]:
                best[x] = value
    return ValueFunction(model.first_stage, best)


# ---------------------------------------------------------------------------
# The checks
# ---------------------------------------------------------------------------


def check_oracle(model: KilledModel) -> CheckReport:
    """Backward induction equals the brute-force oracle at every start."""
    induction = backward_induction(model)
    oracle = brute_force_value(model)
    table = induction.values[model.first_stage]
    disc = max(abs(table.values[x] - oracle.values[x]) for x in oracle.values)
    return _report("oracle", disc, {"model": dump_model(model)})


def check_first_step(model: KilledModel, state: str, policy) -> CheckReport:
    """Whole-path evaluation equals the first-step decomposition."""
    lhs = assess_policy(model, state, policy)
    rhs = first_step_value(model, state, policy)
    case = {"model": dump_model(model), "state": state, "policy": _policy_doc(policy)}
    return _report("first-step", abs(lhs - rhs), case)


def check_extraction(model: KilledModel, slacks: Mapping[int, float]) -> CheckReport:
    """Extracted simple policies meet their slack certificates, and the
    zero-slack extraction is exactly optimal from every start state."""
    induction = backward_induction(model)
    table = induction.values[model.first_stage]
    slacked = extract_simple_policy(model, slacks, induction)
    tight = extract_simple_policy(model, 0.0, induction)
    disc = 0.0
    for x in model.non_killed(model.first_stage):
        value = assess_policy(model, x, slacked.policy)
        disc = max(disc, table.values[x] - slacked.certificate - value)
        disc = max(disc, abs(assess_policy(model, x, tight.policy) - table.values[x]))
    case = {"model": dump_model(model), "slacks": {str(t): s for t, s in slacks.items()}}
    return _report("extraction", disc, case)


def check_dominance(model: KilledModel, start, policy) -> CheckReport:
    """Markovization preserves the value and every one-dimensional marginal;
    the dominating simple policy never does worse."""
    theta = markovize(model, start, policy)
    law = enumerate_outcomes(model, start, policy)
    law_markov = enumerate_outcomes(model, start, theta)
    value = law.expectation(lambda o: assess_outcome(model, o))
    value_markov = law_markov.expectation(lambda o: assess_outcome(model, o))
    disc = abs(value - value_markov)
    for t in model.stages:
        a, b = state_marginal(law, t), state_marginal(law_markov, t)
        for x in set(a) | set(b):
            disc = max(disc, abs(a.get(x, 0.0) - b.get(x, 0.0)))
    for t in model.action_stages:
        a, b = action_marginal(law, t), action_marginal(law_markov, t)
        for action in set(a) | set(b):
            disc = max(disc, abs(a.get(action, 0.0) - b.get(action, 0.0)))
    ka, kb = kill_marginal(law), kill_marginal(law_markov)
    for t in ka:
        disc = max(disc, abs(ka[t] - kb[t]))
    simple = dominate_simple(model, theta)
    value_simple = assess_policy(model, start, simple)
    disc = max(disc, value_markov - value_simple)
    case = {
        "model": dump_model(model),
        "start": dict(start) if not isinstance(start, str) else start,
        "policy": _policy_doc(policy),
    }
    return _report("dominance", disc, case)


def check_splice(model: KilledModel, head_policy, tail_policy, split: int) -> CheckReport:
    """Value decomposes across a stage split three equivalent ways.

    The head policy drives stages up to ``split``, the tail policy the rest.
    (1) total value = head value with zero terminal reward + survival-
    weighted tail values; (2) the expected tail payoff of runs alive at the
    split equals the same survival-weighted sum; (3) total value = head
    value with the tail's per-state values as terminal reward. Runs killed
    before the split belong entirely to the head term.
    """
    m, n = model.first_stage, model.last_stage
    start = model.initial
    spliced = splice(head_policy, tail_policy, split)
    full_law = enumerate_outcomes(model, start, spliced)
    full_value = full_law.expectation(lambda o: assess_outcome(model, o))

    zero_terminal = {x: 0.0 for x in model.non_killed(split)}
    head_zero_model = restrict_stages(model, m, split, zero_terminal)
    head_law = enumerate_outcomes(head_zero_model, start, head_policy)
    head_zero_value = head_law.expectation(lambda o: assess_outcome(head_zero_model, o))
    survivors = state_marginal(head_law, split)

    tail_model = restrict_stages(model, split, n)
    tail_values = {y: assess_policy(tail_model, y, tail_policy) for y in survivors}
    mixed_tail = sum(mass * tail_values[y] for y, mass in survivors.items())
    disc = abs(full_value - (head_zero_value + mixed_tail))

    split_offset = split - m
    tail_expectation = 0.0
    for outcome, mass in full_law.masses.items():
        if len(outcome.states) <= split_offset:
            continue  # killed before the split: head territory
        tail_payoff = sum(
            model.reward[m + 1 + i][a]
            for i, a in enumerate(outcome.actions)
            if m + 1 + i > split
        )
        if outcome.is_killed:
            tail_payoff += model.crash[outcome.kill_stage]
        else:
            tail_payoff += model.terminal[outcome.states[-1]]
        tail_expectation += mass * tail_payoff
    disc = max(disc, abs(tail_expectation - mixed_tail))

    head_valued_model = restrict_stages(model, m, split, tail_values)
    relay_value = assess_policy(head_valued_model, start, head_policy)
    disc = max(disc, abs(full_value - relay_value))

    case = {
        "model": dump_model(model),
        "split": split,
        "head": _policy_doc(head_policy),
        "tail": _policy_doc(tail_policy),
    }
    return _report("splice", disc, case)


def check_horizon_split(model: KilledModel, split: int) -> CheckReport:
    """Solving the whole horizon equals solving the tail, then the head with
    the tail's values as terminal reward; gluing the two zero-slack policies
    achieves the full-horizon optimum."""
    m, n = model.first_stage, model.last_stage
    terminal = ValueFunction(n, {x: model.terminal[x] for x in model.non_killed(n)})
    direct = dp_value(model, m, n, terminal)
    inner = dp_value(model, split, n, terminal)
    outer = dp_value(model, m, split, inner)
    disc = max(abs(direct.values[x] - outer.values[x]) for x in direct.values)

    tail_model = restrict_stages(model, split, n)
    head_model = restrict_stages(model, m, split, dict(inner.values))
    tail_rules = extract_simple_policy(tail_model, 0.0).policy.rules
    head_rules = extract_simple_policy(head_model, 0.0).policy.rules
    glued = SimplePolicy({**head_rules, **tail_rules})
    for x in model.non_killed(m):
        disc = max(disc, abs(assess_policy(model, x, glued) - direct.values[x]))
    return _report("horizon-split", disc, {"model": dump_model(model), "split": split})


def check_combination(model: KilledModel, family: Mapping[str, object], epsilon: float, starts) -> CheckReport:
    """A per-start family of epsilon-optimal policies combines into one
    policy that is epsilon-optimal for every start distribution at once."""
    combined = combine(family)
    table = backward_induction(model).values[model.first_stage]
    disc = 0.0
    for start in starts:
        optimal = sum(mass * table.values[x] for x, mass in start.items())
        achieved = assess_policy(model, start, combined)
        disc = max(disc, optimal - epsilon - achieved)
    case = {
        "model": dump_model(model),
        "family": {x: _policy_doc(p) for x, p in family.items()},
        "epsilon": epsilon,
        "starts": [dict(s) for s in starts],
    }
    return _report("combination", disc, case)


def check_simulation(model: KilledModel, policy, samples: int, seed: int) -> CheckReport:
    """The Monte Carlo estimate falls within five standard errors of the
    exact value (exactly equal when the payoff is deterministic)."""
    exact = assess_policy(model, None, policy)
    result = estimate_value(model, None, policy, samples, seed)
    error = abs(result.mean - exact)
    if result.standard_error == 0.0:
        disc = error
        tolerance = 1e-12
    else:
        disc = max(0.0, error - 5.0 * result.standard_error)
        tolerance = 0.0
    case = {
        "model": dump_model(model),
        "policy": _policy_doc(policy),
        "samples": samples,
        "seed": seed,
    }
    return _report("simulation", disc, case, tolerance=tolerance)


# ---------------------------------------------------------------------------
# Seeded check runner and counterexample replay
# ---------------------------------------------------------------------------


def _instance_oracle(rng: random.Random, caps: SizeCaps) -> CheckReport:
    return check_oracle(random_model(rng, caps))


def _instance_first_step(rng: random.Random, caps: SizeCaps) -> CheckReport:
    model = random_model(rng, caps)
    state = rng.choice(list(model.non_killed(model.first_stage)))
    return check_first_step(model, state, random_history_policy(rng, model))


def _instance_extraction(rng: random.Random, caps: SizeCaps) -> CheckReport:
    model = random_model(rng, caps)
    slacks = {t: rng.uniform(0.0, 1.0) for t in model.action_stages}
    return check_extraction(model, slacks)


def _instance_dominance(rng: random.Random, caps: SizeCaps) -> CheckReport:
    model = random_model(rng, caps)
    start = random_distribution(rng, model.non_killed(model.first_stage))
    return check_dominance(model, start, random_history_policy(rng, model))


def _instance_splice(rng: random.Random, caps: SizeCaps) -> CheckReport:
    model = random_model(rng, caps, min_epochs=2)
    m, n = model.first_stage, model.last_stage
    split = rng.randint(m + 1, n - 1)
    zero_terminal = {x: 0.0 for x in model.non_killed(split)}
    head = random_history_policy(rng, restrict_stages(model, m, split, zero_terminal))
    tail = random_history_policy(rng, restrict_stages(model, split, n))
    return check_splice(model, head, tail, split)


def _instance_horizon_split(rng: random.Random, caps: SizeCaps) -> CheckReport:
    model = random_model(rng, caps, min_epochs=2)
    split = rng.randint(model.first_stage + 1, model.last_stage - 1)
    return check_horizon_split(model, split)


def _instance_combination(rng: random.Random, caps: SizeCaps) -> CheckReport:
    model = random_model(rng, caps)
    family = {}
    epsilon = 0.0
    for x in model.non_killed(model.first_stage):
        slacks = {t: rng.uniform(0.0, 0.5) for t in model.action_stages}
        extraction = extract_simple_policy(model, slacks)
        family[x] = extraction.policy
        epsilon = max(epsilon, extraction.certificate)
    starts = [{x: 1.0} for x in model.non_killed(model.first_stage)]
    starts += [random_distribution(rng, model.non_killed(model.first_stage)) for _ in range(3)]
    return check_combination(model, family, epsilon, starts)


def _instance_simulation(rng: random.Random, caps: SizeCaps) -> CheckReport:
    model = random_model(rng, caps)
    if rng.random() < 0.5:
        policy = random_simple_policy(rng, model)
    else:
        policy = random_markov_policy(rng, model)
    return check_simulation(model, policy, samples=20_000, seed=rng.getrandbits(63))


_INSTANCES: dict[str, Callable[[random.Random, SizeCaps], CheckReport]] = {
    "oracle": _instance_oracle,
    "first-step": _instance_first_step,
    "extraction": _instance_extraction,
    "dominance": _instance_dominance,
    "splice": _instance_splice,
    "horizon-split": _instance_horizon_split,
    "combination": _instance_combination,
    "simulation": _instance_simulation,
}

CHECK_NAMES = tuple(_INSTANCES)


def run_check(name: str, seed: int = 0, count: int = 20, caps: SizeCaps = SizeCaps()) -> CheckReport:
    """Run ``count`` seeded instances of one named check and merge them."""
    try:
        instance = _INSTANCES[name]
    except KeyError:
        raise KeyError(f"unknown check {name!r}; known: {', '.join(CHECK_NAMES)}") from None
    master = random.Random(seed)
    reports = []
    for _ in range(count):
        rng = random.Random(master.getrandbits(64))
        reports.append(instance(rng, caps))
    return merge_reports(name, reports)


def replay_counterexample(doc: Mapping) -> CheckReport:
    """Re-run a dumped counterexample; the discrepancy must reproduce."""
    name = doc["check"]
    case = doc["case"]
    model = build_model(case["model"])
    if name == "oracle":
        return check_oracle(model)
    if name == "first-step":
        return check_first_step(model, case["state"], _policy_from_any_doc(case["policy"]))
    if name == "extraction":
        return check_extraction(model, {int(t): s for t, s in case["slacks"].items()})
    if name == "dominance":
        return check_dominance(model, case["start"], _policy_from_any_doc(case["policy"]))
    if name == "splice":
        return check_splice(
            model,
            _policy_from_any_doc(case["head"]),
            _policy_from_any_doc(case["tail"]),
            case["split"],
        )
    if name == "horizon-split":
        return check_horizon_split(model, case["split"])
    if name == "combination":
        family = {x: _policy_from_any_doc(p) for x, p in case["family"].items()}
        return check_combination(model, family, case["epsilon"], case["starts"])
    if name == "simulation":
        return check_simulation(
            model, _policy_from_any_doc(case["policy"]), case["samples"], case["seed"]
        )
    raise KeyError(f"unknown check {name!r}")
