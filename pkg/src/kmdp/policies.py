"""Policy representations and the constructions that combine them.

Three refinements, from most to least general: a GeneralPolicy is any pure
rule from histories to action distributions; a MarkovPolicy looks only at
the current stage and state; a SimplePolicy is deterministic and memoryless.
Tabular policies are immutable after construction and all rules must be
pure, so policies can be queried concurrently without synchronization.

The constructions mirror how multi-stage decisions decompose: branching on
the start state (combine), prepending a first-step choice to a policy of
the remainder model (product), peeling off a taken first step (restrict),
splicing two policies at a stage boundary (splice), collapsing a
history-dependent policy to the Markov one with the same one-dimensional
marginals (markovize), and reading off a deterministic policy that beats a
given Markov policy from every start state (dominate_simple).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Mapping

from kmdp.errors import (
    ExplosionError,
    InternalError,
    MissingBranchError,
    ModelFormatError,
    StageError,
    ValidationError,
)
from kmdp.measure import _resolve_start, outcome_cap, policy_distribution
from kmdp.model import STRUCTURAL_ZERO, History, KilledModel, Violation
from kmdp.solver import ValueFunction, _threshold_tolerance, assess_actions


class GeneralPolicy:
    """A history-dependent randomized policy wrapping a pure rule."""

    def __init__(self, rule: Callable[[History], Mapping[str, float]], name: str = "general"):
        self._rule = rule
        self.name = name

    def distribution(self, history: History) -> Mapping[str, float]:
        return self._rule(history)

    def __repr__(self) -> str:
        return f"GeneralPolicy({self.name})"


@dataclass(frozen=True)
class MarkovPolicy:
    """Per stage, a distribution over available actions for each state."""

    rules: Mapping[int, Mapping[str, Mapping[str, float]]]

    def distribution(self, history: History) -> Mapping[str, float]:
        stage = history.decision_stage
        try:
            return self.rules[stage][history.state]
        except KeyError:
            raise ValidationError(
                [
                    Violation(
                        "policy-domain",
                        f"stage {stage} state {history.state!r}",
                        "no rule for this stage/state",
                    )
                ]
            ) from None


@dataclass(frozen=True)
class SimplePolicy:
    """Per stage, one action for each state: deterministic and memoryless."""

    rules: Mapping[int, Mapping[str, str]]

    def action(self, stage: int, state: str) -> str:
        return self.rules[stage][state]

    def distribution(self, history: History) -> Mapping[str, float]:
        stage = history.decision_stage
        try:
            return {self.rules[stage][history.state]: 1.0}
        except KeyError:
            raise ValidationError(
                [
                    Violation(
                        "policy-domain",
                        f"stage {stage} state {history.state!r}",
                        "no rule for this stage/state",
                    )
                ]
            ) from None


def validate_policy(model: KilledModel, policy) -> list[Violation]:
    """Check a tabular policy against a model: every decision state needs a
    rule, every referenced action must be available. General policies are
    checked query-by-query instead."""
    out: list[Violation] = []
    if not isinstance(policy, (SimplePolicy, MarkovPolicy)):
        return out
    for t in model.action_stages:
        stage_rules = policy.rules.get(t)
        if stage_rules is None:
            out.append(Violation("policy-stage", f"stage {t}", "no rules for this stage"))
            continue
        for x in stage_rules:
            if x not in model.non_killed(t - 1):
                out.append(
                    Violation("policy-state", f"stage {t} state {x!r}", f"not a non-killed stage-{t - 1} state")
                )
        for x in model.non_killed(t - 1):
            rule = stage_rules.get(x)
            if rule is None:
                out.append(Violation("policy-state", f"stage {t} state {x!r}", "no rule for this state"))
                continue
            available = model.available(t, x)
            if isinstance(policy, SimplePolicy):
                if rule not in available:
                    out.append(
                        Violation("policy-action", f"stage {t} state {x!r}", f"action {rule!r} not available")
                    )
            else:
                for action, mass in rule.items():
                    if action not in available:
                        out.append(
                            Violation(
                                "policy-action", f"stage {t} state {x!r}", f"action {action!r} not available"
                            )
                        )
                    elif not (mass >= 0.0):
                        out.append(
                            Violation("policy-mass", f"stage {t} action {action!r}", f"mass is {mass!r}")
                        )
                total = sum(rule.values())
                if abs(total - 1.0) > 1e-9:
                    out.append(
                        Violation("policy-sum", f"stage {t} state {x!r}", f"masses sum to {total!r}, not 1")
                    )
    return out


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------


def combine(family: Mapping[str, object]) -> GeneralPolicy:
    """Branch on the start state: from x, follow the family's policy for x.

    Querying a history whose first state has no branch raises
    MissingBranchError; coverage of every reachable start state is the
    caller's contract.
    """
    branches = dict(family)

    def rule(history: History) -> Mapping[str, float]:
        branch = branches.get(history.states[0])
        if branch is None:
            raise MissingBranchError(f"no policy assigned to start state {history.states[0]!r}")
        return branch.distribution(history)

    return GeneralPolicy(rule, name="combine")


def product(gamma: Mapping[str, object], tail=None, first_decision_stage: int | None = None):
    """Prepend a first-step choice to a policy of the remainder model.

    ``gamma`` maps each start state to a distribution over its actions (or
    to a single action id as deterministic shorthand). ``tail`` decides all
    later stages and is queried with the first state/action pair stripped;
    it must not claim the first decision stage itself.

    When every gamma entry is a single action and the tail is simple (or
    absent, for single-epoch models), the result is the merged SimplePolicy;
    otherwise a GeneralPolicy. The tabular merge needs the first decision
    stage, taken from ``first_decision_stage`` or inferred from the tail.
    """
    deterministic = all(isinstance(choice, str) for choice in gamma.values())
    tail_stages = sorted(tail.rules) if isinstance(tail, (SimplePolicy, MarkovPolicy)) else None

    if tail_stages is not None and first_decision_stage is None:
        if tail_stages:
            first_decision_stage = tail_stages[0] - 1
    if tail_stages is not None and first_decision_stage is not None:
        if first_decision_stage in tail_stages:
            raise StageError(
                f"tail policy already decides stage {first_decision_stage}; "
                "it belongs to the first-step choice"
            )

    if deterministic and (tail is None or isinstance(tail, SimplePolicy)):
        if first_decision_stage is None:
            raise StageError("cannot infer the first decision stage; pass first_decision_stage")
        rules = {first_decision_stage: dict(gamma)}
        if tail is not None:
            rules.update({t: dict(r) for t, r in tail.rules.items()})
        return SimplePolicy(rules)

    def rule(history: History) -> Mapping[str, float]:
        if not history.actions:
            choice = gamma.get(history.state)
            if choice is None:
                raise MissingBranchError(f"no first-step choice for start state {history.state!r}")
            return {choice: 1.0} if isinstance(choice, str) else choice
        if tail is None:
            raise StageError(f"no tail policy to decide stage {history.decision_stage}")
        return tail.distribution(history.drop_first())

    return GeneralPolicy(rule, name="product")


def restrict_after_first(policy, state: str, action: str):
    """The policy as seen after a taken first step (state, action).

    Tabular policies do not look at the prefix, so their restriction is the
    same table minus the first decision stage. General policies get the
    prefix re-attached on every query.
    """
    if isinstance(policy, (SimplePolicy, MarkovPolicy)):
        stages = sorted(policy.rules)
        remaining = {t: policy.rules[t] for t in stages[1:]}
        return type(policy)(remaining)

    def rule(history: History) -> Mapping[str, float]:
        return policy.distribution(history.prepend(state, action))

    return GeneralPolicy(rule, name="restricted")


def splice(head, tail, split_stage: int) -> GeneralPolicy:
    """Follow ``head`` through ``split_stage``, then ``tail`` on the suffix.

    ``tail`` sees histories that start at ``split_stage``, as a policy of
    the model restricted to the later interval would.
    """

    def rule(history: History) -> Mapping[str, float]:
        if history.decision_stage <= split_stage:
            return head.distribution(history)
        return tail.distribution(history.suffix_from(split_stage))

    return GeneralPolicy(rule, name="spliced")


# ---------------------------------------------------------------------------
# Markovization and simple dominance
# ---------------------------------------------------------------------------


def markovize(model: KilledModel, start, policy, max_outcomes: int | None = None) -> MarkovPolicy:
    """The Markov policy with the same stagewise behaviour as ``policy``.

    For each stage and state, the new rule is the conditional action
    distribution given being alive in that state under the outcome law of
    (start, policy). States never reached get a fixed point mass on their
    first available action so the table is total. The result reproduces the
    original policy's value and all its one-dimensional state/action
    marginals.
    """
    weights = _resolve_start(model, start)
    cap = outcome_cap(max_outcomes)
    first = model.first_stage

    frontier: dict[History, float] = {
        History.start(first, x): mass
        for x, mass in weights.items()
        if mass >= STRUCTURAL_ZERO
    }
    joint: dict[int, dict[tuple[str, str], float]] = {t: {} for t in model.action_stages}
    for stage in range(first, model.last_stage):
        nxt = stage + 1
        dead = model.killed[nxt]
        grown: dict[History, float] = {}
        for history, mass in frontier.items():
            dist = policy_distribution(model, policy, history)
            x = history.state
            for action in model.available(nxt, x):
                weight = dist.get(action, 0.0)
                if weight < STRUCTURAL_ZERO:
                    continue
                branch = mass * weight
                key = (x, action)
                joint[nxt][key] = joint[nxt].get(key, 0.0) + branch
                if nxt == model.last_stage:
                    continue
                row = model.transition[nxt][action]
                for y in model.states[nxt]:
                    p = row.get(y, 0.0)
                    if p < STRUCTURAL_ZERO or y == dead:
                        continue
                    extended = history.extend(action, y)
                    grown[extended] = grown.get(extended, 0.0) + branch * p
                    if len(grown) > cap:
                        raise ExplosionError(f"history enumeration exceeded cap {cap}")
        frontier = grown

    rules: dict[int, dict[str, dict[str, float]]] = {}
    for t in model.action_stages:
        stage_rules: dict[str, dict[str, float]] = {}
        for x in model.non_killed(t - 1):
            available = model.available(t, x)
            reached = sum(joint[t].get((x, a), 0.0) for a in available)
            if reached > 0.0:
                stage_rules[x] = {a: joint[t].get((x, a), 0.0) / reached for a in available}
            else:
                stage_rules[x] = {available[0]: 1.0}
        rules[t] = stage_rules
    return MarkovPolicy(rules)


def dominate_simple(model: KilledModel, markov: MarkovPolicy) -> SimplePolicy:
    """A deterministic policy at least as good as ``markov`` from every start.

    Works backward through the stages. At each state the policy's own value
    is the rule-weighted average of its action assessments, so some action
    meets or beats that average; the first such action in declared order is
    chosen. An empty candidate set would contradict the averaging argument
    and raises InternalError.
    """
    problems = validate_policy(model, markov)
    if problems:
        raise ValidationError(problems)
    last = model.last_stage
    value = ValueFunction(last, {x: model.terminal[x] for x in model.non_killed(last)})
    rules: dict[int, dict[str, str]] = {}
    for t in range(last, model.first_stage, -1):
        assessments = assess_actions(model, t, value)
        stage_rule: dict[str, str] = {}
        averaged: dict[str, float] = {}
        for x in model.non_killed(t - 1):
            rule = markov.rules[t][x]
            mean = 0.0
            for action in model.available(t, x):
                mean += rule.get(action, 0.0) * assessments.values[action]
            averaged[x] = mean
            chosen = None
            for action in model.available(t, x):
                if assessments.values[action] >= mean - _threshold_tolerance(mean):
                    chosen = action
                    break
            if chosen is None:
                raise InternalError(
                    f"no action meets the average at stage {t} state {x!r}; "
                    "some action must always reach its own rule's mean"
                )
            stage_rule[x] = chosen
        rules[t] = stage_rule
        value = ValueFunction(t - 1, averaged)
    return SimplePolicy(rules)


# ---------------------------------------------------------------------------
# Serialization (simple and Markov policies only)
# ---------------------------------------------------------------------------


def policy_to_doc(policy) -> dict:
    """Document form: kind plus rules keyed by stage then state id."""
    if isinstance(policy, SimplePolicy):
        return {
            "kind": "simple",
            "stages": {str(t): dict(rules) for t, rules in policy.rules.items()},
        }
    if isinstance(policy, MarkovPolicy):
        return {
            "kind": "markov",
            "stages": {
                str(t): {x: dict(dist) for x, dist in rules.items()}
                for t, rules in policy.rules.items()
            },
        }
    raise TypeError(f"only tabular policies serialize, got {type(policy).__name__}")


def policy_from_doc(doc: Mapping):
    if not isinstance(doc, Mapping):
        raise ModelFormatError("policy document must be a JSON object")
    unknown = set(doc) - {"kind", "stages"}
    if unknown:
        raise ModelFormatError(f"policy: unknown key {sorted(unknown)[0]!r}")
    kind = doc.get("kind")
    stages = doc.get("stages")
    if kind not in ("simple", "markov") or not isinstance(stages, Mapping):
        raise ModelFormatError("policy: need kind simple|markov and a stages object")
    rules: dict[int, dict] = {}
    for key, stage_rules in stages.items():
        try:
            t = int(key)
        except (TypeError, ValueError):
            raise ModelFormatError(f"policy: stage key {key!r} is not an integer") from None
        if not isinstance(stage_rules, Mapping):
            raise ModelFormatError(f"policy: stage {key} must map states to rules")
        if kind == "simple":
            for x, action in stage_rules.items():
                if not isinstance(action, str):
                    raise ModelFormatError(f"policy: stage {key} state {x!r} needs an action id")
            rules[t] = dict(stage_rules)
        else:
            parsed = {}
            for x, dist in stage_rules.items():
                if not isinstance(dist, Mapping):
                    raise ModelFormatError(f"policy: stage {key} state {x!r} needs a distribution")
                parsed[x] = {
                    a: float(mass)
                    for a, mass in dist.items()
                    if not isinstance(mass, bool) and isinstance(mass, (int, float))
                }
                if len(parsed[x]) != len(dist):
                    raise ModelFormatError(f"policy: stage {key} state {x!r} has a non-numeric mass")
            rules[t] = parsed
    return SimplePolicy(rules) if kind == "simple" else MarkovPolicy(rules)


def load_policy(path):
    with open(path, "r", encoding="utf-8") as handle:
        return policy_from_doc(json.load(handle))


def dump_policy(policy, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(policy_to_doc(policy), handle, indent=2, sort_keys=True)
        handle.write("\n")
