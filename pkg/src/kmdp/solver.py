"""Backward induction and the one-step backup operators.

The recursion runs on two alternating tables. ``assess_actions`` turns a
value table on stage-t states into a table on stage-t actions: running
reward, plus mass-weighted continuation values over non-killed successors,
plus the kill atom's mass times the stage's crash penalty (crash values are
folded in here, so value tables only ever cover non-killed states).
``maximize_actions`` collapses an action table to the owning states of the
previous stage by taking the best available action, recording the first
maximizer in declared order as witness. Iterating the pair from the terminal
reward down yields the process assessment; a simple policy extracted with
per-stage slacks is guaranteed to come within the summed slack of it, from
every start state at once.

Stage indexing follows the input table: the operator pair at stage t maps a
table on stage-t states to one on stage-(t-1) states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from kmdp.errors import InternalError, StageError, ValidationError
from kmdp.measure import assess_policy, policy_distribution
from kmdp.model import STRUCTURAL_ZERO, History, KilledModel, Violation, derived_model

# Comparisons against value thresholds use a relative-absolute hybrid.
VALUE_TOLERANCE = 1e-9


def _threshold_tolerance(scale: float) -> float:
    return VALUE_TOLERANCE * max(1.0, abs(scale))


@dataclass(frozen=True)
class ValueFunction:
    """Stage-indexed values on non-killed states; the kill state's value is
    its crash penalty and is applied inside the backup, never stored.

    ``argmax`` carries the witnessing action per state when the table came
    out of a maximization step.
    """

    stage: int
    values: Mapping[str, float]
    argmax: Mapping[str, str] | None = None

    def __getitem__(self, state: str) -> float:
        return self.values[state]


@dataclass(frozen=True)
class ActionAssessment:
    """Stage-indexed values on actions: reward now plus expected payoff of
    everything after, crash branch included."""

    stage: int
    values: Mapping[str, float]

    def __getitem__(self, action: str) -> float:
        return self.values[action]


def assess_actions(model: KilledModel, stage: int, values: ValueFunction) -> ActionAssessment:
    """One-step action assessment from a value table on ``stage`` states."""
    if stage not in model.action_stages:
        raise StageError(f"stage {stage} has no actions on [{model.first_stage}, {model.last_stage}]")
    if values.stage != stage:
        raise StageError(f"value table is for stage {values.stage}, expected {stage}")
    dead = model.killed[stage]
    crash = model.crash.get(stage, 0.0)
    out: dict[str, float] = {}
    for action in model.actions[stage]:
        row = model.transition[stage][action]
        total = model.reward[stage][action]
        for y in model.states[stage]:
            mass = row.get(y, 0.0)
            if mass == 0.0:
                continue
            total += mass * (crash if y == dead else values.values[y])
        out[action] = total
    return ActionAssessment(stage, out)


def maximize_actions(model: KilledModel, stage: int, assessments: ActionAssessment) -> ValueFunction:
    """Best available action value per owning state, with argmax witness.

    Ties go to the first maximizer in declared action order.
    """
    if assessments.stage != stage:
        raise StageError(f"action table is for stage {assessments.stage}, expected {stage}")
    values: dict[str, float] = {}
    witness: dict[str, str] = {}
    for x in model.non_killed(stage - 1):
        best = None
        best_action = None
        for action in model.available(stage, x):
            v = assessments.values[action]
            if best is None or v > best:
                best, best_action = v, action
        if best is None:
            raise StageError(f"state {x!r} at stage {stage - 1} has no actions")
        values[x] = best
        witness[x] = best_action
    return ValueFunction(stage - 1, values, witness)


@dataclass(frozen=True)
class InductionResult:
    """Everything one backward sweep produces: value tables for every stage
    and action tables for every decision stage."""

    model: KilledModel
    values: Mapping[int, ValueFunction]
    action_values: Mapping[int, ActionAssessment]

    def initial_value(self, start=None) -> float:
        """The process assessment of a start state or distribution.

        A killed start state returns its crash value; a distribution mixes
        per-state assessments linearly (kill-state mass allowed).
        """
        model = self.model
        first = model.first_stage
        table = self.values[first]
        if start is None:
            if model.initial is None:
                raise ValidationError(
                    [Violation("no-initial", "start", "model fixes no initial distribution")]
                )
            start = model.initial
        if isinstance(start, str):
            if model.is_killed_state(first, start):
                return model.crash[first]
            return table.values[start]
        total = 0.0
        for x, mass in start.items():
            if model.is_killed_state(first, x):
                total += mass * model.crash[first]
            else:
                total += mass * table.values[x]
        return total


def backward_induction(model: KilledModel) -> InductionResult:
    """Sweep from the terminal reward down to the first stage."""
    last = model.last_stage
    values: dict[int, ValueFunction] = {
        last: ValueFunction(last, {x: model.terminal[x] for x in model.non_killed(last)})
    }
    action_values: dict[int, ActionAssessment] = {}
    for t in range(last, model.first_stage, -1):
        action_values[t] = assess_actions(model, t, values[t])
        values[t - 1] = maximize_actions(model, t, action_values[t])
    return InductionResult(model, values, action_values)


def policy_backup(
    model: KilledModel, stage: int, rule: Mapping[str, str], values: ValueFunction
) -> ValueFunction:
    """One-step backup under a fixed decision rule for ``stage``.

    ``rule`` maps each non-killed previous-stage state to its chosen action.
    """
    assessments = assess_actions(model, stage, values)
    out: dict[str, float] = {}
    for x in model.non_killed(stage - 1):
        action = rule[x]
        if action not in model.available(stage, x):
            raise ValidationError(
                [Violation("rule-support", f"stage {stage} state {x!r}", f"{action!r} not available")]
            )
        out[x] = assessments.values[action]
    return ValueFunction(stage - 1, out)


def dp_value(model: KilledModel, start: int, stop: int, terminal: ValueFunction) -> ValueFunction:
    """Iterate the assess/maximize pair from ``stop`` down to ``start``.

    ``terminal`` is a value table at stage ``stop``; the result is the best
    achievable value table at stage ``start``. Splitting the interval at any
    interior stage and nesting the two solves gives the same table.
    """
    if not (model.first_stage <= start < stop <= model.last_stage):
        raise StageError(
            f"[{start}, {stop}] is not a sub-horizon of [{model.first_stage}, {model.last_stage}]"
        )
    if terminal.stage != stop:
        raise StageError(f"terminal table is for stage {terminal.stage}, expected {stop}")
    current = terminal
    for t in range(stop, start, -1):
        current = maximize_actions(model, t, assess_actions(model, t, current))
    return current


# ---------------------------------------------------------------------------
# Simple-policy extraction with slack certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtractionResult:
    """A simple policy plus its certificate: from every start state its
    value is within ``certificate`` (the summed slacks) of the optimum."""

    policy: "SimplePolicy"  # noqa: F821 - imported lazily to avoid a cycle
    certificate: float
    slacks: Mapping[int, float]
    induction: InductionResult


def _normalize_slacks(model: KilledModel, slack) -> dict[int, float]:
    stages = list(model.action_stages)
    if isinstance(slack, Mapping):
        out = {t: float(slack.get(t, 0.0)) for t in stages}
    elif isinstance(slack, Sequence) and not isinstance(slack, (str, bytes)):
        if len(slack) != len(stages):
            raise ValueError(f"expected {len(stages)} slack values, got {len(slack)}")
        out = {t: float(v) for t, v in zip(stages, slack)}
    else:
        out = {t: float(slack) for t in stages}
    for t, v in out.items():
        if not (v >= 0.0):
            raise ValueError(f"slack at stage {t} must be nonnegative, got {v!r}")
    return out


def extract_simple_policy(
    model: KilledModel, slack=0.0, induction: InductionResult | None = None
) -> ExtractionResult:
    """Pick, per stage and state, the first action within the stage's slack
    of the best achievable value.

    With all slacks zero this returns the maximizing witnesses and the
    policy is optimal from every start state; otherwise its value from any
    start state is at least the optimum minus the summed slacks.
    """
    from kmdp.policies import SimplePolicy

    slacks = _normalize_slacks(model, slack)
    if induction is None:
        induction = backward_induction(model)
    rules: dict[int, dict[str, str]] = {}
    for t in model.action_stages:
        assessments = induction.action_values[t]
        below = induction.values[t - 1]
        stage_rule: dict[str, str] = {}
        for x in model.non_killed(t - 1):
            threshold = below.values[x] - slacks[t]
            chosen = None
            for action in model.available(t, x):
                if assessments.values[action] >= threshold - _threshold_tolerance(threshold):
                    chosen = action
                    break
            if chosen is None:
                raise InternalError(
                    f"no action within slack at stage {t} state {x!r}; "
                    "the maximizer itself should always qualify"
                )
            stage_rule[x] = chosen
        rules[t] = stage_rule
    return ExtractionResult(
        policy=SimplePolicy(rules),
        certificate=sum(slacks.values()),
        slacks=slacks,
        induction=induction,
    )


# ---------------------------------------------------------------------------
# First-step decomposition
# ---------------------------------------------------------------------------


def first_step_value(model: KilledModel, state: str, policy, max_outcomes: int | None = None) -> float:
    """Evaluate a policy from one start state by splitting off the first step.

    Sums, over the first actions, the policy's probability of the action
    times (its running reward + the value of the rest). The rest is the
    restriction of the policy after that first step, evaluated on the model
    with its first stage deleted, started from the action's transition row
    (kill mass contributing the crash value). Single-epoch models have no
    remainder model and the rest degenerates to terminal rewards and crash.
    Agrees with whole-path enumeration exactly.
    """
    from kmdp.policies import restrict_after_first

    first = model.first_stage
    nxt = first + 1
    history = History.start(first, state)
    dist = policy_distribution(model, policy, history)
    dead = model.killed[nxt]
    total = 0.0
    single_epoch = model.last_stage == nxt
    rest_model = None if single_epoch else derived_model(model)
    for action in model.available(nxt, state):
        weight = dist.get(action, 0.0)
        if weight < STRUCTURAL_ZERO:
            continue
        row = model.transition[nxt][action]
        if single_epoch:
            rest = 0.0
            for y in model.states[nxt]:
                mass = row.get(y, 0.0)
                if mass == 0.0:
                    continue
                rest += mass * (model.crash[nxt] if y == dead else model.terminal[y])
        else:
            tail = restrict_after_first(policy, state, action)
            rest = assess_policy(rest_model, dict(row), tail, max_outcomes)
        total += weight * (model.reward[nxt][action] + rest)
    return total
