"""Exact evaluation over the augmented path space.

Enumerates every outcome a (model, start, policy) triple can produce: the
surviving paths and, for each path prefix, the branch where the last action's
kill atom fired. The mass of a surviving path is the product of its start
mass, policy probabilities, and transition masses; a killed branch swaps the
final transition mass for the kill-atom mass and stops. Together the two
branch kinds carry total mass one.

Everything here is deliberately direct — depth-first walks in declared
state/action order, plain float accumulation — because this module is the
ground truth the faster machinery is tested against.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Mapping

from kmdp.errors import ExplosionError, InconsistentOutcomeError, ValidationError
from kmdp.model import (
    STRUCTURAL_ZERO,
    SUM_TOLERANCE,
    AugmentedOutcome,
    History,
    KilledModel,
    Violation,
)

DEFAULT_OUTCOME_CAP = 10_000_000
CAP_ENV_VAR = "KMDP_MAX_OUTCOMES"


def outcome_cap(explicit: int | None = None) -> int:
    """The enumeration cap: explicit argument, else environment, else default."""
    if explicit is not None:
        return explicit
    env = os.environ.get(CAP_ENV_VAR)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{CAP_ENV_VAR} must be an integer, got {env!r}") from None
    return DEFAULT_OUTCOME_CAP


def policy_distribution(model: KilledModel, policy, history: History) -> Mapping[str, float]:
    """Query a policy and check the returned distribution against the model.

    The distribution must be supported on the actions available at the
    history's final state and sum to one within tolerance.
    """
    dist = policy.distribution(history)
    stage = history.decision_stage
    available = model.available(stage, history.state)
    total = 0.0
    for action, weight in dist.items():
        if action not in available:
            raise ValidationError(
                [
                    Violation(
                        "policy-support",
                        f"stage {stage} state {history.state!r}",
                        f"policy puts mass on unavailable action {action!r}",
                    )
                ]
            )
        if not (weight >= 0.0):
            raise ValidationError(
                [
                    Violation(
                        "policy-mass",
                        f"stage {stage} action {action!r}",
                        f"policy mass is {weight!r}",
                    )
                ]
            )
        total += weight
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ValidationError(
            [
                Violation(
                    "policy-sum",
                    f"stage {stage} state {history.state!r}",
                    f"policy masses sum to {total!r}, not 1",
                )
            ]
        )
    return dist


@dataclass(frozen=True)
class OutcomeLaw:
    """The full outcome distribution for one (model, start, policy) triple.

    ``masses`` is keyed by outcome in enumeration order (depth-first,
    declared state/action order), which makes downstream reductions
    deterministic.
    """

    model: KilledModel
    start: Mapping[str, float]
    masses: Mapping[AugmentedOutcome, float]

    def total_mass(self) -> float:
        return sum(self.masses.values())

    def expectation(self, value: Callable[[AugmentedOutcome], float]) -> float:
        return sum(mass * value(outcome) for outcome, mass in self.masses.items())


def _resolve_start(model: KilledModel, start) -> dict[str, float]:
    """Normalize a start argument to a distribution over non-killed states."""
    if start is None:
        if model.initial is None:
            raise ValidationError(
                [Violation("no-initial", "start", "model fixes no initial distribution")]
            )
        start = model.initial
    if isinstance(start, str):
        start = {start: 1.0}
    first = model.first_stage
    known = set(model.states[first])
    total = 0.0
    for x, mass in start.items():
        if x not in known:
            raise ValidationError(
                [Violation("start-unknown", f"state {x!r}", f"not a stage-{first} state")]
            )
        if model.is_killed_state(first, x) and mass >= STRUCTURAL_ZERO:
            raise ValidationError(
                [Violation("start-killed", f"state {x!r}", "enumeration cannot start in the kill state")]
            )
        if not (mass >= 0.0):
            raise ValidationError([Violation("start-mass", f"state {x!r}", f"mass is {mass!r}")])
        total += mass
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ValidationError(
            [Violation("start-sum", "start", f"masses sum to {total!r}, not 1")]
        )
    return {x: float(mass) for x, mass in start.items()}


def enumerate_outcomes(
    model: KilledModel,
    start,
    policy,
    max_outcomes: int | None = None,
) -> OutcomeLaw:
    """Walk the whole augmented path space and return the outcome law.

    ``start`` is an initial distribution mapping, a single non-killed
    first-stage state id, or None for the model's own initial distribution.
    Masses below the structural-zero threshold are never expanded. Raises
    ExplosionError once more than the cap's worth of outcomes exist.
    """
    weights = _resolve_start(model, start)
    cap = outcome_cap(max_outcomes)
    last = model.last_stage
    masses: dict[AugmentedOutcome, float] = {}

    def record(outcome: AugmentedOutcome, mass: float) -> None:
        if len(masses) >= cap:
            raise ExplosionError(f"outcome enumeration exceeded cap {cap}")
        masses[outcome] = mass

    def walk(history: History, mass: float) -> None:
        stage = history.cursor
        if stage == last:
            record(AugmentedOutcome.survived(history.states, history.actions), mass)
            return
        dist = policy_distribution(model, policy, history)
        nxt = stage + 1
        dead = model.killed[nxt]
        for action in model.available(nxt, history.state):
            weight = dist.get(action, 0.0)
            if weight < STRUCTURAL_ZERO:
                continue
            branch = mass * weight
            row = model.transition[nxt][action]
            for y in model.states[nxt]:
                p = row.get(y, 0.0)
                if p < STRUCTURAL_ZERO:
                    continue
                if y == dead:
                    record(
                        AugmentedOutcome.killed(
                            history.states, history.actions + (action,), nxt
                        ),
                        branch * p,
                    )
                else:
                    walk(history.extend(action, y), branch * p)

    for x in model.states[model.first_stage]:
        mass = weights.get(x, 0.0)
        if mass < STRUCTURAL_ZERO:
            continue
        walk(History.start(model.first_stage, x), mass)
    return OutcomeLaw(model, weights, masses)


def check_outcome(model: KilledModel, outcome: AugmentedOutcome) -> None:
    """Raise InconsistentOutcomeError unless the outcome fits the model."""
    m, n = model.first_stage, model.last_stage
    if outcome.is_killed:
        t = outcome.kill_stage
        if not m + 1 <= t <= n:
            raise InconsistentOutcomeError(f"kill stage {t} outside [{m + 1}, {n}]")
        if len(outcome.actions) != t - m:
            raise InconsistentOutcomeError("killed outcome has the wrong number of actions")
    elif len(outcome.actions) != n - m:
        raise InconsistentOutcomeError("surviving outcome does not span the horizon")
    for i, x in enumerate(outcome.states):
        stage = m + i
        if x not in model.states[stage] or model.is_killed_state(stage, x):
            raise InconsistentOutcomeError(f"state {x!r} is not a non-killed stage-{stage} state")
    for i, action in enumerate(outcome.actions):
        stage = m + 1 + i
        if action not in model.actions.get(stage, ()):
            raise InconsistentOutcomeError(f"action {action!r} is not a stage-{stage} action")
        if model.owner[stage][action] != outcome.states[i]:
            raise InconsistentOutcomeError(
                f"action {action!r} does not belong to state {outcome.states[i]!r}"
            )


def assess_outcome(model: KilledModel, outcome: AugmentedOutcome) -> float:
    """Total payoff of one outcome: running rewards plus terminal reward,
    or plus the crash penalty if the run was killed."""
    check_outcome(model, outcome)
    total = 0.0
    for i, action in enumerate(outcome.actions):
        total += model.reward[model.first_stage + 1 + i][action]
    if outcome.is_killed:
        return total + model.crash[outcome.kill_stage]
    return total + model.terminal[outcome.states[-1]]


def expectation(law: OutcomeLaw, value: Callable[[AugmentedOutcome], float]) -> float:
    """Mass-weighted sum of ``value`` over the law's support."""
    return law.expectation(value)


def assess_policy(
    model: KilledModel,
    start,
    policy,
    max_outcomes: int | None = None,
) -> float:
    """Expected outcome payoff under the law induced by (start, policy).

    ``start`` may be a single state id — a killed one returns its crash
    value directly, by convention — or a distribution mapping, which may
    put mass on the first-stage kill state (each start state contributes
    its own value, weighted linearly). None uses the model's initial
    distribution.
    """
    first = model.first_stage
    if isinstance(start, str) and model.is_killed_state(first, start):
        return model.crash[first]
    if start is None:
        if model.initial is None:
            raise ValidationError(
                [Violation("no-initial", "start", "model fixes no initial distribution")]
            )
        start = model.initial
    if isinstance(start, str):
        start = {start: 1.0}

    total_mass = sum(start.values())
    if abs(total_mass - 1.0) > SUM_TOLERANCE:
        raise ValidationError(
            [Violation("start-sum", "start", f"masses sum to {total_mass!r}, not 1")]
        )
    value = 0.0
    for x, mass in start.items():
        if not (mass >= 0.0):
            raise ValidationError([Violation("start-mass", f"state {x!r}", f"mass is {mass!r}")])
        if mass < STRUCTURAL_ZERO:
            continue
        if model.is_killed_state(first, x):
            value += mass * model.crash[first]
        else:
            law = enumerate_outcomes(model, x, policy, max_outcomes)
            value += mass * law.expectation(lambda o: assess_outcome(model, o))
    return value


# ---------------------------------------------------------------------------
# Marginals of the outcome law
# ---------------------------------------------------------------------------


def state_marginal(law: OutcomeLaw, stage: int) -> dict[str, float]:
    """Mass of being alive in each non-killed state at ``stage``."""
    first = law.model.first_stage
    offset = stage - first
    out: dict[str, float] = {}
    for outcome, mass in law.masses.items():
        if offset < len(outcome.states):
            x = outcome.states[offset]
            out[x] = out.get(x, 0.0) + mass
    return out


def action_marginal(law: OutcomeLaw, stage: int) -> dict[str, float]:
    """Mass of each action being the one taken at ``stage``."""
    first = law.model.first_stage
    offset = stage - first - 1
    out: dict[str, float] = {}
    for outcome, mass in law.masses.items():
        if offset < len(outcome.actions):
            a = outcome.actions[offset]
            out[a] = out.get(a, 0.0) + mass
    return out


def kill_marginal(law: OutcomeLaw) -> dict[int, float]:
    """Mass of being killed at each stage (stages with zero mass included)."""
    out = {t: 0.0 for t in law.model.action_stages}
    for outcome, mass in law.masses.items():
        if outcome.is_killed:
            out[outcome.kill_stage] += mass
    return out
