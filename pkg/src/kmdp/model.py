"""Domain types for finite-horizon decision models with per-stage kill states.

A model places a finite set of states on every stage of an integer horizon
[first_stage, last_stage] and a finite set of actions on every stage after
the first. Each action belongs to exactly one state of the previous stage
and carries a probability row over the next stage's states. One state per
stage (after the first) is the designated kill state: every action puts an
atom of mass on it, and a run that lands there stops immediately, collecting
a stage-dependent crash penalty instead of the terminal reward. By default
the crash penalty at stage t is minus the accumulated per-stage maxima of
the running reward, i.e. at least a total loss of everything that could have
been earned so far.

A validated model is immutable and safe to share across threads; every
operation in the package treats it as read-only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

from kmdp.errors import (
    HorizonError,
    ModelFormatError,
    StageError,
    ValidationError,
)

# Probability masses below this are treated as structural zeros when
# enumerating or sampling support; validation tolerances are separate.
STRUCTURAL_ZERO = 1e-15

# Tolerance for "sums to one" checks on probability rows and distributions.
SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Violation:
    """A single validation finding: what rule broke and where."""

    code: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass(frozen=True)
class History:
    """An alternating state/action prefix through non-killed states.

    ``states`` has one more element than ``actions``; ``first_stage`` is the
    stage of ``states[0]``. The final state sits at stage ``cursor`` and the
    next decision (if any) picks an action at stage ``cursor + 1``.
    """

    first_stage: int
    states: tuple[str, ...]
    actions: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError(
                "history needs exactly one more state than actions, got "
                f"{len(self.states)} states / {len(self.actions)} actions"
            )

    @classmethod
    def start(cls, stage: int, state: str) -> "History":
        return cls(stage, (state,))

    @property
    def state(self) -> str:
        return self.states[-1]

    @property
    def cursor(self) -> int:
        return self.first_stage + len(self.actions)

    @property
    def decision_stage(self) -> int:
        return self.cursor + 1

    def extend(self, action: str, state: str) -> "History":
        return History(self.first_stage, self.states + (state,), self.actions + (action,))

    def drop_first(self) -> "History":
        """The same path with its first state/action pair removed."""
        if not self.actions:
            raise StageError("cannot drop the first step of a bare history")
        return History(self.first_stage + 1, self.states[1:], self.actions[1:])

    def prepend(self, state: str, action: str) -> "History":
        return History(self.first_stage - 1, (state,) + self.states, (action,) + self.actions)

    def suffix_from(self, stage: int) -> "History":
        """The sub-history starting at ``stage`` (which must be on the path)."""
        offset = stage - self.first_stage
        if not 0 <= offset <= len(self.actions):
            raise StageError(f"stage {stage} not on history [{self.first_stage}, {self.cursor}]")
        return History(stage, self.states[offset:], self.actions[offset:])


@dataclass(frozen=True)
class AugmentedOutcome:
    """One full realization: a surviving path, or a prefix cut by a kill.

    Surviving: ``states`` runs over every stage and ``actions`` over every
    decision, so ``len(states) == len(actions) + 1``. Killed: the run ends
    with the action whose kill atom fired at ``kill_stage``, so the lists
    have equal length and the unreached kill state is implied rather than
    stored.
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    kill_stage: int | None = None

    def __post_init__(self):
        expected = len(self.actions) + (0 if self.kill_stage is not None else 1)
        if len(self.states) != expected or not self.states:
            raise ValueError("outcome state/action lengths are inconsistent")

    @classmethod
    def survived(cls, states, actions) -> "AugmentedOutcome":
        return cls(tuple(states), tuple(actions), None)

    @classmethod
    def killed(cls, states, actions, stage: int) -> "AugmentedOutcome":
        return cls(tuple(states), tuple(actions), stage)

    @property
    def is_killed(self) -> bool:
        return self.kill_stage is not None

    def path_text(self) -> str:
        """The trajectory as a space-joined alternating id sequence."""
        parts = [self.states[0]]
        for i, action in enumerate(self.actions):
            parts.append(action)
            if i + 1 < len(self.states):
                parts.append(self.states[i + 1])
        return " ".join(parts)


@dataclass(frozen=True)
class KilledModel:
    """The full model tuple; construct through build_model, not directly.

    All mappings are keyed by stage number where stage-indexed. ``initial``
    is None for models obtained by deleting leading stages, which fix no
    start distribution of their own.
    """

    first_stage: int
    last_stage: int
    states: Mapping[int, tuple[str, ...]]
    killed: Mapping[int, str | None]
    actions: Mapping[int, tuple[str, ...]]
    owner: Mapping[int, Mapping[str, str]]
    reward: Mapping[int, Mapping[str, float]]
    transition: Mapping[int, Mapping[str, Mapping[str, float]]]
    terminal: Mapping[str, float]
    crash: Mapping[int, float]
    initial: Mapping[str, float] | None = None
    allow_zero_kill: bool = False

    @property
    def epochs(self) -> int:
        return self.last_stage - self.first_stage

    @property
    def stages(self) -> range:
        return range(self.first_stage, self.last_stage + 1)

    @property
    def action_stages(self) -> range:
        return range(self.first_stage + 1, self.last_stage + 1)

    def non_killed(self, stage: int) -> tuple[str, ...]:
        dead = self.killed[stage]
        if dead is None:
            return self.states[stage]
        return tuple(x for x in self.states[stage] if x != dead)

    def is_killed_state(self, stage: int, state: str) -> bool:
        return self.killed[stage] == state

    @cached_property
    def _available(self) -> dict[int, dict[str, tuple[str, ...]]]:
        table: dict[int, dict[str, tuple[str, ...]]] = {}
        for t in self.action_stages:
            per_state: dict[str, list[str]] = {}
            for a in self.actions[t]:
                per_state.setdefault(self.owner[t][a], []).append(a)
            table[t] = {x: tuple(acts) for x, acts in per_state.items()}
        return table

    def available(self, stage: int, state: str) -> tuple[str, ...]:
        """Actions at ``stage`` owned by ``state``, in declared order."""
        return self._available.get(stage, {}).get(state, ())

    def row(self, stage: int, action: str) -> Mapping[str, float]:
        return self.transition[stage][action]

    def default_initial(self) -> dict[str, float]:
        """Point mass on the first non-killed state of the first stage."""
        return {self.non_killed(self.first_stage)[0]: 1.0}


# ---------------------------------------------------------------------------
# Construction from the declarative document format
# ---------------------------------------------------------------------------

_TOP_KEYS = {"horizon", "states", "actions", "crash", "mu", "allowZeroKill"}
_STATE_KEYS = {"id", "killed", "r"}
_ACTION_KEYS = {"id", "owner", "q", "p"}


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _check_keys(obj: Mapping, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ModelFormatError(f"{where}: unknown key {sorted(unknown)[0]!r}")


def build_model(doc: Mapping) -> KilledModel:
    """Build and validate a model from its document form.

    The document supplies the horizon, per-stage state lists (with kill
    flags and last-stage terminal rewards), per-stage action lists (owner,
    running reward, transition row), and optionally explicit crash values,
    an initial distribution, and the zero-kill relaxation flag. Omitted
    crash values are filled by the default formula; an omitted initial
    distribution becomes a point mass on the first non-killed start state.

    Raises ModelFormatError for structural problems and ValidationError
    (carrying the ordered violation list) for semantic ones.
    """
    if not isinstance(doc, Mapping):
        raise ModelFormatError("model document must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "model")
    for key in ("horizon", "states", "actions"):
        if key not in doc:
            raise ModelFormatError(f"model: missing required key {key!r}")

    horizon = doc["horizon"]
    if not isinstance(horizon, Mapping):
        raise ModelFormatError("horizon: expected an object with keys m and n")
    _check_keys(horizon, {"m", "n"}, "horizon")
    try:
        m, n = horizon["m"], horizon["n"]
    except KeyError as exc:
        raise ModelFormatError(f"horizon: missing key {exc.args[0]!r}") from None
    if isinstance(m, bool) or isinstance(n, bool) or not isinstance(m, int) or not isinstance(n, int):
        raise ModelFormatError("horizon: m and n must be integers")

    raw_states = doc["states"]
    if not isinstance(raw_states, list) or len(raw_states) != n - m + 1:
        raise ModelFormatError(
            f"states: expected {n - m + 1} per-stage lists for horizon [{m}, {n}]"
        )
    states: dict[int, tuple[str, ...]] = {}
    killed: dict[int, str | None] = {}
    terminal: dict[str, float] = {}
    for offset, stage_states in enumerate(raw_states):
        t = m + offset
        if not isinstance(stage_states, list):
            raise ModelFormatError(f"states[{offset}]: expected a list")
        ids: list[str] = []
        dead: str | None = None
        for i, entry in enumerate(stage_states):
            where = f"states[{offset}][{i}]"
            if not isinstance(entry, Mapping):
                raise ModelFormatError(f"{where}: expected an object")
            _check_keys(entry, _STATE_KEYS, where)
            sid = entry.get("id")
            if not isinstance(sid, str) or not sid:
                raise ModelFormatError(f"{where}: 'id' must be a non-empty string")
            is_dead = entry.get("killed", False)
            if not isinstance(is_dead, bool):
                raise ModelFormatError(f"{where}: 'killed' must be a boolean")
            if "r" in entry:
                if t != n:
                    raise ModelFormatError(f"{where}: 'r' is only allowed at the last stage")
                if is_dead:
                    raise ModelFormatError(
                        f"{where}: a killed state takes the crash penalty, not 'r'"
                    )
                terminal[sid] = _as_number(entry["r"], where)
            if is_dead:
                if dead is not None:
                    raise ModelFormatError(f"{where}: stage {t} declares two killed states")
                dead = sid
            ids.append(sid)
        states[t] = tuple(ids)
        killed[t] = dead

    raw_actions = doc["actions"]
    if not isinstance(raw_actions, list) or len(raw_actions) != n - m:
        raise ModelFormatError(f"actions: expected {n - m} per-stage lists for horizon [{m}, {n}]")
    actions: dict[int, tuple[str, ...]] = {}
    owner: dict[int, dict[str, str]] = {}
    reward: dict[int, dict[str, float]] = {}
    transition: dict[int, dict[str, dict[str, float]]] = {}
    for offset, stage_actions in enumerate(raw_actions):
        t = m + 1 + offset
        if not isinstance(stage_actions, list):
            raise ModelFormatError(f"actions[{offset}]: expected a list")
        ids = []
        owner[t], reward[t], transition[t] = {}, {}, {}
        for i, entry in enumerate(stage_actions):
            where = f"actions[{offset}][{i}]"
            if not isinstance(entry, Mapping):
                raise ModelFormatError(f"{where}: expected an object")
            _check_keys(entry, _ACTION_KEYS, where)
            for key in ("id", "owner", "q", "p"):
                if key not in entry:
                    raise ModelFormatError(f"{where}: missing key {key!r}")
            aid = entry["id"]
            if not isinstance(aid, str) or not aid:
                raise ModelFormatError(f"{where}: 'id' must be a non-empty string")
            if not isinstance(entry["owner"], str):
                raise ModelFormatError(f"{where}: 'owner' must be a string")
            row = entry["p"]
            if not isinstance(row, Mapping):
                raise ModelFormatError(f"{where}: 'p' must be an object of successor masses")
            ids.append(aid)
            owner[t][aid] = entry["owner"]
            reward[t][aid] = _as_number(entry["q"], f"{where}.q")
            transition[t][aid] = {
                y: _as_number(mass, f"{where}.p[{y!r}]") for y, mass in row.items()
            }
        actions[t] = tuple(ids)

    crash_doc = doc.get("crash", {})
    if not isinstance(crash_doc, Mapping):
        raise ModelFormatError("crash: expected an object keyed by killed-state id")
    crash_by_id = {k: _as_number(v, f"crash[{k!r}]") for k, v in crash_doc.items()}

    mu_doc = doc.get("mu")
    initial: dict[str, float] | None = None
    if mu_doc is not None:
        if not isinstance(mu_doc, Mapping):
            raise ModelFormatError("mu: expected an object of state masses")
        initial = {k: _as_number(v, f"mu[{k!r}]") for k, v in mu_doc.items()}

    allow_zero_kill = doc.get("allowZeroKill", False)
    if not isinstance(allow_zero_kill, bool):
        raise ModelFormatError("allowZeroKill: expected a boolean")

    # Crash values: explicit entries override the default cumulative formula.
    crash: dict[int, float] = {}
    leftovers = dict(crash_by_id)
    running = 0.0
    for t in range(m + 1, n + 1):
        if reward.get(t):
            running += max(reward[t].values())
        dead = killed.get(t)
        if dead is not None:
            crash[t] = leftovers.pop(dead) if dead in crash_by_id else -running
    if killed.get(m) is not None:
        dead = killed[m]
        if dead in crash_by_id:
            crash[m] = leftovers.pop(dead)
        # a first-stage kill state with no explicit value is caught by validate
    if leftovers:
        raise ModelFormatError(
            f"crash: {sorted(leftovers)[0]!r} is not a killed state of this model"
        )

    if initial is None and states.get(m):
        non_killed_first = [x for x in states[m] if x != killed.get(m)]
        if non_killed_first:
            initial = {non_killed_first[0]: 1.0}

    model = KilledModel(
        first_stage=m,
        last_stage=n,
        states=states,
        killed=killed,
        actions=actions,
        owner=owner,
        reward=reward,
        transition=transition,
        terminal=terminal,
        crash=crash,
        initial=initial,
        allow_zero_kill=allow_zero_kill,
    )
    problems = validate(model)
    if problems:
        raise ValidationError(problems)
    return model


def validate(model: KilledModel) -> list[Violation]:
    """Scan every model invariant; the returned order is deterministic.

    An empty list means the model is valid. Violations are data, not
    errors: callers decide whether to raise.
    """
    out: list[Violation] = []
    m, n = model.first_stage, model.last_stage
    if m >= n:
        out.append(Violation("horizon", "horizon", f"need first stage < last stage, got [{m}, {n}]"))
        return out

    seen_killed: dict[str, int] = {}
    for t in model.stages:
        ids = model.states.get(t, ())
        loc = f"stage {t}"
        if not ids:
            out.append(Violation("empty-stage", loc, "no states declared"))
            continue
        if len(set(ids)) != len(ids):
            dup = next(x for i, x in enumerate(ids) if x in ids[:i])
            out.append(Violation("duplicate-state", loc, f"state id {dup!r} repeats"))
        dead = model.killed.get(t)
        if dead is None and t > m:
            out.append(Violation("missing-kill-state", loc, "no killed state designated"))
        if dead is not None:
            if dead not in ids:
                out.append(Violation("kill-state-unknown", loc, f"killed state {dead!r} not in stage"))
            if dead in seen_killed:
                out.append(
                    Violation(
                        "kill-id-reused",
                        loc,
                        f"killed state id {dead!r} already used at stage {seen_killed[dead]}",
                    )
                )
            seen_killed.setdefault(dead, t)
            if t not in model.crash:
                out.append(Violation("missing-crash", loc, f"no crash value for {dead!r}"))
        if not model.non_killed(t):
            out.append(Violation("all-killed", loc, "stage has no non-killed states"))

    for t in model.action_stages:
        ids = model.actions.get(t, ())
        loc = f"stage {t}"
        if not ids:
            out.append(Violation("no-actions", loc, "no actions declared"))
            continue
        if len(set(ids)) != len(ids):
            dup = next(a for i, a in enumerate(ids) if a in ids[:i])
            out.append(Violation("duplicate-action", loc, f"action id {dup!r} repeats"))
        prev_states = set(model.states.get(t - 1, ()))
        prev_dead = model.killed.get(t - 1)
        for a in ids:
            who = model.owner[t].get(a)
            aloc = f"stage {t} action {a!r}"
            if who not in prev_states:
                out.append(Violation("owner-unknown", aloc, f"owner {who!r} not a stage-{t - 1} state"))
            elif who == prev_dead:
                out.append(Violation("owner-killed", aloc, "killed states carry no actions"))
        # every non-killed, non-terminal state must offer at least one action
        owned = set(model.owner[t].values())
        for x in model.non_killed(t - 1):
            if x not in owned:
                out.append(
                    Violation("state-without-actions", f"stage {t - 1} state {x!r}", "no available actions")
                )

    for t in model.action_stages:
        targets = model.states.get(t, ())
        target_set = set(targets)
        dead = model.killed.get(t)
        for a in model.actions.get(t, ()):
            loc = f"stage {t} action {a!r}"
            row = model.transition[t].get(a, {})
            bad_key = next((y for y in row if y not in target_set), None)
            if bad_key is not None:
                out.append(Violation("unknown-successor", loc, f"successor {bad_key!r} not a stage-{t} state"))
            total = 0.0
            for y in targets:
                mass = row.get(y, 0.0)
                if not (mass >= 0.0) or math.isinf(mass):
                    out.append(Violation("bad-mass", loc, f"mass for {y!r} is {mass!r}"))
                    continue
                total += mass
            if abs(total - 1.0) > SUM_TOLERANCE:
                out.append(Violation("row-sum", loc, f"masses sum to {total!r}, not 1"))
            if dead is not None and not model.allow_zero_kill:
                if not row.get(dead, 0.0) > 0.0:
                    out.append(Violation("zero-kill", loc, "kill mass must be strictly positive"))
            q = model.reward.get(t, {}).get(a)
            if q is None or not math.isfinite(q):
                out.append(Violation("bad-reward", loc, f"running reward is {q!r}"))

    for x in model.non_killed(n):
        if x not in model.terminal:
            out.append(Violation("missing-terminal", f"stage {n} state {x!r}", "no terminal reward"))
        elif not math.isfinite(model.terminal[x]):
            out.append(
                Violation("bad-terminal", f"stage {n} state {x!r}", f"terminal reward is {model.terminal[x]!r}")
            )
    for t, value in model.crash.items():
        if not math.isfinite(value):
            out.append(Violation("bad-crash", f"stage {t}", f"crash value is {value!r}"))

    if model.initial is not None:
        first = set(model.non_killed(m)) if model.states.get(m) else set()
        total = 0.0
        for x, mass in model.initial.items():
            loc = f"initial state {x!r}"
            if x not in first:
                out.append(Violation("initial-unknown", loc, "not a non-killed first-stage state"))
                continue
            if not (mass >= 0.0) or math.isinf(mass):
                out.append(Violation("bad-initial-mass", loc, f"mass is {mass!r}"))
                continue
            total += mass
        if abs(total - 1.0) > SUM_TOLERANCE:
            out.append(Violation("initial-sum", "initial distribution", f"masses sum to {total!r}, not 1"))
    return out


# ---------------------------------------------------------------------------
# Derivation and interval restriction
# ---------------------------------------------------------------------------


def derived_model(model: KilledModel) -> KilledModel:
    """Delete the first stage's states and actions, keeping everything else.

    The result fixes no initial distribution: callers evaluating it supply
    their own start weights (typically a transition row of the parent,
    whose kill-atom mass is honoured by assess_policy).
    """
    if model.last_stage <= model.first_stage + 1:
        raise HorizonError(
            f"model on [{model.first_stage}, {model.last_stage}] has no derived model"
        )
    return restrict_stages(model, model.first_stage + 1, model.last_stage)


def restrict_stages(
    model: KilledModel,
    start: int,
    stop: int,
    terminal: Mapping[str, float] | None = None,
) -> KilledModel:
    """The model cut down to stages [start, stop].

    ``terminal`` replaces the terminal reward at ``stop``; when omitted it
    is the original terminal reward (only possible for stop == last_stage).
    The initial distribution is kept only when ``start`` is the original
    first stage.
    """
    m, n = model.first_stage, model.last_stage
    if not (m <= start < stop <= n):
        raise StageError(f"[{start}, {stop}] is not a sub-horizon of [{m}, {n}]")
    if terminal is None:
        if stop != n:
            raise StageError(f"restriction to interior stage {stop} needs an explicit terminal reward")
        terminal = model.terminal
    missing = [x for x in model.states[stop] if x != model.killed[stop] and x not in terminal]
    if missing:
        raise ValidationError(
            [Violation("missing-terminal", f"stage {stop} state {missing[0]!r}", "no terminal reward")]
        )
    cut = KilledModel(
        first_stage=start,
        last_stage=stop,
        states={t: model.states[t] for t in range(start, stop + 1)},
        killed={t: model.killed[t] for t in range(start, stop + 1)},
        actions={t: model.actions[t] for t in range(start + 1, stop + 1)},
        owner={t: model.owner[t] for t in range(start + 1, stop + 1)},
        reward={t: model.reward[t] for t in range(start + 1, stop + 1)},
        transition={t: model.transition[t] for t in range(start + 1, stop + 1)},
        terminal=dict(terminal),
        crash={t: v for t, v in model.crash.items() if start <= t <= stop},
        initial=model.initial if start == m else None,
        allow_zero_kill=model.allow_zero_kill,
    )
    return cut


# ---------------------------------------------------------------------------
# Document round-trip
# ---------------------------------------------------------------------------


def dump_model(model: KilledModel) -> dict:
    """The document form of a model; build_model(dump_model(m)) reproduces m
    (an absent initial distribution reloads as the default point mass)."""
    doc: dict = {"horizon": {"m": model.first_stage, "n": model.last_stage}}
    states = []
    for t in model.stages:
        stage_entries = []
        for x in model.states[t]:
            entry: dict = {"id": x}
            if model.killed[t] == x:
                entry["killed"] = True
            elif t == model.last_stage:
                entry["r"] = model.terminal[x]
            stage_entries.append(entry)
        states.append(stage_entries)
    doc["states"] = states
    doc["actions"] = [
        [
            {
                "id": a,
                "owner": model.owner[t][a],
                "q": model.reward[t][a],
                "p": dict(model.transition[t][a]),
            }
            for a in model.actions[t]
        ]
        for t in model.action_stages
    ]
    crash = {model.killed[t]: value for t, value in model.crash.items()}
    if crash:
        doc["crash"] = crash
    if model.initial is not None:
        doc["mu"] = dict(model.initial)
    if model.allow_zero_kill:
        doc["allowZeroKill"] = True
    return doc


def load_model(path) -> KilledModel:
    """Read and build a model from a JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    return build_model(doc)
