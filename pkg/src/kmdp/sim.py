"""Seeded Monte Carlo sampling of outcomes and value estimation.

Sampling follows the counter-based stream contract documented in
kmdp._kernels._pykernels: trajectory i under a seed has its own substream,
so results are independent of execution order and identical seeds give
bit-identical results. Tabular policies (simple/Markov) run through the
batch kernel — compiled when built, pure Python otherwise, both producing
the same bits. General policies sample one trajectory at a time in Python
under the exact same stream contract, so a tabular policy and its general
wrapper generate identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from kmdp import _kernels
from kmdp._kernels import _pykernels
from kmdp.errors import ValidationError
from kmdp.measure import _resolve_start, assess_outcome, policy_distribution
from kmdp.model import STRUCTURAL_ZERO, AugmentedOutcome, History, KilledModel
from kmdp.policies import MarkovPolicy, SimplePolicy, validate_policy

MASK64 = _pykernels.MASK64


class TrajectoryStream:
    """The random substream of one trajectory: draws are counted, uniform
    in [0, 1), and fully determined by (seed, trajectory index)."""

    def __init__(self, seed: int, index: int):
        self.seed = seed & MASK64
        self.index = index
        self._key = _pykernels.stream_key(self.seed, index)
        self._draws = 0

    def uniform(self) -> float:
        value = _pykernels.stream_uniform(self._key, self._draws)
        self._draws += 1
        return value


def _pick(candidates: list, cumulative: list, u: float):
    """Index of the first cumulative mass strictly above ``u``; the last
    candidate backstops float roundoff in the total."""
    for i, edge in enumerate(cumulative):
        if u < edge:
            return candidates[i]
    return candidates[-1]


def sample_outcome(model: KilledModel, start, policy, stream: TrajectoryStream) -> AugmentedOutcome:
    """Draw one augmented outcome.

    Consumes one uniform for the start state and two per epoch (action,
    then successor) even when the choice is deterministic, matching the
    batch kernel draw-for-draw.
    """
    weights = _resolve_start(model, start)
    first = model.first_stage

    candidates, cumulative, total = [], [], 0.0
    for x in model.states[first]:
        mass = weights.get(x, 0.0)
        if mass < STRUCTURAL_ZERO:
            continue
        total += mass
        candidates.append(x)
        cumulative.append(total)
    state = _pick(candidates, cumulative, stream.uniform())

    history = History.start(first, state)
    for stage in range(first + 1, model.last_stage + 1):
        dist = policy_distribution(model, policy, history)
        candidates, cumulative, total = [], [], 0.0
        for a in model.available(stage, history.state):
            mass = dist.get(a, 0.0)
            if mass < STRUCTURAL_ZERO:
                continue
            total += mass
            candidates.append(a)
            cumulative.append(total)
        action = _pick(candidates, cumulative, stream.uniform())

        row = model.transition[stage][action]
        dead = model.killed[stage]
        candidates, cumulative, total = [], [], 0.0
        for y in model.states[stage]:
            mass = row.get(y, 0.0)
            if mass < STRUCTURAL_ZERO:
                continue
            total += mass
            candidates.append(y)
            cumulative.append(total)
        successor = _pick(candidates, cumulative, stream.uniform())

        if successor == dead:
            return AugmentedOutcome.killed(history.states, history.actions + (action,), stage)
        history = history.extend(action, successor)
    return AugmentedOutcome.survived(history.states, history.actions)


# ---------------------------------------------------------------------------
# Batch estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    """Summary of one estimation run. ``mean`` is the plain average of the
    sampled outcome payoffs; ``kill_rate`` maps each stage to the fraction
    of trajectories killed there."""

    samples: int
    mean: float
    deviation: float
    standard_error: float
    kill_rate: Mapping[int, float]
    seed: int
    backend: str

    def to_doc(self) -> dict:
        return {
            "samples": self.samples,
            "mean": self.mean,
            "deviation": self.deviation,
            "standardError": self.standard_error,
            "killRate": {str(t): rate for t, rate in self.kill_rate.items()},
            "seed": self.seed,
            "backend": self.backend,
        }


def _compile_tables(model: KilledModel, weights: Mapping[str, float], policy):
    """Flatten model, start weights, and a tabular policy into the kernel's
    index arrays. Cumulative masses are accumulated in declared order with
    the same float additions the per-outcome sampler performs."""
    problems = validate_policy(model, policy)
    if problems:
        raise ValidationError(problems)
    first = model.first_stage
    epochs = model.epochs

    index: dict[tuple[int, str], int] = {}
    counter = 0
    base = []
    for offset in range(epochs + 1):
        base.append(counter)
        stage = first + offset
        for x in model.non_killed(stage):
            index[(stage, x)] = counter
            counter += 1
    last_base = base[epochs]

    mu_cum, mu_idx, total = [], [], 0.0
    for x in model.states[first]:
        mass = weights.get(x, 0.0)
        if mass < STRUCTURAL_ZERO:
            continue
        total += mass
        mu_cum.append(total)
        mu_idx.append(index[(first, x)])

    action_index: dict[tuple[int, str], int] = {}
    act_q: list[float] = []
    act_ptr = [0]
    suc_cum: list[float] = []
    suc_idx: list[int] = []
    for stage in model.action_stages:
        dead = model.killed[stage]
        for a in model.actions[stage]:
            action_index[(stage, a)] = len(act_q)
            act_q.append(model.reward[stage][a])
            row = model.transition[stage][a]
            running = 0.0
            for y in model.states[stage]:
                mass = row.get(y, 0.0)
                if mass < STRUCTURAL_ZERO:
                    continue
                running += mass
                suc_cum.append(running)
                suc_idx.append(-1 if y == dead else index[(stage, y)])
            act_ptr.append(len(suc_cum))

    pol_ptr = [0]
    pol_cum: list[float] = []
    pol_act: list[int] = []
    simple = isinstance(policy, SimplePolicy)
    for offset in range(epochs):
        stage = first + offset
        nxt = stage + 1
        for x in model.non_killed(stage):
            if simple:
                pol_cum.append(1.0)
                pol_act.append(action_index[(nxt, policy.rules[nxt][x])])
            else:
                dist = policy.rules[nxt][x]
                running = 0.0
                for a in model.available(nxt, x):
                    mass = dist.get(a, 0.0)
                    if mass < STRUCTURAL_ZERO:
                        continue
                    running += mass
                    pol_cum.append(running)
                    pol_act.append(action_index[(nxt, a)])
            pol_ptr.append(len(pol_cum))

    crash_by_epoch = [0.0] * (epochs + 1)
    for epoch in range(1, epochs + 1):
        crash_by_epoch[epoch] = model.crash[first + epoch]
    terminal_local = [model.terminal[x] for x in model.non_killed(model.last_stage)]

    as_f8 = lambda xs: np.asarray(xs, dtype=np.float64)
    as_i8 = lambda xs: np.asarray(xs, dtype=np.int64)
    return {
        "epochs": epochs,
        "mu_cum": as_f8(mu_cum),
        "mu_idx": as_i8(mu_idx),
        "pol_ptr": as_i8(pol_ptr),
        "pol_cum": as_f8(pol_cum),
        "pol_act": as_i8(pol_act),
        "act_q": as_f8(act_q),
        "act_ptr": as_i8(act_ptr),
        "suc_cum": as_f8(suc_cum),
        "suc_idx": as_i8(suc_idx),
        "crash_by_epoch": as_f8(crash_by_epoch),
        "terminal_local": as_f8(terminal_local),
        "last_base": last_base,
    }


def sample_batch(model: KilledModel, start, policy, samples: int, seed: int, backend: str = "auto"):
    """Per-trajectory payoffs and kill stages as arrays.

    Tabular policies go through the selected kernel backend; general
    policies fall back to per-outcome sampling under the same stream
    contract. Kill stages are 0 for surviving runs, the absolute stage
    number otherwise.
    """
    weights = _resolve_start(model, start)
    seed = seed & MASK64
    if isinstance(policy, (SimplePolicy, MarkovPolicy)):
        tables = _compile_tables(model, weights, policy)
        kernel = _kernels.get_kernel(backend)
        payoffs, kill_epochs = kernel.simulate_batch(
            seed,
            samples,
            tables["epochs"],
            tables["mu_cum"],
            tables["mu_idx"],
            tables["pol_ptr"],
            tables["pol_cum"],
            tables["pol_act"],
            tables["act_q"],
            tables["act_ptr"],
            tables["suc_cum"],
            tables["suc_idx"],
            tables["crash_by_epoch"],
            tables["terminal_local"],
            tables["last_base"],
        )
        kill_stages = np.where(kill_epochs > 0, kill_epochs + model.first_stage, 0)
        used = "compiled" if getattr(kernel, "IS_COMPILED", False) else "python"
        return payoffs, kill_stages, used

    payoffs = np.empty(samples, dtype=np.float64)
    kill_stages = np.zeros(samples, dtype=np.int64)
    for i in range(samples):
        outcome = sample_outcome(model, weights, policy, TrajectoryStream(seed, i))
        payoffs[i] = assess_outcome(model, outcome)
        if outcome.is_killed:
            kill_stages[i] = outcome.kill_stage
    return payoffs, kill_stages, "python"


def estimate_value(
    model: KilledModel,
    start,
    policy,
    samples: int,
    seed: int,
    backend: str = "auto",
) -> SimulationResult:
    """Unbiased Monte Carlo estimate of the policy's expected payoff.

    Deterministic for fixed (model, start, policy, samples, seed): the
    stream contract pins every trajectory and the reductions below are
    order-stable.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples for a deviation estimate")
    payoffs, kill_stages, used = sample_batch(model, start, policy, samples, seed, backend)
    mean = float(np.mean(payoffs))
    deviation = float(np.std(payoffs, ddof=1))
    kill_rate = {
        t: float(np.count_nonzero(kill_stages == t)) / samples for t in model.action_stages
    }
    return SimulationResult(
        samples=samples,
        mean=mean,
        deviation=deviation,
        standard_error=deviation / math.sqrt(samples),
        kill_rate=kill_rate,
        seed=seed & MASK64,
        backend=used,
    )
