"""Command-line front end.

Subcommands: validate | solve | eval | enumerate | simulate | check | derive.
Reports are JSON with sorted keys, and every file-consuming report embeds
the artifact version and the SHA-256 of its inputs, so identical invocations
produce byte-identical output. The environment variable KMDP_MAX_OUTCOMES
overrides the exact-enumeration cap.

Exit codes:
    0  success (for check: every instance passed)
    1  model/policy violations, solver preconditions, or a failing check
    2  malformed input file (bad JSON or schema)
    3  unknown check name
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import kmdp
from kmdp.errors import (
    ExplosionError,
    HorizonError,
    KmdpError,
    ModelFormatError,
    ValidationError,
)
from kmdp.measure import assess_outcome, assess_policy, enumerate_outcomes
from kmdp.model import build_model, derived_model, dump_model
from kmdp.policies import policy_from_doc, policy_to_doc, validate_policy
from kmdp.sim import estimate_value
from kmdp.solver import backward_induction, extract_simple_policy
from kmdp.verify import CHECK_NAMES, SizeCaps, run_check


def _read_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None


def _digest(path: str) -> str:
    with open(path, "rb") as handle:
        return hashlib.sha256(handle.read()).hexdigest()


def _inputs_block(**paths: str) -> dict:
    return {name: {"path": path, "sha256": _digest(path)} for name, path in paths.items()}


def _emit(doc: dict, output: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _load_model(path: str):
    return build_model(_read_json(path))


def _load_policy_checked(path: str, model):
    policy = policy_from_doc(_read_json(path))
    problems = validate_policy(model, policy)
    if problems:
        raise ValidationError(problems)
    return policy


def _parse_slacks(text: str | None, model) -> dict[int, float]:
    stages = list(model.action_stages)
    if not text:
        return {t: 0.0 for t in stages}
    parts = [p.strip() for p in text.split(",")]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"--slack expects comma-separated numbers, got {text!r}") from None
    if len(values) == 1:
        values = values * len(stages)
    if len(values) != len(stages):
        raise ValueError(f"--slack needs 1 or {len(stages)} values, got {len(values)}")
    return dict(zip(stages, values))


def _stage_table(values_by_stage) -> dict:
    return {str(stage): dict(table) for stage, table in values_by_stage.items()}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        _load_model(args.model)
    except ValidationError as exc:
        for violation in exc.violations:
            print(violation)
        return 1
    print("ok")
    return 0


def cmd_solve(args) -> int:
    model = _load_model(args.model)
    slacks = _parse_slacks(args.slack, model)
    induction = backward_induction(model)
    extraction = extract_simple_policy(model, slacks, induction)
    report = {
        "version": kmdp.__version__,
        "inputs": _inputs_block(model=args.model),
        "slacks": {str(t): v for t, v in slacks.items()},
        "certificate": extraction.certificate,
        "values": _stage_table({t: vf.values for t, vf in induction.values.items()}),
        "actionValues": _stage_table({t: aa.values for t, aa in induction.action_values.items()}),
        "witnesses": _stage_table(
            {t: vf.argmax for t, vf in induction.values.items() if vf.argmax is not None}
        ),
        "policy": policy_to_doc(extraction.policy),
    }
    _emit(report, args.output)
    return 0


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    policy = _load_policy_checked(args.policy, model)
    report = {
        "version": kmdp.__version__,
        "inputs": _inputs_block(model=args.model, policy=args.policy),
    }
    if args.per_state:
        report["values"] = {
            x: assess_policy(model, x, policy) for x in model.non_killed(model.first_stage)
        }
    else:
        report["value"] = assess_policy(model, args.start, policy)
    _emit(report, args.output)
    return 0


def cmd_enumerate(args) -> int:
    model = _load_model(args.model)
    policy = _load_policy_checked(args.policy, model)
    law = enumerate_outcomes(model, args.start, policy)
    if args.format == "csv":
        lines = ["outcome-kind,path,kill-stage,mass,assessment"]
        for outcome, mass in law.masses.items():
            kind = "killed" if outcome.is_killed else "survived"
            stage = "" if outcome.kill_stage is None else str(outcome.kill_stage)
            lines.append(
                f"{kind},{outcome.path_text()},{stage},{mass!r},{assess_outcome(model, outcome)!r}"
            )
        text = "\n".join(lines) + "\n"
        if args.output:
            with open(args.output, "w", encoding="utf-8") as handle:
                handle.write(text)
        else:
            sys.stdout.write(text)
        return 0
    report = {
        "version": kmdp.__version__,
        "inputs": _inputs_block(model=args.model, policy=args.policy),
        "totalMass": law.total_mass(),
        "outcomes": [
            {
                "kind": "killed" if outcome.is_killed else "survived",
                "path": outcome.path_text(),
                "killStage": outcome.kill_stage,
                "mass": mass,
                "assessment": assess_outcome(model, outcome),
            }
            for outcome, mass in law.masses.items()
        ],
    }
    _emit(report, args.output)
    return 0


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    policy = _load_policy_checked(args.policy, model)
    result = estimate_value(
        model, args.start, policy, args.samples, args.seed, backend=args.backend
    )
    report = {
        "version": kmdp.__version__,
        "inputs": _inputs_block(model=args.model, policy=args.policy),
        "result": result.to_doc(),
    }
    _emit(report, args.output)
    return 0


def cmd_check(args) -> int:
    if args.name not in CHECK_NAMES:
        print(f"unknown check {args.name!r}; known: {', '.join(CHECK_NAMES)}", file=sys.stderr)
        return 3
    caps = SizeCaps(
        max_epochs=args.max_epochs,
        max_states=args.max_states,
        max_actions=args.max_actions,
    )
    report = run_check(args.name, seed=args.seed, count=args.count, caps=caps)
    doc = {"version": kmdp.__version__, "report": report.to_doc()}
    _emit(doc, args.output)
    return 0 if report.passed else 1


def cmd_derive(args) -> int:
    model = _load_model(args.model)
    _emit(dump_model(derived_model(model)), args.output)
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kmdp",
        description="Solve, evaluate, simulate, and verify kill-state decision models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file against every invariant")
    p.add_argument("model")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("solve", help="backward induction plus policy extraction")
    p.add_argument("model")
    p.add_argument("--slack", help="per-stage slack list (or one value for all stages)")
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("eval", help="exact policy value by path enumeration")
    p.add_argument("model")
    p.add_argument("--policy", required=True)
    p.add_argument("--start", help="start state id (default: the model's initial distribution)")
    p.add_argument("--per-state", action="store_true", help="one value per start state")
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("enumerate", help="dump the full outcome law")
    p.add_argument("model")
    p.add_argument("--policy", required=True)
    p.add_argument("--start")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_enumerate)

    p = sub.add_parser("simulate", help="seeded Monte Carlo value estimate")
    p.add_argument("model")
    p.add_argument("--policy", required=True)
    p.add_argument("--start")
    p.add_argument("--samples", "-n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("auto", "compiled", "python"), default="auto")
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("check", help="run a named structural check on seeded random models")
    p.add_argument("name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--max-epochs", type=int, default=4)
    p.add_argument("--max-states", type=int, default=4)
    p.add_argument("--max-actions", type=int, default=3)
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("derive", help="emit the model with its first stage deleted")
    p.add_argument("model")
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_derive)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        for violation in exc.violations:
            print(violation, file=sys.stderr)
        return 1
    except (HorizonError, ExplosionError, KmdpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
