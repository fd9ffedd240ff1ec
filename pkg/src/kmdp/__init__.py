"""Finite-horizon decision processes with per-stage kill states.

Exact policy evaluation over the augmented path space, backward-induction
solving, extraction of simple policies with slack certificates, seeded
Monte Carlo estimation, and an executable battery of structural checks.
"""

from kmdp.errors import (
    ExplosionError,
    HorizonError,
    InconsistentOutcomeError,
    InternalError,
    KmdpError,
    MissingBranchError,
    ModelFormatError,
    StageError,
    ValidationError,
)
from kmdp.measure import (
    OutcomeLaw,
    action_marginal,
    assess_outcome,
    assess_policy,
    enumerate_outcomes,
    expectation,
    kill_marginal,
    state_marginal,
)
from kmdp.model import (
    AugmentedOutcome,
    History,
    KilledModel,
    Violation,
    build_model,
    derived_model,
    dump_model,
    load_model,
    restrict_stages,
    validate,
)
from kmdp.policies import (
    GeneralPolicy,
    MarkovPolicy,
    SimplePolicy,
    combine,
    dominate_simple,
    dump_policy,
    load_policy,
    markovize,
    policy_from_doc,
    policy_to_doc,
    product,
    restrict_after_first,
    splice,
    validate_policy,
)
from kmdp.sim import SimulationResult, TrajectoryStream, estimate_value, sample_outcome
from kmdp.solver import (
    ActionAssessment,
    ExtractionResult,
    InductionResult,
    ValueFunction,
    assess_actions,
    backward_induction,
    dp_value,
    extract_simple_policy,
    first_step_value,
    maximize_actions,
    policy_backup,
)
from kmdp.verify import (
    CheckReport,
    SizeCaps,
    brute_force_value,
    replay_counterexample,
    run_check,
)

__version__ = "0.1.0"
