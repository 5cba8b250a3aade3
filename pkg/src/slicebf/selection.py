"""Screening and forward stepwise covariate selection via the Bayes factor.

Screening keeps covariates whose unconditional Bayes factor exceeds a
threshold.  Stepwise iterations then condition on the configurations of
everything selected so far (encoded as one super variable), pick the
candidate with the largest conditional Bayes factor, and accept it while
a stop rule holds: either a fixed Bayes-factor threshold, or a
permutation p-value against the null distribution of the maximum
candidate Bayes factor under response shuffling within the conditioning
groups.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import SlicedDataset, encode_super_variable
from .engine import Hyperparams, bf_dynamic_program
from .errors import InputError
from .permutation import PermutationPlan, add_one_pvalue, group_permutation

__all__ = [
    "SelectionConfig",
    "ScreenedCovariate",
    "StepRecord",
    "SelectionTrace",
    "MaxBfNullResult",
    "screen",
    "stepwise",
    "select",
    "max_bf_null",
    "KASS_RAFTERY_VERY_STRONG",
]

#: conventional "very strong evidence" Bayes-factor threshold
KASS_RAFTERY_VERY_STRONG = 150.0


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs of the screening + stepwise procedure.

    ``stop_rule`` is ``"permutation"`` (accept while the max-statistic
    permutation p-value is below ``p_cutoff``; the default) or ``"bf"``
    (accept while the conditional Bayes factor exceeds ``bf_threshold``).
    ``max_super_levels`` caps the conditioning super variable: steps that
    would exceed it are recorded as capacity stops.  ``screen_pvalue``
    additionally attaches a scan-wide permutation p-value to the first
    selected covariate (costs a full scan of permutations).
    """

    screen_threshold: float = 10.0
    stop_rule: str = "permutation"
    p_cutoff: float = 0.05
    bf_threshold: float = KASS_RAFTERY_VERY_STRONG
    permutations: int = 1000
    max_steps: int | None = None
    max_super_levels: int = 64
    seed: int | None = None
    jobs: int = 1
    screen_pvalue: bool = False

    def __post_init__(self):
        if not self.screen_threshold > 0:
            raise InputError("screen_threshold must be positive")
        if self.stop_rule not in ("permutation", "bf"):
            raise InputError(f"unknown stop rule {self.stop_rule!r}")
        if not 0 < self.p_cutoff < 1:
            raise InputError("p_cutoff must lie in (0, 1)")
        if self.permutations < 1:
            raise InputError("permutations must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise InputError("max_steps must be >= 1")
        if self.max_super_levels < 2:
            raise InputError("max_super_levels must be >= 2")


@dataclass(frozen=True)
class ScreenedCovariate:
    index: int
    label: str | None
    log_bf: float
    rank: int
    admitted: bool


@dataclass(frozen=True)
class StepRecord:
    index: int
    label: str | None
    log_bf: float
    p_value: float | None
    z_levels: int
    decision: str  # "accepted" | "rejected" | "capacity"


@dataclass(frozen=True)
class SelectionTrace:
    """Complete record of one screening + stepwise run."""

    screened: tuple[ScreenedCovariate, ...]
    steps: tuple[StepRecord, ...]
    final_set: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "screened": [
                {
                    "index": s.index,
                    "label": s.label,
                    "log_bf": s.log_bf,
                    "rank": s.rank,
                    "admitted": s.admitted,
                }
                for s in self.screened
            ],
            "steps": [
                {
                    "index": s.index,
                    "label": s.label,
                    "log_bf": s.log_bf,
                    "p_value": s.p_value,
                    "z_levels": s.z_levels,
                    "decision": s.decision,
                }
                for s in self.steps
            ],
            "selected": list(self.final_set),
        }


def _check_shared_ranking(datasets) -> None:
    if not datasets:
        raise InputError("need at least one covariate dataset")
    first = datasets[0]
    for d in datasets[1:]:
        if d.n != first.n or not np.array_equal(d.y, first.y):
            raise InputError("covariate datasets must share the same response")


def _unconditional(d: SlicedDataset) -> SlicedDataset:
    if d.n_z_levels == 1:
        return d
    return d.with_groups(np.zeros(d.n, dtype=np.int64), 1)


def screen(
    datasets, hyper: Hyperparams, config: SelectionConfig = SelectionConfig()
) -> list[ScreenedCovariate]:
    """Unconditional Bayes factor per covariate; admits those strictly above
    the screening threshold."""
    _check_shared_ranking(datasets)
    log_b0 = math.log(config.screen_threshold)
    log_bfs = [bf_dynamic_program(_unconditional(d), hyper).log_bf for d in datasets]
    order = sorted(range(len(datasets)), key=lambda j: (-log_bfs[j], j))
    ranks = {j: r + 1 for r, j in enumerate(order)}
    return [
        ScreenedCovariate(
            index=j,
            label=datasets[j].name,
            log_bf=log_bfs[j],
            rank=ranks[j],
            admitted=log_bfs[j] > log_b0,
        )
        for j in range(len(datasets))
    ]


@dataclass(frozen=True)
class MaxBfNullResult:
    null_log_bf: np.ndarray
    pvalue: float | None


def max_bf_null(
    datasets,
    z: np.ndarray,
    n_z_levels: int,
    hyper: Hyperparams,
    plan: PermutationPlan,
    observed_log_bf: float | None = None,
) -> MaxBfNullResult:
    """Null sample of max_j log BF(X_j | Y, Z) under response shuffling
    within the conditioning groups.

    One coherent position permutation per replicate is applied to every
    candidate simultaneously, preserving the dependence structure among
    candidates.  Returns the add-one p-value when an observed value is
    supplied.
    """
    if not datasets:
        raise InputError("candidate set must be nonempty")
    z = np.asarray(z, dtype=np.int64)
    conditioned = [d.with_groups(z, n_z_levels) for d in datasets]
    rngs = plan.child_rngs()

    def one(rng: np.random.Generator) -> float:
        perm = group_permutation(z, rng)
        return max(
            bf_dynamic_program(d.with_x(d.x[perm]), hyper).log_bf for d in conditioned
        )

    if plan.jobs > 1:
        with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
            null = np.fromiter(pool.map(one, rngs), dtype=np.float64, count=len(rngs))
    else:
        null = np.fromiter((one(r) for r in rngs), dtype=np.float64, count=len(rngs))
    pvalue = None if observed_log_bf is None else add_one_pvalue(observed_log_bf, null)
    return MaxBfNullResult(null_log_bf=null, pvalue=pvalue)


def stepwise(
    screened,
    datasets,
    hyper: Hyperparams,
    config: SelectionConfig = SelectionConfig(),
) -> SelectionTrace:
    """Forward stepwise selection over the screened covariates.

    The strongest screened covariate is always taken first (its admission
    was decided by the screening threshold); later candidates are gated
    by the configured stop rule.  Argmax ties break toward the smallest
    covariate index.  Deterministic given (data, hyper, config).
    """
    _check_shared_ranking(datasets)
    admitted = [s for s in screened if s.admitted]
    if not admitted:
        return SelectionTrace(screened=tuple(screened), steps=(), final_set=())

    step_seeds = np.random.SeedSequence(config.seed).generate_state(len(admitted) + 2)

    def plan_for(step: int) -> PermutationPlan:
        return PermutationPlan(
            replicates=config.permutations,
            seed=int(step_seeds[step]),
            scheme="y_within_z",
            jobs=config.jobs,
        )

    first = min(admitted, key=lambda s: (-s.log_bf, s.index))
    steps: list[StepRecord] = []
    p_first = None
    if config.screen_pvalue:
        zeros = np.zeros(datasets[0].n, dtype=np.int64)
        p_first = max_bf_null(
            datasets, zeros, 1, hyper, plan_for(0), observed_log_bf=first.log_bf
        ).pvalue
    steps.append(
        StepRecord(
            index=first.index,
            label=datasets[first.index].name,
            log_bf=first.log_bf,
            p_value=p_first,
            z_levels=datasets[first.index].n_x_levels,
            decision="accepted",
        )
    )
    selected = [first.index]
    pool = [s.index for s in admitted]
    z = datasets[first.index].x
    z_levels = datasets[first.index].n_x_levels

    step = 1
    while True:
        if config.max_steps is not None and len(selected) >= config.max_steps:
            break
        candidates = [j for j in pool if j not in selected]
        if not candidates:
            break
        cond_log_bf = {
            j: bf_dynamic_program(datasets[j].with_groups(z, z_levels), hyper).log_bf
            for j in candidates
        }
        j_t = min(candidates, key=lambda j: (-cond_log_bf[j], j))
        observed = cond_log_bf[j_t]
        new_levels = z_levels * datasets[j_t].n_x_levels

        if new_levels > config.max_super_levels:
            steps.append(
                StepRecord(j_t, datasets[j_t].name, observed, None, new_levels, "capacity")
            )
            break

        p_value = None
        if config.stop_rule == "permutation":
            result = max_bf_null(
                [datasets[j] for j in candidates],
                z,
                z_levels,
                hyper,
                plan_for(step),
                observed_log_bf=observed,
            )
            p_value = result.pvalue
            accept = p_value < config.p_cutoff
        else:
            accept = observed > math.log(config.bf_threshold)

        steps.append(
            StepRecord(
                j_t,
                datasets[j_t].name,
                observed,
                p_value,
                new_levels,
                "accepted" if accept else "rejected",
            )
        )
        if not accept:
            break
        selected.append(j_t)
        z, z_levels = encode_super_variable(
            [z, datasets[j_t].x], [z_levels, datasets[j_t].n_x_levels]
        )
        step += 1

    return SelectionTrace(
        screened=tuple(screened), steps=tuple(steps), final_set=tuple(selected)
    )


def select(
    datasets, hyper: Hyperparams = Hyperparams(), config: SelectionConfig = SelectionConfig()
) -> SelectionTrace:
    """Screen then run stepwise selection; empty result when nothing screens in."""
    screened = screen(datasets, hyper, config)
    return stepwise(screened, datasets, hyper, config)
