"""Synthetic data generators and ROC evaluation for the power studies.

Two-sample scenarios (s1-s4) vary mean, scale, or mixture shape of the
response between two balanced covariate groups; conditional cases
(case1-case6) add a binary group variable with additive, interaction,
heavy-tailed, or heteroscedastic response effects.  ``qtl`` markers are
a first-order flip chain so that neighbors are correlated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .baselines import (
    anova_one_way,
    anova_two_way,
    anderson_darling_2sample,
    ks_two_sample,
    welch_t,
    wilcoxon_rank_sum,
)
from .dataset import SlicedDataset
from .engine import Hyperparams, bf_dynamic_program
from .errors import InputError

__all__ = [
    "ScenarioSpec",
    "RocCurve",
    "gen_two_sample",
    "gen_conditional",
    "gen_dataset",
    "null_spec",
    "gen_qtl_markers",
    "roc",
    "method_score",
    "simulate_scores",
    "ScoreTable",
    "TWO_SAMPLE_FAMILIES",
    "CONDITIONAL_FAMILIES",
    "TWO_SAMPLE_METHODS",
    "CONDITIONAL_METHODS",
]

TWO_SAMPLE_FAMILIES = ("s1", "s2", "s3", "s4")
CONDITIONAL_FAMILIES = ("case1", "case2", "case3", "case4", "case5", "case6")

#: default parameters per family
_DEFAULTS = {
    "s1": {"mu": 0.1},
    "s2": {"sigma": 1.2},
    "s3": {"mu": 1.2, "theta": 0.5},
    "s4": {"mu": 1.2, "theta": 0.9},
    "case1": {"mu": 0.2, "p0": 0.5},
    "case2": {"mu": 0.2, "p0": 0.5},
    "case3": {"mu": 0.4, "p0": 0.5},
    "case4": {"mu": 0.4, "p0": 0.5},
    "case5": {"mu": 0.2, "gamma": 0.2, "p0": 0.5},
    "case6": {"mu": 0.2, "gamma": 0.2, "p0": 0.5},
}


@dataclass(frozen=True)
class ScenarioSpec:
    """A scenario family plus its parameters; unset ones take the
    family's defaults."""

    family: str
    n: int = 400
    seed: int | np.random.SeedSequence | None = None
    mu: float | None = None
    sigma: float | None = None
    theta: float | None = None
    gamma: float | None = None
    p0: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise InputError("n must be >= 1")
        for name in ("theta", "p0"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise InputError(f"{name} must lie in [0, 1]")

    def param(self, name: str, fallback: float = 0.0) -> float:
        v = getattr(self, name)
        if v is not None:
            return v
        return _DEFAULTS.get(self.family, {}).get(name, fallback)


def null_spec(spec: ScenarioSpec) -> ScenarioSpec:
    """The matched null embedding of a scenario (no covariate effect)."""
    if spec.family == "s2":
        return replace(spec, sigma=1.0)
    return replace(spec, mu=0.0, gamma=0.0)


def gen_two_sample(spec: ScenarioSpec) -> SlicedDataset:
    """Two-sample scenario data: balanced binary covariate, scenario response."""
    if spec.family not in TWO_SAMPLE_FAMILIES:
        raise InputError(f"unknown two-sample family {spec.family!r}")
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    x = rng.integers(0, 2, size=n)
    mu = spec.param("mu")
    if spec.family == "s1":
        y = rng.normal(mu * (2 * x - 1), 1.0)
    elif spec.family == "s2":
        sigma = spec.param("sigma", 1.2)
        y = rng.normal(0.0, np.where(x == 1, sigma, 1.0))
    else:
        theta = spec.param("theta")
        sign = np.where(rng.random(n) < theta, 1.0, -1.0)
        y0 = rng.normal(sign * mu, 1.0)
        sd1 = np.sqrt(1.0 + 4.0 * theta * (1.0 - theta) * mu**2)
        y1 = rng.normal((2.0 * theta - 1.0) * mu, sd1, size=n)
        y = np.where(x == 1, y1, y0)
    return SlicedDataset.from_values(y, x, n_x_levels=2, name=spec.family)


def gen_conditional(spec: ScenarioSpec) -> SlicedDataset:
    """Conditional-case data: binary group, group-linked binary covariate,
    case-specific response."""
    if spec.family not in CONDITIONAL_FAMILIES:
        raise InputError(f"unknown conditional family {spec.family!r}")
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    mu = spec.param("mu")
    gamma = spec.param("gamma")
    p0 = spec.param("p0", 0.5)
    z = rng.integers(0, 2, size=n)
    p_one = np.where(z == 0, p0, 1.0 - p0)
    x = (rng.random(n) < p_one).astype(np.int64)
    if spec.family in ("case3", "case4"):
        eps = rng.standard_cauchy(n)
    elif spec.family == "case5":
        eps = rng.normal(0.0, 1.0, size=n) * (1.0 + gamma * x)
    elif spec.family == "case6":
        eps = rng.normal(0.0, 1.0, size=n) * (1.0 + gamma * z * x)
    else:
        eps = rng.normal(0.0, 1.0, size=n)
    if spec.family in ("case2", "case4", "case6"):
        y = mu * z * x + eps
    else:
        y = mu * z + mu * x + eps
    return SlicedDataset.from_values(
        y, x, z, n_x_levels=2, n_z_levels=2, name=spec.family
    )


def gen_dataset(spec: ScenarioSpec) -> SlicedDataset:
    if spec.family in TWO_SAMPLE_FAMILIES:
        return gen_two_sample(spec)
    if spec.family in CONDITIONAL_FAMILIES:
        return gen_conditional(spec)
    raise InputError(f"unknown scenario family {spec.family!r}")


def gen_qtl_markers(
    m: int, n: int, flip_prob: float = 0.1, seed: int | None = None
) -> np.ndarray:
    """Binary marker matrix (n, m) from a first-order flip chain.

    Marker 0 is fair-coin per individual; marker j+1 copies marker j and
    flips with probability ``flip_prob``, giving adjacent correlation of
    about 1 - 2*flip_prob.
    """
    if m < 2:
        raise InputError("need at least 2 markers")
    if not 0 < flip_prob <= 0.5:
        raise InputError("flip_prob must lie in (0, 0.5]")
    rng = np.random.default_rng(seed)
    markers = np.empty((n, m), dtype=np.int64)
    markers[:, 0] = rng.integers(0, 2, size=n)
    flips = rng.random((n, m - 1)) < flip_prob
    for j in range(1, m):
        markers[:, j] = markers[:, j - 1] ^ flips[:, j - 1]
    return markers


# --------------------------------------------------------------------------
# ROC evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    """(false positive rate, true positive rate) pairs swept over score
    thresholds, plus the trapezoid area under them."""

    points: np.ndarray  # (k, 2), columns fpr, tpr
    auc: float


def roc(scores_h1, scores_h0) -> RocCurve:
    """ROC of "flag when score >= threshold" over all observed thresholds.

    Larger score means more significant; callers normalize their
    statistics accordingly (log Bayes factor, |t|, -log p, ...).
    """
    h1 = np.asarray(scores_h1, dtype=np.float64)
    h0 = np.asarray(scores_h0, dtype=np.float64)
    if h1.size == 0 or h0.size == 0:
        raise InputError("both score lists must be nonempty")
    thresholds = np.unique(np.concatenate([h1, h0]))[::-1]
    tpr = [np.count_nonzero(h1 >= t) / h1.size for t in thresholds]
    fpr = [np.count_nonzero(h0 >= t) / h0.size for t in thresholds]
    pts = np.vstack([[0.0, 0.0], np.column_stack([fpr, tpr])])
    if pts[-1, 0] != 1.0 or pts[-1, 1] != 1.0:
        pts = np.vstack([pts, [1.0, 1.0]])
    auc = float(np.trapezoid(pts[:, 1], pts[:, 0]))
    return RocCurve(points=pts, auc=auc)


# --------------------------------------------------------------------------
# scoring harness shared by the CLI and the power studies
# --------------------------------------------------------------------------

TWO_SAMPLE_METHODS = ("bf", "bf2", "t", "ranksum", "ks", "ad", "anova")
CONDITIONAL_METHODS = ("bf", "bf2", "anova2")


def method_score(method: str, d: SlicedDataset, hyper: Hyperparams) -> float:
    """One method's evidence score on a dataset; larger = more significant."""
    if method == "bf":
        return bf_dynamic_program(d, hyper).log_bf
    if method == "bf2":
        return bf_dynamic_program(d, Hyperparams(2.0, hyper.lambda0)).log_bf
    if method == "anova2":
        return anova_two_way(d.y, d.x, d.z).statistic
    if method == "anova":
        return anova_one_way(d.y, d.x).statistic
    a, b = d.y[d.x == 0], d.y[d.x == 1]
    if method == "t":
        return abs(welch_t(a, b).statistic)
    if method == "ranksum":
        r = wilcoxon_rank_sum(a, b)
        return abs(r.statistic - a.size * (a.size + b.size + 1) / 2.0)
    if method == "ks":
        return ks_two_sample(a, b).statistic
    if method == "ad":
        return anderson_darling_2sample(a, b).statistic
    raise InputError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ScoreTable:
    """Per-replicate scores under the scenario and its null embedding."""

    spec: ScenarioSpec
    methods: tuple[str, ...]
    replicates: int
    scores: dict  # method -> {"H1": np.ndarray, "H0": np.ndarray}

    def aucs(self) -> dict:
        return {
            m: roc(self.scores[m]["H1"], self.scores[m]["H0"]).auc for m in self.methods
        }

    def rows(self):
        """(method, replicate, hypothesis, score) rows in a stable order."""
        for m in self.methods:
            for hyp in ("H1", "H0"):
                for r, s in enumerate(self.scores[m][hyp]):
                    yield m, r, hyp, float(s)


def simulate_scores(
    spec: ScenarioSpec,
    methods,
    replicates: int,
    hyper: Hyperparams = Hyperparams(),
    seed: int | None = None,
) -> ScoreTable:
    """Draw ``replicates`` scenario/null dataset pairs and score each method.

    The seed argument overrides ``spec.seed``; replicate r has its own
    spawned stream so results do not depend on evaluation order.
    """
    methods = tuple(methods)
    base = null_spec(spec)
    seq = np.random.SeedSequence(spec.seed if seed is None else seed)
    children = seq.spawn(replicates)
    scores = {m: {"H1": np.empty(replicates), "H0": np.empty(replicates)} for m in methods}
    for r, child in enumerate(children):
        s1, s0 = child.spawn(2)
        d1 = gen_dataset(_with_seed(spec, s1))
        d0 = gen_dataset(_with_seed(base, s0))
        for m in methods:
            scores[m]["H1"][r] = method_score(m, d1, hyper)
            scores[m]["H0"][r] = method_score(m, d0, hyper)
    return ScoreTable(spec=spec, methods=methods, replicates=replicates, scores=scores)


def _with_seed(spec: ScenarioSpec, seed_seq: np.random.SeedSequence) -> ScenarioSpec:
    # Generators accept anything np.random.default_rng accepts.
    return replace(spec, seed=seed_seq)
