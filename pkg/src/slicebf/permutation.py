"""Permutation nulls, Monte Carlo p-values, and the power-law tail formula.

The null for the conditional test shuffles covariate values within each
group, which breaks any covariate-response dependence while preserving
per-group compositions and the group-response relationship.  Shuffling
the responses within groups is the same operation on the ranked data:
either way, the covariate codes occupying each group's rank positions
get uniformly rearranged, so one primitive (:func:`group_permutation`)
serves both schemes.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import SlicedDataset
from .engine import BfResult, Hyperparams, bf_dynamic_program
from .errors import InputError

__all__ = [
    "PermutationPlan",
    "group_permutation",
    "conditional_shuffle",
    "mc_null_sample",
    "mc_pvalue",
    "McResult",
    "add_one_pvalue",
    "EmpiricalFormulaConstants",
    "formula_pvalue",
    "fit_formula",
    "builtin_constants",
    "lookup_constants",
    "config_frequencies",
    "load_calibration_table",
    "save_calibration_entry",
    "calibrate_constants",
    "CalibrationCell",
]

DEFAULT_REPLICATES = 1000
CALIBRATION_ENV_VAR = "SLICEBF_CALIBRATION"


@dataclass(frozen=True)
class PermutationPlan:
    """How to build a permutation null.

    ``scheme`` is ``"x_within_z"`` (shuffle covariate values within each
    group; the test null) or ``"y_within_z"`` (shuffle responses within
    each group; the stepwise null).  Each replicate draws its random
    state from an independently spawned seed stream, so results do not
    depend on execution order and replicate r is individually
    reproducible.
    """

    replicates: int = DEFAULT_REPLICATES
    seed: int | None = None
    scheme: str = "x_within_z"
    jobs: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise InputError("replicates must be >= 1")
        if self.scheme not in ("x_within_z", "y_within_z"):
            raise InputError(f"unknown shuffle scheme {self.scheme!r}")
        if self.jobs < 1:
            raise InputError("jobs must be >= 1")

    def child_rngs(self) -> list[np.random.Generator]:
        seq = np.random.SeedSequence(self.seed)
        return [np.random.default_rng(s) for s in seq.spawn(self.replicates)]


def group_permutation(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A permutation of positions that only moves indices within each group.

    Applying it to any per-observation array shuffles that array's
    values uniformly at random within every ``{i : z[i] == j}``,
    independently across groups.
    """
    perm = np.arange(z.shape[0])
    for j in np.unique(z):
        idx = np.nonzero(z == j)[0]
        perm[idx] = idx[rng.permutation(idx.shape[0])]
    return perm


def conditional_shuffle(d: SlicedDataset, rng) -> SlicedDataset:
    """Covariate values shuffled within each group; response and groups untouched."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return d.with_x(d.x[group_permutation(d.z, rng)])


def mc_null_sample(
    d: SlicedDataset, hyper: Hyperparams, plan: PermutationPlan
) -> np.ndarray:
    """Log Bayes factors of ``plan.replicates`` shuffled copies of ``d``.

    Both plan schemes reduce to the same rank-space operation (see module
    docstring), so the null sample is scheme-independent here; the field
    records intent for provenance.
    """
    rngs = plan.child_rngs()

    def one(rng: np.random.Generator) -> float:
        return bf_dynamic_program(conditional_shuffle(d, rng), hyper).log_bf

    if plan.jobs > 1:
        with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
            return np.fromiter(pool.map(one, rngs), dtype=np.float64, count=len(rngs))
    return np.fromiter((one(r) for r in rngs), dtype=np.float64, count=len(rngs))


def add_one_pvalue(observed: float, null_sample: np.ndarray) -> float:
    """Valid Monte Carlo p-value (r+1)/(B+1), counting ties as exceedances."""
    null_sample = np.asarray(null_sample)
    return (1 + int(np.count_nonzero(null_sample >= observed))) / (null_sample.size + 1)


@dataclass(frozen=True)
class McResult:
    """Monte Carlo p-value plus the null sample behind it (for diagnostics)."""

    pvalue: float
    null_log_bf: np.ndarray


def mc_pvalue(
    observed_log_bf: float,
    d: SlicedDataset,
    hyper: Hyperparams,
    plan: PermutationPlan,
) -> McResult:
    """Permutation p-value for an observed log Bayes factor on ``d``."""
    null = mc_null_sample(d, hyper, plan)
    return McResult(pvalue=add_one_pvalue(observed_log_bf, null), null_log_bf=null)


# --------------------------------------------------------------------------
# empirical tail formula: Pr(BF > b) ~ gamma / (b**alpha * n**beta)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalFormulaConstants:
    """Fitted constants of the null-tail power law, with the marginal
    composition they were fitted under recorded in ``context``."""

    alpha: float
    beta: float
    gamma: float
    context: str = ""
    residual_rms: float | None = None

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise InputError("formula constants must be positive")


def formula_pvalue(b: float, n: int, constants: EmpiricalFormulaConstants) -> float:
    """Approximate null exceedance probability Pr(BF > b) at sample size n."""
    if b < 1:
        raise InputError("cutoff b must be >= 1")
    if n < 1:
        raise InputError("n must be >= 1")
    value = constants.gamma / (b ** constants.alpha * n ** constants.beta)
    return min(value, 1.0)


def fit_formula(grid, context: str = "", weights=None) -> EmpiricalFormulaConstants:
    """Least-squares fit of log(rate) = log(gamma) - alpha log(b) - beta log(n).

    ``grid`` is an iterable of (b, n, rate) cells with rates strictly
    inside (0, 1); both b and n must vary across cells.  Optional
    ``weights`` (one per cell) give a weighted fit; Monte Carlo callers
    pass exceedance counts, whose inverse approximates the log-rate
    variance.
    """
    cells = [(float(b), float(n), float(r)) for b, n, r in grid]
    if len(cells) < 3:
        raise InputError("need at least 3 grid cells")
    bs, ns, rates = map(np.array, zip(*cells))
    if np.any(rates <= 0) or np.any(rates >= 1):
        raise InputError("rates must lie strictly in (0, 1)")
    if np.unique(bs).size < 2 or np.unique(ns).size < 2:
        raise InputError("degenerate design: need variation in both b and n")
    design = np.column_stack([np.ones_like(bs), -np.log(bs), -np.log(ns)])
    target = np.log(rates)
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=np.float64))
        if w.shape != target.shape or np.any(w <= 0):
            raise InputError("weights must be positive, one per grid cell")
        coef, *_ = np.linalg.lstsq(design * w[:, None], target * w, rcond=None)
    else:
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return EmpiricalFormulaConstants(
        alpha=float(coef[1]),
        beta=float(coef[2]),
        gamma=float(math.exp(coef[0])),
        context=context,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


# --------------------------------------------------------------------------
# calibration table: constants keyed by test shape and composition
# --------------------------------------------------------------------------

def config_frequencies(d: SlicedDataset) -> tuple[float, ...]:
    """Observed (group, level) configuration frequencies, group-major."""
    flat = d.z * d.n_x_levels + d.x
    counts = np.bincount(flat, minlength=d.n_z_levels * d.n_x_levels)
    return tuple((counts / d.n).tolist())


def _entry_key(n_x_levels, n_z_levels, freq, lambda0, alpha0):
    return (
        int(n_x_levels),
        int(n_z_levels),
        tuple(round(float(f), 2) for f in freq),
        round(float(lambda0), 6),
        round(float(alpha0), 6),
    )


#: constants shipped with the package (balanced compositions, lambda0 = alpha0 = 1)
_BUILTIN = {
    _entry_key(2, 1, (0.5, 0.5), 1.0, 1.0): EmpiricalFormulaConstants(
        alpha=1.12, beta=0.60, gamma=0.76, context="unconditional p=0.50"
    ),
    _entry_key(2, 2, (0.25, 0.25, 0.25, 0.25), 1.0, 1.0): EmpiricalFormulaConstants(
        alpha=1.07, beta=0.86, gamma=3.8, context="conditional f=(0.25,0.25,0.25,0.25)"
    ),
}


def builtin_constants() -> dict:
    return dict(_BUILTIN)


def default_calibration_path() -> str:
    return os.environ.get(CALIBRATION_ENV_VAR, "slicebf_calibration.json")


def load_calibration_table(path=None) -> dict:
    """Constants from a calibration JSON file, keyed like the built-ins."""
    path = path or default_calibration_path()
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    table = {}
    for entry in doc.get("entries", []):
        key = _entry_key(
            entry["n_x_levels"], entry["n_z_levels"], entry["freq"],
            entry["lambda0"], entry["alpha0"],
        )
        table[key] = EmpiricalFormulaConstants(
            alpha=entry["alpha"], beta=entry["beta"], gamma=entry["gamma"],
            context=entry.get("context", ""),
            residual_rms=entry.get("residual_rms"),
        )
    return table


def save_calibration_entry(
    path, n_x_levels, n_z_levels, freq, hyper: Hyperparams,
    constants: EmpiricalFormulaConstants,
) -> None:
    """Insert or replace one entry in the calibration JSON file."""
    doc = {"schema": 1, "entries": []}
    if path and os.path.exists(path):
        with open(path) as fh:
            doc = json.load(fh)
    key = _entry_key(n_x_levels, n_z_levels, freq, hyper.lambda0, hyper.alpha0)
    kept = [
        e for e in doc.get("entries", [])
        if _entry_key(e["n_x_levels"], e["n_z_levels"], e["freq"], e["lambda0"], e["alpha0"]) != key
    ]
    kept.append({
        "n_x_levels": int(n_x_levels),
        "n_z_levels": int(n_z_levels),
        "freq": [round(float(f), 2) for f in freq],
        "lambda0": hyper.lambda0,
        "alpha0": hyper.alpha0,
        "alpha": constants.alpha,
        "beta": constants.beta,
        "gamma": constants.gamma,
        "context": constants.context,
        "residual_rms": constants.residual_rms,
    })
    doc["entries"] = kept
    doc["schema"] = 1
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def lookup_constants(
    d: SlicedDataset, hyper: Hyperparams, table: dict | None = None
) -> EmpiricalFormulaConstants | None:
    """Constants matching a dataset's shape and composition, or None.

    Frequencies are rounded to 2 decimals for matching.  User-calibrated
    entries take precedence over the shipped ones.
    """
    key = _entry_key(
        d.n_x_levels, d.n_z_levels, config_frequencies(d), hyper.lambda0, hyper.alpha0
    )
    if table and key in table:
        return table[key]
    return _BUILTIN.get(key)


# --------------------------------------------------------------------------
# calibration runs: estimate exceedance rates over a (b, n) grid and fit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationCell:
    b: float
    n: int
    rate: float
    exceedances: int
    replicates: int


def _null_base_dataset(
    kind: str, n: int, p: float, freq, mu: float, rng: np.random.Generator
) -> SlicedDataset:
    """A dataset whose conditional shuffle realizes the target null.

    The shuffle only keeps per-group covariate compositions and the
    group-response arrangement, so covariate values can be laid out
    deterministically; the response keeps any group effect (``mu``) so
    the conditional null retains the group-response association.
    """
    if kind == "unconditional":
        ones = int(round(n * p))
        x = np.zeros(n, dtype=np.int64)
        x[:ones] = 1
        return SlicedDataset.from_values(rng.normal(size=n), x, n_x_levels=2)
    if kind == "conditional":
        freq = np.asarray(freq, dtype=np.float64)
        if freq.size != 4 or abs(freq.sum() - 1.0) > 1e-9:
            raise InputError("conditional calibration needs a 4-entry frequency vector summing to 1")
        counts = np.round(freq * n).astype(int)
        counts[-1] = n - counts[:-1].sum()
        if counts.min() < 1:
            raise InputError("frequency vector leaves an empty configuration")
        z = np.repeat([0, 0, 1, 1], counts)
        x = np.repeat([0, 1, 0, 1], counts)
        y = mu * z + rng.normal(size=n)
        return SlicedDataset.from_values(y, x, z, n_x_levels=2, n_z_levels=2)
    raise InputError(f"unknown calibration kind {kind!r}")


def calibrate_constants(
    kind: str = "unconditional",
    n_grid=(100, 200, 400, 800),
    b_grid=(2.0, 5.0, 10.0, 20.0),
    shuffles: int = 5000,
    p: float = 0.5,
    freq=(0.25, 0.25, 0.25, 0.25),
    hyper: Hyperparams = Hyperparams(),
    seed: int | None = 0,
    mu: float = 0.4,
    min_exceedances: int = 5,
    jobs: int = 1,
) -> tuple[EmpiricalFormulaConstants, list[CalibrationCell]]:
    """Estimate null exceedance rates on a (b, n) grid and fit the power law.

    Cells with fewer than ``min_exceedances`` hits are dropped from the
    fit (their log-rates are dominated by Monte Carlo noise) but still
    reported.  The default cutoff grid starts at b = 2: the power law
    describes the tail, and cutoffs at the bulk boundary (b near 1) sit
    systematically above it and would bias the fit.
    """
    if len(n_grid) < 2 or len(b_grid) < 1:
        raise InputError("need at least 2 sample sizes and 1 cutoff")
    seq = np.random.SeedSequence(seed)
    cells = []
    for n, child in zip(n_grid, seq.spawn(len(n_grid))):
        rng = np.random.default_rng(child)
        base = _null_base_dataset(kind, int(n), p, freq, mu, rng)
        plan = PermutationPlan(replicates=shuffles, seed=int(rng.integers(2**31)), jobs=jobs)
        null = mc_null_sample(base, hyper, plan)
        for b in b_grid:
            hits = int(np.count_nonzero(null > math.log(b)))
            cells.append(CalibrationCell(float(b), int(n), hits / shuffles, hits, shuffles))
    context = (
        f"{kind} p={p:.2f}" if kind == "unconditional"
        else f"{kind} f=({','.join(f'{f:.2f}' for f in freq)})"
    )
    usable = [
        c for c in cells if c.exceedances >= min_exceedances and c.rate < 1.0
    ]
    constants = fit_formula(
        [(c.b, c.n, c.rate) for c in usable],
        context=context,
        weights=[c.exceedances for c in usable],
    )
    return constants, cells
