"""Bayes-factor dependence tests between categorical covariates and a
continuous response, built on marginal likelihoods averaged over
contiguous slicings of the response ranking."""

__version__ = "0.1.0"

from .dataset import (
    PrefixCountTable,
    SlicedDataset,
    encode_super_variable,
    load_columns,
    load_table,
    prefix_counts,
    read_delimited,
)
from .engine import (
    BfResult,
    Hyperparams,
    SlicingScheme,
    bf_bruteforce,
    bf_dynamic_program,
    log_psi_segment,
    mi_plugin,
)
from .errors import CapacityError, DegenerateDataError, InputError, SliceBfError
from .permutation import (
    EmpiricalFormulaConstants,
    PermutationPlan,
    add_one_pvalue,
    calibrate_constants,
    conditional_shuffle,
    fit_formula,
    formula_pvalue,
    lookup_constants,
    mc_pvalue,
)
from .baselines import (
    TestReport,
    anderson_darling_2sample,
    anova_one_way,
    anova_two_way,
    ks_two_sample,
    welch_t,
    wilcoxon_rank_sum,
)
from .selection import (
    SelectionConfig,
    SelectionTrace,
    max_bf_null,
    screen,
    select,
    stepwise,
)
from .simulation import (
    RocCurve,
    ScenarioSpec,
    gen_conditional,
    gen_qtl_markers,
    gen_two_sample,
    roc,
    simulate_scores,
)

__all__ = [name for name in dir() if not name.startswith("_")]
