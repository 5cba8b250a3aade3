"""Bayes factor for (conditional) dependence via slicing-averaged marginal likelihoods.

The statistic compares two inverse models for a categorical covariate X
given groups Z along the response ranking: under the null, X | Z is one
multinomial per group; under the alternative, X | Z additionally depends
on which contiguous slice of the ranking the observation falls in.  With
a symmetric Dirichlet prior on every multinomial, each contiguous
segment s..t of the ranking has a closed-form marginal likelihood

    psi(s, t) = prod_j [ Gamma(a) / Gamma(a + n_j) *
                         prod_k Gamma(n_jk + a/K) / Gamma(a/K) ]

where a is the Dirichlet total mass, K the number of covariate levels,
and n_jk the segment count for group j and level k.  Averaging the
per-slicing Bayes factor over all contiguous slicings, weighted by an
independent-boundary prior (probability pi0 per admissible gap), gives

    BF = sum_schemes [ prod_slices psi(slice) / psi(1, n) ]
                     * pi0^(slices-1) * (1-pi0)^(n-slices)

The sum over the 2^(gaps) schemes collapses to an O(n^2) forward
recursion over the start of the last slice; everything is carried in
log space.  Slice boundaries are restricted to tie-block boundaries of
the response, so tied observations can never be separated.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp

from .dataset import SlicedDataset
from .errors import CapacityError, InputError

__all__ = [
    "Hyperparams",
    "BfResult",
    "SlicingScheme",
    "log_psi_segment",
    "bf_dynamic_program",
    "bf_bruteforce",
    "mi_plugin",
]

#: enumeration guard for the brute-force reference path
MAX_BRUTEFORCE_GAPS = 20


@dataclass(frozen=True)
class Hyperparams:
    """Prior settings: Dirichlet mass ``alpha0`` and boundary-prior exponent ``lambda0``.

    The per-gap boundary probability is tied to the sample size,
    ``pi0 = 1 / (1 + n**lambda0)``, i.e. log-odds(pi0) = -lambda0*log(n).
    Defaults are alpha0 = 1, lambda0 = 1.
    """

    alpha0: float = 1.0
    lambda0: float = 1.0

    def __post_init__(self):
        if not (self.alpha0 > 0):
            raise InputError("alpha0 must be positive")
        if not math.isfinite(self.lambda0):
            raise InputError("lambda0 must be finite")

    def pi0(self, n: int) -> float:
        """Boundary probability for a ranking of n observations."""
        return 1.0 / (1.0 + float(n) ** self.lambda0)

    def log_pi0(self, n: int) -> float:
        return -math.log1p(float(n) ** self.lambda0)

    def log_one_minus_pi0(self, n: int) -> float:
        return -math.log1p(float(n) ** -self.lambda0)


@dataclass(frozen=True)
class BfResult:
    """A computed Bayes factor with the settings that produced it."""

    log_bf: float
    hyper: Hyperparams
    n: int
    n_x_levels: int
    n_z_levels: int
    elapsed: float

    @property
    def bf(self) -> float:
        return math.exp(self.log_bf)


@dataclass(frozen=True)
class SlicingScheme:
    """A contiguous slicing of the ranking, as the 1-based positions where
    slices after the first begin.  Boundaries must fall on tie-block starts."""

    boundaries: tuple[int, ...]

    @property
    def n_slices(self) -> int:
        return len(self.boundaries) + 1

    def slice_bounds(self, n: int) -> list[tuple[int, int]]:
        """Half-open 0-based [start, stop) intervals of the slices."""
        edges = [1, *self.boundaries, n + 1]
        if list(self.boundaries) != sorted(set(self.boundaries)):
            raise InputError("boundaries must be strictly increasing")
        if self.boundaries and not (1 < self.boundaries[0] and self.boundaries[-1] <= n):
            raise InputError("boundaries must lie in 2..n")
        return [(a - 1, b - 1) for a, b in zip(edges[:-1], edges[1:])]


def log_psi_segment(counts, hyper: Hyperparams) -> float:
    """Log marginal likelihood of one segment's covariate counts.

    ``counts`` is a (n_z_levels, n_x_levels) array of nonnegative
    segment counts n_jk.  Groups with zero observations contribute 0.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2:
        raise InputError("counts must be 2-d (groups x levels)")
    if counts.size and counts.min() < 0:
        raise InputError("counts must be nonnegative")
    a = hyper.alpha0
    k = counts.shape[1]
    n_j = counts.sum(axis=1)
    return float(
        np.sum(gammaln(a) - gammaln(a + n_j))
        + np.sum(gammaln(counts + a / k) - gammaln(a / k))
    )


# --------------------------------------------------------------------------
# dynamic program
# --------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _dp_log_bf(obs_cum, cell_ptr, cell_idx, cell_delta, row_ptr, row_idx, row_delta,
               n_cells, n_rows, tbl_x, tbl_a, log_pi0, log_q):
    """Forward recursion over the start of the last slice, in log space.

    Blocks are tie blocks of the ranking; obs_cum[b] is the number of
    observations in blocks 1..b.  For each end block t the inner loop
    walks the start block s downward, maintaining the segment counts of
    s..t incrementally through per-block CSR deltas so that log psi is
    updated in O(cells touched) instead of recomputed.  tbl_x[c] and
    tbl_a[c] are the count-indexed log-gamma contributions of a cell
    (group, level) and of a group total; both are 0 at c = 0, so empty
    cells and empty groups drop out for free.

    g[t] accumulates, over all slicings of blocks 1..t, the product of
    slice psi values times pi0 per boundary and (1-pi0) per within-slice
    gap; the result is log g[m] - log psi(1..n).  A one-pass streaming
    log-sum-exp keeps the recursion O(1) memory per term.
    """
    m = obs_cum.shape[0] - 1
    logg = np.empty(m + 1)
    logg[0] = 0.0
    cnt_cell = np.zeros(n_cells, dtype=np.int64)
    cnt_row = np.zeros(n_rows, dtype=np.int64)
    log_psi_full = 0.0
    for t in range(1, m + 1):
        psi = 0.0
        best = -np.inf
        acc = 0.0
        for s in range(t, 0, -1):
            # fold block s into the running segment counts
            for i in range(cell_ptr[s - 1], cell_ptr[s]):
                c = cell_idx[i]
                old = cnt_cell[c]
                new = old + cell_delta[i]
                psi += tbl_x[new] - tbl_x[old]
                cnt_cell[c] = new
            for i in range(row_ptr[s - 1], row_ptr[s]):
                r = row_idx[i]
                old = cnt_row[r]
                new = old + row_delta[i]
                psi += tbl_a[new] - tbl_a[old]
                cnt_row[r] = new
            val = logg[s - 1] + psi + (obs_cum[t] - obs_cum[s - 1] - 1) * log_q
            if s > 1:
                val += log_pi0
            if val <= best:
                diff = val - best
                if diff > -46.0:  # exp underflows past ~1e-20 relative
                    acc += math.exp(diff)
            else:
                acc = acc * math.exp(best - val) + 1.0
                best = val
        logg[t] = best + math.log(acc)
        if t == m:
            log_psi_full = psi
        cnt_cell[:] = 0
        cnt_row[:] = 0
    return logg[m] - log_psi_full


@lru_cache(maxsize=32)
def _gamma_tables(n: int, alpha0: float, n_x_levels: int):
    """Count-indexed log-gamma tables, zeroed at count 0."""
    c = np.arange(n + 1, dtype=np.float64)
    a = alpha0
    tbl_x = gammaln(c + a / n_x_levels) - gammaln(a / n_x_levels)
    tbl_a = gammaln(a) - gammaln(c + a)
    return tbl_x, tbl_a


def _block_counts(d: SlicedDataset) -> np.ndarray:
    """Per-tie-block (group, level) counts, shape (n_blocks, J*K)."""
    jk = d.n_z_levels * d.n_x_levels
    sizes = np.diff(np.concatenate(([0], d.block_bounds)))
    block_of = np.repeat(np.arange(d.n_blocks, dtype=np.int64), sizes)
    flat = d.z * d.n_x_levels + d.x
    return np.bincount(block_of * jk + flat, minlength=d.n_blocks * jk).reshape(
        d.n_blocks, jk
    )


def _block_csr(per_block: np.ndarray):
    """CSR (ptr, idx, delta) of the nonzero entries of each block's counts."""
    blk, col = np.nonzero(per_block)
    ptr = np.zeros(per_block.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(blk, minlength=per_block.shape[0]), out=ptr[1:])
    return ptr, col.astype(np.int64), per_block[blk, col].astype(np.int64)


def bf_dynamic_program(d: SlicedDataset, hyper: Hyperparams = Hyperparams()) -> BfResult:
    """Exact log Bayes factor, summed over all admissible slicings in O(n^2).

    Time O(n^2 * |Z| * |X|) worst case, memory O(n * |Z| * |X|).  Pure
    function of its arguments; safe to call concurrently on shared
    datasets.
    """
    t0 = time.perf_counter()
    cells = _block_counts(d)
    rows = cells.reshape(d.n_blocks, d.n_z_levels, d.n_x_levels).sum(axis=2)
    cell_ptr, cell_idx, cell_delta = _block_csr(cells)
    row_ptr, row_idx, row_delta = _block_csr(rows)
    tbl_x, tbl_a = _gamma_tables(d.n, hyper.alpha0, d.n_x_levels)
    obs_cum = np.concatenate(([0], d.block_bounds)).astype(np.int64)
    log_bf = _dp_log_bf(
        obs_cum,
        cell_ptr, cell_idx, cell_delta,
        row_ptr, row_idx, row_delta,
        cells.shape[1], rows.shape[1],
        tbl_x, tbl_a,
        hyper.log_pi0(d.n), hyper.log_one_minus_pi0(d.n),
    )
    return BfResult(
        log_bf=float(log_bf),
        hyper=hyper,
        n=d.n,
        n_x_levels=d.n_x_levels,
        n_z_levels=d.n_z_levels,
        elapsed=time.perf_counter() - t0,
    )


# --------------------------------------------------------------------------
# brute-force reference and mutual information
# --------------------------------------------------------------------------

def _segment_log_psi_direct(d: SlicedDataset, start: int, stop: int, hyper: Hyperparams) -> float:
    """Log psi of sorted positions [start, stop), counted from the raw arrays."""
    jk = d.n_z_levels * d.n_x_levels
    flat = d.z[start:stop] * d.n_x_levels + d.x[start:stop]
    counts = np.bincount(flat, minlength=jk).reshape(d.n_z_levels, d.n_x_levels)
    return log_psi_segment(counts, hyper)


def bf_bruteforce(d: SlicedDataset, hyper: Hyperparams = Hyperparams()) -> BfResult:
    """Log Bayes factor by enumerating every admissible slicing.

    Reference implementation used to validate :func:`bf_dynamic_program`;
    exponential in the number of tie-block gaps, hence the capacity guard.
    """
    t0 = time.perf_counter()
    gaps = d.n_blocks - 1
    if gaps > MAX_BRUTEFORCE_GAPS:
        raise CapacityError(
            f"{gaps} candidate boundaries exceed the enumeration guard "
            f"({MAX_BRUTEFORCE_GAPS}); use bf_dynamic_program"
        )
    starts = np.concatenate(([0], d.block_bounds[:-1]))  # block start positions
    log_pi0 = hyper.log_pi0(d.n)
    log_q = hyper.log_one_minus_pi0(d.n)
    log_psi_full = _segment_log_psi_direct(d, 0, d.n, hyper)

    seen: dict[tuple[int, int], float] = {}

    def seg(a: int, b: int) -> float:
        if (a, b) not in seen:
            seen[(a, b)] = _segment_log_psi_direct(d, a, b, hyper)
        return seen[(a, b)]

    terms = []
    for r in range(gaps + 1):
        for cut in itertools.combinations(range(1, gaps + 1), r):
            edges = [0, *(int(starts[c]) for c in cut), d.n]
            total = (len(edges) - 2) * log_pi0 + (d.n - (len(edges) - 1)) * log_q
            for a, b in zip(edges[:-1], edges[1:]):
                total += seg(a, b)
            terms.append(total - log_psi_full)
    return BfResult(
        log_bf=float(logsumexp(np.array(terms))),
        hyper=hyper,
        n=d.n,
        n_x_levels=d.n_x_levels,
        n_z_levels=d.n_z_levels,
        elapsed=time.perf_counter() - t0,
    )


def mi_plugin(d: SlicedDataset, scheme: SlicingScheme) -> float:
    """Plug-in estimate of the mutual information between the covariate and
    the slice label, conditional on the groups.

    For slice counts n_jk(h) with group-slice totals n_j(h) and overall
    group counts n_jk, n_j:

        (1/n) [ sum_jhk n_jk(h) log(n_jk(h)/n_j(h))
                - sum_jk n_jk log(n_jk/n_j) ]

    with 0 log 0 taken as 0.  Always nonnegative.
    """
    bounds = scheme.slice_bounds(d.n)
    block_starts = set(np.concatenate(([0], d.block_bounds[:-1])).tolist())
    for a, b in bounds:
        if b <= a:
            raise InputError("every slice must be nonempty")
        if a not in block_starts:
            raise InputError(f"slice start {a + 1} does not fall on a tie-block boundary")

    def plogp(counts, totals):
        # sum n * log(n / total), skipping zero cells
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = counts / totals
            term = np.where(counts > 0, counts * np.log(np.where(counts > 0, ratio, 1.0)), 0.0)
        return term.sum()

    jk = d.n_z_levels * d.n_x_levels
    total = 0.0
    for a, b in bounds:
        flat = d.z[a:b] * d.n_x_levels + d.x[a:b]
        njk = np.bincount(flat, minlength=jk).reshape(d.n_z_levels, d.n_x_levels)
        nj = njk.sum(axis=1, keepdims=True).astype(np.float64)
        nj[nj == 0] = 1.0
        total += plogp(njk.astype(np.float64), nj)
    flat = d.z * d.n_x_levels + d.x
    njk = np.bincount(flat, minlength=jk).reshape(d.n_z_levels, d.n_x_levels)
    nj = njk.sum(axis=1, keepdims=True).astype(np.float64)
    nj[nj == 0] = 1.0
    total -= plogp(njk.astype(np.float64), nj)
    return max(total / d.n, 0.0)
