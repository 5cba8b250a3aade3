"""Classical comparator tests: Welch t, rank-sum, KS, Anderson-Darling, ANOVA.

Statistics are computed here from their textbook formulas; only the
reference distribution tails (Student t, Kolmogorov, F, normal) come
from scipy.special.  Rank-based tests use midranks throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import fdtrc, kolmogorov, ndtr, stdtr
from scipy.stats import rankdata

from .errors import DegenerateDataError, InputError

__all__ = [
    "TestReport",
    "welch_t",
    "wilcoxon_rank_sum",
    "ks_two_sample",
    "anderson_darling_2sample",
    "anova_one_way",
    "anova_two_way",
]

#: exact rank-sum distribution is used up to this per-sample size (no ties)
EXACT_RANKSUM_LIMIT = 25

_REL_TOL = 1e-12  # "zero" sum-of-squares threshold, relative to total SS


@dataclass(frozen=True)
class TestReport:
    """Outcome of one classical test."""

    statistic: float
    pvalue: float
    method: str
    df: float | tuple | None = None
    sizes: tuple | None = None

    def as_dict(self) -> dict:
        out = {"method": self.method, "statistic": self.statistic, "pvalue": self.pvalue}
        if self.df is not None:
            out["df"] = list(self.df) if isinstance(self.df, tuple) else self.df
        if self.sizes is not None:
            out["sizes"] = list(self.sizes)
        return out


def _samples(a, b, min_size=1):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < min_size or b.size < min_size:
        raise InputError(f"each sample needs at least {min_size} observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InputError("samples must be finite")
    return a, b


def welch_t(sample_a, sample_b) -> TestReport:
    """Welch's two-sample t-test (unequal variances, Satterthwaite df)."""
    a, b = _samples(sample_a, sample_b, min_size=2)
    na, nb = a.size, b.size
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va + vb == 0:
        raise DegenerateDataError("both samples have zero variance")
    sa, sb = va / na, vb / nb
    t = (a.mean() - b.mean()) / np.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TestReport(float(t), min(p, 1.0), "welch_t", df=float(df), sizes=(na, nb))


def _exact_ranksum_pvalue(w: int, na: int, nb: int) -> float:
    """Two-sided exact p for an untied rank sum via the count distribution.

    counts[j, s] = number of ways to pick j of the ranks 1..r so far with
    sum s; after feeding all N ranks, row na is the W distribution.
    """
    n = na + nb
    max_sum = na * (2 * n - na + 1) // 2
    counts = np.zeros((na + 1, max_sum + 1))
    counts[0, 0] = 1.0
    for r in range(1, n + 1):
        counts[1:, r:] += counts[:-1, : max_sum + 1 - r]
    dist = counts[na]
    total = dist.sum()
    lower = dist[: w + 1].sum() / total
    upper = dist[w:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def wilcoxon_rank_sum(sample_a, sample_b) -> TestReport:
    """Wilcoxon rank-sum test; statistic is the first sample's rank sum.

    For untied samples with at most EXACT_RANKSUM_LIMIT observations each
    the p-value is exact; otherwise it uses the normal approximation with
    tie-corrected variance and continuity correction.
    """
    a, b = _samples(sample_a, sample_b)
    na, nb = a.size, b.size
    n = na + nb
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    w = float(ranks[:na].sum())

    _, tie_counts = np.unique(pooled, return_counts=True)
    no_ties = bool(np.all(tie_counts == 1))
    if no_ties and max(na, nb) <= EXACT_RANKSUM_LIMIT:
        p = _exact_ranksum_pvalue(int(round(w)), na, nb)
        return TestReport(w, p, "wilcoxon_rank_sum", sizes=(na, nb))

    mean = na * (n + 1) / 2.0
    tie_term = float(((tie_counts**3 - tie_counts).sum()) / (n * (n - 1))) if n > 1 else 0.0
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return TestReport(w, 1.0, "wilcoxon_rank_sum", sizes=(na, nb))
    shift = w - mean
    z = (shift - 0.5 * np.sign(shift)) / np.sqrt(var) if shift != 0 else 0.0
    p = min(1.0, 2.0 * float(ndtr(-abs(z))))
    return TestReport(w, p, "wilcoxon_rank_sum", sizes=(na, nb))


def ks_two_sample(sample_a, sample_b) -> TestReport:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic tail.

    The Kolmogorov argument uses the effective size n_a*n_b/(n_a+n_b)
    with the standard finite-sample adjustment sqrt(ne) + 0.12 +
    0.11/sqrt(ne); the unadjusted tail is noticeably conservative at
    moderate sizes.
    """
    a, b = _samples(sample_a, sample_b)
    na, nb = a.size, b.size
    points = np.unique(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), points, side="right") / na
    fb = np.searchsorted(np.sort(b), points, side="right") / nb
    d = float(np.abs(fa - fb).max())
    en = np.sqrt(na * nb / (na + nb))
    p = float(kolmogorov((en + 0.12 + 0.11 / en) * d))
    return TestReport(d, min(max(p, 0.0), 1.0), "ks_two_sample", sizes=(na, nb))


def _ad_2sample_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Midrank two-sample Anderson-Darling statistic (tie-aware variant)."""
    n = a.size + b.size
    values, mult = np.unique(np.concatenate([a, b]), return_counts=True)
    cum = np.cumsum(mult)
    bj = cum - mult / 2.0
    denom = bj * (n - bj) - n * mult / 4.0
    total = 0.0
    for sample in (a, b):
        s = np.sort(sample)
        below = np.searchsorted(s, values, side="left")
        equal = np.searchsorted(s, values, side="right") - below
        mij = below + equal / 2.0
        num = (n * mij - sample.size * bj) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(denom > 0, mult / n * num / denom, 0.0)
        total += terms.sum() / sample.size
    return (n - 1) / n * total


# Percentile interpolation for the standardized k-sample AD statistic:
# critical values at the standard significance levels, parameterized in
# m = k - 1 as b0 + b1/sqrt(m) + b2/m.
_AD_SIG = np.array([0.25, 0.1, 0.05, 0.025, 0.01, 0.005, 0.001])
_AD_B0 = np.array([0.675, 1.281, 1.645, 1.960, 2.326, 2.573, 3.085])
_AD_B1 = np.array([-0.245, 0.250, 0.678, 1.149, 1.822, 2.364, 3.615])
_AD_B2 = np.array([-0.105, -0.305, -0.362, -0.391, -0.396, -0.345, -0.154])


def _ad_pvalue(t_standardized: float, k: int = 2) -> float:
    """Significance of the standardized statistic by log-quadratic
    interpolation of the percentile table; extrapolated (and clamped to
    (0, 1]) outside the tabulated range."""
    m = k - 1
    critical = _AD_B0 + _AD_B1 / np.sqrt(m) + _AD_B2 / m
    pf = np.polyfit(critical, np.log(_AD_SIG), 2)
    p = float(np.exp(np.polyval(pf, t_standardized)))
    return min(max(p, 1e-12), 1.0)


def anderson_darling_2sample(sample_a, sample_b) -> TestReport:
    """Two-sample Anderson-Darling test (midrank statistic, standardized).

    Reports the standardized statistic T = (A2 - (k-1)) / sigma; the
    asymptotic p-value comes from the standard percentile interpolation.
    """
    a, b = _samples(sample_a, sample_b)
    n = a.size + b.size
    if n < 3:
        raise InputError("pooled sample must have at least 3 observations")
    a2 = _ad_2sample_statistic(a, b)

    k = 2
    h = (1.0 / np.array([a.size, b.size])).sum()
    harm = np.zeros(n)  # harm[r] = 1 + 1/2 + ... + 1/r
    harm[1:] = np.cumsum(1.0 / np.arange(1, n))
    hs = harm[n - 1]
    i = np.arange(1, n - 1)
    g = float(((hs - harm[i]) / (n - i)).sum())
    ca = (4 * g - 6) * (k - 1) + (10 - 6 * g) * h
    cb = (2 * g - 4) * k**2 + 8 * hs * k + (2 * g - 14 * hs - 4) * h - 8 * hs + 4 * g - 6
    cc = (6 * hs + 2 * g - 2) * k**2 + (4 * hs - 4 * g + 6) * k + (2 * hs - 6) * h + 4 * hs
    cd = (2 * hs + 6) * k**2 - 4 * hs * k
    sigma_sq = (ca * n**3 + cb * n**2 + cc * n + cd) / ((n - 1.0) * (n - 2.0) * (n - 3.0))
    if sigma_sq <= 0:
        raise DegenerateDataError("nonpositive variance in AD standardization")
    t = (a2 - (k - 1)) / np.sqrt(sigma_sq)
    return TestReport(float(t), _ad_pvalue(float(t), k), "anderson_darling", sizes=(a.size, b.size))


def anova_one_way(y, groups) -> TestReport:
    """One-way fixed-effects ANOVA F-test of equal group means."""
    y = np.asarray(y, dtype=np.float64).ravel()
    g = np.asarray(groups).ravel()
    if y.shape != g.shape:
        raise InputError("y and groups lengths differ")
    levels, codes = np.unique(g, return_inverse=True)
    k = levels.size
    n = y.size
    if k < 2:
        raise InputError("need at least 2 groups")
    if n - k < 1:
        raise InputError("residual degrees of freedom must be >= 1")
    counts = np.bincount(codes)
    means = np.bincount(codes, weights=y) / counts
    ssb = float((counts * (means - y.mean()) ** 2).sum())
    ssw = float(((y - means[codes]) ** 2).sum())
    sst = ssb + ssw
    if ssw <= _REL_TOL * sst or sst == 0.0:
        if ssb <= _REL_TOL * max(sst, 1.0):
            return TestReport(0.0, 1.0, "anova_one_way", df=(float(k - 1), float(n - k)))
        raise DegenerateDataError("zero residual variance with distinct group means")
    f = (ssb / (k - 1)) / (ssw / (n - k))
    p = float(fdtrc(k - 1, n - k, f))
    return TestReport(float(f), p, "anova_one_way", df=(float(k - 1), float(n - k)))


def _dummies(codes: np.ndarray, k: int) -> np.ndarray:
    """Treatment-coded indicator columns for levels 1..k-1."""
    out = np.zeros((codes.size, k - 1))
    for lvl in range(1, k):
        out[:, lvl - 1] = codes == lvl
    return out


def anova_two_way(y, x, z, effect: str = "joint") -> TestReport:
    """F-test of the covariate terms in a two-way fixed-effects layout.

    ``effect="joint"`` compares {intercept, Z} against
    {intercept, Z, X, X:Z}, i.e. tests all X main and interaction terms
    at once.  ``effect="interaction"`` compares {intercept, Z, X} against
    the full model, testing only the interaction.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    x = np.asarray(x).ravel()
    z = np.asarray(z).ravel()
    if not (y.shape == x.shape == z.shape):
        raise InputError("y, x, z lengths differ")
    if effect not in ("joint", "interaction"):
        raise InputError(f"unknown effect {effect!r}")
    _, xc = np.unique(x, return_inverse=True)
    _, zc = np.unique(z, return_inverse=True)
    kx, kz = xc.max() + 1, zc.max() + 1
    if kx < 2 or kz < 2:
        raise InputError("x and z each need at least 2 observed levels")
    n = y.size

    ones = np.ones((n, 1))
    dx = _dummies(xc, kx)
    dz = _dummies(zc, kz)
    inter = (dx[:, :, None] * dz[:, None, :]).reshape(n, -1)
    full = np.hstack([ones, dz, dx, inter])
    reduced = np.hstack([ones, dz]) if effect == "joint" else np.hstack([ones, dz, dx])

    p_full = full.shape[1]
    if np.linalg.matrix_rank(full) < p_full:
        raise DegenerateDataError("empty covariate cells: full model is rank-deficient")
    df_res = n - p_full
    if df_res < 1:
        raise InputError("residual degrees of freedom must be >= 1")

    def rss(design):
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        r = y - design @ coef
        return float(r @ r)

    rss_full = rss(full)
    rss_red = rss(reduced)
    q = p_full - reduced.shape[1]
    sst = float(((y - y.mean()) ** 2).sum())
    scale = max(sst, 1.0)
    if rss_full <= _REL_TOL * scale:
        if rss_red - rss_full <= _REL_TOL * scale:
            return TestReport(0.0, 1.0, "anova_two_way", df=(float(q), float(df_res)))
        rss_full = _REL_TOL * scale  # perfect fit: floor the denominator
    f = ((rss_red - rss_full) / q) / (rss_full / df_res)
    f = max(f, 0.0)
    p = float(fdtrc(q, df_res, f))
    return TestReport(float(f), p, "anova_two_way", df=(float(q), float(df_res)))
