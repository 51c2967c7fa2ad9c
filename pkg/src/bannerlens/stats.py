"""Statistical analyses over labeled corpora and button scores.

Descriptive tables (compliance shares, category frequencies, label
transitions between visit locales) work straight from annotations. The
inferential tools are paired-design tests (McNemar, Wilcoxon signed-rank
with an exact small-sample tail, one-way repeated-measures ANOVA with a
Greenhouse-Geisser correction), an inter-rater agreement coefficient
(Krippendorff's alpha, nominal), and a within-transformation fixed-effects
least-squares estimator with conventional standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np
import pandas as pd
from scipy import stats as sps

from .corpus import (
    BannerAnnotation,
    CATEGORIES,
    COMPLIANCE_CLASSES,
    classify_compliance,
)
from .errors import CollinearityError, InputError, UndefinedStatisticError

#: The four (website location, visitor location) pairs, row order of tables.
LOCATION_PAIRS = (
    ("EU", "EU"),
    ("EU", "US"),
    ("non-EU", "EU"),
    ("non-EU", "US"),
)


@dataclass
class TestResult:
    """Uniform container for one hypothesis test."""

    method: str
    statistic: float
    p_value: float
    df: float | tuple[float, float] | None = None
    effect_size: float | None = None
    details: dict[str, Any] = field(default_factory=dict)


def _pair_key(ann: BannerAnnotation) -> tuple[str, str]:
    return ("EU" if ann.website_eu else "non-EU", ann.visitor_locale)


@dataclass
class ComplianceTable:
    """Compliance-class shares per location pair, in percent.

    ``shares[(site, visitor)][cls]`` is the percentage among banner-bearing
    visits of that pair; ``sizes`` holds the denominators. Pairs without any
    banner-bearing visit are listed in ``empty_pairs`` and get no row.
    """

    shares: dict[tuple[str, str], dict[str, float]]
    sizes: dict[tuple[str, str], int]
    empty_pairs: list[tuple[str, str]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for pair, share in self.shares.items():
            row = {"website": pair[0], "visitor": pair[1], "n": self.sizes[pair]}
            row.update(share)
            rows.append(row)
        return pd.DataFrame(rows)


def compliance_table(annotations: Sequence[BannerAnnotation]) -> ComplianceTable:
    """Share of each compliance class among banner-bearing visits, per pair."""
    counts: dict[tuple[str, str], dict[str, int]] = {
        pair: {c: 0 for c in COMPLIANCE_CLASSES} for pair in LOCATION_PAIRS
    }
    for ann in annotations:
        if ann.category in ("none", "unreachable"):
            continue
        counts[_pair_key(ann)][classify_compliance(ann.category)] += 1
    shares: dict[tuple[str, str], dict[str, float]] = {}
    sizes: dict[tuple[str, str], int] = {}
    empty: list[tuple[str, str]] = []
    for pair in LOCATION_PAIRS:
        total = sum(counts[pair].values())
        if total == 0:
            empty.append(pair)
            continue
        sizes[pair] = total
        shares[pair] = {c: counts[pair][c] / total * 100.0 for c in COMPLIANCE_CLASSES}
    return ComplianceTable(shares=shares, sizes=sizes, empty_pairs=empty)


@dataclass
class FrequencyTable:
    """Category shares among reachable visits per location pair, percent."""

    shares: dict[tuple[str, str], dict[str, float]]
    sizes: dict[tuple[str, str], int]
    empty_pairs: list[tuple[str, str]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for pair, share in self.shares.items():
            row = {"website": pair[0], "visitor": pair[1], "n": self.sizes[pair]}
            row.update(share)
            rows.append(row)
        return pd.DataFrame(rows)


def category_frequencies(annotations: Sequence[BannerAnnotation]) -> FrequencyTable:
    """Share of every category (including ``none``) among reachable visits."""
    labels = tuple(c for c in CATEGORIES if c != "unreachable")
    counts: dict[tuple[str, str], dict[str, int]] = {
        pair: {c: 0 for c in labels} for pair in LOCATION_PAIRS
    }
    for ann in annotations:
        if ann.category == "unreachable":
            continue
        counts[_pair_key(ann)][ann.category] += 1
    shares: dict[tuple[str, str], dict[str, float]] = {}
    sizes: dict[tuple[str, str], int] = {}
    empty: list[tuple[str, str]] = []
    for pair in LOCATION_PAIRS:
        total = sum(counts[pair].values())
        if total == 0:
            empty.append(pair)
            continue
        sizes[pair] = total
        shares[pair] = {c: counts[pair][c] / total * 100.0 for c in labels}
    return FrequencyTable(shares=shares, sizes=sizes, empty_pairs=empty)


@dataclass
class TransitionSummary:
    """Label changes of EU websites between the two visit locales.

    ``links`` counts (EU label, US label) pairs over EU websites reachable
    from both locales, flow-diagram ready; ``changed_fraction`` is the share
    of those websites whose label differs.
    """

    links: dict[tuple[str, str], int]
    n_paired: int
    n_changed: int
    changed_fraction: float
    n_unpaired: int

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {"source": src, "target": dst, "value": count}
            for (src, dst), count in sorted(self.links.items())
        ]


def transitions(annotations: Sequence[BannerAnnotation]) -> TransitionSummary:
    """Pair EU websites across locales and tally label transitions."""
    by_site: dict[str, dict[str, str]] = {}
    for ann in annotations:
        if not ann.website_eu or ann.category == "unreachable":
            continue
        by_site.setdefault(ann.website_id, {})[ann.visitor_locale] = ann.category
    links: dict[tuple[str, str], int] = {}
    n_paired = 0
    n_changed = 0
    n_unpaired = 0
    for labels in by_site.values():
        if "EU" not in labels or "US" not in labels:
            n_unpaired += 1
            continue
        n_paired += 1
        pair = (labels["EU"], labels["US"])
        links[pair] = links.get(pair, 0) + 1
        if pair[0] != pair[1]:
            n_changed += 1
    if n_paired == 0:
        raise UndefinedStatisticError("no EU website reachable from both locales")
    return TransitionSummary(
        links=links,
        n_paired=n_paired,
        n_changed=n_changed,
        changed_fraction=n_changed / n_paired,
        n_unpaired=n_unpaired,
    )


def mcnemar(
    flags: Sequence[tuple[bool, bool]], continuity: bool = False
) -> TestResult:
    """McNemar's chi-squared test for paired binary outcomes.

    ``flags`` holds (method A fired, method B fired) per item. The statistic
    is ``(|b - c| - k)^2 / (b + c)`` over the discordant counts, with the
    continuity correction ``k=1`` off by default. No discordant pairs leave
    the statistic undefined.
    """
    b = sum(1 for a, bb in flags if a and not bb)
    c = sum(1 for a, bb in flags if not a and bb)
    if b + c == 0:
        raise UndefinedStatisticError("no discordant pairs")
    k = 1.0 if continuity else 0.0
    stat = (abs(b - c) - k) ** 2 / (b + c)
    p = float(sps.chi2.sf(stat, df=1))
    return TestResult(
        method="mcnemar",
        statistic=float(stat),
        p_value=p,
        df=1.0,
        details={"b": b, "c": c, "continuity": continuity},
    )


def _wilcoxon_exact_p(ranks2: np.ndarray, w2: int) -> float:
    """Two-sided exact tail of the signed-rank statistic.

    ``ranks2`` are the doubled mid-ranks (integers), ``w2`` the doubled
    smaller rank sum. Enumerates the null distribution of ``2 * W+`` by
    subset-sum counting; the two-sided p-value is the probability mass at or
    beyond ``w2`` in either tail.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    denom = 2.0 ** len(ranks2)
    if w2 >= total - w2:
        return 1.0
    lower = counts[: w2 + 1].sum()
    upper = counts[total - w2 :].sum()
    return float(min(1.0, (lower + upper) / denom))


def wilcoxon_signed_rank(
    x: Sequence[float],
    y: Sequence[float] | None = None,
    bonferroni: int = 1,
    method: str = "auto",
    exact_cutoff: int = 25,
) -> TestResult:
    """Two-sided Wilcoxon signed-rank test for paired samples.

    Zero differences are dropped; tied absolute differences share mid-ranks.
    The reported statistic is ``min(W+, W-)``. ``method`` selects the exact
    subset-sum tail (default for n <= ``exact_cutoff``) or the normal
    approximation with tie correction. The p-value is multiplied by the
    ``bonferroni`` factor and capped at 1.
    """
    if method not in ("auto", "exact", "normal"):
        raise InputError(f"unknown method {method!r}")
    if bonferroni < 1:
        raise InputError("bonferroni factor must be >= 1")
    xa = np.asarray(x, dtype=np.float64)
    if y is not None:
        ya = np.asarray(y, dtype=np.float64)
        if xa.shape != ya.shape:
            raise InputError("paired samples must have equal length")
        d = xa - ya
    else:
        d = xa
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise UndefinedStatisticError("all differences are zero")
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    use_exact = method == "exact" or (method == "auto" and n <= exact_cutoff)
    if use_exact:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        p = _wilcoxon_exact_p(ranks2, int(round(2.0 * w)))
        how = "exact"
    else:
        mu = n * (n + 1) / 4.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        tie_term = float(((tie_counts**3 - tie_counts).sum())) / 48.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        if var <= 0:
            raise UndefinedStatisticError("zero variance rank sum")
        z = (w_plus - mu) / np.sqrt(var)
        p = float(2.0 * sps.norm.sf(abs(z)))
        how = "normal"
    p = min(1.0, p * bonferroni)
    return TestResult(
        method=f"wilcoxon-{how}",
        statistic=w,
        p_value=p,
        details={
            "n": int(n),
            "w_plus": w_plus,
            "w_minus": w_minus,
            "bonferroni": bonferroni,
        },
    )


def rm_anova(scores: pd.DataFrame | np.ndarray) -> TestResult:
    """One-way repeated-measures ANOVA with Greenhouse-Geisser correction.

    ``scores`` is subjects x conditions; rows with any missing cell are
    dropped listwise. Degrees of freedom are scaled by the Greenhouse-Geisser
    epsilon estimated from the double-centered covariance. The effect size is
    generalized eta squared. Identical conditions give F=0, p=1.
    """
    if isinstance(scores, pd.DataFrame):
        arr = scores.to_numpy(dtype=np.float64)
    else:
        arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise InputError("scores must be subjects x (>= 2) conditions")
    keep = ~np.isnan(arr).any(axis=1)
    dropped = int((~keep).sum())
    arr = arr[keep]
    n, k = arr.shape
    if n < 2:
        raise UndefinedStatisticError("need at least two complete subjects")

    grand = arr.mean()
    subj_means = arr.mean(axis=1)
    cond_means = arr.mean(axis=0)
    ss_cond = float(n * ((cond_means - grand) ** 2).sum())
    ss_subj = float(k * ((subj_means - grand) ** 2).sum())
    ss_total = float(((arr - grand) ** 2).sum())
    ss_err = ss_total - ss_cond - ss_subj

    eta_g_den = ss_cond + ss_subj + ss_err
    eta_g = ss_cond / eta_g_den if eta_g_den > 0 else 0.0

    cov = np.cov(arr, rowvar=False, ddof=1)
    center = np.eye(k) - np.ones((k, k)) / k
    dc = center @ cov @ center
    denom = (k - 1) * float((dc * dc).sum())
    epsilon = float(np.trace(dc)) ** 2 / denom if denom > 0 else 1.0
    epsilon = float(min(max(epsilon, 1.0 / (k - 1)), 1.0))

    df1 = epsilon * (k - 1)
    df2 = epsilon * (k - 1) * (n - 1)
    if ss_cond == 0.0:
        f_stat, p = 0.0, 1.0
    elif ss_err == 0.0:
        f_stat, p = float("inf"), 0.0
    else:
        ms_cond = ss_cond / (k - 1)
        ms_err = ss_err / ((k - 1) * (n - 1))
        f_stat = ms_cond / ms_err
        p = float(sps.f.sf(f_stat, df1, df2))
    return TestResult(
        method="rm-anova-gg",
        statistic=float(f_stat),
        p_value=p,
        df=(float(df1), float(df2)),
        effect_size=float(eta_g),
        details={
            "epsilon": epsilon,
            "n_subjects": int(n),
            "n_conditions": int(k),
            "n_dropped": dropped,
            "ss_condition": ss_cond,
            "ss_subject": ss_subj,
            "ss_error": ss_err,
        },
    )


def krippendorff_alpha(ratings: Sequence[Sequence[Hashable | None]]) -> float:
    """Krippendorff's alpha for nominal data.

    ``ratings`` is raters x items; ``None`` (or NaN) marks a missing rating.
    Items with fewer than two ratings cannot enter the coincidence matrix.
    Returns 1.0 under perfect agreement (including the single-category
    degenerate case); raises when no item is pairable.
    """
    raters = [list(r) for r in ratings]
    if not raters or len({len(r) for r in raters}) != 1:
        raise InputError("ratings must be a non-ragged raters x items table")
    n_items = len(raters[0])

    def present(v: Any) -> bool:
        if v is None:
            return False
        if isinstance(v, float) and np.isnan(v):
            return False
        return True

    coincidence: dict[Hashable, dict[Hashable, float]] = {}
    marginals: dict[Hashable, float] = {}
    n_total = 0.0
    pairable = 0
    for item in range(n_items):
        values = [r[item] for r in raters if present(r[item])]
        m = len(values)
        if m < 2:
            continue
        pairable += 1
        for i, vi in enumerate(values):
            for j, vj in enumerate(values):
                if i == j:
                    continue
                coincidence.setdefault(vi, {}).setdefault(vj, 0.0)
                coincidence[vi][vj] += 1.0 / (m - 1)
        for v in values:
            marginals[v] = marginals.get(v, 0.0) + 1.0
            n_total += 1.0
    if pairable == 0:
        raise UndefinedStatisticError("no item has two or more ratings")

    d_observed = sum(
        count
        for vi, row in coincidence.items()
        for vj, count in row.items()
        if vi != vj
    )
    d_expected = sum(
        marginals[vi] * marginals[vj]
        for vi in marginals
        for vj in marginals
        if vi != vj
    ) / (n_total - 1.0)
    if d_expected == 0.0:
        return 1.0
    return float(1.0 - d_observed / d_expected)


@dataclass
class FixedEffectsResult:
    """Within-estimator fit: slope estimates and fit diagnostics.

    ``params``/``se``/``tvalues``/``pvalues`` are indexed by design column.
    ``r2`` includes the group effects; ``r2_within`` measures the slopes
    alone on the demeaned data; ``r2_fe_only`` is the group-effects-only fit.
    """

    params: pd.Series
    se: pd.Series
    tvalues: pd.Series
    pvalues: pd.Series
    r2: float
    r2_within: float
    r2_fe_only: float
    n_obs: int
    n_groups: int
    df_resid: int
    dropped_groups: int
    group_effects: pd.Series
    standardized: list[str]

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "coef": self.params,
                "se": self.se,
                "t": self.tvalues,
                "p": self.pvalues,
            }
        )


@dataclass(frozen=True)
class RegressionSpec:
    """Design of a fixed-effects regression.

    ``interactions`` name predictor pairs whose product joins the design.
    Non-binary design columns are z-scored (ddof=1) when ``standardize`` is
    on; the response is divided by ``response_divisor`` first.
    """

    response: str
    predictors: tuple[str, ...]
    group: str
    interactions: tuple[tuple[str, str], ...] = ()
    standardize: bool = True
    response_divisor: float = 1.0


def standardize_column(values: np.ndarray) -> np.ndarray:
    """Z-score with sample standard deviation (ddof=1)."""
    sd = float(np.std(values, ddof=1))
    if sd == 0.0:
        raise InputError("cannot standardize a constant column")
    return (values - float(np.mean(values))) / sd


def _is_binary(values: np.ndarray) -> bool:
    return bool(np.isin(np.unique(values), (0.0, 1.0)).all())


def fixed_effects_ols(spec: RegressionSpec, data: pd.DataFrame) -> FixedEffectsResult:
    """OLS with group fixed effects via the within transformation.

    Group means are subtracted from the response and every design column,
    slopes come from least squares on the demeaned data, and conventional
    standard errors use ``dof = N - G - K``. Groups with fewer than two
    observations are dropped (reported). Design columns that are collinear
    after demeaning raise :class:`CollinearityError` naming them.
    """
    for col in (spec.response, spec.group, *spec.predictors):
        if col not in data.columns:
            raise InputError(f"column {col!r} not in data")
    for a, b in spec.interactions:
        if a not in spec.predictors or b not in spec.predictors:
            raise InputError(f"interaction ({a}, {b}) references unknown predictors")
    frame = data[[spec.response, spec.group, *spec.predictors]].dropna()
    counts = frame.groupby(spec.group, sort=True)[spec.response].count()
    small = counts[counts < 2].index
    dropped_groups = int(len(small))
    frame = frame[~frame[spec.group].isin(small)]
    if frame.empty:
        raise InputError("no group has two or more observations")

    y = frame[spec.response].to_numpy(dtype=np.float64) / spec.response_divisor
    design: dict[str, np.ndarray] = {}
    for name in spec.predictors:
        design[name] = frame[name].to_numpy(dtype=np.float64)
    for a, b in spec.interactions:
        design[f"{a}:{b}"] = design[a] * design[b]
    standardized: list[str] = []
    if spec.standardize:
        for name, col in design.items():
            if not _is_binary(col):
                design[name] = standardize_column(col)
                standardized.append(name)

    names = list(design)
    groups = frame[spec.group].to_numpy()
    codes, _ = pd.factorize(groups, sort=True)
    n_groups = int(codes.max()) + 1
    n_obs = int(len(frame))

    def demean(v: np.ndarray) -> np.ndarray:
        sums = np.bincount(codes, weights=v, minlength=n_groups)
        cnts = np.bincount(codes, minlength=n_groups)
        return v - (sums / cnts)[codes]

    y_w = demean(y)
    k = len(names)
    dof = n_obs - n_groups - k
    if dof < 1:
        raise InputError(f"not enough observations: dof={dof}")

    tss = float(((y - y.mean()) ** 2).sum())
    wss = float((y_w**2).sum())
    r2_fe_only = 1.0 - wss / tss if tss > 0 else 0.0

    if k == 0:
        rss = wss
        params = pd.Series(dtype=np.float64)
        se = pd.Series(dtype=np.float64)
        tvals = pd.Series(dtype=np.float64)
        pvals = pd.Series(dtype=np.float64)
    else:
        x_w = np.column_stack([demean(design[name]) for name in names])
        rank = np.linalg.matrix_rank(x_w)
        if rank < k:
            # Identify dependent columns by greedy rank growth in design order.
            bad: list[str] = []
            kept: list[int] = []
            for idx in range(k):
                if np.linalg.matrix_rank(x_w[:, kept + [idx]]) > len(kept):
                    kept.append(idx)
                else:
                    bad.append(names[idx])
            raise CollinearityError(bad)
        beta, _, _, _ = np.linalg.lstsq(x_w, y_w, rcond=None)
        resid = y_w - x_w @ beta
        rss = float((resid**2).sum())
        sigma2 = rss / dof
        xtx_inv = np.linalg.inv(x_w.T @ x_w)
        se_arr = np.sqrt(np.diag(xtx_inv) * sigma2)
        t_arr = beta / se_arr
        p_arr = 2.0 * sps.t.sf(np.abs(t_arr), df=dof)
        params = pd.Series(beta, index=names)
        se = pd.Series(se_arr, index=names)
        tvals = pd.Series(t_arr, index=names)
        pvals = pd.Series(p_arr, index=names)

    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    r2_within = 1.0 - rss / wss if wss > 0 else 0.0

    group_labels = pd.Index(sorted(set(groups)))
    y_group = np.bincount(codes, weights=y, minlength=n_groups) / np.bincount(
        codes, minlength=n_groups
    )
    if k:
        x_group = np.column_stack(
            [
                np.bincount(codes, weights=design[name], minlength=n_groups)
                / np.bincount(codes, minlength=n_groups)
                for name in names
            ]
        )
        alphas = y_group - x_group @ params.to_numpy()
    else:
        alphas = y_group
    return FixedEffectsResult(
        params=params,
        se=se,
        tvalues=tvals,
        pvalues=pvals,
        r2=float(r2),
        r2_within=float(r2_within),
        r2_fe_only=float(r2_fe_only),
        n_obs=n_obs,
        n_groups=n_groups,
        df_resid=int(dof),
        dropped_groups=dropped_groups,
        group_effects=pd.Series(alphas, index=group_labels),
        standardized=standardized,
    )
