"""Building e-values from data.

Three constructions are provided:

* soft-rank permutation e-values: an exponential reweighting of the rank
  of the original statistic among resampled copies, paired with the
  classical permutation p-value;
* moderated t-statistics with empirical-Bayes variance shrinkage, their
  p-values, and the likelihood-ratio e-value of a Gaussian random-effect
  alternative against the point null;
* the likelihood ratio of a noncentral to a central chi-square density,
  for variance-like side statistics.

Plus the lambda-shift transform that discounts any e-value toward 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, special, stats

from .calib import BadLambda
from .core import MalformedValue


@dataclass(frozen=True)
class PermutationStatistics:
    """An observed statistic with resampled null copies.

    resampled must be exchangeable with original under the null.
    temperature is the soft-rank sharpness r >= 0; 0 selects the linear
    limit in which the transform reduces to the statistic minus the
    minimum.
    """

    original: float
    resampled: np.ndarray
    temperature: float = 0.0

    def __post_init__(self):
        resampled = np.atleast_1d(np.asarray(self.resampled, dtype=float))
        if resampled.ndim != 1 or resampled.size < 1:
            raise MalformedValue("resampled statistics must form a nonempty 1-d vector")
        if not np.isfinite(resampled).all() or not math.isfinite(self.original):
            raise MalformedValue("permutation statistics must be finite")
        if math.isnan(self.temperature) or self.temperature < 0.0:
            raise MalformedValue(f"temperature must be >= 0, got {self.temperature!r}")
        object.__setattr__(self, "resampled", resampled)


def soft_rank_evalue(perm: PermutationStatistics) -> tuple[float, float]:
    """Soft-rank e-value and classical rank p-value of a permutation test.

    With statistics L_0 (observed) and L_1..L_B (resampled), each is
    shifted by the overall minimum and transformed by
    (exp(r*z) - 1) / r (or z itself at r = 0). The e-value is the
    transformed observed statistic over the average transformed
    statistic; the p-value is the share of statistics at least as large
    as the observed one, counting the observed itself.

    Returns (e, p). If all statistics are equal there is no evidence
    either way and (1.0, 1.0) is returned. p <= 1/e always holds.
    """
    values = np.concatenate(([perm.original], perm.resampled))
    shifted = values - values.min()
    r = perm.temperature
    if r > 0.0:
        transformed = np.expm1(r * shifted) / r
    else:
        transformed = shifted
    count = values.size
    p = float(np.count_nonzero(values >= values[0])) / count
    total = float(transformed.sum())
    if total == 0.0:
        return 1.0, 1.0
    e = count * float(transformed[0]) / total
    assert e == 0.0 or p <= 1.0 / e
    return e, p


@dataclass(frozen=True)
class ModeratedTModel:
    """Hierarchical variance model behind moderated t-statistics.

    The coefficient estimate satisfies beta_hat | beta, sigma2 ~
    N(beta, var_factor * sigma2); the sample variance satisfies
    s_sq | sigma2 ~ (sigma2 / df) * chisq(df); and the precision prior is
    1 / sigma2 ~ chisq(df_prior) / (df_prior * s2_prior). Under the
    alternative the effect is beta | sigma2 ~ N(0, gamma * sigma2).

    var_factor is the design constant multiplying sigma2 in the
    coefficient variance (1/n1 + 1/n2 for a two-group mean difference).
    df_prior may be +inf, meaning no variance heterogeneity: the
    posterior variance collapses to s2_prior. gamma = 0 is the
    uninformative sentinel (e-values identically 1). Fields accept
    arrays broadcastable against the data for per-hypothesis designs.
    """

    var_factor: float
    df: float
    df_prior: float
    s2_prior: float
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("var_factor", "df", "s2_prior"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not (np.isfinite(value).all() and (value > 0.0).all()):
                raise MalformedValue(f"{name} must be positive and finite")
        dfp = np.asarray(self.df_prior, dtype=float)
        if np.isnan(dfp).any() or (dfp <= 0.0).any():
            raise MalformedValue("df_prior must be positive (+inf allowed)")
        g = np.asarray(self.gamma, dtype=float)
        if not (np.isfinite(g).all() and (g >= 0.0).all()):
            raise MalformedValue("gamma must be finite and >= 0")


def moderated_t(beta_hat, s_sq, model: ModeratedTModel):
    """Moderated t-statistics and their two-sided p-values.

    The sample variance is shrunk toward the prior,
    s2_post = (df_prior * s2_prior + df * s_sq) / (df_prior + df), and
    the t-statistic beta_hat / sqrt(s2_post * var_factor) is referred to
    a t distribution on df_prior + df degrees of freedom (normal when
    df_prior is infinite). Returns (t_tilde, p) as arrays matching the
    input shape.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    s_sq = np.asarray(s_sq, dtype=float)
    if (np.asarray(s_sq) < 0).any() or np.isnan(s_sq).any():
        raise MalformedValue("sample variances must be >= 0")
    dfp = np.asarray(model.df_prior, dtype=float)
    df = np.asarray(model.df, dtype=float)
    infinite = np.isinf(dfp)
    if infinite.all():
        s2_post = np.broadcast_to(np.asarray(model.s2_prior, float), s_sq.shape).copy()
    else:
        s2_post = np.where(
            infinite,
            model.s2_prior,
            (dfp * model.s2_prior + df * s_sq) / np.where(infinite, 1.0, dfp + df),
        )
    t_tilde = beta_hat / np.sqrt(s2_post * model.var_factor)
    df_total = dfp + df
    p = 2.0 * stats.t.sf(np.abs(t_tilde), df_total)
    return t_tilde, p


def moderated_t_evalue(t_tilde, model: ModeratedTModel):
    """Likelihood-ratio e-value of the random-effect alternative.

    For gamma_k = gamma / var_factor and d = df_prior + df,

        e = (1 + gamma_k)^(-1/2)
            * (1 - gamma_k * t^2 / ((1 + gamma_k) * (d + t^2)))^(-(d+1)/2)

    which equals the density ratio of the moderated t-statistic under
    beta | sigma2 ~ N(0, gamma * sigma2) versus beta = 0, so its null
    expectation is exactly 1. gamma = 0 gives e = 1 identically. An
    infinite df_prior uses the Gaussian limit
    (1 + gamma_k)^(-1/2) * exp(gamma_k * t^2 / (2 * (1 + gamma_k))).
    """
    t = np.asarray(t_tilde, dtype=float)
    g = np.asarray(model.gamma, dtype=float) / np.asarray(model.var_factor, dtype=float)
    d = np.asarray(model.df_prior, dtype=float) + np.asarray(model.df, dtype=float)
    tsq = t * t
    with np.errstate(over="ignore"):
        gaussian = np.exp(g * tsq / (2.0 * (1.0 + g)))
        finite_d = np.where(np.isinf(d), 1.0, d)
        base = 1.0 - g * tsq / ((1.0 + g) * (finite_d + tsq))
        student = base ** (-(finite_d + 1.0) / 2.0)
        out = np.where(np.isinf(d), gaussian, student) / np.sqrt(1.0 + g)
    out = np.where(np.asarray(model.gamma) == 0.0, 1.0, out)
    return float(out) if np.ndim(t_tilde) == 0 and out.ndim == 0 else out


def _trigamma_inverse(x: float) -> float:
    """Solve trigamma(y) = x for y > 0; trigamma decreases from inf to 0."""
    lo, hi = 1e-9, 1e9
    if x >= special.polygamma(1, lo):
        return lo
    if x <= special.polygamma(1, hi):
        return hi
    return optimize.brentq(lambda y: special.polygamma(1, y) - x, lo, hi, xtol=1e-12, rtol=1e-14)


def fit_limma_hyperparameters(s_sq, df) -> tuple[float, float]:
    """Moment-matching estimates (df_prior, s2_prior) from sample variances.

    Matches the mean and variance of log s_sq against the model: centered
    log variances e_k = log(s_sq_k) - digamma(df_k/2) + log(df_k/2) have
    mean log(s2_prior) - digamma(df_prior/2) + log(df_prior/2) and
    variance trigamma(df_k/2) + trigamma(df_prior/2). The prior df solves
    the variance equation by monotone root-finding.

    When the sample variance of the centered logs does not exceed the
    minimum attainable under the model (mean trigamma(df_k/2)), the
    variances carry no detectable heterogeneity and (inf, exp(mean))
    is returned; downstream shrinkage then uses s2_prior alone.
    """
    s_sq = np.atleast_1d(np.asarray(s_sq, dtype=float))
    df = np.broadcast_to(np.asarray(df, dtype=float), s_sq.shape)
    if s_sq.size < 2:
        raise MalformedValue("need at least two sample variances to fit a prior")
    if (s_sq <= 0.0).any() or np.isnan(s_sq).any():
        raise MalformedValue("sample variances must be strictly positive")
    if (df <= 0.0).any() or not np.isfinite(df).all():
        raise MalformedValue("residual df must be positive and finite")
    centered = np.log(s_sq) - special.digamma(df / 2.0) + np.log(df / 2.0)
    center_mean = float(centered.mean())
    excess = float(centered.var(ddof=1)) - float(special.polygamma(1, df / 2.0).mean())
    if excess <= 0.0:
        return math.inf, math.exp(center_mean)
    half_df = _trigamma_inverse(excess)
    s2_prior = math.exp(center_mean + float(special.digamma(half_df)) - math.log(half_df))
    return 2.0 * half_df, s2_prior


GAMMA_GRID = np.logspace(-3.0, 3.0, 41)


def fit_gamma(t_tilde, model: ModeratedTModel) -> float:
    """Marginal-likelihood estimate of the effect-variance ratio gamma.

    Scores an equal-mass two-component model (half null, half
    random-effect alternative) for each gamma on a fixed 41-point
    log-spaced grid spanning [1e-3, 1e3]. Under the alternative the
    moderated t is scaled t: t / sqrt(1 + gamma_k) ~ t(d). The mixing
    proportion stays fixed at 1/2 and is never estimated. Returns the
    best grid point, or 0.0 (the uninformative sentinel) when the
    null-only model beats every grid point.
    """
    t = np.atleast_1d(np.asarray(t_tilde, dtype=float))
    d = np.asarray(model.df_prior, dtype=float) + np.asarray(model.df, dtype=float)
    null_logpdf = stats.t.logpdf(t, d)
    null_only = float(null_logpdf.sum())
    log_half = math.log(0.5)
    best_gamma, best_ll = 0.0, null_only
    for gamma in GAMMA_GRID:
        scale = np.sqrt(1.0 + gamma / np.asarray(model.var_factor, dtype=float))
        alt_logpdf = stats.t.logpdf(t / scale, d) - np.log(scale)
        ll = float(np.logaddexp(log_half + null_logpdf, log_half + alt_logpdf).sum())
        if ll > best_ll:
            best_gamma, best_ll = float(gamma), ll
    return best_gamma


def fit_moderated_model(beta_hat, s_sq, var_factor, df) -> tuple[ModeratedTModel, np.ndarray]:
    """Fit the full moderated-t pipeline from summary statistics.

    Estimates (df_prior, s2_prior) from the sample variances, forms the
    moderated t-statistics, then estimates gamma on them. Returns the
    fitted model and the t-statistics.
    """
    df_prior, s2_prior = fit_limma_hyperparameters(s_sq, df)
    model = ModeratedTModel(var_factor, df, df_prior, s2_prior, gamma=0.0)
    t_tilde, _ = moderated_t(beta_hat, s_sq, model)
    gamma = fit_gamma(t_tilde, model)
    return replace(model, gamma=gamma), t_tilde


def chisq_lr_evalue(s, df: float, ncp: float):
    """Likelihood ratio of a noncentral over a central chi-square density.

    Valid e-value for a statistic that is chisq(df) under the null;
    ncp = 0 returns 1 exactly. Densities are evaluated on the log scale
    so extreme statistics do not overflow. s = 0 returns the analytic
    limit exp(-ncp/2).
    """
    s_arr = np.asarray(s, dtype=float)
    if (s_arr < 0).any() or np.isnan(s_arr).any():
        raise MalformedValue("chi-square statistics must be >= 0")
    if df <= 0:
        raise MalformedValue(f"df must be positive, got {df!r}")
    if ncp < 0:
        raise MalformedValue(f"ncp must be >= 0, got {ncp!r}")
    if ncp == 0.0:
        out = np.ones_like(s_arr)
        return float(out) if np.ndim(s) == 0 else out
    positive = s_arr > 0.0
    safe = np.where(positive, s_arr, 1.0)
    log_ratio = stats.ncx2.logpdf(safe, df, ncp) - stats.chi2.logpdf(safe, df)
    out = np.where(positive, np.exp(log_ratio), math.exp(-ncp / 2.0))
    return float(out) if np.ndim(s) == 0 else out


def shift_evalue(e, lam: float):
    """Discount an e-value toward 1: lam + (1 - lam) * e, lam in [0, 1].

    Preserves validity (null mean stays <= 1) while flooring the result
    at lam, which protects downstream weighted procedures from zero
    weights. lam = 1 discards the evidence entirely, returning exactly 1
    even at e = +inf.
    """
    if math.isnan(lam) or not 0.0 <= lam <= 1.0:
        raise BadLambda(f"shift lambda must lie in [0, 1], got {lam!r}")
    e_arr = np.asarray(e, dtype=float)
    if (e_arr < 0).any() or np.isnan(e_arr).any():
        raise MalformedValue("e-values must lie in [0, +inf]")
    if lam == 1.0:
        out = np.ones_like(e_arr)
    else:
        out = lam + (1.0 - lam) * e_arr
    return float(out) if np.ndim(e) == 0 else out
