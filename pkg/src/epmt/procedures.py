"""Step-up multiple testing procedures on p-values, e-values, and both.

All procedures return a RejectionResult whose `adjusted` field is the
per-hypothesis vector the decision was thresholded on, in input order.
Ties at the rejection boundary are always rejected together; the step-up
index k* equals the rejection count by construction (a tied value just
past the boundary would itself satisfy the step-up condition).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .calib import DEFAULT_CALIBRATOR, Calibrator, combine_product, combine_quotient, parse_calibrator
from .core import RejectionResult, as_evector, as_pvector, check_same_length


class SingleHypothesis(UserWarning):
    """Adaptive e-BH needs at least two hypotheses; fell back to plain e-BH."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if math.isnan(alpha) or alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return alpha


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly in (0, 1), got {tau!r}")
    return tau


def harmonic_number(k: int) -> float:
    """Sum of 1/j for j = 1..k, accumulated exactly (no log approximation)."""
    return math.fsum(1.0 / j for j in range(1, k + 1))


def _step_up_small(adjusted: np.ndarray, alpha: float) -> RejectionResult:
    """Step-up on small-is-significant statistics.

    k* = max{k : K * a_(k) / k <= alpha}; rejects every a_i <= a_(k*).
    """
    k_total = adjusted.size
    ranked = np.sort(adjusted)
    ranks = np.arange(1, k_total + 1, dtype=float)
    ok = k_total * ranked <= alpha * ranks
    if not ok.any():
        return RejectionResult(frozenset(), 0, adjusted)
    k_star = int(np.nonzero(ok)[0][-1]) + 1
    rejected = frozenset(np.nonzero(adjusted <= ranked[k_star - 1])[0].tolist())
    return RejectionResult(rejected, k_star, adjusted)


def _step_up_large(evalues: np.ndarray, alpha: float) -> RejectionResult:
    """Step-up on large-is-significant statistics.

    k* = max{k : k * e_[k] / K >= 1/alpha} with e_[k] the k-th largest;
    rejects every e_i >= e_[k*].
    """
    k_total = evalues.size
    ranked = np.sort(evalues)[::-1]
    ranks = np.arange(1, k_total + 1, dtype=float)
    with np.errstate(invalid="ignore"):
        ok = ranks * ranked / k_total >= 1.0 / alpha
    if not ok.any():
        return RejectionResult(frozenset(), 0, evalues)
    k_star = int(np.nonzero(ok)[0][-1]) + 1
    rejected = frozenset(np.nonzero(evalues >= ranked[k_star - 1])[0].tolist())
    return RejectionResult(rejected, k_star, evalues)


def p_bh(p, alpha: float, by_correction: bool = False) -> RejectionResult:
    """Step-up procedure on p-values.

    With by_correction the level is divided by the harmonic number of K,
    which buys validity under arbitrary dependence.
    """
    p = as_pvector(p)
    alpha = _check_alpha(alpha)
    if by_correction:
        alpha = alpha / harmonic_number(p.size)
    return _step_up_small(p, alpha)


def e_bh(e, alpha: float) -> RejectionResult:
    """Step-up procedure on e-values; valid under arbitrary dependence.

    Equivalent to running p_bh on the reciprocals 1/e at the same level.
    """
    e = as_evector(e)
    return _step_up_large(e, _check_alpha(alpha))


def _divide_p_by_w(p: np.ndarray, w: np.ndarray) -> np.ndarray:
    # p = 0 stays 0 whatever the weight (0/0 = 0); positive p with zero
    # weight becomes +inf and is capped to 1 by the caller.
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p == 0.0, 0.0, p / w)


def weighted_p_bh(p, w, alpha: float) -> RejectionResult:
    """Step-up on weighted p-values p/w, capped into [0, 1].

    Weights are nonnegative and need not be normalized; a zero weight
    removes a hypothesis (positive p) from contention.
    """
    p = as_pvector(p)
    w = as_evector(w)
    check_same_length(p, w)
    adjusted = np.minimum(_divide_p_by_w(p, w), 1.0)
    return _step_up_small(adjusted, _check_alpha(alpha))


def normalized_weights(e) -> np.ndarray:
    """Rescale raw e-values to weights averaging 1 (summing to K).

    An all-zero vector yields all-zero weights. If any e-value is +inf,
    the infinite coordinates take all the weight and the rest get 0.
    """
    e = as_evector(e)
    if np.isinf(e).any():
        return np.where(np.isinf(e), np.inf, 0.0)
    total = e.sum()
    if total == 0.0:
        return np.zeros_like(e)
    return e.size * e / total


def weighted_p_bh_normalized(p, e, alpha: float) -> RejectionResult:
    """weighted_p_bh with raw e-values rescaled to average-1 weights."""
    p = as_pvector(p)
    w = normalized_weights(e)
    check_same_length(p, w)
    return weighted_p_bh(p, w, alpha)


def ep_bh(p, e, alpha: float) -> RejectionResult:
    """Step-up on the quotients min(p/e, 1).

    Identical by construction to weighted_p_bh with the raw e-values as
    weights: e-values act as unnormalized weights without any rescaling.
    """
    p = as_pvector(p)
    e = as_evector(e)
    check_same_length(p, e)
    return weighted_p_bh(p, e, alpha)


def pe_bh(p, e, alpha: float, calibrator: Calibrator = DEFAULT_CALIBRATOR) -> RejectionResult:
    """Step-up on the product e-values h(p) * e.

    Valid under arbitrary dependence between and across the two vectors,
    at the price of never rejecting more than ep_bh does.
    """
    p = as_pvector(p)
    e = as_evector(e)
    check_same_length(p, e)
    merged = combine_product(p, e, calibrator)
    return _step_up_large(np.asarray(merged, dtype=float), _check_alpha(alpha))


def storey_pi0(p, tau: float = 0.5) -> float:
    """Conservative null-proportion estimate (1 + #{p > tau}) / (K(1-tau))."""
    p = as_pvector(p)
    tau = _check_tau(tau)
    return (1.0 + int((p > tau).sum())) / (p.size * (1.0 - tau))


def ep_storey(p, e, alpha: float, tau: float = 0.5) -> RejectionResult:
    """Null-proportion-adaptive version of ep_bh.

    Hypotheses with p > tau get weight 0; the rest keep their e-values
    scaled up by the estimated null proportion.
    """
    p = as_pvector(p)
    e = as_evector(e)
    check_same_length(p, e)
    pi0 = storey_pi0(p, tau)
    w = np.where(p <= tau, e / pi0, 0.0)
    return weighted_p_bh(p, w, alpha)


def wbh_storey_normalized(p, e, alpha: float, tau: float = 0.5) -> RejectionResult:
    """Null-proportion-adaptive weighted BH with normalized e-value weights.

    Uses the weight-aware null-proportion estimate
    (1 + sum_k w_k 1{p_k > tau}) / (K(1-tau)), which reduces to the plain
    Storey estimate at unit weights. When normalization concentrates the
    weight on a few hypotheses, this estimate can sit far below 1 and
    recover much of the power that normalization gives up.
    """
    p = as_pvector(p)
    tau = _check_tau(tau)
    w = normalized_weights(e)
    check_same_length(p, w)
    finite = np.isfinite(w)
    if finite.all():
        pi0 = (1.0 + float((w * (p > tau)).sum())) / (p.size * (1.0 - tau))
    else:
        # all weight sits on the infinite coordinates; the estimate keeps
        # only the additive smoothing term
        pi0 = 1.0 / (p.size * (1.0 - tau))
    with np.errstate(invalid="ignore"):
        w_adaptive = np.where(p <= tau, w / pi0, 0.0)
    return weighted_p_bh(p, w_adaptive, alpha)


def ep_bonferroni(p, e, alpha: float) -> RejectionResult:
    """Reject every hypothesis with p/e <= alpha/K (no step-up).

    Controls both PFER and FWER at alpha * K0 / K. The adjusted vector is
    the uncapped quotient.
    """
    p = as_pvector(p)
    e = as_evector(e)
    check_same_length(p, e)
    alpha = _check_alpha(alpha)
    adjusted = _divide_p_by_w(p, e)
    rejected = frozenset(np.nonzero(adjusted <= alpha / p.size)[0].tolist())
    return RejectionResult(rejected, len(rejected), adjusted)


def simes_evalue(e) -> float:
    """The e-value analogue of the Simes statistic: max_k k * e_[k] / K."""
    e = as_evector(e)
    ranked = np.sort(e)[::-1]
    ranks = np.arange(1, e.size + 1, dtype=float)
    with np.errstate(invalid="ignore"):
        stats = ranks * ranked / e.size
    return float(np.max(stats))


def adaptive_e_bh(e, alpha: float, merging: str = "mean") -> RejectionResult:
    """e-BH with a merged-evidence gate and a slightly raised level.

    If the merged e-value F(e) falls below 1/alpha, nothing is rejected;
    otherwise plain e-BH runs at K*alpha/(K-1). merging selects F: "mean"
    (arithmetic mean, the default, preserving dominance over e_bh) or
    "max" (the Simes-style statistic).
    """
    e = as_evector(e)
    alpha = _check_alpha(alpha)
    if merging not in ("mean", "max"):
        raise ValueError(f"merging must be 'mean' or 'max', got {merging!r}")
    k_total = e.size
    if k_total == 1:
        warnings.warn(
            "adaptive e-BH needs at least two hypotheses; falling back to plain e-BH",
            SingleHypothesis,
            stacklevel=2,
        )
        return e_bh(e, alpha)
    merged = float(e.mean()) if merging == "mean" else simes_evalue(e)
    if merged < 1.0 / alpha:
        return RejectionResult(frozenset(), 0, e)
    return e_bh(e, k_total * alpha / (k_total - 1.0))


@dataclass(frozen=True)
class ProcedureSpec:
    """A registry name plus the knobs needed to run it.

    calibrator is a spec string ("sqrt" or "kappa:<value>") so the whole
    object stays picklable for process-parallel campaigns. merging only
    matters for adaptive-e-bh; tau only for the Storey variants.
    """

    name: str
    alpha: float = 0.1
    tau: float = 0.5
    calibrator: str = "sqrt"
    merging: str = "mean"

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise KeyError(f"unknown procedure {self.name!r}; known: {', '.join(sorted(REGISTRY))}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly in (0, 1), got {self.alpha!r}")
        _check_tau(self.tau)
        if self.merging not in ("mean", "max"):
            raise ValueError(f"merging must be 'mean' or 'max', got {self.merging!r}")
        parse_calibrator(self.calibrator)

    def build(self):
        """Return a callable (p, e) -> RejectionResult."""
        runner = REGISTRY[self.name][2]
        cal = parse_calibrator(self.calibrator)

        def run(p, e):
            return runner(self, cal, p, e)

        return run

    @property
    def needs_p(self) -> bool:
        return REGISTRY[self.name][0]

    @property
    def needs_e(self) -> bool:
        return REGISTRY[self.name][1]


# name -> (needs_p, needs_e, runner(spec, calibrator, p, e))
REGISTRY = {
    "p-bh": (True, False, lambda s, c, p, e: p_bh(p, s.alpha)),
    "p-bh-by": (True, False, lambda s, c, p, e: p_bh(p, s.alpha, by_correction=True)),
    "e-bh": (False, True, lambda s, c, p, e: e_bh(e, s.alpha)),
    "wbh-normalized": (True, True, lambda s, c, p, e: weighted_p_bh_normalized(p, e, s.alpha)),
    "ep-bh": (True, True, lambda s, c, p, e: ep_bh(p, e, s.alpha)),
    "pe-bh": (True, True, lambda s, c, p, e: pe_bh(p, e, s.alpha, calibrator=c)),
    "ep-storey": (True, True, lambda s, c, p, e: ep_storey(p, e, s.alpha, tau=s.tau)),
    "wbh-storey-normalized": (True, True, lambda s, c, p, e: wbh_storey_normalized(p, e, s.alpha, tau=s.tau)),
    "ep-bonferroni": (True, True, lambda s, c, p, e: ep_bonferroni(p, e, s.alpha)),
    "adaptive-e-bh": (False, True, lambda s, c, p, e: adaptive_e_bh(e, s.alpha, merging=s.merging)),
}
