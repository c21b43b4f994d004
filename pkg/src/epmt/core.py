"""Domain types, input validation, and error accounting.

p-values live in [0, 1]; e-values live in [0, +inf] with infinity allowed
and meaningful (conclusive evidence). NaN is rejected everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class EmptyInput(ValueError):
    """No hypotheses were given."""


class LengthMismatch(ValueError):
    """Paired per-hypothesis vectors disagree in length."""


class MalformedValue(ValueError):
    """A p-value or e-value failed validation.

    Carries the offending record id (or index) when known.
    """

    def __init__(self, message: str, record_id=None):
        super().__init__(message)
        self.record_id = record_id


def check_pvalue(value, record_id=None) -> float:
    """Validate a single p-value: a float in [0, 1], never NaN."""
    v = float(value)
    if math.isnan(v) or v < 0.0 or v > 1.0:
        raise MalformedValue(f"p-value must lie in [0, 1], got {value!r}", record_id)
    return v


def check_evalue(value, record_id=None) -> float:
    """Validate a single e-value: a float in [0, +inf], never NaN.

    +inf is legal and means conclusive evidence against the null.
    """
    v = float(value)
    if math.isnan(v) or v < 0.0:
        raise MalformedValue(f"e-value must lie in [0, +inf], got {value!r}", record_id)
    return v


@dataclass(frozen=True)
class HypothesisRecord:
    """One hypothesis with its observed evidence.

    At least one of p and e must be present. A missing e-value is treated
    downstream as 1.0 (a neutral weight); a missing p-value restricts the
    record to e-value-only procedures.
    """

    id: str
    p: float | None = None
    e: float | None = None
    is_null: bool | None = None

    def __post_init__(self):
        if self.p is None and self.e is None:
            raise MalformedValue("record carries neither a p-value nor an e-value", self.id)
        if self.p is not None:
            object.__setattr__(self, "p", check_pvalue(self.p, self.id))
        if self.e is not None:
            object.__setattr__(self, "e", check_evalue(self.e, self.id))


def validate_inputs(records) -> tuple[np.ndarray, np.ndarray, int]:
    """Normalize a list of HypothesisRecord into aligned (p, e, K).

    Input order is preserved. Missing e-values become 1.0; missing p-values
    become NaN and are only acceptable to e-value-only callers (enforced by
    the procedures, not here).
    """
    records = list(records)
    if not records:
        raise EmptyInput("no hypotheses given")
    p = np.array([np.nan if r.p is None else r.p for r in records], dtype=float)
    e = np.array([1.0 if r.e is None else r.e for r in records], dtype=float)
    return p, e, len(records)


def as_pvector(p) -> np.ndarray:
    """Coerce to a 1-d float array of valid p-values."""
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if arr.ndim != 1:
        raise MalformedValue("p-values must form a 1-d vector")
    if arr.size == 0:
        raise EmptyInput("no hypotheses given")
    bad = np.isnan(arr) | (arr < 0.0) | (arr > 1.0)
    if bad.any():
        i = int(np.argmax(bad))
        raise MalformedValue(f"p-value out of [0, 1] at position {i}: {arr[i]!r}", i)
    return arr


def as_evector(e) -> np.ndarray:
    """Coerce to a 1-d float array of valid e-values (+inf allowed)."""
    arr = np.atleast_1d(np.asarray(e, dtype=float))
    if arr.ndim != 1:
        raise MalformedValue("e-values must form a 1-d vector")
    if arr.size == 0:
        raise EmptyInput("no hypotheses given")
    bad = np.isnan(arr) | (arr < 0.0)
    if bad.any():
        i = int(np.argmax(bad))
        raise MalformedValue(f"e-value out of [0, +inf] at position {i}: {arr[i]!r}", i)
    return arr


def check_same_length(*arrays) -> int:
    sizes = {np.asarray(a).shape[0] for a in arrays}
    if len(sizes) != 1:
        raise LengthMismatch(f"per-hypothesis vectors disagree in length: {sorted(sizes)}")
    return sizes.pop()


@dataclass(frozen=True)
class RejectionResult:
    """Outcome of a multiple-testing procedure.

    rejected holds input-order indices; threshold_index is the step-up k*
    (0 means no rejections) and always equals the number of rejections;
    adjusted is the per-hypothesis statistic the decision was made on.
    """

    rejected: frozenset
    threshold_index: int
    adjusted: np.ndarray

    def __post_init__(self):
        if len(self.rejected) != self.threshold_index:
            raise ValueError(
                f"rejection count {len(self.rejected)} != threshold index {self.threshold_index}"
            )


def fdp_and_power(rejected, truth) -> tuple[float, float]:
    """False discovery proportion and power of one rejection set.

    truth flags nulls (True = null hypothesis). Both ratios use the
    0/0 = 0 convention: no rejections means FDP 0, no non-nulls means
    power 0.
    """
    truth = np.asarray(truth, dtype=bool)
    if truth.ndim != 1:
        raise LengthMismatch("truth must be a 1-d boolean vector")
    idx = np.fromiter(rejected, dtype=int, count=len(rejected))
    if idx.size and (idx.min() < 0 or idx.max() >= truth.size):
        raise LengthMismatch("rejected index outside the truth vector")
    n_rej = idx.size
    n_false = int(truth[idx].sum()) if n_rej else 0
    n_alt = int((~truth).sum())
    fdp = n_false / n_rej if n_rej else 0.0
    power = (n_rej - n_false) / n_alt if n_alt else 0.0
    return fdp, power


@dataclass(frozen=True)
class ErrorMetrics:
    """Replicated error rates of one procedure under one scenario.

    fdr and power are means of per-replicate FDP and true positive rate;
    fwer is the share of replicates with at least one false rejection;
    pfer is the mean count of false rejections. The se_* fields are
    standard errors of the corresponding means over replicates.
    """

    fdr: float
    power: float
    fwer: float
    pfer: float
    se_fdr: float
    se_power: float
    se_fwer: float
    se_pfer: float
    replicates: int
