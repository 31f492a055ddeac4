"""Online l1-multicalibration error of a transcript."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Hypothesis, HypothesisClass, Transcript


@dataclass(frozen=True)
class BucketErrorReport:
    """Per-bucket absolute residuals K_p, bucket sizes T_p and the total K = sum_p K_p / T."""

    bucket_errors: np.ndarray
    bucket_sizes: np.ndarray
    total: float


def _hvalues(transcript: Transcript, h) -> np.ndarray:
    if isinstance(h, Hypothesis):
        return h.evaluate_many(transcript.contexts)
    vals = np.asarray(h, dtype=np.float64)
    if vals.shape != (len(transcript),):
        raise ValueError("precomputed hypothesis values must have one entry per round")
    return vals


def k_error(transcript: Transcript, h) -> BucketErrorReport:
    """Multicalibration error of one hypothesis.

    ``h`` is either a Hypothesis or the array of its values on the transcript contexts.
    """
    T = len(transcript)
    if T == 0:
        raise ValueError("empty transcript")
    hv = _hvalues(transcript, h)
    M = transcript.grid.size
    resid = hv * (transcript.labels - transcript.prediction_values)
    sums = np.bincount(transcript.predictions, weights=resid, minlength=M)
    sizes = np.bincount(transcript.predictions, minlength=M)
    per_bucket = np.abs(sums)
    return BucketErrorReport(per_bucket, sizes, float(per_bucket.sum() / T))


def k_error_all(transcript: Transcript, hclass: HypothesisClass) -> np.ndarray:
    """K for every member of the class, in member order."""
    T = len(transcript)
    if T == 0:
        raise ValueError("empty transcript")
    V = hclass.values_many(transcript.contexts)  # |H| x T
    M = transcript.grid.size
    resid = V * (transcript.labels - transcript.prediction_values)
    onehot = np.zeros((T, M))
    onehot[np.arange(T), transcript.predictions] = 1.0
    return np.abs(resid @ onehot).sum(axis=1) / T


def k_error_class(transcript: Transcript, hclass: HypothesisClass) -> tuple[float, int]:
    """(max_h K(h), first index attaining it)."""
    if len(hclass) == 0:
        raise ValueError("empty hypothesis class")
    errs = k_error_all(transcript, hclass)
    idx = int(np.argmax(errs))
    return float(errs[idx]), idx
