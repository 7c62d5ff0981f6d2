"""Per-example loss evaluation and score-based conditional moments.

A model's per-example loss Z is computed from the true label and the
model's class-score vector.  When only the scores are known (before
annotation), the same score vector yields the conditional mean and second
moment of Z under the model's own predictive distribution — the
quantities consumed by proxy-based planning.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import PreconditionError

# Scores below this are clamped before taking logs, so a hard zero on the
# true class yields a large finite loss instead of +inf.
SCORE_FLOOR = 1e-12


class LossKind(str, Enum):
    ACCURACY = "accuracy"
    SQUARED_ERROR = "squared_error"
    CROSS_ENTROPY = "cross_entropy"


def _check_scores(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise PreconditionError("scores must be a nonempty 1-D vector")
    if np.any(scores < 0) or not np.isclose(scores.sum(), 1.0, atol=1e-6):
        raise PreconditionError("scores must be nonnegative and sum to 1")
    return scores


def eval_loss(kind: LossKind | str, label: int, scores: np.ndarray) -> float:
    """Evaluate the per-example loss for a labeled prediction.

    Parameters
    ----------
    kind : LossKind or str
        ``accuracy`` -> 0/1 indicator that the top-scoring class is the
        label (note: stored as a *reward*-style indicator; direction is a
        labeling convention and nothing downstream depends on it).
        ``squared_error`` -> ``(1 - scores[label])**2`` (Brier-style).
        ``cross_entropy`` -> ``-log scores[label]``, scores clamped at
        ``SCORE_FLOOR``.
    label : int
        True class index into ``scores``.
    scores : array_like
        Predicted class probabilities, nonnegative, summing to 1.
    """
    kind = LossKind(kind)
    scores = _check_scores(scores)
    if not 0 <= label < scores.size:
        raise PreconditionError(
            f"label {label} out of range for {scores.size} classes"
        )
    if kind is LossKind.ACCURACY:
        return float(int(np.argmax(scores)) == label)
    if kind is LossKind.SQUARED_ERROR:
        return float((1.0 - scores[label]) ** 2)
    return float(-np.log(max(float(scores[label]), SCORE_FLOOR)))


def conditional_moments(kind: LossKind | str, scores: np.ndarray) -> tuple[float, float]:
    """First and second conditional moments of the loss given the scores.

    Treats the score vector as the predictive distribution of the true
    label and averages the loss (and its square) over it.

    Returns
    -------
    (zbar, z2bar) : tuple of float
        ``zbar`` = E[Z | scores], ``z2bar`` = E[Z^2 | scores].  Always
        satisfies ``zbar**2 <= z2bar`` (Jensen).
    """
    kind = LossKind(kind)
    scores = _check_scores(scores)
    if kind is LossKind.ACCURACY:
        # Z is an indicator, so Z^2 = Z and both moments equal the
        # score of the predicted class.
        top = float(scores[int(np.argmax(scores))])
        return top, top
    if kind is LossKind.SQUARED_ERROR:
        per_class = (1.0 - scores) ** 2
    else:
        per_class = -np.log(np.maximum(scores, SCORE_FLOOR))
    zbar = float(np.dot(scores, per_class))
    z2bar = float(np.dot(scores, per_class**2))
    return zbar, z2bar
