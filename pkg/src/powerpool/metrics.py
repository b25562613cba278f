"""ROC/AUC, ensemble CRPS, RMSE and relative improvement."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError


@dataclass(frozen=True)
class RocCurve:
    """ROC vertices from (0, 0) to (1, 1).

    ``thresholds[i]`` is the score cut that produces vertex ``i``
    (``inf`` for the origin).
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def _prepare(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(bool)


def _sorted_groups(s):
    """Descending order and the last position of every run of equal scores."""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    ends = np.r_[np.flatnonzero(np.diff(s_sorted)), s.size - 1]
    return order, ends, s_sorted[ends]


def _counts(y_sorted, ends):
    tp = np.r_[0, np.cumsum(y_sorted, dtype=np.int64)[ends]]
    fp = np.r_[0, ends + 1] - tp
    return tp, fp


def _trapezoid(tp, fp):
    n_pos, n_neg = int(tp[-1]), int(fp[-1])
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("AUC needs at least one positive and one negative label")
    # integer numerator: twice the Mann-Whitney count, ties counted once
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2 * n_pos * n_neg)


def roc_curve(scores, labels):
    """ROC curve with one vertex per distinct score; tied samples move together."""
    s, y = _prepare(scores, labels)
    order, ends, cuts = _sorted_groups(s)
    tp, fp = _counts(y[order], ends)
    auc_value = _trapezoid(tp, fp)
    return RocCurve(
        thresholds=np.r_[np.inf, cuts],
        fpr=fp / fp[-1],
        tpr=tp / tp[-1],
        auc=auc_value,
    )


def auc(scores, labels):
    """Area under the ROC curve (ties count one half)."""
    s, y = _prepare(scores, labels)
    order, ends, _ = _sorted_groups(s)
    return _trapezoid(*_counts(y[order], ends))


def auc_many(scores, label_sets):
    """AUC of one score vector against several label vectors, sorting only once."""
    s = np.asarray(scores, dtype=float).ravel()
    order, ends, _ = _sorted_groups(s)
    out = []
    for labels in label_sets:
        y = np.asarray(labels).ravel().astype(bool)
        if y.shape != s.shape:
            raise ValueError(f"{s.size} scores for {y.size} labels")
        out.append(_trapezoid(*_counts(y[order], ends)))
    return out


def auc_by_cell(scores, labels):
    """AUC per column of ``(n_samples, n_cells)`` arrays; ``nan`` where a column has one class."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 2:
        raise ValueError("scores and labels must be matching (n_samples, n_cells) arrays")
    out = np.full(s.shape[1], np.nan)
    for j in range(s.shape[1]):
        try:
            out[j] = auc(s[:, j], y[:, j])
        except DegenerateLabelsError:
            pass
    return out


def crps_ensemble(members, truth):
    """Ensemble CRPS ``mean|x_j - x| - sum|x_j - x_k| / (2 n^2)`` (members on axis 0).

    This is the exact CRPS of the empirical member distribution.
    """
    x = np.asarray(members, dtype=float)
    if x.ndim == 0 or x.shape[0] == 0:
        raise ValueError("an ensemble needs at least one member")
    n = x.shape[0]
    truth = np.asarray(truth, dtype=float)
    skill = np.mean(np.abs(x - truth), axis=0)
    xs = np.sort(x, axis=0)
    rank_w = (2.0 * np.arange(n) - n + 1).reshape((n,) + (1,) * (x.ndim - 1))
    pair_sum = 2.0 * np.sum(rank_w * xs, axis=0)
    out = np.maximum(skill - pair_sum / (2.0 * n * n), 0.0)
    return float(out) if out.ndim == 0 else out


def rmse(pred, truth):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("rmse of an empty set")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def relative_improvement(auc_method, auc_mean_pred):
    """Percent AUC gain of a method over the mean-prediction baseline."""
    if auc_mean_pred <= 0:
        raise ValueError(f"baseline AUC must be positive, got {auc_mean_pred}")
    return 100.0 * (auc_method - auc_mean_pred) / auc_mean_pred
