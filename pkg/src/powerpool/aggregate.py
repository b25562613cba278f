"""Turning an ensemble of anomaly forecasts into a single classifier score.

Member axis is always axis 0, so ``anoms`` may be ``(n,)`` for one sample or
``(n, ...)`` for many samples at once.
"""

import math

import numpy as np

from .climatology import phi

INF = math.inf

# at and above this exponent the power mean is evaluated in the log domain
LOG_DOMAIN_P = 32.0


def _members(values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 0 or values.shape[0] == 0:
        raise ValueError("an ensemble needs at least one member")
    return values


def member_scores(anoms):
    """Per-member scores ``phi(x_i)`` in [0, 1]."""
    return phi(_members(anoms))


def _check_p(p):
    if not p >= 1:
        raise ValueError(f"power exponent must be >= 1 (or inf), got {p}")


class PooledScores:
    """Member scores prepared for repeated power-mean evaluation.

    Holds the log-scores and per-sample bounds so that sweeping many
    exponents over the same ensemble costs one ``exp`` pass per exponent.
    """

    def __init__(self, scores):
        s = _members(scores)
        if np.any((s < 0) | (s > 1)):
            raise ValueError("member scores must lie in [0, 1]")
        self.scores = s
        self.n = s.shape[0]
        with np.errstate(divide="ignore"):
            self.log_scores = np.log(s)
        self.lo = s.min(axis=0)
        self.hi = s.max(axis=0)

    def _direct(self, p):
        # exp(p * log s) is s**p, with log(0) = -inf mapping back to 0
        return np.mean(np.exp(p * self.log_scores), axis=0) ** (1.0 / p)

    def _log_domain(self, p):
        z = p * self.log_scores
        zmax = np.max(z, axis=0)
        # all-zero samples have zmax = -inf; their mean is exactly 0
        finite = np.isfinite(zmax)
        shift = np.where(finite, zmax, 0.0)
        with np.errstate(divide="ignore"):
            lse = shift + np.log(np.sum(np.exp(z - shift), axis=0))
        return np.where(finite, np.exp((lse - math.log(self.n)) / p), 0.0)

    def power_mean(self, p):
        _check_p(p)
        if p == INF:
            out = self.hi
        elif p == 1:
            out = np.mean(self.scores, axis=0)
        elif p < LOG_DOMAIN_P:
            out = self._direct(p)
        else:
            out = self._log_domain(p)
        return np.clip(out, self.lo, self.hi)


def power_mean(scores, p):
    """Power mean ``((1/n) * sum(s_i**p))**(1/p)`` of member scores along axis 0.

    ``p = 1`` is the arithmetic mean and ``p = inf`` the maximum.  For
    ``p >= 32`` the sum is taken with a log-sum-exp so that small scores do
    not underflow; zero scores contribute exactly nothing either way.  The
    result is clipped to ``[min(s), max(s)]`` to absorb rounding.
    """
    _check_p(p)
    out = PooledScores(scores).power_mean(p)
    return float(out) if np.ndim(out) == 0 else out


def mean_prediction_score(anoms):
    """Baseline: average the member anomalies first, then map through ``phi``."""
    return phi(np.mean(_members(anoms), axis=0))


def max_score(anoms):
    """Most aggressive pooling: the largest member score."""
    return power_mean(member_scores(anoms), INF)


def binarize(score, tau):
    """``1`` where ``score >= tau`` else ``0``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {tau}")
    out = (np.asarray(score) >= tau).astype(np.uint8)
    return int(out) if out.ndim == 0 else out
