"""Jackknife pseudo-observations and their second-order plug-in decomposition.

The pseudo-value of subject k is ``n * phi(F_n) - (n-1) * phi(F_n^(k))`` with
``F_n^(k)`` the leave-one-out empirical distribution.  For the Kaplan-Meier
functional an incremental O(n log n + n m) path updates the at-risk and event
counts per left-out subject; the naive O(n^2) re-evaluation is kept as an
oracle.  The essential part plugs the empirical distribution into the
second-order expansion; the remainder is defined as the exact difference and
serves as a diagnostic for the expected sqrt(n)-negligibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as fn
from .errors import EstimandUndefinedError


@dataclass(frozen=True)
class PseudoValues:
    values: np.ndarray
    t0: float
    kind: str

    @property
    def n(self):
        return self.values.size


@dataclass(frozen=True)
class EssentialDecomposition:
    essential: np.ndarray
    remainder: np.ndarray

    @property
    def values(self):
        return self.essential + self.remainder


def _loo_km_values_naive(dist, t0):
    out = np.empty(dist.n)
    for k in range(dist.n):
        loo = dist.leave_one_out(k)
        try:
            out[k] = fn.km_value(loo, t0)
        except EstimandUndefinedError as exc:
            raise EstimandUndefinedError(
                f"leave-one-out sample without record {k} is undefined at "
                f"t0={t0}: {exc}"
            ) from exc
    return out


def _loo_km_values_fast(dist, t0):
    """All leave-one-out KM values from one pass over the event-time grid.

    Removing subject k decrements Y(s) for s <= t_k and d(t_k) if k is an
    event, so S^(k) is a prefix of modified factors times a suffix of base
    factors, with a single-factor correction at s = t_k.
    """
    times, events = dist.times, dist.events
    n = times.size
    at_risk_t0 = np.sum(times >= t0)
    if at_risk_t0 == 0:
        raise EstimandUndefinedError(f"no mass at risk at t0={t0}")
    lone_at_risk = (
        int(np.nonzero(times >= t0)[0][0]) if at_risk_t0 == 1 else None
    )

    ev_mask = events & (times <= t0)
    s, inverse = np.unique(times[ev_mask], return_inverse=True)
    d = np.zeros(s.size)
    np.add.at(d, inverse, np.ones(inverse.size))
    sorted_times = np.sort(times)
    y = n - np.searchsorted(sorted_times, s, side="left")

    base_f = 1.0 - d / y
    # factors after removing one at-risk, non-event subject (d' = d, Y' = Y-1);
    # Y - 1 == 0 forces the left-out subject to carry the event mass, handled
    # by the correction pass below, so the placeholder 1.0 is never kept
    mod_f = np.where(y - 1.0 > 0.0, 1.0 - d / np.maximum(y - 1.0, 1.0), 1.0)

    pref_mod = np.concatenate(([1.0], np.cumprod(mod_f)))
    prod_base_total = np.prod(base_f)
    cum_base = np.concatenate(([1.0], np.cumprod(base_f)))

    # position of the last grid time <= min(t_k, t0) per subject
    upto = np.minimum(times, t0)
    idx = np.searchsorted(s, upto, side="right")

    # suffix of base factors for s > t_k (subject k already off the risk set)
    with np.errstate(divide="ignore", invalid="ignore"):
        suffix = np.where(cum_base[idx] > 0, prod_base_total / cum_base[idx], 0.0)
    if np.any(cum_base[idx] == 0):
        # a base factor hit exactly 0 before t_k: recompute those suffixes
        for k in np.nonzero(cum_base[idx] == 0)[0]:
            suffix[k] = np.prod(base_f[idx[k]:])

    values = pref_mod[idx] * suffix

    # correction at s = t_k when subject k is an event: d' = d - 1
    ev_idx = np.nonzero(ev_mask)[0]
    pos = np.searchsorted(s, times[ev_idx])
    corr_num = 1.0 - (d[pos] - 1.0) / np.maximum(y[pos] - 1.0, 1.0)
    corr_num = np.where((y[pos] - 1.0) == 0.0, 1.0, corr_num)
    corr_den = mod_f[pos]
    for i, k in enumerate(ev_idx):
        if corr_den[i] != 0.0:
            values[k] *= corr_num[i] / corr_den[i]
        else:
            # rebuild the prefix with the corrected factor spliced in
            j = pos[i]
            pref = np.prod(mod_f[: j]) * corr_num[i] * np.prod(mod_f[j + 1: idx[k]])
            values[k] = pref * suffix[k]

    if lone_at_risk is not None and values[lone_at_risk] != 0.0:
        raise EstimandUndefinedError(
            f"leave-one-out sample without record {lone_at_risk} has no mass "
            f"at risk at t0={t0}"
        )
    return values


def jackknife_pseudo(dist, functional, t0, method="fast"):
    """Exact jackknife pseudo-values of ``functional`` at ``t0``.

    Values are not clipped to [0, 1]; raw pseudo-values are needed downstream.
    """
    n = dist.n
    full = fn.value(functional, dist, t0)
    if functional.kind == "km_survival" and method == "fast":
        loo = _loo_km_values_fast(dist, t0)
    elif functional.kind == "km_survival":
        loo = _loo_km_values_naive(dist, t0)
    else:
        loo = np.array(
            [fn.value(functional, dist.leave_one_out(k), t0) for k in range(n)]
        )
    values = n * full - (n - 1) * loo
    return PseudoValues(values, t0, functional.kind)


def essential_part(dist, functional, t0, pseudo=None):
    """Plug-in essential part and the implied remainder diagnostic.

    Uses F_n in place of the unknown true distribution; the second-order term
    along F_n^(k) - F_n collapses by bilinearity to -d2(X_k, X_k)/(n-1).
    """
    if pseudo is None:
        pseudo = jackknife_pseudo(dist, functional, t0)
    n = dist.n
    full = fn.value(functional, dist, t0)
    d1 = fn.d1_all(functional, dist, t0)
    d2kk = fn.d2_diag(functional, dist, t0)
    essential = full + d1 - d2kk / (n - 1)
    return EssentialDecomposition(essential, pseudo.values - essential)
