"""Estimand functionals on weighted empirical distributions.

The central object is the Kaplan-Meier survival probability at a fixed time
``t0``, evaluated on a weighted empirical distribution of (time, event) marks,
together with its exact first- and second-order directional derivatives along
atom-minus-distribution directions.  Derivatives are obtained by pushing
two-parameter jets (:mod:`pseudoreg.jets`) through the weighted product-limit
formula; vectorized closed-form evaluations of the same expansion are provided
for whole-sample derivative vectors/matrices.  A central finite-difference
oracle built only on value evaluations serves as an independent check.

A linear reference functional (weighted survival indicator mean) is included;
it coincides with Kaplan-Meier on uncensored data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimandUndefinedError, OracleError
from .jets import EPS, ETA, Jet2


@dataclass(frozen=True)
class ObservationMark:
    """One subject's observed follow-up time and event indicator."""

    time: float
    is_event: bool

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError(f"mark time must be positive, got {self.time}")


class EmpiricalDistribution:
    """Weighted empirical average of observation marks.

    Weights must form a probability vector; signed perturbations are only
    reachable through the derivative/mixture machinery below.
    """

    __slots__ = ("times", "events", "weights")

    def __init__(self, times, events, weights=None):
        times = np.asarray(times, dtype=float)
        events = np.asarray(events, dtype=bool)
        if times.shape != events.shape or times.ndim != 1:
            raise ValueError("times and events must be equal-length 1-d arrays")
        if np.any(times <= 0):
            raise ValueError("all mark times must be positive")
        n = times.size
        if weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != times.shape:
                raise ValueError("weights must match marks in length")
            if np.any(weights < 0):
                raise ValueError("weights must be nonnegative")
            if abs(weights.sum() - 1.0) > 1e-12:
                raise ValueError("weights must sum to 1 within 1e-12")
        self.times = times
        self.events = events
        self.weights = weights

    @classmethod
    def from_marks(cls, marks, weights=None):
        return cls([m.time for m in marks], [m.is_event for m in marks], weights)

    @property
    def marks(self):
        return [ObservationMark(t, bool(e)) for t, e in zip(self.times, self.events)]

    @property
    def n(self):
        return self.times.size

    def leave_one_out(self, k):
        """Uniform re-weighting of the sample without mark ``k``."""
        keep = np.ones(self.n, dtype=bool)
        keep[k] = False
        return EmpiricalDistribution(self.times[keep], self.events[keep])


@dataclass(frozen=True)
class EstimandFunctional:
    """Tag selecting the estimand: 'km_survival' or 'mean_indicator'."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("km_survival", "mean_indicator"):
            raise ValueError(f"unknown functional kind {self.kind!r}")


KM = EstimandFunctional("km_survival")
MEAN = EstimandFunctional("mean_indicator")


# ---------------------------------------------------------------------------
# Product-limit curve summaries (float path)
# ---------------------------------------------------------------------------

def _check_at_risk(dist, t0):
    if not t0 > 0:
        raise ValueError(f"t0 must be positive, got {t0}")
    at_risk = dist.weights[dist.times >= t0].sum()
    if at_risk <= 0:
        raise EstimandUndefinedError(f"no mass at risk at t0={t0}")


def _value_relaxed(dist, t0):
    """Product-limit value; t0 past the last at-risk time is allowed only if
    the curve has already reached exactly 0 there."""
    if not t0 > 0:
        raise ValueError(f"t0 must be positive, got {t0}")
    value = _curve(dist.times, dist.events, dist.weights, t0)[4]
    at_risk = dist.weights[dist.times >= t0].sum()
    if at_risk <= 0 and value != 0.0:
        raise EstimandUndefinedError(f"no mass at risk at t0={t0}")
    return value


def _curve(times, events, weights, t0):
    """Distinct event times s <= t0 with event mass, and (d_s, Y_s, p_s, S).

    ``Y_s`` counts mass with time >= s, so censorings tied with events are
    still at risk: events precede censorings at equal times.
    """
    order = np.argsort(times, kind="stable")
    ts, ws, es = times[order], weights[order], events[order]
    cum = np.concatenate(([0.0], np.cumsum(ws)))
    total = cum[-1]

    ev_mask = es & (ts <= t0)
    s, inverse = np.unique(ts[ev_mask], return_inverse=True)
    d = np.zeros(s.size)
    np.add.at(d, inverse, ws[ev_mask])
    keep = d != 0.0
    s, d = s[keep], d[keep]
    # mass strictly before s, removed from the risk set
    before = np.searchsorted(ts, s, side="left")
    y = total - cum[before]
    p = 1.0 - d / y
    # d == Y up to rounding means the curve hits exactly 0
    p[np.abs(p) < 1e-12] = 0.0
    value = float(np.prod(p))
    return s, d, y, p, value


def km_value(dist, t0):
    """Weighted product-limit survival probability at t0."""
    return _value_relaxed(dist, t0)


def km_curve(dist, t0):
    """Curve summary (s, d, Y, p, S) used by the vectorized derivative paths."""
    _check_at_risk(dist, t0)
    return _curve(dist.times, dist.events, dist.weights, t0)


# ---------------------------------------------------------------------------
# Jet evaluation (generic scalar arithmetic, works for floats and Jet2)
# ---------------------------------------------------------------------------

def _km_generic(times, events, weights, t0):
    """Product-limit value with weights in any field supporting + - * /."""
    order = sorted(range(len(times)), key=lambda i: times[i])
    total = weights[0] * 0.0
    for w in weights:
        total = total + w
    removed = weights[0] * 0.0
    prod = 1.0 + weights[0] * 0.0
    i = 0
    m = len(order)
    while i < m and times[order[i]] <= t0:
        s = times[order[i]]
        d = weights[0] * 0.0
        group = weights[0] * 0.0
        has_event = False
        j = i
        while j < m and times[order[j]] == s:
            k = order[j]
            group = group + weights[k]
            if events[k]:
                d = d + weights[k]
                has_event = True
            j += 1
        if has_event:
            y = total - removed
            yv = y.v if isinstance(y, Jet2) else float(y)
            if yv == 0.0:
                raise EstimandUndefinedError(f"no mass at risk at event time {s}")
            prod = prod * (1.0 - d / y)
        removed = removed + group
        i = j
    return prod


def _perturbed_eval(dist, atoms, coeffs, t0):
    """phi(F + sum_i coeffs[i] * (delta_{atoms[i]} - F)) in jet arithmetic."""
    scale = 1.0
    for c in coeffs:
        scale = scale - c
    times = list(dist.times) + [a.time for a in atoms]
    events = list(dist.events) + [a.is_event for a in atoms]
    weights = [scale * w for w in dist.weights] + list(coeffs)
    return _km_generic(times, events, weights, t0)


def km_d1(dist, x, t0):
    """d/d eps of phi((1-eps) F + eps delta_x) at eps = 0, exact via jets."""
    _check_at_risk(dist, t0)
    return _perturbed_eval(dist, [x], [EPS], t0).a


def km_d2(dist, x1, x2, t0):
    """Mixed second directional derivative along delta_x1 - F and delta_x2 - F."""
    _check_at_risk(dist, t0)
    return _perturbed_eval(dist, [x1, x2], [EPS, ETA], t0).c


def km_d1_closed_form(dist, x, t0):
    """First-order Kaplan-Meier influence term via the classical discrete formula.

    Cross-check for the jet path: -S(t0) * sum_{s<=t0} (dN_x(s) - Y_x(s) dL(s))
    / (Y(s) (1 - dL(s))).
    """
    s, d, y, p, value = km_curve(dist, t0)
    upto = min(x.time, t0)
    idx = np.searchsorted(s, upto, side="right")
    acc = float(np.sum(d[:idx] / (y[:idx] ** 2 * p[:idx])))
    if x.is_event and x.time <= t0:
        pos = np.searchsorted(s, x.time)
        if pos < s.size and s[pos] == x.time:
            acc -= 1.0 / (y[pos] * p[pos])
        else:
            # event time not in the base support: new factor with d=0, p=1
            at_risk = dist.weights[dist.times >= x.time].sum()
            acc -= 1.0 / at_risk
    return value * acc


def km_d1_all(dist, t0):
    """Vector of km_d1(dist, X_k, t0) over the sample's own marks."""
    s, d, y, p, value = km_curve(dist, t0)
    csum = np.concatenate(([0.0], np.cumsum(d / (y**2 * p))))
    upto = np.minimum(dist.times, t0)
    acc = csum[np.searchsorted(s, upto, side="right")]
    pos = np.searchsorted(s, dist.times)
    pos_c = np.clip(pos, 0, max(s.size - 1, 0))
    own_event = dist.events & (dist.times <= t0)
    if s.size:
        hit = own_event & (s[pos_c] == dist.times)
        acc = acc - np.where(hit, 1.0 / (y[pos_c] * p[pos_c]), 0.0)
    return value * acc


def km_d2_matrix(dist, t0):
    """Pairwise matrix of second-order derivatives over the sample's marks.

    Entry (k, j) equals ``km_d2(dist, X_k, X_j, t0)``; assembled from the
    closed-form jet expansion of the product-limit formula so that the whole
    symmetric matrix costs O(n^2 m) flops instead of n^2 jet sweeps.
    """
    s, d, y, p, value = km_curve(dist, t0)
    n = dist.n
    if s.size == 0:
        return np.zeros((n, n))
    e = (dist.events & (dist.times <= t0))[:, None] & (
        dist.times[:, None] == s[None, :]
    )
    r = dist.times[:, None] >= s[None, :]
    e = e.astype(float)
    r = r.astype(float)
    u = e - d[None, :]
    w = r - y[None, :]
    alpha = -(e * y[None, :] - d[None, :] * r) / (y**2)[None, :]
    ap = alpha / p[None, :]
    a = ap.sum(axis=1)
    u_scaled = u / (y**2 * p)[None, :]
    w_scaled = w * (2.0 * d / (y**3 * p))[None, :]
    inner = (
        u_scaled @ w.T
        + w @ u_scaled.T
        - w_scaled @ w.T
        - ap @ ap.T
    )
    return value * (np.outer(a, a) + inner)


def km_d2_diag(dist, t0):
    """Diagonal km_d2(dist, X_k, X_k, t0) without forming the full matrix."""
    s, d, y, p, value = km_curve(dist, t0)
    n = dist.n
    if s.size == 0:
        return np.zeros(n)
    e = (dist.events & (dist.times <= t0))[:, None] & (
        dist.times[:, None] == s[None, :]
    )
    r = dist.times[:, None] >= s[None, :]
    e = e.astype(float)
    r = r.astype(float)
    u = e - d[None, :]
    w = r - y[None, :]
    alpha = -(e * y[None, :] - d[None, :] * r) / (y**2)[None, :]
    ap = alpha / p[None, :]
    a = ap.sum(axis=1)
    inner = np.sum(
        2.0 * u * w / (y**2 * p)[None, :]
        - (w**2) * (2.0 * d / (y**3 * p))[None, :]
        - ap**2,
        axis=1,
    )
    return value * (a**2 + inner)


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

def _signed_eval(dist, atoms, coeffs, t0):
    scale = 1.0 - sum(coeffs)
    times = np.concatenate([dist.times, [a.time for a in atoms]])
    events = np.concatenate([dist.events, [a.is_event for a in atoms]])
    weights = np.concatenate([scale * dist.weights, coeffs])
    at_risk = weights[times >= t0].sum()
    if at_risk <= 0:
        raise OracleError("perturbed weights leave no mass at risk at t0")
    return _curve(times, events, weights, t0)[4]


def fd_directional(dist, directions, t0, step):
    """Central finite-difference directional derivative of the KM value.

    ``directions`` is one mark (first order) or a pair of marks (mixed second
    order).  Built only from value evaluations on reweighted distributions.
    """
    if not 0 < step < 0.1:
        raise OracleError(f"step must lie in (0, 0.1), got {step}")
    if isinstance(directions, ObservationMark):
        directions = (directions,)
    directions = tuple(directions)
    _check_at_risk(dist, t0)
    if len(directions) == 1:
        (x,) = directions
        hi = _signed_eval(dist, [x], np.array([step]), t0)
        lo = _signed_eval(dist, [x], np.array([-step]), t0)
        return (hi - lo) / (2.0 * step)
    if len(directions) == 2:
        x1, x2 = directions
        pp = _signed_eval(dist, [x1, x2], np.array([step, step]), t0)
        pm = _signed_eval(dist, [x1, x2], np.array([step, -step]), t0)
        mp = _signed_eval(dist, [x1, x2], np.array([-step, step]), t0)
        mm = _signed_eval(dist, [x1, x2], np.array([-step, -step]), t0)
        return (pp - pm - mp + mm) / (4.0 * step**2)
    raise ValueError("directions must contain one or two marks")


# ---------------------------------------------------------------------------
# Linear reference functional
# ---------------------------------------------------------------------------

def mean_value(dist, t0):
    return float(dist.weights[dist.times > t0].sum())


def mean_d1(dist, x, t0):
    return float(x.time > t0) - mean_value(dist, t0)


def mean_d2(dist, x1, x2, t0):
    return 0.0


def mean_d1_all(dist, t0):
    return (dist.times > t0).astype(float) - mean_value(dist, t0)


# ---------------------------------------------------------------------------
# Dispatch on the functional kind
# ---------------------------------------------------------------------------

def value(functional, dist, t0):
    if functional.kind == "km_survival":
        return km_value(dist, t0)
    return mean_value(dist, t0)


def d1(functional, dist, x, t0):
    if functional.kind == "km_survival":
        return km_d1(dist, x, t0)
    return mean_d1(dist, x, t0)


def d2(functional, dist, x1, x2, t0):
    if functional.kind == "km_survival":
        return km_d2(dist, x1, x2, t0)
    return 0.0


def d1_all(functional, dist, t0):
    if functional.kind == "km_survival":
        return km_d1_all(dist, t0)
    return mean_d1_all(dist, t0)


def d2_matrix(functional, dist, t0):
    if functional.kind == "km_survival":
        return km_d2_matrix(dist, t0)
    return np.zeros((dist.n, dist.n))


def d2_diag(functional, dist, t0):
    if functional.kind == "km_survival":
        return km_d2_diag(dist, t0)
    return np.zeros(dist.n)
