"""Closed-form Markov equilibrium of the attacker/defender reputation game.

Units throughout: money in millions, time in years.

Every curve accepts a scalar or an array of suspicion levels and returns the
same shape.  Intermediate quantities that underflow for realistic
parameters (``exp(-b**2)`` is about 1e-165 at the global-average
calibration) are carried in log form.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .special import erf_like, erfc_like_inv

SQRT_PI = math.sqrt(math.pi)

# Largest overshoot of y's argument past its upper limit that is treated as
# rounding; anything larger is a caller bug.
_CLAMP_HARD_LIMIT = 1e-9

_clamp_events = 0


class YClampWarning(RuntimeWarning):
    """y's erf-argument left [0, erf(b)] by rounding and was clamped."""


def clamp_events() -> int:
    """Number of clamped evaluations of y since import."""
    return _clamp_events


@dataclass(frozen=True)
class ModelParams:
    """Exogenous game inputs.

    M: cap on attack intensity (value per year).  l: one-time false-alarm
    cost.  r: rate of the exponential termination time (per year).
    sigma: noise intensity of the public signal.
    """

    M: float
    l: float
    r: float
    sigma: float

    def __post_init__(self):
        for name in ("M", "l", "r", "sigma"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and value > 0):
                raise ValueError(f"ModelParams.{name} must be finite and > 0, got {value!r}")

    @property
    def ratio(self) -> float:
        """r sigma^2 / M^2; the regime switch sits at 1."""
        return self.r * self.sigma ** 2 / self.M ** 2


GLOBAL_AVERAGE = ModelParams(M=100.0, l=1.52, r=0.39, sigma=4.1)


class Regime(enum.Enum):
    SATURATED = "saturated"  # r sigma^2 / M^2 >= 1: attacker always plays M
    INTERIOR = "interior"


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the closed form.

    ``log_gap`` is log(c - erf(b)) = log(2 sigma sqrt(r) / (M sqrt(pi))) - b^2,
    ``c_minus_one`` and ``erfc_b`` keep the tiny differences that plain
    subtraction would round to zero.  In the saturated regime ``q_star``
    equals ``p`` (full intensity on the whole continuation region).
    """

    a: float
    b: float
    c: float
    q_star: float
    p: float
    log_gap: float
    c_minus_one: float
    erfc_b: float


def _abk(params: ModelParams) -> tuple[float, float, float]:
    M, r, sigma = params.M, params.r, params.sigma
    ratio = params.ratio
    # a = (sqrt(1 + 8 ratio) - 1) / 2 without cancellation at small ratio
    a = 4.0 * ratio / (math.sqrt(1.0 + 8.0 * ratio) + 1.0)
    b = (1.0 - a) * M / (2.0 * sigma * math.sqrt(r))
    return a, b, 2.0 * sigma * math.sqrt(r) / M


def _c_minus_one(b: float, k: float) -> float:
    # c - 1 = gap - erfc(b) = exp(-b^2) * (k / sqrt(pi) - erfcx(b)); both bracket terms are O(1/b)
    return math.exp(-b * b) * (k / SQRT_PI - float(special.erfcx(b)))


def saturated_threshold(params: ModelParams) -> float:
    """(1 + a) r l / ((1 + a) r l + a M), whatever the regime."""
    a, _, _ = _abk(params)
    r, l = params.r, params.l
    return (1.0 + a) * r * l / ((1.0 + a) * r * l + a * params.M)


def interior_threshold(params: ModelParams) -> float:
    """c l sqrt(pi r) / (c l sqrt(pi r) + sigma), whatever the regime."""
    _, b, k = _abk(params)
    s = (1.0 + _c_minus_one(b, k)) * params.l * math.sqrt(math.pi * params.r)
    return s / (s + params.sigma)


def derive_constants(params: ModelParams) -> tuple[Regime, DerivedConstants]:
    a, b, k = _abk(params)
    log_gap = math.log(k / SQRT_PI) - b * b
    erfc_b = float(special.erfc(b))
    c_minus_one = _c_minus_one(b, k)
    c = 1.0 + c_minus_one

    if params.ratio >= 1.0:
        p = saturated_threshold(params)
        consts = DerivedConstants(a=a, b=b, c=c, q_star=p, p=p, log_gap=log_gap,
                                  c_minus_one=c_minus_one, erfc_b=erfc_b)
        return Regime.SATURATED, consts

    p = interior_threshold(params)
    denom = c - p * erf_like(b)
    log_q_star = math.log(p) + log_gap - math.log(denom)
    q_star = math.exp(log_q_star)  # 0.0 once exp(-b^2) leaves double range
    consts = DerivedConstants(a=a, b=b, c=c, q_star=q_star, p=p, log_gap=log_gap,
                              c_minus_one=c_minus_one, erfc_b=erfc_b)
    return Regime.INTERIOR, consts


def _as_array(q):
    return np.atleast_1d(np.asarray(q, dtype=float))


def _out(values, like):
    return float(values[0]) if np.ndim(like) == 0 else values


def _erfc_arg(q, k: DerivedConstants):
    """1 - c (p - q) / (p (1 - q)), assembled from small pieces."""
    return (q * (k.c - k.p) - k.p * k.c_minus_one) / (k.p * (1.0 - q))


def _y_unchecked(q, k: DerivedConstants):
    global _clamp_events
    w = _erfc_arg(q, k)
    lo = k.erfc_b if k.q_star > 0.0 else np.finfo(float).tiny
    low = w < lo
    if np.any(low):
        if np.any(lo - w[low] > _CLAMP_HARD_LIMIT):
            raise ValueError("y: argument outside [0, erf(b)] beyond rounding")
        _clamp_events += int(np.count_nonzero(low))
        warnings.warn("y: argument clamped to erf(b) after rounding", YClampWarning, stacklevel=3)
        w = np.where(low, lo, w)
    return erfc_like_inv(np.minimum(w, 1.0))


def y_of(q, consts: DerivedConstants):
    """erf^{-1}(c (p - q) / (p (1 - q))) for q in [q_star, p]."""
    q_arr = _as_array(q)
    tol = 1e-12 * consts.p
    if np.any(q_arr < consts.q_star - tol) or np.any(q_arr > consts.p + tol) or consts.q_star >= consts.p:
        raise ValueError(f"y_of: q must lie in [q_star, p] = [{consts.q_star:.6g}, {consts.p:.6g}]")
    y = _y_unchecked(np.clip(q_arr, consts.q_star, consts.p), consts)
    return float(y[0]) if np.ndim(q) == 0 else y


def _ratio_pow(q, q_ref, a):
    """(q (1 - q_ref) / (q_ref (1 - q)))^a, zero at q = 0."""
    if q_ref <= 0.0:
        # q_star underflowed to 0, so only q = 0 can reach this branch
        return np.zeros_like(q)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(q) - math.log(q_ref) + math.log1p(-q_ref) - np.log1p(-q)
    return np.exp(a * log_ratio)


def _check_unit(q_arr, name):
    if np.any(~((q_arr >= 0.0) & (q_arr <= 1.0))):
        raise ValueError(f"{name}: q must lie in [0, 1]")


@dataclass(frozen=True)
class EquilibriumSolution:
    """Regime, constants and the evaluable equilibrium curves for one parameter set."""

    params: ModelParams
    regime: Regime
    consts: DerivedConstants

    @property
    def p(self) -> float:
        return self.consts.p

    @property
    def q_star(self) -> float:
        return self.consts.q_star

    @property
    def saturated(self) -> bool:
        return self.regime is Regime.SATURATED

    def y(self, q):
        return y_of(q, self.consts)

    def alpha(self, q):
        return alpha(q, self)

    def V(self, q):
        return value_attacker(q, self)

    def U(self, q):
        return value_defender(q, self)

    def u(self, q0):
        return blocking_prob(q0, self)

    @property
    def alpha_at_p(self) -> float:
        """Intensity on [p, 1] (held at its value at p)."""
        if self.saturated:
            return self.params.M
        pr = self.params
        return 2.0 * pr.sigma * math.sqrt(pr.r) / (self.consts.c * SQRT_PI)


def solve(params: ModelParams) -> EquilibriumSolution:
    regime, consts = derive_constants(params)
    return EquilibriumSolution(params=params, regime=regime, consts=consts)


def alpha(q, eq: EquilibriumSolution):
    q_arr = _as_array(q)
    _check_unit(q_arr, "alpha")
    pr, k = eq.params, eq.consts
    if eq.saturated:
        return _out(np.full_like(q_arr, pr.M), q)
    out = np.full(q_arr.shape, eq.alpha_at_p)
    out[q_arr <= k.q_star] = pr.M
    mid = (q_arr > k.q_star) & (q_arr < k.p)
    if np.any(mid):
        qm = q_arr[mid]
        y = _y_unchecked(qm, k)
        log_coef = math.log(2.0 * k.p * pr.sigma * math.sqrt(pr.r) / (k.c * SQRT_PI * (1.0 - k.p)))
        out[mid] = np.exp(log_coef + np.log1p(-qm) - np.log(qm) - y * y)
    return _out(out, q)


def value_attacker(q, eq: EquilibriumSolution):
    """Attacker's equilibrium expected profit V(q)."""
    q_arr = _as_array(q)
    _check_unit(q_arr, "value_attacker")
    pr, k = eq.params, eq.consts
    out = np.zeros(q_arr.shape)
    if eq.saturated:
        low = q_arr < k.p
        out[low] = pr.M / pr.r * (1.0 - _ratio_pow(q_arr[low], k.p, k.a))
        return _out(out, q)
    low = q_arr <= k.q_star
    if np.any(low):
        out[low] = pr.M / pr.r - pr.sigma ** 2 / (k.a * pr.M) * _ratio_pow(q_arr[low], k.q_star, k.a)
    mid = (q_arr > k.q_star) & (q_arr < k.p)
    if np.any(mid):
        out[mid] = pr.sigma / math.sqrt(pr.r) * _y_unchecked(q_arr[mid], k)
    return _out(out, q)


def value_defender(q, eq: EquilibriumSolution):
    """Defender's equilibrium expected cost U(q)."""
    q_arr = _as_array(q)
    _check_unit(q_arr, "value_defender")
    pr, k = eq.params, eq.consts
    out = pr.l * (1.0 - q_arr)
    if eq.saturated:
        low = q_arr < k.p
        ql = q_arr[low]
        coef = pr.M / pr.r - (1.0 - k.p) * pr.l / k.p
        out[low] = ql * (pr.M / pr.r - coef * _ratio_pow(ql, k.p, k.a))
        return _out(out, q)
    low = q_arr <= k.q_star
    if np.any(low):
        ql = q_arr[low]
        coef = (pr.sigma ** 2 / (k.a * pr.M)
                - k.c * math.sqrt(math.pi * pr.r) * (1.0 - k.p) * pr.l * pr.sigma / ((1.0 + k.a) * pr.M * k.p))
        out[low] = ql * (pr.M / pr.r - coef * _ratio_pow(ql, k.q_star, k.a))
    mid = (q_arr > k.q_star) & (q_arr < k.p)
    if np.any(mid):
        qm = q_arr[mid]
        y = _y_unchecked(qm, k)
        out[mid] = (pr.sigma / math.sqrt(pr.r) * qm * y
                    + pr.l * (1.0 - qm) * (np.exp(-y * y)
                                           - k.c * SQRT_PI * (1.0 - k.p) * qm * y / (k.p * (1.0 - qm))))
    return _out(out, q)


def blocking_prob(q0, eq: EquilibriumSolution):
    """u(q0): probability an attacker is blocked before the random termination."""
    q_arr = _as_array(q0)
    pr, k = eq.params, eq.consts
    if np.any(~((q_arr >= 0.0) & (q_arr <= k.p))):
        raise ValueError(f"blocking_prob: q0 must lie in [0, p] = [0, {k.p:.6g}]")
    out = np.ones(q_arr.shape)
    if eq.saturated:
        low = q_arr < k.p
        out[low] = _ratio_pow(q_arr[low], k.p, k.a)
        return _out(out, q0)
    low = q_arr <= k.q_star
    if np.any(low):
        coef = k.a * k.c * pr.M * SQRT_PI / (2.0 * pr.sigma * math.sqrt(pr.r))
        out[low] = coef * _ratio_pow(q_arr[low], k.q_star, k.a)
    mid = (q_arr > k.q_star) & (q_arr < k.p)
    if np.any(mid):
        qm = q_arr[mid]
        y = _y_unchecked(qm, k)
        lead = np.exp(math.log(k.p / (1.0 - k.p)) + np.log1p(-qm) - np.log(qm) - y * y)
        out[mid] = lead - k.c * SQRT_PI * y
    return _out(out, q0)
