"""Optimal attack probability, comparative statics and closed-form verification."""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .equilibrium import EquilibriumSolution, ModelParams, solve

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
SWEEP_GRID = np.linspace(0.001, 0.999, 400)
PARAM_NAMES = ("M", "l", "r", "sigma")


class NotUnimodalError(RuntimeError):
    """q V(q) is not unimodal on the bracketing grid."""


@dataclass(frozen=True)
class AttackProbResult:
    q_hat: float
    objective: float
    iterations: int
    bracket_width: float


def _golden_max(f, lo, hi, f_lo, f_hi, tol):
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    iterations = 0
    while hi - lo > tol:
        iterations += 1
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
    best = max((f1, x1), (f2, x2), (f_lo, lo), (f_hi, hi))
    return best[1], best[0], iterations, hi - lo


def _slope_bisect(f, x, lo_limit, hi_limit, halfwidth=1e-8, delta=1e-6, tol=1e-13):
    """Refine a golden-section argmax by bisecting on the sign of a central-difference slope.

    Comparing function values cannot place the peak of a smooth objective
    closer than about sqrt(machine eps); the slope sign resolves it to the
    truncation error of the difference quotient.  Returns None when the
    slope does not change sign inside the window.
    """
    def slope(z):
        return f(z + delta) - f(z - delta)

    lo = max(x - halfwidth, lo_limit + delta)
    hi = min(x + halfwidth, hi_limit - delta)
    if not lo < hi or slope(lo) <= 0 or slope(hi) >= 0:
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_attack_prob(eq: EquilibriumSolution, *, tol: float = 1e-10,
                        grid_points: int = 64) -> AttackProbResult:
    """Maximize q V(q) over [0, p].

    A coarse grid locates the bracket around the peak, golden-section search
    shrinks it below ``tol`` and a slope-sign bisection removes the rounding
    floor of value comparisons.  The objective is strictly concave, so a grid
    that goes up, down and up again means the closed form is broken.
    """
    p = eq.p

    def objective(q):
        return q * eq.V(q)

    grid = np.linspace(0.0, p, grid_points + 1)
    values = grid * eq.V(grid)
    steps = np.sign(np.diff(values))
    steps = steps[steps != 0]
    if np.any(np.diff(steps) > 0):
        raise NotUnimodalError(f"q V(q) is not unimodal on [0, p] for {eq.params}")
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_points)]
    q_hat, best, iterations, width = _golden_max(objective, lo, hi, values[max(i - 1, 0)],
                                                 values[min(i + 1, grid_points)], tol)
    polished = _slope_bisect(objective, q_hat, 0.0, p)
    if polished is not None:
        q_hat, best = polished, objective(polished)
    return AttackProbResult(q_hat=float(q_hat), objective=float(best), iterations=iterations,
                            bracket_width=float(width))


@dataclass(frozen=True)
class SweepRow:
    name: str
    value: float
    regime: str
    p: float
    q_star: float
    q_hat: float
    alpha: np.ndarray = field(repr=False)


def comparative_statics(base: ModelParams, vary: str, values: Sequence[float],
                        grid: np.ndarray = SWEEP_GRID) -> list[SweepRow]:
    if vary not in PARAM_NAMES:
        raise ValueError(f"unknown parameter {vary!r}; expected one of {PARAM_NAMES}")
    rows = []
    for value in values:
        eq = solve(dataclasses.replace(base, **{vary: float(value)}))
        rows.append(SweepRow(name=vary, value=float(value), regime=eq.regime.value, p=eq.p,
                             q_star=eq.q_star, q_hat=optimal_attack_prob(eq).q_hat,
                             alpha=eq.alpha(grid)))
    return rows


# p rises with l and r and falls with sigma and M; alpha rises with all four.
P_DIRECTION = {"l": 1, "r": 1, "sigma": -1, "M": -1}


def statics_violations(l_values, r_values, sigma_values, M_values,
                       q_points: np.ndarray, rel_tol: float = 1e-12) -> list[str]:
    """Check the comparative-statics directions over a parameter lattice.

    Returns a description of every adjacent lattice pair that breaks the
    stated direction for p or for alpha at any of ``q_points``.  p must
    move strictly, except that a tie is accepted when c rounds to exactly 1
    at both points: p then depends on M and sigma only through c - 1,
    which is below double resolution.
    """
    axes = {"l": list(l_values), "r": list(r_values), "sigma": list(sigma_values), "M": list(M_values)}
    shape = tuple(len(v) for v in axes.values())
    p = np.empty(shape)
    c_is_one = np.empty(shape, dtype=bool)
    alpha = np.empty(shape + (len(q_points),))
    for idx in itertools.product(*(range(n) for n in shape)):
        eq = solve(ModelParams(**{name: axes[name][i] for name, i in zip(("l", "r", "sigma", "M"), idx)}))
        p[idx] = eq.p
        c_is_one[idx] = eq.consts.c == 1.0
        alpha[idx] = eq.alpha(q_points)
    problems = []
    for axis, name in enumerate(("l", "r", "sigma", "M")):
        dp = np.diff(p, axis=axis) * P_DIRECTION[name]
        both_one = np.diff(c_is_one.astype(int), axis=axis) == 0
        both_one &= np.take(c_is_one, range(1, shape[axis]), axis=axis)
        for idx in zip(*np.nonzero((dp < 0) | ((dp == 0) & ~both_one))):
            problems.append(f"p not {'increasing' if P_DIRECTION[name] > 0 else 'decreasing'} in {name} at {idx}")
        da = np.diff(alpha, axis=axis)
        scale = np.maximum(np.abs(alpha).max(), 1.0)
        for idx in zip(*np.nonzero(da < -rel_tol * scale)):
            problems.append(f"alpha decreasing in {name} at {idx[:-1]}, q={q_points[idx[-1]]:.4g}")
    return problems


@dataclass(frozen=True)
class MarginalBalance:
    """Both sides of the marginal benefit / marginal cost identity at q0 = p.

    ``residual`` is (lhs - rhs) in units of its standard error.
    """

    lhs: float
    rhs: float
    se: float
    residual: float
    n_paths: int
    dp: float


def marginal_balance_check(eq: EquilibriumSolution, dp: float | None = None, *,
                           n_paths: int = 200_000, dt: float = 1.0 / 3650, seed: int = 0,
                           horizon: float | None = None, workers: int = 1) -> MarginalBalance:
    """Monte-Carlo estimate of the marginal balance between running and false-alarm costs.

    Paths start at q0 = p with the stopping threshold moved to p + dp and the
    type drawn with probability p.  Attackers contribute their accumulated
    theft until min(tau, T); innocents contribute l when T arrives before the
    moved threshold is hit.
    """
    from . import sim

    if dp is None:
        dp = 1e-3 * eq.p
    if dp < 0:
        raise ValueError("dp must be >= 0")
    cfg = sim.SimConfig(n_paths=n_paths, dt=dt, seed=seed, q0=eq.p, x_true=eq.p,
                        horizon=horizon if horizon is not None else 10.0 / eq.params.r)
    paths = sim.simulate_batch(eq, cfg, barrier=eq.p + dp, workers=workers)
    attacker = paths.theta == 1
    innocent_cost = eq.params.l * ((~attacker) & paths.terminated)
    diff = np.where(attacker, paths.theft, 0.0) - innocent_cost
    lhs = float(np.mean(np.where(attacker, paths.theft, 0.0)))
    rhs = float(np.mean(innocent_cost))
    se = float(np.std(diff, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.nan
    residual = 0.0 if se == 0.0 else (lhs - rhs) / se
    return MarginalBalance(lhs=lhs, rhs=rhs, se=se, residual=residual, n_paths=n_paths, dp=dp)


@dataclass(frozen=True)
class VerificationReport:
    """Worst relative finite-difference residual per equation and side conditions."""

    residuals: dict
    checks: dict
    rel_tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.rel_tol for v in self.residuals.values()) and all(self.checks.values())

    def failures(self) -> list[str]:
        out = [f"{k}: residual {v:.3g} > {self.rel_tol:g}" for k, v in self.residuals.items() if not v <= self.rel_tol]
        out += [f"{k}: failed" for k, ok in self.checks.items() if not ok]
        return out


def oracle_grid(eq: EquilibriumSolution, n_points: int = 1000, h: float | None = None) -> np.ndarray:
    """Interior points of (0, p) whose three-point stencils stay inside one branch.

    Near 0 the curves behave like q^a, which varies on the scale q / a, so
    points below 100 max(1, a) h are dropped: a stencil of width h no longer
    resolves them.
    """
    p, q_star = eq.p, eq.q_star
    h = 1e-4 * p if h is None else h
    q = np.linspace(100.0 * max(1.0, eq.consts.a) * h, p - 2.0 * h, n_points)
    if not eq.saturated:
        q = q[np.abs(q - q_star) > 2.0 * h]
    return q


def _relative(terms):
    terms = np.asarray(terms)
    scale = np.abs(terms).max(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(terms.sum(axis=0)) / scale
    return np.where(scale > 0, rel, 0.0)


def verify_closed_forms(eq: EquilibriumSolution, *, n_points: int = 1000, rel_tol: float = 1e-4,
                        V: Callable | None = None, U: Callable | None = None,
                        u: Callable | None = None) -> VerificationReport:
    """Plug the closed forms into their ODEs with central differences.

    ``V``, ``U`` and ``u`` override the closed forms (used for negative
    controls).  The attacker equation is picked per point by the sign of
    V'(q) + sigma^2 / (M q (1 - q)), exactly as the HJB system prescribes.
    """
    pr = eq.params
    M, l, r, s2 = pr.M, pr.l, pr.r, pr.sigma ** 2
    V = V or eq.V
    U = U or eq.U
    u = u or eq.u
    p = eq.p
    h = 1e-4 * p
    q = oracle_grid(eq, n_points, h)
    a = eq.alpha(q)
    w = q * q * (1 - q) ** 2

    def derivs(f):
        f0, fp, fm = f(q), f(q + h), f(q - h)
        return f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)

    V0, V1, V2 = derivs(V)
    full = V1 + s2 / (M * (1 - q) * q) >= 0
    res_full = _relative([V2 / 2, V1 / q, -r * s2 * V0 / (M * M * w), s2 / (M * w)])
    res_mid = _relative([V2 / 2, -V1 / (1 - q), -(r / s2) * V1 ** 2 * V0])
    # in the reduced branch the intensity is the indifference level -sigma^2/(q(1-q)V')
    res_alpha = np.abs(a * q * (1 - q) * V1 + s2) / s2

    U0, _, U2 = derivs(U)
    res_U = _relative([-r * U0, w * a * a * U2 / (2 * s2), q * a])

    u0, u1, u2 = derivs(u)
    res_u = _relative([-r * u0, w * a * a * u2 / (2 * s2), q * (1 - q) ** 2 * a * a * u1 / s2])

    residuals = {
        "hjb_V": float(np.max(np.where(full, res_full, res_mid))),
        "hjb_U": float(np.max(res_U)),
        "u_ode": float(np.max(res_u)),
    }
    if np.any(~full):
        residuals["alpha_indifference"] = float(np.max(res_alpha[~full]))

    hs = 1e-5
    # second-order one-sided difference: the stencil may not straddle p
    slope_p = (3 * U(p) - 4 * U(p - hs) + U(p - 2 * hs)) / (2 * hs)
    q_stop = np.linspace(p, 1.0, 200)
    checks = {
        "V(0)=M/r": math.isclose(float(V(0.0)), M / r, rel_tol=1e-12),
        "V(p)=0": abs(float(V(p))) <= 1e-12 * M / r,
        "U(0)=0": abs(float(U(0.0))) <= 1e-12,
        "U(p)=l(1-p)": math.isclose(float(U(p)), l * (1 - p), rel_tol=1e-9),
        "U'(p-)=-l": abs(slope_p + l) <= 2e-4,
        "u(0)=0": abs(float(u(0.0))) <= 1e-12,
        "u(p)=1": abs(float(u(p)) - 1.0) <= 1e-9,
        "U<l(1-q) on (0,p)": bool(np.all(U0 < l * (1 - q))),
        "stop region inequality": bool(np.all(-r * l * (1 - q_stop) + q_stop * eq.alpha(q_stop) >= -1e-12)),
    }
    return VerificationReport(residuals=residuals, checks=checks, rel_tol=rel_tol)
