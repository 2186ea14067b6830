"""Recover (r, sigma) from an industry's average breach cost and detection time.

With M and l held fixed, the attacker's expected theft at the optimal attack
probability and the expected detection time are two smooth functions of
(r, sigma).  Matching them to the reported averages is a 2x2 root-finding
problem, solved here by damped Newton in log coordinates.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import optimal_attack_prob
from .equilibrium import ModelParams, solve

DAYS_PER_YEAR = 365.0
DEFAULT_L = 1.52
DEFAULT_M = 100.0
INPUT_COLUMNS = ("industry", "avg_cost_musd", "avg_days")
OUTPUT_COLUMNS = ("industry", "r", "sigma", "q_hat", "fitted_cost", "fitted_days",
                  "alpha_over_sigma", "converged", "residual_norm")


class CalibrationInputError(ValueError):
    """A malformed or invalid row in a calibration table."""


@dataclass(frozen=True)
class CalibrationTarget:
    industry: str
    avg_cost: float
    avg_days: float
    l: float = DEFAULT_L
    M: float = DEFAULT_M

    def __post_init__(self):
        for name in ("avg_cost", "avg_days", "l", "M"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Forward:
    """Model-implied breach statistics at one (r, sigma)."""

    q_hat: float
    cost: float
    days: float
    alpha_over_sigma: float


@dataclass(frozen=True)
class CalibrationResult:
    industry: str
    r: float
    sigma: float
    q_hat: float
    fitted_cost: float
    fitted_days: float
    alpha_over_sigma: float
    converged: bool
    residual_norm: float
    iterations: int = 0
    jacobian_cond: float = math.nan
    message: str = ""

    def row(self) -> tuple:
        return (self.industry, self.r, self.sigma, self.q_hat, self.fitted_cost, self.fitted_days,
                self.alpha_over_sigma, self.converged, self.residual_norm)


def forward(r: float, sigma: float, l: float = DEFAULT_L, M: float = DEFAULT_M) -> Forward:
    """Cost V(q_hat) and detection time 365 (1 - u(q_hat)) / r for given parameters."""
    eq = solve(ModelParams(M=M, l=l, r=r, sigma=sigma))
    q_hat = optimal_attack_prob(eq).q_hat
    return Forward(q_hat=q_hat, cost=float(eq.V(q_hat)),
                   days=DAYS_PER_YEAR * (1.0 - float(eq.u(q_hat))) / r,
                   alpha_over_sigma=float(eq.alpha(q_hat)) / sigma)


def _residual(x: np.ndarray, target: CalibrationTarget) -> np.ndarray:
    try:
        fw = forward(math.exp(x[0]), math.exp(x[1]), target.l, target.M)
    except (ValueError, ArithmeticError, RuntimeError):
        return np.full(2, np.inf)
    return np.array([fw.cost / target.avg_cost - 1.0, fw.days / target.avg_days - 1.0])


def _jacobian(x: np.ndarray, f0: np.ndarray, target: CalibrationTarget, rel_step: float) -> np.ndarray:
    jac = np.empty((2, 2))
    for j in range(2):
        # a relative step of h on a parameter is a step of log(1 + h) on its log
        step = math.log1p(rel_step)
        xj = x.copy()
        xj[j] += step
        jac[:, j] = (_residual(xj, target) - f0) / step
    return jac


def _newton(x, target, tol, max_iter, rel_step):
    f = _residual(x, target)
    norm = float(np.max(np.abs(f)))
    jac = np.full((2, 2), np.nan)
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return x, f, norm, it - 1, jac, True
        jac = _jacobian(x, f, target, rel_step)
        if not np.all(np.isfinite(jac)):
            return x, f, norm, it, jac, False
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return x, f, norm, it, jac, False
        lam = 1.0
        while lam > 1e-6:
            x_new = x + lam * dx
            f_new = _residual(x_new, target)
            norm_new = float(np.max(np.abs(f_new)))
            if norm_new < norm:
                break
            lam *= 0.5
        else:
            return x, f, norm, it, jac, False
        x, f, norm = x_new, f_new, norm_new
    return x, f, norm, max_iter, jac, norm <= tol


def _grid_seed(target: CalibrationTarget, n: int = 40) -> np.ndarray:
    """Best point of a log grid over plausible (r, sigma)."""
    best, best_norm = None, math.inf
    for lr in np.linspace(math.log(0.02), math.log(5.0), n):
        for ls in np.linspace(math.log(target.avg_cost / 20), math.log(target.avg_cost * 20), n):
            x = np.array([lr, ls])
            norm = float(np.max(np.abs(_residual(x, target))))
            if norm < best_norm:
                best, best_norm = x, norm
    return best


def calibrate(target: CalibrationTarget, *, tol: float = 1e-8, max_iter: int = 50,
              rel_step: float = 1e-6, r0: float = 0.4, sigma0: float | None = None) -> CalibrationResult:
    """Solve for (r, sigma) matching the target's cost and detection time.

    Newton starts at (r0, sigma0 = avg_cost) and restarts from the best
    point of a 40 x 40 log-grid if it stalls.  ``residual_norm`` is the
    larger of the two relative mismatches.
    """
    x0 = np.log([r0, target.avg_cost if sigma0 is None else sigma0])
    x, f, norm, iters, jac, ok = _newton(x0, target, tol, max_iter, rel_step)
    message = ""
    if not ok:
        seed = _grid_seed(target)
        if seed is not None:
            x2, f2, norm2, it2, jac2, ok2 = _newton(seed, target, tol, max_iter, rel_step)
            iters += it2
            if norm2 < norm:
                x, f, norm, jac, ok = x2, f2, norm2, jac2, ok2
        message = "converged after grid restart" if ok else f"no convergence, best residual {norm:.3g}"
    r, sigma = (float(v) for v in np.exp(x))
    try:
        fw = forward(r, sigma, target.l, target.M)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return CalibrationResult(target.industry, r, sigma, math.nan, math.nan, math.nan, math.nan,
                                 False, math.inf, iters, math.nan, f"forward evaluation failed: {exc}")
    cond = float(np.linalg.cond(jac)) if np.all(np.isfinite(jac)) else math.nan
    return CalibrationResult(target.industry, r, sigma, fw.q_hat, fw.cost, fw.days, fw.alpha_over_sigma,
                             bool(ok), norm, iters, cond, message)


def _safe_calibrate(target: CalibrationTarget, kwargs: dict) -> CalibrationResult:
    try:
        return calibrate(target, **kwargs)
    except Exception as exc:  # one bad row must not sink the batch
        return CalibrationResult(target.industry, math.nan, math.nan, math.nan, math.nan, math.nan,
                                 math.nan, False, math.inf, 0, math.nan, f"{type(exc).__name__}: {exc}")


def calibrate_all(targets, *, workers: int = 1, **kwargs) -> list[CalibrationResult]:
    """Calibrate each target independently; failures are reported per row."""
    targets = list(targets)
    if workers <= 1 or len(targets) <= 1:
        return [_safe_calibrate(t, kwargs) for t in targets]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: _safe_calibrate(t, kwargs), targets))


def _parse_positive(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise CalibrationInputError(f"line {line}: {column} is not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise CalibrationInputError(f"line {line}: {column} must be positive, got {text.strip()}")
    return value


def parse_table(text: str, *, l: float = DEFAULT_L, M: float = DEFAULT_M) -> list[CalibrationTarget]:
    """Parse CSV text with header industry,avg_cost_musd,avg_days."""
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    if tuple(header) != INPUT_COLUMNS:
        raise CalibrationInputError(f"line 1: expected header {','.join(INPUT_COLUMNS)}, got {','.join(header)}")
    targets = []
    for fields in reader:
        line = reader.line_num
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != 3:
            raise CalibrationInputError(f"line {line}: expected 3 fields, got {len(fields)}")
        name = fields[0].strip()
        if not name:
            raise CalibrationInputError(f"line {line}: empty industry name")
        targets.append(CalibrationTarget(name, _parse_positive(fields[1], "avg_cost_musd", line),
                                         _parse_positive(fields[2], "avg_days", line), l=l, M=M))
    return targets


def ingest_table(path, *, l: float = DEFAULT_L, M: float = DEFAULT_M) -> list[CalibrationTarget]:
    """Read a calibration table from a UTF-8 CSV file."""
    return parse_table(Path(path).read_text(encoding="utf-8"), l=l, M=M)


def bundled_table_path():
    """Path of the 17-industry breach table shipped with the package."""
    return resources.files("cyberrep") / "data" / "industry_breaches.csv"


def write_results(results, fh) -> None:
    """Write results as CSV with the columns of OUTPUT_COLUMNS."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(OUTPUT_COLUMNS)
    for res in results:
        industry, *numbers, converged, norm = res.row()
        writer.writerow([industry, *(repr(float(v)) for v in numbers), str(converged).lower(), repr(float(norm))])
