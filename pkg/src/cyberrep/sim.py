"""Euler-Maruyama simulation of the suspicion level and the blocking statistics built on it.

Every path owns a Philox stream keyed by the root seed, with the path index in
the top word of the 256-bit counter, so any subset of paths can be
simulated in any order (or on any number of threads) and still reproduce
the same numbers.  Each stream is consumed as: one uniform for the suspect
type, one exponential for the termination time, then standard normals for
the Brownian increments.  A second stream per path, half way through the
same counter block, feeds the uniforms of the barrier-crossing test, so
switching that test on or off leaves the Brownian path unchanged.

Barrier crossings between grid points are caught with the Brownian-bridge
test: a step that ends below the barrier still counts as a hit with
probability exp(-2 (b - q_n)(b - q_{n+1}) / (s^2 dt)), s being the local
diffusion coefficient q(1-q)alpha(q)/sigma.  Without it the discretely
monitored hitting probability is biased low by O(sqrt(dt)).

An innocent path whose suspicion falls below 1e-12 is frozen there until
its termination time: from such a level it could still reach the barrier
only with probability of order 1e-12.
"""
from __future__ import annotations

import csv
import functools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .equilibrium import EquilibriumSolution, blocking_prob

RUNNING, BLOCKED, TERMINATED = 0, 1, 2
REPORT_POINTS = 200
Z95 = 1.959963984540054
Z99 = 2.5758293035489004
SERIES_COLUMNS = ("t", "br", "ee", "ee_lo95", "ee_hi95", "ee_lo99", "ee_hi99")

# alpha is tabulated for the inner loop: log-spaced up to _LIN_START, then
# uniform in q up to p.
_LOG_NODES = 2 ** 16 + 1
_LIN_NODES = 2 ** 17 + 1
_LIN_START = 1e-3
_Q_FLOOR = 1e-300
_EXP_UNDERFLOW = 745.2
_INNOCENT_CUTOFF = 1e-12


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo settings.  Times are in years.

    ``horizon`` defaults to 10 / r when left as None.  ``brownian_dt``
    (default: ``dt``) is the resolution at which Brownian increments are
    drawn; runs with different ``dt`` but the same ``brownian_dt`` and seed
    share their noise path by path.  ``bridge=False`` turns off the
    between-step crossing test and leaves plain discrete monitoring.
    """

    n_paths: int
    q0: float
    x_true: float = 0.0
    dt: float = 1.0 / 3650
    horizon: float | None = None
    seed: int = 0
    brownian_dt: float | None = None
    bridge: bool = True

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be > 0")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")
        if not 0.0 <= self.x_true <= 1.0:
            raise ValueError("x_true must lie in [0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.substeps  # validates brownian_dt

    @property
    def substeps(self) -> int:
        if self.brownian_dt is None:
            return 1
        n = round(self.dt / self.brownian_dt)
        if n < 1 or not math.isclose(n * self.brownian_dt, self.dt, rel_tol=1e-9):
            raise ValueError("dt must be an integer multiple of brownian_dt")
        return n

    def horizon_for(self, eq: EquilibriumSolution) -> float:
        return self.horizon if self.horizon is not None else 10.0 / eq.params.r


@dataclass(frozen=True)
class PathOutcome:
    theta: int
    blocked: bool
    terminated: bool
    stop_time: float
    terminal_q: float
    theft: float
    trajectory: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PathBatch:
    """Per-path summaries in path-index order."""

    theta: np.ndarray
    status: np.ndarray
    stop_time: np.ndarray
    terminal_q: np.ndarray
    theft: np.ndarray
    observed: np.ndarray | None = None

    @property
    def blocked(self) -> np.ndarray:
        return self.status == BLOCKED

    @property
    def terminated(self) -> np.ndarray:
        return self.status == TERMINATED

    @property
    def running(self) -> np.ndarray:
        return self.status == RUNNING


@dataclass(frozen=True)
class AlphaTable:
    """Piecewise-linear stand-in for alpha on (q_star, p) used inside the compiled loop."""

    M: float
    q_star: float
    p: float
    alpha_p: float
    log_lo: float
    log_scale: float
    log_vals: np.ndarray
    lin_lo: float
    lin_scale: float
    lin_vals: np.ndarray

    @classmethod
    def build(cls, eq: EquilibriumSolution) -> "AlphaTable":
        M, p, q_star = eq.params.M, eq.p, eq.q_star
        if eq.saturated:
            flat = np.full(2, M)
            return cls(M, p, p, M, 0.0, 0.0, flat, p, 0.0, flat)
        lin_lo = max(_LIN_START, q_star)
        lin_q = np.linspace(lin_lo, p, _LIN_NODES)
        lin_vals = eq.alpha(lin_q)
        log_lo = math.log(max(q_star, _Q_FLOOR))
        log_hi = math.log(lin_lo)
        if log_hi > log_lo:
            log_vals = eq.alpha(np.exp(np.linspace(log_lo, log_hi, _LOG_NODES)))
        else:
            log_vals = np.full(2, lin_vals[0])
        log_scale = (log_vals.size - 1) / (log_hi - log_lo) if log_hi > log_lo else 0.0
        lin_scale = (_LIN_NODES - 1) / (p - lin_lo) if p > lin_lo else 0.0
        return cls(M, q_star, p, eq.alpha_at_p, log_lo, log_scale, log_vals, lin_lo, lin_scale, lin_vals)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        return np.vectorize(lambda x: _alpha_lookup(x, *self._args()))(q)

    def _args(self):
        return (self.M, self.q_star, self.p, self.alpha_p, self.log_lo, self.log_scale, self.log_vals,
                self.lin_lo, self.lin_scale, self.lin_vals)


@functools.lru_cache(maxsize=8)
def _table(eq: EquilibriumSolution) -> AlphaTable:
    return AlphaTable.build(eq)


@numba.njit(nogil=True, cache=True, error_model="numpy")
def _interp(x, lo, scale, vals):
    n = vals.shape[0] - 1
    s = (x - lo) * scale
    if s <= 0.0:
        return vals[0]
    i = int(s)
    if i >= n:
        return vals[n]
    w = s - i
    return vals[i] + (vals[i + 1] - vals[i]) * w


@numba.njit(nogil=True, cache=True, error_model="numpy")
def _alpha_lookup(q, M, q_star, p, alpha_p, log_lo, log_scale, log_vals, lin_lo, lin_scale, lin_vals):
    if q <= q_star:
        return M
    if q >= p:
        return alpha_p
    if q < lin_lo:
        return _interp(math.log(max(q, 1e-300)), log_lo, log_scale, log_vals)
    return _interp(q, lin_lo, lin_scale, lin_vals)


@numba.njit(nogil=True, cache=True, error_model="numpy")
def _euler_step(q, theta, a, sigma, dt, dw):
    if q <= 0.0 or q >= 1.0:
        return q
    drift = a if theta == 1 else 0.0
    q = q + q * (1.0 - q) * a / (sigma * sigma) * (drift * dt + sigma * dw - q * a * dt)
    if q < 0.0:
        return 0.0
    if q > 1.0:
        return 1.0
    return q


@numba.njit(nogil=True, cache=True, error_model="numpy")
def _run_path(gen, bridge_gen, bridge, theta_fixed, x_true, q0, barrier, horizon, dt, substeps, sigma, r,
              M, q_star, p, alpha_p, log_lo, log_scale, log_vals, lin_lo, lin_scale, lin_vals,
              obs_times, obs_out, traj):
    """Simulate one path; returns (theta, status, stop_time, terminal_q, theft)."""
    u_type = gen.random()
    if theta_fixed >= 0:
        theta = theta_fixed
    else:
        theta = 1 if u_type < x_true else 0
    T = gen.exponential(1.0 / r)
    sub_sd = math.sqrt(dt / substeps)
    n_obs = obs_times.shape[0]
    record = traj.shape[0] > 0
    q = q0
    t = 0.0
    theft = 0.0
    k = 0
    j = 0
    status = 0
    stop = horizon
    if record:
        traj[0] = q
    if q >= barrier:
        status = 1
        stop = 0.0
    else:
        while True:
            t_next = (k + 1) * dt
            while j < n_obs and obs_times[j] < min(t_next, T):
                obs_out[j] = q
                j += 1
            if t >= horizon:
                break
            a = _alpha_lookup(q, M, q_star, p, alpha_p, log_lo, log_scale, log_vals, lin_lo, lin_scale, lin_vals)
            dw = 0.0
            for _ in range(substeps):
                dw += gen.standard_normal()
            dw *= sub_sd
            if t_next > T:
                if theta == 1:
                    theft += a * (T - t)
                status = 2
                stop = T
                break
            if theta == 1:
                theft += a * dt
            q_prev = q
            q = _euler_step(q, theta, a, sigma, dt, dw)
            t = t_next
            k += 1
            if bridge and q < barrier:
                s = q_prev * (1.0 - q_prev) * a / sigma
                var = s * s * dt
                x = 2.0 * (barrier - q_prev) * (barrier - q)
                # a uniform is drawn only when exp(-x / var) can be nonzero; far from
                # the barrier (and once var underflows near q = 0) the test cannot fire
                if x < _EXP_UNDERFLOW * var:
                    if bridge_gen.random() < math.exp(-x / var):
                        q = barrier
            if record and k < traj.shape[0]:
                traj[k] = q
            if q >= barrier:
                status = 1
                stop = t
                break
            if theta == 0 and q < _INNOCENT_CUTOFF:
                # an innocent path from q reaches the barrier with probability below
                # q (1 - p) / (p (1 - q)), so it is frozen until T instead of stepped
                if T < horizon:
                    status = 2
                    stop = T
                break
    while j < n_obs:
        obs_out[j] = q
        j += 1
    if record:
        traj[k + 1:] = q
    return theta, status, stop, q, theft


def path_generator(seed: int, path_index: int, *, bridge: bool = False) -> np.random.Generator:
    """Independent stream for one path: Philox keyed by seed, counter offset by the path index.

    ``bridge=True`` gives the path's second stream, which starts 2**191
    blocks into the same counter range and so never meets the first.
    """
    counter = (int(path_index) << 192) | ((1 << 191) if bridge else 0)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


_EMPTY = np.empty(0)


def step_suspicion(q: float, theta: int, eq: EquilibriumSolution, dt: float, dW: float) -> float:
    """One Euler step of the suspicion level; 0 and 1 are absorbing."""
    if q <= 0.0 or q >= 1.0:
        return float(q)
    return float(_euler_step(float(q), int(theta), float(eq.alpha(q)), eq.params.sigma, float(dt), float(dW)))


def simulate_path(theta: int, eq: EquilibriumSolution, cfg: SimConfig, path_index: int, *,
                  record: bool = False, barrier: float | None = None) -> PathOutcome:
    """Simulate suspect ``path_index`` with a fixed type.

    The path stops at the first step end with q >= p (blocked), when the
    termination time T arrives, or at the horizon, and stays frozen there.
    Calling this with theta=0 and theta=1 for the same index uses the same
    T and the same Brownian increments.
    """
    if theta not in (0, 1):
        raise ValueError("theta must be 0 or 1")
    table = _table(eq)
    horizon = cfg.horizon_for(eq)
    traj = np.empty(int(math.ceil(horizon / cfg.dt)) + 1) if record else _EMPTY
    th, status, stop, q_end, theft = _run_path(
        path_generator(cfg.seed, path_index), path_generator(cfg.seed, path_index, bridge=True),
        cfg.bridge, theta, cfg.x_true, cfg.q0,
        eq.p if barrier is None else barrier, horizon, cfg.dt, cfg.substeps,
        eq.params.sigma, eq.params.r, *table._args(), _EMPTY, _EMPTY, traj)
    return PathOutcome(theta=th, blocked=status == BLOCKED, terminated=status == TERMINATED,
                       stop_time=stop, terminal_q=q_end, theft=theft,
                       trajectory=traj if record else None)


def _chunk(args):
    (lo, hi, seed, bridge, theta_fixed, x_true, q0, barrier, horizon, dt, substeps, sigma, r,
     table_args, obs_times, out) = args
    theta, status, stop, q_end, theft, observed = out
    for i in range(lo, hi):
        obs_row = observed[i] if observed is not None else _EMPTY
        res = _run_path(path_generator(seed, i), path_generator(seed, i, bridge=True), bridge,
                        theta_fixed, x_true, q0, barrier, horizon, dt, substeps, sigma, r, *table_args, obs_times, obs_row, _EMPTY)
        theta[i], status[i], stop[i], q_end[i], theft[i] = res


def simulate_batch(eq: EquilibriumSolution, cfg: SimConfig, *, theta: int | None = None,
                   barrier: float | None = None, obs_times: np.ndarray | None = None,
                   workers: int = 1) -> PathBatch:
    """Simulate paths 0..n_paths-1 of ``cfg``.

    With ``theta=None`` every type is drawn from Bernoulli(x_true).
    ``obs_times`` asks for q at those times (frozen after the path stops).
    Work is split into contiguous index blocks, so the result does not
    depend on ``workers``.
    """
    n = int(cfg.n_paths)
    horizon = cfg.horizon_for(eq)
    barrier = eq.p if barrier is None else float(barrier)
    table_args = _table(eq)._args()
    obs = np.ascontiguousarray(obs_times, dtype=float) if obs_times is not None else _EMPTY
    out = (np.empty(n, np.int8), np.empty(n, np.int8), np.empty(n), np.empty(n), np.empty(n),
           np.empty((n, obs.size)) if obs_times is not None else None)
    theta_fixed = -1 if theta is None else int(theta)
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    jobs = [(int(bounds[w]), int(bounds[w + 1]), cfg.seed, cfg.bridge, theta_fixed, cfg.x_true, cfg.q0, barrier,
             horizon, cfg.dt, cfg.substeps, eq.params.sigma, eq.params.r, table_args, obs, out)
            for w in range(workers)]
    if workers == 1:
        _chunk(jobs[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_chunk, jobs))
    return PathBatch(theta=out[0], status=out[1], stop_time=out[2], terminal_q=out[3],
                     theft=out[4], observed=out[5])


@dataclass(frozen=True)
class MonteCarloResult:
    """Blocked ratio BR(t) and the affine estimate EE(t) of the attacker fraction.

    Bands are normal-approximation intervals for the blocked proportion,
    mapped through the same affine transform as EE.
    """

    times: np.ndarray
    br: np.ndarray
    ee: np.ndarray
    ee_lo95: np.ndarray
    ee_hi95: np.ndarray
    ee_lo99: np.ndarray
    ee_hi99: np.ndarray
    mu_theta: float
    mu_se: float
    n_blocked: int
    n_paths: int
    running_fraction: float
    q0: float
    p: float
    u_q0: float
    batch: PathBatch = field(repr=False)

    def series(self) -> np.ndarray:
        """Columns of SERIES_COLUMNS stacked as an (n_times, 7) array."""
        return np.column_stack([self.times, self.br, self.ee, self.ee_lo95, self.ee_hi95,
                                self.ee_lo99, self.ee_hi99])


def estimator_coefficients(eq: EquilibriumSolution, q0: float) -> tuple[float, float]:
    """(slope, offset) with mu = slope * blocked_fraction - offset."""
    p = eq.p
    u0 = blocking_prob(q0, eq)
    return p * (1 - q0) / ((p - q0) * u0), q0 * (1 - p) / (p - q0)


def run_population(eq: EquilibriumSolution, cfg: SimConfig, *, workers: int = 1,
                   report_points: int = REPORT_POINTS) -> MonteCarloResult:
    """Simulate a population with attacker fraction x_true seen through the prior q0."""
    if not 0.0 < cfg.q0 < eq.p:
        raise ValueError(f"q0 must lie in (0, p) = (0, {eq.p:.6g})")
    batch = simulate_batch(eq, cfg, workers=workers)
    n = cfg.n_paths
    horizon = cfg.horizon_for(eq)
    times = np.linspace(0.0, horizon, report_points)
    block_times = np.sort(batch.stop_time[batch.blocked])
    br = np.searchsorted(block_times, times, side="right") / n
    slope, offset = estimator_coefficients(eq, cfg.q0)
    ee = slope * br - offset
    se = slope * np.sqrt(br * (1 - br) / n)
    running = float(np.mean(batch.running))
    if running >= 1e-3:
        warnings.warn(f"{running:.2%} of paths were still running at the horizon", RuntimeWarning,
                      stacklevel=2)
    n_blocked = int(np.count_nonzero(batch.blocked))
    frac = n_blocked / n
    return MonteCarloResult(
        times=times, br=br, ee=ee, ee_lo95=ee - Z95 * se, ee_hi95=ee + Z95 * se,
        ee_lo99=ee - Z99 * se, ee_hi99=ee + Z99 * se,
        mu_theta=slope * frac - offset, mu_se=slope * math.sqrt(frac * (1 - frac) / n),
        n_blocked=n_blocked, n_paths=n, running_fraction=running, q0=cfg.q0, p=eq.p,
        u_q0=blocking_prob(cfg.q0, eq), batch=batch)


def expected_detection_time(eq: EquilibriumSolution, q0: float) -> float:
    """E[min(tau_p, T) | attacker] in years, (1 - u(q0)) / r."""
    if not 0.0 <= q0 <= eq.p:
        raise ValueError(f"q0 must lie in [0, p] = [0, {eq.p:.6g}]")
    return (1.0 - blocking_prob(q0, eq)) / eq.params.r


def write_series(result: MonteCarloResult, fh) -> None:
    """Write the BR/EE series as CSV with the columns of SERIES_COLUMNS."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SERIES_COLUMNS)
    for row in result.series():
        writer.writerow([repr(float(v)) for v in row])
