import io
import math

import numpy as np
import pytest

from cyberrep import sim
from cyberrep.equilibrium import ModelParams, blocking_prob, solve


def test_step_suspicion_examples(global_eq):
    a = float(global_eq.alpha(0.1))
    s2 = 4.1 ** 2
    got = sim.step_suspicion(0.1, 1, global_eq, 1e-3, 0.01)
    expected = 0.1 + 0.1 * 0.9 * a / s2 * (a * 1e-3 + 4.1 * 0.01 - 0.1 * a * 1e-3)
    assert got == pytest.approx(expected, rel=1e-14)
    # innocent drift pulls q down when there is no noise
    assert sim.step_suspicion(0.1, 0, global_eq, 1e-3, 0.0) < 0.1 < sim.step_suspicion(0.1, 1, global_eq, 1e-3, 0.0)


def test_step_suspicion_clamps_and_absorbs(global_eq):
    assert sim.step_suspicion(0.2, 1, global_eq, 1.0, -50.0) == 0.0
    assert sim.step_suspicion(0.28, 1, global_eq, 1.0, 50.0) == 1.0
    assert sim.step_suspicion(0.0, 1, global_eq, 1e-3, 5.0) == 0.0
    assert sim.step_suspicion(1.0, 0, global_eq, 1e-3, -5.0) == 1.0


def test_prior_at_barrier_is_blocked_at_time_zero(global_eq):
    cfg = sim.SimConfig(n_paths=10, q0=global_eq.p)
    out = sim.simulate_path(0, global_eq, cfg, 3)
    assert out.blocked and out.stop_time == 0.0 and out.theft == 0.0
    batch = sim.simulate_batch(global_eq, sim.SimConfig(n_paths=10, q0=0.5))
    assert np.all(batch.blocked) and np.all(batch.stop_time == 0.0)


def test_common_noise_attacker_dominates(global_eq):
    cfg = sim.SimConfig(n_paths=1, q0=0.1, dt=1 / 365, bridge=False)
    for i in range(40):
        bad = sim.simulate_path(1, global_eq, cfg, i, record=True)
        good = sim.simulate_path(0, global_eq, cfg, i, record=True)
        # compare while both are alive; a stopped path freezes wherever it overshot
        n = int(round(min(bad.stop_time, good.stop_time) / cfg.dt))
        assert np.all(bad.trajectory[:n] >= good.trajectory[:n])
        if good.blocked:
            assert bad.blocked and bad.stop_time <= good.stop_time


def test_kernel_matches_step_replay(global_eq):
    dt = 1 / 365
    cfg = sim.SimConfig(n_paths=1, q0=0.1, dt=dt, bridge=False, seed=11)
    out = sim.simulate_path(1, global_eq, cfg, 4, record=True)
    gen = sim.path_generator(11, 4)
    gen.random()
    T = gen.exponential(1 / global_eq.params.r)
    q = 0.1
    steps = int(min(T, out.stop_time) / dt + 1e-9)
    for k in range(1, steps + 1):
        if k * dt > T:
            break
        q = sim.step_suspicion(q, 1, global_eq, dt, math.sqrt(dt) * gen.standard_normal())
        assert out.trajectory[k] == pytest.approx(q, rel=1e-6)
        if q >= global_eq.p:
            break


def test_outcome_does_not_depend_on_workers_or_rerun(global_eq):
    cfg = sim.SimConfig(n_paths=500, q0=0.1, x_true=0.3, dt=1 / 365, seed=9)
    a = sim.simulate_batch(global_eq, cfg)
    b = sim.simulate_batch(global_eq, cfg, workers=3)
    c = sim.simulate_batch(global_eq, cfg)
    for name in ("theta", "status", "stop_time", "terminal_q", "theft"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
        assert np.array_equal(getattr(a, name), getattr(c, name))
    single = sim.simulate_path(int(a.theta[17]), global_eq, cfg, 17)
    assert single.stop_time == a.stop_time[17] and single.terminal_q == a.terminal_q[17]


def test_streams_are_distinct():
    draws = {tuple(sim.path_generator(1, i).random(4)) for i in range(50)}
    draws |= {tuple(sim.path_generator(1, i, bridge=True).random(4)) for i in range(50)}
    draws.add(tuple(sim.path_generator(2, 0).random(4)))
    assert len(draws) == 101


def test_bridge_leaves_brownian_path_unchanged(global_eq):
    on = sim.SimConfig(n_paths=1, q0=0.1, dt=1 / 365, seed=2)
    off = sim.SimConfig(n_paths=1, q0=0.1, dt=1 / 365, seed=2, bridge=False)
    for i in range(20):
        a, b = sim.simulate_path(1, global_eq, on, i), sim.simulate_path(1, global_eq, off, i)
        # the crossing test can only stop a path earlier
        assert a.stop_time <= b.stop_time
        if b.blocked:
            assert a.blocked


@pytest.mark.parametrize("params", [ModelParams(M=100, l=1.52, r=0.39, sigma=4.1),
                                    ModelParams(M=1, l=1, r=1, sigma=2),
                                    ModelParams(M=5, l=1.52, r=0.39, sigma=4.1)])
def test_alpha_table_accuracy(params):
    eq = solve(params)
    table = sim.AlphaTable.build(eq)
    q = np.concatenate([np.geomspace(1e-12, 1e-3, 2000), np.linspace(1e-3, eq.p, 5001)[1:-1],
                        np.random.default_rng(0).uniform(0, eq.p, 3000)])
    exact = eq.alpha(q)
    assert np.max(np.abs(table(q) / exact - 1)) <= 1e-7


@pytest.mark.parametrize("q0", [0.05, 0.10, 0.20])
def test_hitting_probability(global_eq, q0):
    n = 20_000
    cfg = sim.SimConfig(n_paths=n, q0=q0, dt=1 / 1825, seed=int(q0 * 1000))
    batch = sim.simulate_batch(global_eq, cfg, theta=1)
    u = blocking_prob(q0, global_eq)
    se = math.sqrt(u * (1 - u) / n)
    assert abs(batch.blocked.mean() - u) <= 4 * se
    stop = np.minimum(batch.stop_time, cfg.horizon_for(global_eq))
    t_se = stop.std() / math.sqrt(n)
    assert abs(stop.mean() - sim.expected_detection_time(global_eq, q0)) <= 4 * t_se


@pytest.mark.slow
@pytest.mark.parametrize("q0", [0.05, 0.10, 0.14, 0.20])
def test_hitting_probability_full_scale(global_eq, q0):
    n = 100_000
    cfg = sim.SimConfig(n_paths=n, q0=q0, dt=1 / 3650, seed=100 + int(q0 * 100))
    batch = sim.simulate_batch(global_eq, cfg, theta=1)
    u = blocking_prob(q0, global_eq)
    assert abs(batch.blocked.mean() - u) <= 3 * math.sqrt(u * (1 - u) / n)
    stop = np.minimum(batch.stop_time, cfg.horizon_for(global_eq))
    assert abs(stop.mean() - sim.expected_detection_time(global_eq, q0)) <= 3 * stop.std() / math.sqrt(n)


@pytest.mark.slow
def test_discretization_error_shrinks_with_dt(global_eq):
    # Plain discrete monitoring (no crossing test) misses barrier crossings between
    # grid points, an O(sqrt(dt)) deficit in the hitting frequency.  All three runs
    # share Brownian increments path by path, so the two successive changes are
    # paired differences with small variance.
    n = 200_000
    hits = []
    for dt in (1 / 365, 1 / 730, 1 / 1460):
        cfg = sim.SimConfig(n_paths=n, q0=0.14, dt=dt, brownian_dt=1 / 1460, seed=2718, bridge=False)
        hits.append(sim.simulate_batch(global_eq, cfg, theta=1).blocked.astype(float))
    d1 = hits[1] - hits[0]
    d2 = hits[2] - hits[1]
    assert abs(d2.mean()) < abs(d1.mean())
    # refining the grid only adds crossings on average
    assert d1.mean() > 0 and d2.mean() > 0


def test_innocent_blocking_rate(global_eq):
    # P(theta = 1 | blocked) = p pins the innocent rate to q0 u (1 - p) / (p (1 - q0))
    n, q0, p = 20_000, 0.1, global_eq.p
    batch = sim.simulate_batch(global_eq, sim.SimConfig(n_paths=n, q0=q0, dt=1 / 1825, seed=4), theta=0)
    u0 = q0 * blocking_prob(q0, global_eq) * (1 - p) / (p * (1 - q0))
    assert abs(batch.blocked.mean() - u0) <= 4 * math.sqrt(u0 * (1 - u0) / n)


def test_run_population_basics(global_eq):
    cfg = sim.SimConfig(n_paths=5000, q0=0.1, x_true=0.14, dt=1 / 365, seed=21)
    res = sim.run_population(global_eq, cfg, workers=2)
    assert res.times.size == sim.REPORT_POINTS and res.times[0] == 0.0
    assert np.all(np.diff(res.br) >= 0)
    slope, offset = sim.estimator_coefficients(global_eq, 0.1)
    assert np.allclose(res.ee, slope * res.br - offset, rtol=0, atol=1e-15)
    assert np.all(res.ee_lo99 <= res.ee_lo95) and np.all(res.ee_lo95 <= res.ee)
    assert np.all(res.ee <= res.ee_hi95) and np.all(res.ee_hi95 <= res.ee_hi99)
    assert res.n_blocked == int(res.br[-1] * 5000 + 0.5)
    assert res.mu_theta == pytest.approx(res.ee[-1])


def test_run_population_no_attackers(global_eq):
    res = sim.run_population(global_eq, sim.SimConfig(n_paths=20_000, q0=0.1, dt=1 / 365, seed=8))
    assert abs(res.mu_theta) <= 3 * max(res.mu_se, 1e-12)


def test_run_population_rejects_prior_outside_interval(global_eq):
    for q0 in (0.0, global_eq.p, 0.5):
        with pytest.raises(ValueError):
            sim.run_population(global_eq, sim.SimConfig(n_paths=10, q0=q0))


def test_running_fraction_warning(global_eq):
    cfg = sim.SimConfig(n_paths=200, q0=0.1, horizon=0.05, dt=1 / 365)
    with pytest.warns(RuntimeWarning, match="still running"):
        res = sim.run_population(global_eq, cfg)
    assert res.running_fraction > 0.5


def test_suspicion_is_a_martingale_when_prior_is_correct(global_eq):
    n = 20_000
    times = np.linspace(0, 5, 11)
    cfg = sim.SimConfig(n_paths=n, q0=0.1, x_true=0.1, dt=1 / 365, seed=13, horizon=5.0)
    batch = sim.simulate_batch(global_eq, cfg, obs_times=times, workers=2)
    means = batch.observed.mean(axis=0)
    se = batch.observed.std(axis=0) / math.sqrt(n)
    assert means[0] == pytest.approx(0.1, abs=1e-12)
    assert np.all(np.abs(means[1:] - 0.1) <= 4 * se[1:])


def test_sim_config_validation():
    for kw in (dict(n_paths=0), dict(n_paths=1.5), dict(dt=0.0), dict(dt=-1.0), dict(q0=1.5),
               dict(x_true=-0.1), dict(horizon=0.0), dict(seed=-1), dict(dt=0.01, brownian_dt=0.003)):
        base = dict(n_paths=10, q0=0.1)
        base.update(kw)
        with pytest.raises(ValueError):
            sim.SimConfig(**base)
    assert sim.SimConfig(n_paths=1, q0=0.1, dt=0.01, brownian_dt=0.0025).substeps == 4


def test_write_series_columns(global_eq):
    res = sim.run_population(global_eq, sim.SimConfig(n_paths=100, q0=0.1, dt=1 / 365, seed=1),
                             report_points=5)
    buf = io.StringIO()
    sim.write_series(res, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(sim.SERIES_COLUMNS) and len(lines) == 6
    assert np.allclose(np.loadtxt(io.StringIO(buf.getvalue()), delimiter=",", skiprows=1), res.series(),
                       rtol=0, atol=0)
