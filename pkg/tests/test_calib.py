import io
import math

import numpy as np
import pytest

from cyberrep import calib
from cyberrep.equilibrium import ModelParams, Regime, solve


def test_forward_at_global_parameters():
    fw = calib.forward(0.39, 4.1)
    assert fw.cost == pytest.approx(3.86, abs=0.1)
    assert fw.days == pytest.approx(280, abs=5)
    assert fw.alpha_over_sigma == pytest.approx(1.23, abs=0.02)


def test_round_trip():
    fw = calib.forward(0.5, 3.0)
    res = calib.calibrate(calib.CalibrationTarget("synthetic", fw.cost, fw.days))
    assert res.converged
    assert res.r == pytest.approx(0.5, rel=1e-6)
    assert res.sigma == pytest.approx(3.0, rel=1e-6)


def test_forward_inverse_consistency_random_interior():
    rng = np.random.default_rng(12)
    for _ in range(30):
        r = math.exp(rng.uniform(math.log(0.15), math.log(1.2)))
        sigma = math.exp(rng.uniform(math.log(0.5), math.log(12.0)))
        assert solve(ModelParams(M=100, l=1.52, r=r, sigma=sigma)).regime is Regime.INTERIOR
        fw = calib.forward(r, sigma)
        res = calib.calibrate(calib.CalibrationTarget("x", fw.cost, fw.days))
        assert res.converged, res
        assert abs(res.r / r - 1) <= 1e-6 and abs(res.sigma / sigma - 1) <= 1e-6


def test_converged_results_meet_relative_tolerance():
    target = calib.CalibrationTarget("Research", 1.53, 244)
    res = calib.calibrate(target)
    assert res.converged and res.residual_norm <= 1e-8
    assert abs(res.fitted_cost - 1.53) <= 1e-6 * 1.53
    assert abs(res.fitted_days - 244) <= 1e-6 * 244
    assert res.r == pytest.approx(0.49, abs=0.02) and res.sigma == pytest.approx(1.6, abs=0.15)
    assert math.isfinite(res.jacobian_cond)


def test_healthcare_and_global_rows():
    h = calib.calibrate(calib.CalibrationTarget("Healthcare", 7.13, 329))
    assert h.r == pytest.approx(0.32, abs=0.02) and h.sigma == pytest.approx(7.1, abs=0.15)
    g = calib.calibrate(calib.CalibrationTarget("Global average", 3.86, 280))
    assert g.r == pytest.approx(0.39, abs=0.02) and g.sigma == pytest.approx(4.1, abs=0.15)
    assert g.alpha_over_sigma == pytest.approx(1.23, abs=0.02)


def test_grid_restart_rescues_a_bad_start():
    res = calib.calibrate(calib.CalibrationTarget("Retail", 2.01, 311), r0=50.0, sigma0=1e-3, max_iter=3)
    assert res.converged
    assert res.r == pytest.approx(0.37, abs=0.02)


def test_calibrate_all_isolates_failures(monkeypatch):
    real = calib.calibrate

    def flaky(target, **kw):
        if target.industry == "boom":
            raise RuntimeError("solver exploded")
        return real(target, **kw)

    monkeypatch.setattr(calib, "calibrate", flaky)
    targets = [calib.CalibrationTarget("Media", 1.65, 281), calib.CalibrationTarget("boom", 1.0, 100),
               calib.CalibrationTarget("Media", 1.65, 281)]
    out = calib.calibrate_all(targets)
    assert [r.industry for r in out] == ["Media", "boom", "Media"]
    assert out[0].converged and not out[1].converged and "exploded" in out[1].message
    assert out[0] == out[2]


def test_calibrate_all_threads_match_serial():
    targets = calib.ingest_table(calib.bundled_table_path())[:4]
    assert calib.calibrate_all(targets) == calib.calibrate_all(targets, workers=3)


def test_target_validation():
    with pytest.raises(ValueError):
        calib.CalibrationTarget("x", 0.0, 10)
    with pytest.raises(ValueError):
        calib.CalibrationTarget("x", 1.0, -1)


def test_ingest_bundled_table():
    targets = calib.ingest_table(calib.bundled_table_path())
    assert len(targets) == 17
    assert targets[0] == calib.CalibrationTarget("Healthcare", 7.13, 329.0, 1.52, 100.0)


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert calib.ingest_table(path) == []


def test_ingest_negative_days_names_line(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("industry,avg_cost_musd,avg_days\nA,1.0,200\nB,2.0,-1\n")
    with pytest.raises(calib.CalibrationInputError, match="line 3"):
        calib.ingest_table(path)


@pytest.mark.parametrize("body, line", [
    ("industry,avg_cost_musd,avg_days\nA,1.0\n", "line 2"),
    ("industry,avg_cost_musd,avg_days\nA,1.0,200\nB,x,100\n", "line 3"),
    ("name,cost,days\nA,1,2\n", "line 1"),
    ("industry,avg_cost_musd,avg_days\n,1,2\n", "line 2"),
])
def test_ingest_malformed(tmp_path, body, line):
    path = tmp_path / "t.csv"
    path.write_text(body)
    with pytest.raises(calib.CalibrationInputError, match=line):
        calib.ingest_table(path)


def test_ingest_overrides_l_and_M(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("industry,avg_cost_musd,avg_days\nA,1.0,200\n")
    (t,) = calib.ingest_table(path, l=2.0, M=50.0)
    assert t.l == 2.0 and t.M == 50.0


def test_write_results_columns():
    res = calib.calibrate(calib.CalibrationTarget("Public", 1.08, 324))
    buf = io.StringIO()
    calib.write_results([res], buf)
    header, row = buf.getvalue().splitlines()
    assert header == ",".join(calib.OUTPUT_COLUMNS)
    fields = row.split(",")
    assert fields[0] == "Public" and fields[7] == "true"
    assert float(fields[1]) == res.r
