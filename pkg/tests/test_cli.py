import json
import math
import subprocess
import sys

import numpy as np
import pytest

from powerpool.cli import main, run
from powerpool.io import read_csv, read_field_file, read_json, write_json

SMALL_TRUTH = ["--days", "800", "--resolution", "4", "--scale-fields", "500", "--seed", "3"]


def call(argv):
    return run([str(a) for a in argv])


def ok(argv):
    code, msg = call(argv)
    assert code == 0, msg


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ok(["gen-truth", "--out", root / "truth", "--with-temperature", *SMALL_TRUTH])
    truth = root / "truth" / "truth.csf"
    ok(["gen-forecast", "--out", root / "fc", "--truth", truth, "--issue-start", 400,
        "--issue-count", 300, "--leads", "1,7", "--n-members", 12])
    return root


def test_gen_truth_outputs(pipeline):
    d = pipeline / "truth"
    names = {p.name for p in d.iterdir()}
    assert {"truth.csf", "truth.csf.json", "rho.csf", "temperature.csf", "manifest.json"} <= names
    x = read_field_file(d / "truth.csf")
    assert x.shape == (800, 1, 6, 4, 4)
    meta = read_json(d / "truth.csf.json")
    assert meta["seed"] == 3 and meta["rho"] == 0.8 and meta["start"] == "2000-01-01"
    rho = np.unique(read_field_file(d / "rho.csf"))
    assert np.allclose(rho, [0.62, 0.98])


def test_manifest_echoes_configuration(pipeline):
    m = read_json(pipeline / "fc" / "manifest.json")
    assert m["command"] == "gen-forecast"
    assert m["config"]["seed"] == 42 and m["config"]["leads"] == [1, 7]
    assert set(m["outputs"]) == {
        "forecast_lead01.csf", "forecast_lead01.csf.json",
        "forecast_lead07.csf", "forecast_lead07.csf.json",
    }
    assert any(k.endswith("truth.csf") for k in m["inputs"])
    fc = read_field_file(pipeline / "fc" / "forecast_lead07.csf")
    assert fc.shape == (300, 12, 6, 4, 4)


def test_sweep_fit_and_leads(pipeline, tmp_path):
    truth = pipeline / "truth" / "truth.csf"
    fc7 = pipeline / "fc" / "forecast_lead07.csf"
    ok(["sweep-p", "--out", tmp_path / "sw", "--truth", truth, "--forecast", fc7,
        "--quantiles", "0.8,0.9,0.95", "--p-count", 9, "--p-max", 100])
    rows = read_csv(tmp_path / "sw" / "sweep.csv")
    assert len(rows) == 27 and list(rows[0]) == ["q", "p", "auc"]
    summary = read_json(tmp_path / "sw" / "summary.json")
    assert [e["q"] for e in summary["quantiles"]] == [0.8, 0.9, 0.95]
    assert set(summary["fit"]) == {"a", "b", "r_squared"}

    ok(["fit-exponent", "--out", tmp_path / "fit", "--summary", tmp_path / "sw" / "summary.json"])
    fit = read_json(tmp_path / "fit" / "fit.json")
    assert fit["a"] == summary["fit"]["a"]

    fc1 = pipeline / "fc" / "forecast_lead01.csf"
    ok(["eval-leads", "--out", tmp_path / "ev", "--truth", truth, "--forecasts", f"{fc1},{fc7}",
        "--summary", tmp_path / "sw" / "summary.json"])
    rows = read_csv(tmp_path / "ev" / "leads_q0.9.csv")
    assert {(r["method"], r["lead"]) for r in rows} == {
        (m, lead) for m in ("power_mean", "mean_prediction", "persistence", "climatology")
        for lead in (1, 7)
    }
    clim = [r["auc"] for r in rows if r["method"] == "climatology"]
    assert clim == [0.5, 0.5]


def test_singleton_grid(pipeline, tmp_path):
    ok(["sweep-p", "--out", tmp_path, "--truth", pipeline / "truth" / "truth.csf",
        "--forecast", pipeline / "fc" / "forecast_lead07.csf", "--p", "1", "--quantiles", "0.9"])
    summary = read_json(tmp_path / "summary.json")
    assert summary["quantiles"][0]["p_opt"] == 1.0
    assert "fit" not in summary


def test_fit_exponent_exact_law(tmp_path):
    qs = [0.8, 0.85, 0.9, 0.95, 0.98]
    write_json(tmp_path / "s.json", {"quantiles": [{"q": q, "p_opt": math.exp(5 * q - 2)} for q in qs]})
    ok(["fit-exponent", "--out", tmp_path / "o", "--summary", tmp_path / "s.json"])
    fit = read_json(tmp_path / "o" / "fit.json")
    assert abs(fit["a"] - 5) <= 1e-9 and abs(fit["b"] + 2) <= 1e-9
    assert abs(fit["r_squared"] - 1) <= 1e-12


def test_climatology_and_labels(pipeline, tmp_path):
    temp = pipeline / "truth" / "temperature.csf"
    ok(["fit-clim", "--out", tmp_path / "c", "--input", temp, "--window-days", 31])
    clim = tmp_path / "c" / "climatology.csf"
    assert read_field_file(clim).shape == (365, 2, 6, 4, 4)
    ok(["label", "--out", tmp_path / "l", "--input", temp, "--clim", clim, "--q", 0.9])
    labels = read_field_file(tmp_path / "l" / "labels.csf")
    assert labels.shape == (800, 1, 6, 4, 4) and set(np.unique(labels)) <= {0.0, 1.0}
    assert 0.05 <= labels.mean() <= 0.15

    ok(["label", "--out", tmp_path / "l2", "--input", pipeline / "truth" / "truth.csf", "--q", 0.9])
    truth = read_field_file(pipeline / "truth" / "truth.csf").astype(float)
    assert np.array_equal(read_field_file(tmp_path / "l2" / "labels.csf"), (truth >= 1.2815515655446004))


def test_roc_svg(pipeline, tmp_path):
    ok(["roc-svg", "--out", tmp_path, "--truth", pipeline / "truth" / "truth.csf",
        "--forecast", pipeline / "fc" / "forecast_lead01.csf", "--p", 8, "--q", 0.9])
    assert (tmp_path / "roc.svg").read_text().startswith("<?xml")
    rows = read_csv(tmp_path / "roc.csv")
    assert list(rows[0]) == ["threshold", "fpr", "tpr"]
    assert rows[0]["fpr"] == 0.0 and rows[-1]["tpr"] == 1.0


def test_config_file_and_flag_precedence(pipeline, tmp_path):
    cfg = tmp_path / "cfg.json"
    write_json(cfg, {"days": 50, "resolution": 2, "scale-fields": 200, "seed": 9})
    ok(["gen-truth", "--config", cfg, "--out", tmp_path / "a", "--seed", 11])
    m = read_json(tmp_path / "a" / "manifest.json")["config"]
    assert m["days"] == 50 and m["resolution"] == 2 and m["seed"] == 11
    assert read_field_file(tmp_path / "a" / "truth.csf").shape == (50, 1, 6, 2, 2)


REPORT = ["--days", 700, "--train-days", 400, "--resolution", 4, "--n-members", 10,
          "--leads", "1,2,3", "--tune-lead", 2, "--p-count", 7, "--p-max", 50,
          "--scale-fields", 300, "--lead-quantiles", "0.9"]


def test_report_bundle_is_reproducible(tmp_path):
    ok(["report", "--out", tmp_path / "a", *REPORT])
    ok(["report", "--out", tmp_path / "b", *REPORT, "--workers", 3])
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "summary.json" in names and "leads_q0.9.csv" in names and "rmse.csv" in names
    assert any(n.endswith(".svg") for n in names)
    for n in names:
        if n != "manifest.json":
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
    manifest = read_json(tmp_path / "a" / "manifest.json")
    assert manifest["config"]["days"] == 700 and manifest["config"]["seed"] == 42


def test_exit_codes(pipeline, tmp_path):
    assert call(["no-such-command"])[0] == 1
    assert call(["gen-truth", "--out", tmp_path / "x", "--bogus", "1"])[0] == 1
    assert call(["gen-truth", "--out", tmp_path / "x", "--days", "ten"])[0] == 1
    assert call(["gen-truth"])[0] == 1
    assert call(["sweep-p", "--out", tmp_path / "y", "--truth", tmp_path / "missing.csf",
                "--forecast", tmp_path / "missing.csf"])[0] == 1
    assert call(["gen-truth", "--out", tmp_path / "z", "--rho", "1.5", "--days", "5",
                "--resolution", "2", "--rho-spread", "0"])[0] == 1
    bad = tmp_path / "bad.csf"
    bad.write_bytes(b"NOPE" + bytes(12))
    code, msg = call(["label", "--out", tmp_path / "w", "--input", bad])
    assert code == 2 and "magic" in msg
    # an existing, non-empty output directory is never overwritten
    assert call(["fit-exponent", "--out", pipeline / "truth", "--summary", bad])[0] == 2
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    assert call(["gen-truth", "--config", cfg, "--out", tmp_path / "v"])[0] == 2
    write_json(tmp_path / "unknown.json", {"colour": 1})
    assert call(["gen-truth", "--config", tmp_path / "unknown.json", "--out", tmp_path / "u"])[0] == 1


def test_main_prints_single_line(capsys, tmp_path):
    assert main(["gen-truth", "--out", str(tmp_path), "--days", "x"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("powerpool: error: ") and err.count("\n") == 1


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "powerpool.cli", "fit-exponent", "--out",
                           str(tmp_path / "o"), "--summary", str(tmp_path / "none.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert proc.stderr.strip().startswith("powerpool: error: input file not found")
