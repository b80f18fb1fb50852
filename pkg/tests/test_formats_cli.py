import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from oracles import closed_form_by_hand
from timedmix import characteristic as ch
from timedmix import formats
from timedmix.characteristic import ConstraintSet, validate
from timedmix.cli import main, parse_filter
from timedmix.mix import simulate_mix
from timedmix.network import DelayHistogram
from timedmix.theory import stopband
from timedmix.traffic import gen_poisson_traffic, gen_zipf_profile


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def tree_bytes(directory):
    d = Path(directory)
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


# -- file formats -------------------------------------------------------------------

def test_trace_and_profile_round_trip(tmp_path):
    x = gen_poisson_traffic([1.5, 2.0, 4.0], 30, seed=0)
    formats.write_trace_csv(x, tmp_path / "t.csv")
    back = formats.read_trace_csv(tmp_path / "t.csv", rates=x.rates)
    np.testing.assert_array_equal(back.counts, x.counts)
    np.testing.assert_allclose(formats.read_trace_csv(tmp_path / "t.csv").rates,
                               x.counts.mean(axis=0))
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "round,sender,count"

    p = gen_zipf_profile(3, 5, 3, seed=1)
    formats.write_profile_csv(p, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "receiver,sender,prob"
    np.testing.assert_allclose(formats.read_profile_csv(tmp_path / "p.csv").probs, p.probs,
                               atol=1e-12)


def test_observation_round_trip(tmp_path):
    x = gen_poisson_traffic([2.0, 3.0], 25, seed=2)
    p = gen_zipf_profile(2, 3, 2, seed=2)
    obs = simulate_mix(x, p, [0.5, 0.5], seed=3)
    formats.write_observation(obs, tmp_path, "r1")
    assert (tmp_path / "r1_outputs.csv").read_text().startswith("round,receiver,count\n")
    back = formats.read_observation(tmp_path, "r1", rates=x.rates)
    np.testing.assert_array_equal(back.inputs.counts, x.counts)
    np.testing.assert_array_equal(back.outputs, obs.outputs)


def test_bad_headers_rejected(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b,c\n0,0,1\n")
    with pytest.raises(ValueError):
        formats.read_trace_csv(tmp_path / "bad.csv")
    (tmp_path / "empty.csv").write_text("round,sender,count\n")
    with pytest.raises(ValueError):
        formats.read_trace_csv(tmp_path / "empty.csv")


def test_histogram_csv(tmp_path):
    h = DelayHistogram(np.array([5, 3, 1]), 2, np.array([9]))
    formats.write_histogram_csv(h, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == [
        "delay,count", "0,5", "1,3", "2,1", "censored,2"]


def test_float_format():
    assert formats.fmt(1 / 3) == "0.333333333333"


def test_parse_filter(tmp_path):
    assert parse_filter("delta").taps.tolist() == [1.0]
    assert parse_filter("uniform:4").length == 4
    np.testing.assert_allclose(parse_filter("exp:0.5:3").taps, [0.5, 0.25, 0.25])
    ch.save(ch.DelayCharacteristic([0.3, 0.7]), tmp_path / "f.txt")
    np.testing.assert_allclose(parse_filter(str(tmp_path / "f.txt")).taps, [0.3, 0.7])
    with pytest.raises(FileNotFoundError):
        parse_filter(str(tmp_path / "missing.txt"))


# -- command line ---------------------------------------------------------------------

@pytest.mark.parametrize("objective", ["sharp0", "sharp1", "shortterm"])
def test_design_writes_feasible_filter(tmp_path, objective):
    args = ["design", "--objective", objective, "--rho", "24", "--dbar", "5",
            "--n-senders", "6", "--restarts", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    f = ch.load(tmp_path / "a" / "filter.txt")
    assert validate(f, ConstraintSet(24, 5.0)).feasible
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    (row,) = read_csv(tmp_path / "a" / "filter_report.csv")
    assert row["objective"] == objective and row["converged"] == "1"


def test_design_out_file_name(tmp_path):
    assert main(["design", "--rho", "8", "--dbar", "2", "--out", str(tmp_path / "lp.txt")]) == 0
    assert (tmp_path / "lp.txt").exists()
    assert (tmp_path / "lp_report.csv").exists()
    assert (tmp_path / "lp_history.csv").exists()


def test_evaluate_schema_and_determinism(tmp_path):
    args = ["evaluate", "--n-senders", "2", "--n-receivers", "2", "--friends", "1",
            "--rates", "1,1", "--rho", "100", "--trials", "10", "--filters", "delta,uniform:2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    rows = read_csv(tmp_path / "a" / "evaluate.csv")
    assert list(rows[0]) == ["filter_id", "mc_mse_mean", "mc_stderr", "closed_form_mse",
                             "relative_gap", "assumption_flags"]
    assert [r["filter_id"] for r in rows] == ["delta", "uniform:2"]
    # F = 1: sharpness one per sender; the hand transcription with gammas of a delta
    want = closed_form_by_hand([1, 1], [1, 1], 1, 1, 1, 100)
    assert float(rows[0]["closed_form_mse"]) == pytest.approx(want, rel=1e-11)


def test_theory_check_delta_matches_hand_formula(tmp_path):
    # a real profile has q >= 1/M, so the hand formula is evaluated at q = 1 (F = 1)
    assert main(["theory-check", "--n-senders", "2", "--n-receivers", "2", "--friends", "1",
                 "--rates", "1,1", "--rho", "100", "--filters", "delta",
                 "--out", str(tmp_path)]) == 0
    kv = dict(line.split("=", 1) for line in (tmp_path / "theory_check.txt").read_text().split())
    assert float(kv["mse_total"]) == pytest.approx(closed_form_by_hand([1, 1], [1, 1], 1, 1, 1, 100))


def test_evaluate_uniform_scales_with_length(tmp_path):
    assert main(["evaluate", "--n-senders", "10", "--n-receivers", "100", "--friends", "100",
                 "--exponent", "0", "--rho", "2000", "--trials", "30",
                 "--filters", "delta,uniform:4", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "evaluate.csv")
    ratio = float(rows[1]["mc_mse_mean"]) / float(rows[0]["mc_mse_mean"])
    assert ratio == pytest.approx(4, rel=0.15)
    for r in rows:
        assert float(r["relative_gap"]) <= 0.15


def test_observation_ingest_round_trip(tmp_path):
    assert main(["evaluate", "--rho", "200", "--trials", "3", "--filters", "uniform:3",
                 "--save-observations", "--out", str(tmp_path)]) == 0
    assert main(["evaluate", "--observation", str(tmp_path), "--run-id", "filter0",
                 "--filters", "uniform:3", "--rates", "5",
                 "--profile-file", str(tmp_path / "profile.csv"), "--out", str(tmp_path)]) == 0
    summary = {r["quantity"]: float(r["value"])
               for r in read_csv(tmp_path / "filter0_estimate_summary.csv")}
    trial0 = read_csv(tmp_path / "evaluate_trials_0.csv")[0]
    assert summary["overall_mse"] == pytest.approx(float(trial0["overall_mse"]), rel=1e-9)
    est = read_csv(tmp_path / "filter0_estimate.csv")
    assert list(est[0]) == ["receiver", "sender", "prob"]


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("rho = 12\ndbar = 0.5   # tight cap\nobjective = sharp0\n")
    assert main(["design", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    (row,) = read_csv(tmp_path / "a" / "filter_report.csv")
    assert (row["rho"], row["dbar"]) == ("12", "0.5")
    assert main(["design", "--config", str(cfg), "--dbar", "2",
                 "--out", str(tmp_path / "b")]) == 0
    (row,) = read_csv(tmp_path / "b" / "filter_report.csv")
    assert (row["rho"], row["dbar"]) == ("12", "2")
    cfg.write_text("colour = blue\n")
    assert main(["design", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 2


def test_errors_give_exit_status_two(tmp_path):
    assert main(["evaluate", "--filters", str(tmp_path / "nope.txt"), "--trials", "2",
                 "--rho", "50", "--out", str(tmp_path)]) == 2
    proc = subprocess.run([sys.executable, "-m", "timedmix.cli", "design", "--rho", "0",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stdout == ""
    assert "rho must be positive" in proc.stderr


def test_fig2_desk_preset(tmp_path):
    assert main(["fig2", "--trials", "3", "--out", str(tmp_path / "a")]) == 0
    assert main(["fig2", "--trials", "3", "--out", str(tmp_path / "b")]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    d = tmp_path / "a"
    taps = {}
    for name, rho in (("long_near0", 300), ("long_near1", 300), ("short", 100)):
        t = np.array([float(r["tap"]) for r in read_csv(d / f"fig2_{name}_taps.csv")])
        assert validate(t, ConstraintSet(rho, 20.0)).feasible
        taps[name] = np.pad(t, (0, 300 - t.size))
    assert np.linalg.norm(taps["long_near0"] - taps["long_near1"]) > 1e-3
    spec = read_csv(d / "fig2_short_spectrum.csv")
    power = np.array([float(r["power"]) for r in spec])
    band = np.array([r["band"] for r in spec])
    assert (band == "stop").sum() == 100 - 20 - 1
    np.testing.assert_array_equal(band == "stop", stopband(20, 100))
    assert power[band == "stop"].mean() < 0.1 * power[1:][band[1:] == "pass"].mean()


def test_cascade_demo(tmp_path):
    assert main(["cascade-demo", "--out", str(tmp_path)]) == 0
    (row,) = read_csv(tmp_path / "cascade_summary.csv")
    assert float(row["achieved_sum"]) == pytest.approx(1, abs=1e-12)
    assert float(row["achieved_error"]) < float(row["baseline_error"])
    assert float(row["spectral_identity_err"]) <= 1e-9
    stages = sorted((tmp_path / "stages").glob("stage_*.txt"))
    assert len(stages) == 5
    for s in stages:
        assert abs(ch.load(s).taps.sum() - 1) <= 1e-12


def test_expmix_demo(tmp_path):
    assert main(["expmix-demo", "--out", str(tmp_path)]) == 0
    vals = {r["quantity"]: float(r["value"]) for r in read_csv(tmp_path / "expmix_summary.csv")}
    assert vals["centralized_vs_analytic"] <= 0.02
    assert vals["decentralized_vs_centralized"] <= 0.02
    assert main(["expmix-demo", "--alpha", "1", "--n-messages", "500",
                 "--out", str(tmp_path / "a1")]) == 0
    rows = read_csv(tmp_path / "a1" / "expmix_hist_decentralized.csv")
    assert rows[0]["count"] == "500"
    assert all(r["count"] == "0" for r in rows[1:])
