"""End-to-end tests of the command-line interface (in-process)."""

from __future__ import annotations

import json

import numpy as np
import pytest

from recovr.cli import main

LEVELS = (0.1, 0.3, 0.5, 0.7, 0.9)
BASE_TIMES = (10.0, 30.0, 60.0, 100.0, 150.0)


def run_cli(argv, capsys):
    """Invoke the CLI; returns (exit_code, stdout, stderr)."""
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse usage failures
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def stderr_payload(err: str) -> dict:
    """Failure stderr must be a single JSON object."""
    payload = json.loads(err)
    assert isinstance(payload, dict)
    assert set(payload) == {"error_code", "detail"}
    return payload


def write_elicited(tmp_path, n_experts=5, with_d=True, name="panel.csv"):
    lines = ["expert_id,level,time_days" + (",D_days" if with_d else "")]
    for i in range(n_experts):
        scale = 1.0 + 0.06 * i
        d = 160.0 * scale
        for level, t in zip(LEVELS, BASE_TIMES):
            row = f"e{i},{level},{t * scale}"
            if with_d:
                row += f",{d}"
            lines.append(row)
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def fast_fit_args(csv_path, out_path, extra=()):
    return [
        "fit", "--elicited", csv_path, "--out", str(out_path),
        "--knots", "10", "--samples", "60",
        *extra,
    ]


class TestFit:
    def test_happy_path_writes_201_point_grid(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path)
        out = tmp_path / "summary.json"
        code, stdout, _ = run_cli(
            fast_fit_args(csv_path, out, ["--no-fig"]), capsys)
        assert code == 0
        data = json.loads(out.read_text())
        assert len(data["grid"]) == 201
        assert len(data["mean"]) == 201
        assert "n_experts=5" in stdout
        assert "sigma_tau=" in stdout
        assert "band_width_at_0.5=" in stdout

    def test_renders_band_figure_by_default(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path)
        out = tmp_path / "summary.json"
        code, _, _ = run_cli(fast_fit_args(csv_path, out), capsys)
        assert code == 0
        png = out.with_suffix(".png")
        assert png.exists()
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_no_fig_skips_figure(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path)
        out = tmp_path / "summary.json"
        code, _, _ = run_cli(fast_fit_args(csv_path, out, ["--no-fig"]),
                             capsys)
        assert code == 0
        assert not out.with_suffix(".png").exists()

    def test_missing_d_column_with_per_expert_policy(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path, with_d=False)
        out = tmp_path / "summary.json"
        code, _, err = run_cli(fast_fit_args(csv_path, out, ["--no-fig"]),
                               capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "missing_D"

    def test_pooled_noise_single_expert(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path, n_experts=1)
        out = tmp_path / "summary.json"
        code, _, err = run_cli(fast_fit_args(csv_path, out, ["--no-fig"]),
                               capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "insufficient_experts"

    def test_single_expert_with_ml_noise_succeeds(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path, n_experts=1)
        out = tmp_path / "summary.json"
        code, _, _ = run_cli(
            fast_fit_args(csv_path, out, ["--no-fig", "--noise", "ml"]),
            capsys)
        assert code == 0

    def test_consensus_policy_requires_big_d(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path, with_d=False)
        out = tmp_path / "summary.json"
        code, _, err = run_cli(
            fast_fit_args(csv_path, out,
                          ["--no-fig", "--d-policy", "consensus"]),
            capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "missing_D"

        code, _, _ = run_cli(
            fast_fit_args(csv_path, out,
                          ["--no-fig", "--d-policy", "consensus",
                           "--D", "250"]),
            capsys)
        assert code == 0

    def test_seed_reproducible(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path)
        out_a, out_b, out_c = (tmp_path / n for n in ("a.json", "b.json",
                                                      "c.json"))
        for out, seed in ((out_a, "7"), (out_b, "7"), (out_c, "8")):
            code, _, _ = run_cli(
                fast_fit_args(csv_path, out, ["--no-fig", "--seed", seed]),
                capsys)
            assert code == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        assert out_a.read_bytes() != out_c.read_bytes()


class TestSimulate:
    def test_happy_path(self, tmp_path, capsys):
        out = tmp_path / "panel.json"
        code, stdout, _ = run_cli(
            ["simulate", "--empirical", "ref:logistic", "--experts", "3",
             "--seed", "5", "--out", str(out)], capsys)
        assert code == 0
        panel = json.loads(out.read_text())
        assert len(panel) == 3
        for entry in panel:
            assert set(entry) >= {"expert_id", "levels", "times_days",
                                  "D_days"}
            assert np.all(np.diff(entry["times_days"]) > 0)
        assert "3 expert paths" in stdout

    def test_stdout_when_no_out(self, capsys):
        code, stdout, _ = run_cli(
            ["simulate", "--empirical", "ref:logistic", "--experts", "2",
             "--seed", "1"], capsys)
        assert code == 0
        panel = json.loads(stdout)
        assert len(panel) == 2

    def test_seed_reproducible(self, tmp_path, capsys):
        outs = []
        for name, seed in (("p1.json", "9"), ("p2.json", "9"),
                           ("p3.json", "10")):
            out = tmp_path / name
            code, _, _ = run_cli(
                ["simulate", "--empirical", "ref:logistic", "--seed", seed,
                 "--out", str(out)], capsys)
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0] != outs[2]

    def test_zero_noise_panel_is_degenerate(self, capsys):
        code, stdout, _ = run_cli(
            ["simulate", "--empirical", "ref:logistic", "--experts", "3",
             "--var-within", "0", "--var-across", "0"], capsys)
        assert code == 0
        panel = json.loads(stdout)
        times = [entry["times_days"] for entry in panel]
        assert times[0] == times[1] == times[2]

    def test_explicit_level_list(self, capsys):
        code, stdout, _ = run_cli(
            ["simulate", "--empirical", "ref:logistic",
             "--levels", "0.2,0.5,0.8"], capsys)
        assert code == 0
        panel = json.loads(stdout)
        assert panel[0]["levels"] == [0.2, 0.5, 0.8]


SWEEP_CONFIG = {
    "curve_source": "ref:logistic",
    "sweep": "experts",
    "counts": [1, 2],
    "n_experts": 2,
    "knot_count": 8,
    "n_replications": 2,
    "n_samples": 40,
}


class TestSweep:
    def test_report_files_and_figure(self, tmp_path, capsys):
        config = tmp_path / "sweep.json"
        config.write_text(json.dumps(SWEEP_CONFIG))
        out_dir = tmp_path / "results"
        code, stdout, _ = run_cli(
            ["sweep", "--config", str(config), "--out-dir", str(out_dir)],
            capsys)
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert [c["label"] for c in report["cells"]] == [
            "experts=1", "experts=2",
        ]
        csv_lines = (out_dir / "report.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "cell,replication,rmse"
        assert len(csv_lines) == 5
        png = out_dir / "report.png"
        assert png.exists()
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        assert "experts=1: mean_rmse=" in stdout

    def test_parallel_reports_byte_identical(self, tmp_path, capsys):
        config = tmp_path / "sweep.json"
        config.write_text(json.dumps(SWEEP_CONFIG))
        dirs = (tmp_path / "seq", tmp_path / "par")
        for out_dir, workers in zip(dirs, ("1", "4")):
            code, _, _ = run_cli(
                ["sweep", "--config", str(config), "--out-dir", str(out_dir),
                 "--parallel", workers, "--no-fig"], capsys)
            assert code == 0
        assert ((dirs[0] / "report.json").read_bytes()
                == (dirs[1] / "report.json").read_bytes())
        assert ((dirs[0] / "report.csv").read_bytes()
                == (dirs[1] / "report.csv").read_bytes())

    def test_seed_flag_overrides_config(self, tmp_path, capsys):
        config = tmp_path / "sweep.json"
        config.write_text(json.dumps({**SWEEP_CONFIG, "base_seed": 1}))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out_dir, extra in ((out_a, ["--seed", "2"]), (out_b, [])):
            code, _, _ = run_cli(
                ["sweep", "--config", str(config), "--out-dir", str(out_dir),
                 "--no-fig", *extra], capsys)
            assert code == 0
        a = json.loads((out_a / "report.json").read_text())
        b = json.loads((out_b / "report.json").read_text())
        assert a["config"]["base_seed"] == 2
        assert b["config"]["base_seed"] == 1
        assert a["cells"] != b["cells"]

    def test_malformed_config(self, tmp_path, capsys):
        config = tmp_path / "broken.json"
        config.write_text("{not json")
        code, _, err = run_cli(
            ["sweep", "--config", str(config), "--out-dir",
             str(tmp_path / "x")], capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "parse_error"

    def test_missing_config_file(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["sweep", "--config", str(tmp_path / "nope.json"), "--out-dir",
             str(tmp_path / "x")], capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "config_io_error"


class TestExport:
    @pytest.fixture()
    def summary_json(self, tmp_path, capsys):
        csv_path = write_elicited(tmp_path)
        out = tmp_path / "summary.json"
        code, _, _ = run_cli(
            fast_fit_args(csv_path, out, ["--no-fig", "--grid-size", "51"]),
            capsys)
        assert code == 0
        return out

    def test_band_csv(self, tmp_path, capsys, summary_json):
        out = tmp_path / "bands.csv"
        code, stdout, _ = run_cli(
            ["export", "--summary", str(summary_json), "--out", str(out),
             "--no-fig"], capsys)
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "tau,mean,lower95,upper95"
        assert len(lines) == 52
        tau, mean, lo, hi = (float(v) for v in lines[1].split(","))
        assert tau == 0.0 and lo <= mean <= hi

    def test_plain_csv_to_stdout(self, capsys, summary_json):
        code, stdout, _ = run_cli(
            ["export", "--summary", str(summary_json), "--format", "csv"],
            capsys)
        assert code == 0
        lines = stdout.strip().split("\n")
        assert lines[0] == "tau,mean"
        assert len(lines) == 52

    def test_figure_rendered_with_out(self, tmp_path, capsys, summary_json):
        out = tmp_path / "bands.csv"
        code, _, _ = run_cli(
            ["export", "--summary", str(summary_json), "--out", str(out)],
            capsys)
        assert code == 0
        assert out.with_suffix(".png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_format(self, capsys, summary_json):
        code, _, err = run_cli(
            ["export", "--summary", str(summary_json), "--format", "yaml"],
            capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "usage_error"

    def test_empty_summary(self, tmp_path, capsys):
        empty = tmp_path / "empty.json"
        empty.write_text("{}")
        code, _, err = run_cli(
            ["export", "--summary", str(empty)], capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "parse_error"


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        code, _, err = run_cli(["frobnicate"], capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "usage_error"

    def test_unknown_flag(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["simulate", "--empirical", "ref:logistic", "--bogus", "1"],
            capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "usage_error"

    def test_unknown_reference_curve(self, capsys):
        code, _, err = run_cli(
            ["simulate", "--empirical", "ref:mystery"], capsys)
        assert code == 2
        assert stderr_payload(err)["error_code"] == "unknown_reference"
