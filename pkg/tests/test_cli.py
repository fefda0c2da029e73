import json
import math

import numpy as np
import pytest

import qgtensor.qgt
from qgtensor import cli

FAST = ["--grid", "16x16"]


def run(tmp_path, *args, out="out"):
    code = cli.main([*args, "--out", str(tmp_path / out)])
    return code, tmp_path / out


def load(path):
    return json.loads(path.read_text())


class TestParsers:
    def test_grid(self):
        assert cli.parse_grid("24x32") == (24, 32)
        for bad in ("24", "0x4", "3x3", "ax4"):
            with pytest.raises(cli.UsageError):
                cli.parse_grid(bad)

    def test_band_range_half_open(self):
        assert cli.parse_band_range("0..2") == (0, 2)
        for bad in ("2..2", "1..0", "x..2", "0-2"):
            with pytest.raises(cli.UsageError):
                cli.parse_band_range(bad)

    def test_sweep(self):
        assert cli.parse_sweep("-3:3:0.05") == (-3.0, 3.0, 0.05)
        for bad in ("1:2", "0:1:0", "0:1:-1", "a:b:c"):
            with pytest.raises(cli.UsageError):
                cli.parse_sweep(bad)

    def test_config_rejects_unknown_keys(self):
        with pytest.raises(cli.UsageError, match="unknown config keys"):
            cli.RunConfig.from_mapping({"colour": "red"})

    def test_config_echo_round_trip(self):
        cfg = cli.RunConfig.from_mapping({"grid": "8x12", "sweep": "-1:1:0.1", "band_range": "0..1", "m": [0.5]})
        assert cli.RunConfig.from_mapping(cfg.to_dict()) == cfg


class TestOutputFormat:
    def test_csv_round_trip_bit_exact(self, tmp_path):
        rows = [(0.1, 1 / 3, math.pi, 7), (np.nextafter(1.0, 2.0), -1e-300, 2.0**-1074, 0)]
        cli.write_csv(tmp_path / "t.csv", ["a", "b", "c", "n"], rows)
        header, table = cli.read_csv(tmp_path / "t.csv")
        assert header == ["a", "b", "c", "n"]
        np.testing.assert_array_equal(table, np.array(rows, dtype=float))

    def test_json_nonfinite_is_null(self, tmp_path):
        cli.write_json(tmp_path / "x.json", {"v": [math.nan, 1.0, math.inf]})
        assert load(tmp_path / "x.json") == {"v": [None, 1.0, None]}


class TestField:
    def test_schema_and_summary(self, tmp_path):
        code, out = run(tmp_path, "field", *FAST, "--m", "1", "3")
        assert code == 0
        header, table = cli.read_csv(out / "field_m1.csv")
        assert header == ["kx", "ky", "tr_g", "g_xx", "g_xy", "g_yy", "F_xy", "singular_flag"]
        assert table.shape == (256, 8)
        np.testing.assert_allclose(table[:, 2], table[:, 3] + table[:, 5], rtol=1e-15)
        assert np.sum(table[:, 6]) * (2 * np.pi / 16) ** 2 / (2 * np.pi) == pytest.approx(-1, abs=0.05)
        assert (out / "field_m3.csv").exists()
        doc = load(out / "field.json")
        assert {"schema_version", "config", "results", "critical_points", "warnings"} <= set(doc)
        assert doc["config"]["grid"] == "16x16" and doc["config"]["m"] == [1.0, 3.0]

    def test_constant_model_all_zero(self, tmp_path):
        code, out = run(tmp_path, "field", "--model", "constant", *FAST)
        assert code == 0
        _, table = cli.read_csv(out / "field_m1.csv")
        np.testing.assert_array_equal(table[:, 2:], 0.0)

    def test_gap_closing_flagged_with_warning(self, tmp_path):
        code, out = run(tmp_path, "field", *FAST, "--m", "0")
        assert code == 0
        _, table = cli.read_csv(out / "field_m0.csv")
        flagged = table[table[:, 7] == 1]
        np.testing.assert_allclose(flagged[:, :2], [[0, np.pi], [np.pi, 0]])
        assert np.all(np.isnan(flagged[:, 2]))
        assert load(out / "field.json")["warnings"]

    def test_analytic_matches_projector(self, tmp_path):
        run(tmp_path, "field", *FAST, out="p")
        run(tmp_path, "field", *FAST, "--method", "analytic", out="a")
        _, p = cli.read_csv(tmp_path / "p" / "field_m1.csv")
        _, a = cli.read_csv(tmp_path / "a" / "field_m1.csv")
        ok = np.isfinite(a[:, 2])
        np.testing.assert_allclose(a[ok, 2:7], p[ok, 2:7], atol=1e-5)

    def test_byte_identical_and_worker_independent(self, tmp_path):
        run(tmp_path, "field", *FAST, out="a")
        run(tmp_path, "field", *FAST, out="b")
        run(tmp_path, "field", *FAST, "--workers", "3", out="c")
        first = (tmp_path / "a" / "field_m1.csv").read_bytes()
        assert (tmp_path / "b" / "field_m1.csv").read_bytes() == first
        assert (tmp_path / "c" / "field_m1.csv").read_bytes() == first

    def test_json_format(self, tmp_path):
        code, out = run(tmp_path, "field", "--grid", "4x4", "--m", "3", "--format", "json")
        assert code == 0 and not (out / "field_m3.csv").exists()
        (table,) = load(out / "field.json")["results"]["tables"]
        assert len(table["rows"]) == 16

    @pytest.mark.parametrize(
        "args",
        [
            ["--model", "doubled-qwz", "--method", "analytic"],
            ["--grid", "3x3"],
            ["--model", "haldane"],
            ["--method", "lattice"],
            ["--band-range", "0..3"],
            ["--step", "-1"],
            ["--workers", "0"],
        ],
    )
    def test_usage_errors(self, tmp_path, args):
        assert run(tmp_path, "field", *args)[0] == 2

    def test_missing_config(self, tmp_path):
        assert run(tmp_path, "field", "--config", str(tmp_path / "nope.toml"))[0] == 2


class TestChern:
    def test_sweep_plateaus(self, tmp_path):
        code, out = run(tmp_path, "chern", "--grid", "24x24", "--sweep", "-3:3:0.1")
        assert code == 0
        header, table = cli.read_csv(out / "chern.csv")
        assert header == ["m", "c1_lattice", "c1_direct", "singular_cells"]
        doc = load(out / "chern.json")
        assert [p["c1"] for p in doc["results"]["plateaus"]] == [0, 1, -1, 0]
        locations = [c["location"] for c in doc["critical_points"]]
        np.testing.assert_allclose(locations, [-2, 0, 2], atol=0.1)
        undefined = table[np.isnan(table[:, 1]), 0]
        np.testing.assert_allclose(undefined, [-2, 0, 2], atol=1e-12)

    @pytest.mark.parametrize("m, c", [(1.0, -1), (5.0, 0), (-1.0, 1)])
    def test_single_values(self, tmp_path, m, c):
        code, out = run(tmp_path, "chern", "--grid", "24x24", "--m", str(m))
        assert code == 0
        _, table = cli.read_csv(out / "chern.csv")
        assert table[0, 1] == c
        assert table[0, 2] == pytest.approx(c, abs=0.05)

    def test_doubled(self, tmp_path):
        code, out = run(tmp_path, "chern", "--model", "doubled-qwz", *FAST, "--m", "-1", "1", "3")
        assert code == 0
        _, table = cli.read_csv(out / "chern.csv")
        assert table[:, 1].tolist() == [2, -2, 0]

    def test_constant_model_trivial(self, tmp_path):
        code, out = run(tmp_path, "chern", "--model", "constant", "--grid", "8x8", "--sweep", "-1:1:0.5")
        assert code == 0
        _, table = cli.read_csv(out / "chern.csv")
        np.testing.assert_array_equal(table[:, 1:3], 0.0)

    def test_tabulated_model_rejected(self, tmp_path):
        table = tmp_path / "d.csv"
        table.write_text("kx_index,ky_index,d1,d2,d3,eps\n" + "".join(
            f"{i},{j},0,0,1,0\n" for i in range(4) for j in range(4)))
        assert run(tmp_path, "chern", "--model", "tabulated", "--table", str(table))[0] == 2

    def test_negative_sweep_start_as_separate_token(self, tmp_path):
        assert cli.main(["chern", "--grid", "8x8", "--sweep", "-1:1:0.5", "--out", str(tmp_path)]) == 0
        assert cli.main(["chern", "--grid", "8x8", "--sweep=-1:1:0.5", "--out", str(tmp_path)]) == 0


class TestFsSweep:
    def test_peaks(self, tmp_path):
        code, out = run(tmp_path, "fs-sweep", "--grid", "24x24", "--sweep", "-3:3:0.1")
        assert code == 0
        header, table = cli.read_csv(out / "fs_sweep.csv")
        assert header == ["m", "integrated_tr_g", "singular_cells"] and len(table) == 61
        locations = [c["location"] for c in load(out / "fs_sweep.json")["critical_points"]]
        np.testing.assert_allclose(locations, [-2, 0, 2], atol=0.1)

    def test_gapped_range_peak_free(self, tmp_path):
        code, out = run(tmp_path, "fs-sweep", "--grid", "24x24", "--sweep", "2.5:4:0.1")
        assert code == 0
        assert load(out / "fs_sweep.json")["critical_points"] == []
        _, table = cli.read_csv(out / "fs_sweep.csv")
        assert np.all(np.diff(table[:, 1]) < 0)

    def test_empty_range(self, tmp_path):
        assert run(tmp_path, "fs-sweep", "--sweep", "1:0:0.1")[0] == 2

    def test_needs_sweep(self, tmp_path):
        assert run(tmp_path, "fs-sweep")[0] == 2


class TestHolonomy:
    def test_first_order(self, tmp_path):
        code, out = run(tmp_path, "holonomy", "--center", "1.0,0.5", "--m", "1")
        assert code == 0
        header, table = cli.read_csv(out / "holonomy.csv")
        assert header == ["side", "residual", "ratio_to_previous"]
        assert np.all(np.diff(table[:, 1]) < 0)
        assert math.isnan(table[0, 2])
        assert load(out / "holonomy.json")["results"]["order"] >= 0.9

    def test_constant_model(self, tmp_path):
        code, out = run(tmp_path, "holonomy", "--model", "constant", "--center", "1.0,0.5")
        assert code == 0
        _, table = cli.read_csv(out / "holonomy.csv")
        np.testing.assert_array_equal(table[:, 1], 0.0)
        assert load(out / "holonomy.json")["results"]["order"] is None

    def test_gap_closing_center(self, tmp_path, capsys):
        code, _ = run(tmp_path, "holonomy", "--center", "3.141592653589793,3.141592653589793", "--m", "2")
        assert code == 3
        assert "error" in capsys.readouterr().err

    def test_needs_center(self, tmp_path):
        assert run(tmp_path, "holonomy")[0] == 2


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text('grid = "8x8"\nm = [3.0]\nformat = "csv"\n')
        code, out = run(tmp_path, "field", "--config", str(cfg), "--m", "1")
        assert code == 0
        doc = load(out / "field.json")
        assert doc["config"]["grid"] == "8x8" and doc["config"]["m"] == [1.0]
        assert (out / "field_m1.csv").exists() and not (out / "field_m3.csv").exists()

    def test_rerun_from_summary(self, tmp_path):
        run(tmp_path, "chern", *FAST, "--m", "-1", "1", out="first")
        code, _ = run(tmp_path, "chern", "--config", str(tmp_path / "first" / "chern.json"), out="second")
        assert code == 0
        assert (tmp_path / "first" / "chern.csv").read_bytes() == (tmp_path / "second" / "chern.csv").read_bytes()

    def test_invalid_toml(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("grid = \n")
        assert run(tmp_path, "field", "--config", str(cfg))[0] == 2


class TestValidate:
    def test_passes_and_is_repeatable(self, capsys):
        assert cli.main(["validate"]) == 0
        first = capsys.readouterr().out
        assert cli.main(["validate"]) == 0
        assert capsys.readouterr().out == first

    def test_sign_flip_in_curvature_detected(self, monkeypatch, capsys):
        original = qgtensor.qgt.curvature_part
        monkeypatch.setattr(qgtensor.qgt, "curvature_part", lambda q: -original(q))
        assert cli.main(["validate"]) == 4
        captured = capsys.readouterr()
        assert "gauge-covariance" in captured.err and "phase-diagram" in captured.err
