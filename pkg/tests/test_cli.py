import json
import math

import numpy as np

from topowalk import cli
from topowalk import symmetry as sym

PI = math.pi


def run(argv):
    return cli.main(argv)


def small_bands_cfg(tmp_path, **overrides):
    doc = {
        "schema": "topowalk/v1",
        "protocol": "1d-chs",
        "steps": 3,
        "angles": {"beta": PI / 3},
        "sweep": {"symbol": "alpha", "start": -1.0, "stop": 1.0, "count": 3},
        "grid": 16,
        "workers": 1,
    }
    doc.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


class TestBands:
    def test_header_and_row_shape(self, tmp_path):
        cfg = small_bands_cfg(tmp_path)
        out = tmp_path / "o.csv"
        assert run(["bands", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "sweep_param,k1,e_plus,v_k1,status"
        assert len(lines) == 1 + 3 * 16
        assert all(line.endswith(("gapped", "gapless", "ill_defined_velocity"))
                   for line in lines[1:])

    def test_2d_header(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, protocol="2d-phs", angles={},
                              sweep={"symbol": "beta", "start": 0.2, "stop": 0.4,
                                     "count": 2},
                              grid=8)
        out = tmp_path / "o.csv"
        assert run(["bands", "--config", str(cfg), "--out", str(out),
                    "--set", "alpha=1.0"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "sweep_param,k1,k2,e_plus,v_k1,v_k2,status"
        assert len(lines) == 1 + 2 * 8 * 8

    def test_gapless_rows_have_empty_velocity(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, angles={"beta": 0.0},
                              sweep={"symbol": "alpha", "start": 0.0, "stop": 1.0,
                                     "count": 2}, steps=1)
        out = tmp_path / "o.csv"
        assert run(["bands", "--config", str(cfg), "--out", str(out)]) == 0
        gapless = [l for l in out.read_text().splitlines() if l.endswith("gapless")]
        assert gapless, "alpha=0 sweep must contain the k=0 closing"
        for line in gapless:
            assert line.split(",")[3] == ""

    def test_rerun_identical_and_worker_invariant(self, tmp_path):
        cfg = small_bands_cfg(tmp_path)
        outs = []
        for name, workers in (("a.csv", "1"), ("b.csv", "1"), ("c.csv", "2")):
            out = tmp_path / name
            assert run(["bands", "--config", str(cfg), "--out", str(out),
                        "--workers", workers]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_step_independent_path_is_byte_identical_at_T1(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, steps=1)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["bands", "--config", str(cfg), "--out", str(a)]) == 0
        assert run(["bands", "--config", str(cfg), "--out", str(b),
                    "--step-independent"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_four_band_protocol_is_usage_error(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, protocol="1d-diii")
        assert run(["bands", "--config", str(cfg), "--out", "-"]) == 2

    def test_T_sweep(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, angles={"alpha": 0.4, "beta": 0.8},
                              sweep={"symbol": "T", "start": 1, "stop": 3, "count": 3})
        out = tmp_path / "o.csv"
        assert run(["bands", "--config", str(cfg), "--out", str(out)]) == 0
        sweep_vals = {l.split(",")[0] for l in out.read_text().splitlines()[1:]}
        assert sweep_vals == {"1", "2", "3"}


class TestInvariant:
    def test_winding_csv(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, steps=6,
                              angles={},
                              grid=128,
                              sweep={"symbol": "alpha", "start": 1.8, "stop": 2.4,
                                     "count": 3})
        out = tmp_path / "w.csv"
        assert run(["invariant", "--config", str(cfg), "--out", str(out),
                    "--link", "beta=alpha:0.3333333333333333:1.0471975511965976"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "sweep_param,invariant,raw,status"
        assert any(line.endswith("ok") for line in lines[1:])

    def test_3d_is_unsupported(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, protocol="3d-simple", angles={},
                              sweep={"symbol": "beta", "start": 0.1, "stop": 0.3,
                                     "count": 2})
        assert run(["invariant", "--config", str(cfg), "--out", "-"]) == 2

    def test_winding_without_chirality_is_usage_error(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, protocol="1d-phs")
        assert run(["invariant", "--config", str(cfg), "--out", "-"]) == 2


class TestClassifyGaps:
    def test_schema_and_kinds(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, steps=6, grid=48, angles={},
                              sweep={"symbol": "alpha", "start": -0.1, "stop": 0.1,
                                     "count": 3},
                              protocol="1d-phs")
        out = tmp_path / "g.json"
        assert run(["classify-gaps", "--config", str(cfg), "--out", str(out),
                    "--link", "beta=alpha:0.3333333333333333:1.0471975511965976"]) == 0
        payload = json.loads(out.read_text())
        assert payload["schema"] == "topowalk/v1"
        mid = payload["records"][1]
        assert mid["sweep_value"] == 0.0
        assert {c["kind"] for c in mid["classifications"]} == {"dirac_type_two"}
        assert payload["records"][0]["gap_points"] == []


class TestSymmetryCommand:
    def test_all_against_golden(self, tmp_path):
        out = tmp_path / "sym.json"
        assert run(["symmetry", "all", "--golden", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["schema"] == "topowalk/v1"
        assert len(payload["records"]) == 22

    def test_single_protocol(self, tmp_path):
        out = tmp_path / "one.json"
        assert run(["symmetry", "1d-phs", "--out", str(out)]) == 0
        rec = json.loads(out.read_text())["records"][0]
        assert rec["az_family"] == "D" and rec["invariant_group"] == "Z2"

    def test_unknown_id_is_usage_error(self):
        assert run(["symmetry", "9d-phs", "--out", "-"]) == 2

    def test_golden_mismatch_exits_nonzero(self, tmp_path, monkeypatch, capsys):
        # make the emitted canonical record disagree with the bundled table
        monkeypatch.setattr(sym.SymmetryReport, "canonical", _fake_canonical)
        out = tmp_path / "sym.json"
        assert run(["symmetry", "1d-phs", "--golden", "--out", str(out)]) == 1
        assert "golden mismatch" in capsys.readouterr().err


def _fake_canonical(self):
    return {"protocol": self.protocol, "dimension": self.dimension,
            "phs": 1, "trs": 1, "chs": 1, "az_family": "BDI",
            "invariant_group": self.invariant_group}


FIXTURE_DIR = __import__("pathlib").Path(__file__).resolve().parent.parent / "fixtures"


class TestFixtureFiles:
    """End-to-end runs of the bundled sweep configs."""

    def test_flat_band_config_emits_constant_energy_column(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, protocol="3d-simple", steps=3, angles={},
                              sweep={"symbol": "beta", "start": PI / 3, "stop": PI / 3 + 1e-12,
                                     "count": 2}, grid=8)
        out = tmp_path / "flat.csv"
        assert run(["bands", "--config", str(cfg), "--out", str(out)]) == 0
        rows = out.read_text().splitlines()[1:]
        e = np.array([float(r.split(",")[4]) for r in rows])
        assert np.abs(e - PI / 2).max() <= 1e-8

    def test_fig10_phase_sequence(self, tmp_path):
        out = tmp_path / "fig10.csv"
        assert run(["invariant", "--config", str(FIXTURE_DIR / "fig10.cfg"),
                    "--out", str(out)]) == 0
        rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
        got = [(r[1], r[3]) for r in rows]
        assert got == [("0", "ok"), ("", "boundary"), ("1", "ok"), ("", "boundary"),
                       ("0", "ok"), ("0", "ok"), ("0", "ok"), ("", "boundary")]

    def test_fig11_phase_sequence(self, tmp_path):
        out = tmp_path / "fig11.csv"
        assert run(["invariant", "--config", str(FIXTURE_DIR / "fig11.cfg"),
                    "--out", str(out)]) == 0
        rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
        by_value = {round(float(r[0]), 6): (r[1], r[3]) for r in rows}
        assert by_value[0.0] == ("0", "ok")
        assert by_value[round(PI / 3, 6)] == ("0", "ok")
        assert by_value[round(PI / 2, 6)][0] in ("1", "-1")
        assert by_value[round(PI / 4, 6)] == ("", "boundary")
        assert by_value[round(3 * PI / 4, 6)] == ("", "boundary")

    def test_fig6_winding_magnitudes(self, tmp_path):
        out = tmp_path / "fig6.csv"
        assert run(["invariant", "--config", str(FIXTURE_DIR / "fig6.cfg"),
                    "--out", str(out), "--sweep", "alpha:-3.0:3.0:13",
                    "--grid", "128"]) == 0
        rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
        ws = {int(r[1]) for r in rows if r[3] == "ok"}
        assert ws <= {-1, 0, 1} and {abs(w) for w in ws} == {0, 1}

    def test_fig2_taxonomy_config_loads_and_runs(self, tmp_path):
        out = tmp_path / "fig2.json"
        assert run(["classify-gaps", "--config", str(FIXTURE_DIR / "fig2.cfg"),
                    "--out", str(out), "--sweep", "alpha:-0.02:0.02:3"]) == 0
        rec = json.loads(out.read_text())["records"][1]
        assert {c["kind"] for c in rec["classifications"]} == {"dirac_type_two"}

    def test_bands_floats_round_trip_and_rows_ordered(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, protocol="2d-phs", angles={"alpha": 0.7},
                              sweep={"symbol": "beta", "start": 0.3, "stop": 0.7,
                                     "count": 2}, grid=8, steps=2)
        out = tmp_path / "o.csv"
        assert run(["bands", "--config", str(cfg), "--out", str(out)]) == 0
        rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
        ks = [(float(r[1]), float(r[2])) for r in rows[:64]]
        assert ks == sorted(ks)
        # shortest round-trip decimals reload losslessly
        from topowalk.protocols import registry_lookup, build_unitary
        from topowalk.spectrum import bands_from_unitary
        spec = registry_lookup("2d-phs", T=2, angles={"alpha": 0.7, "beta": 0.3})
        k = np.array([[float(r[1]), float(r[2])] for r in rows[:64]])
        e = bands_from_unitary(build_unitary(spec, k)).e_plus
        assert all(float(r[3]) == e[i] for i, r in enumerate(rows[:64]))


class TestUsageErrors:
    def test_unknown_protocol(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, protocol="4d-phs")
        assert run(["bands", "--config", str(cfg), "--out", "-"]) == 2

    def test_swept_angle_also_fixed(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, angles={"alpha": 0.1, "beta": 0.2})
        assert run(["bands", "--config", str(cfg), "--out", "-"]) == 2

    def test_too_few_samples(self, tmp_path):
        cfg = small_bands_cfg(tmp_path,
                              sweep={"symbol": "alpha", "start": 0, "stop": 1,
                                     "count": 1})
        assert run(["bands", "--config", str(cfg), "--out", "-"]) == 2

    def test_tiny_grid(self, tmp_path):
        cfg = small_bands_cfg(tmp_path, grid=4)
        assert run(["bands", "--config", str(cfg), "--out", "-"]) == 2

    def test_missing_config_file(self):
        assert run(["bands", "--config", "/nonexistent/x.json", "--out", "-"]) == 2

    def test_non_numeric_flag_values(self):
        base = ["bands", "--protocol", "1d-chs", "--grid", "8", "--out", "-"]
        assert run(base + ["--sweep", "alpha:0:1:2", "--set", "beta=abc"]) == 2
        assert run(base + ["--sweep", "alpha:0:end:2"]) == 2
        assert run(base + ["--sweep", "alpha:0:1:2", "--link", "beta=alpha:x:0"]) == 2

    def test_numerical_diagnostic_exit_code(self, tmp_path, monkeypatch):
        from topowalk.errors import GaplessError

        def boom(*a, **kw):
            raise GaplessError("synthetic failure")
        monkeypatch.setattr(cli, "_map_values", boom)
        cfg = small_bands_cfg(tmp_path)
        assert run(["bands", "--config", str(cfg), "--out", "-"]) == 3
