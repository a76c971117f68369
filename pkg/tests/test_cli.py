"""Exit codes, argument grammar, and output determinism of the CLI."""

import json
import os

import numpy as np
import pytest

from impedbench import cli


def run(argv):
    return cli.main(argv)


class TestGrammar:
    def test_scalar_forms(self):
        assert cli.parse_scalar_impedance("const:0.5,-1.0") == 0.5 - 1.0j
        assert cli.parse_scalar_impedance("2.0") == 2.0 + 0j
        assert cli.parse_scalar_impedance("1+2j") == 1 + 2j
        assert cli.parse_scalar_impedance("-0.5") == -0.5 + 0j

    def test_scalar_rejects_garbage(self):
        for bad in ("const:1", "const:a,b", "one", ""):
            with pytest.raises(cli._UsageError):
                cli.parse_scalar_impedance(bad)

    def test_power_form(self):
        coef = cli.parse_coefficient("power:a=0.3,c=2")
        assert "power" in coef.label
        with pytest.raises(cli._UsageError):
            cli.parse_coefficient("power:c=2")

    def test_box_form(self):
        box = cli.parse_box("0.1,5,-2,0")
        assert box.re_max == 5.0
        with pytest.raises(cli._UsageError):
            cli.parse_box("1,2,3")

    def test_file_samples(self, tmp_path):
        path = tmp_path / "samples.json"
        theta = np.linspace(-np.pi, np.pi, 32, endpoint=False)
        path.write_text(json.dumps([[float(np.cos(t)), 0.0] for t in theta]))
        coef = cli.parse_coefficient(f"file:{path}")
        ck = coef.fourier_coeffs(2)
        # cos has centered coefficients 1/2 at indices +-1
        assert abs(ck[3] - 0.5) < 1e-2 and abs(ck[1] - 0.5) < 1e-2
        assert abs(ck[2]) < 1e-2

    def test_file_fourier(self, tmp_path):
        path = tmp_path / "fourier.json"
        path.write_text(json.dumps({"kind": "fourier", "coeffs": [[0, 0], [1, 0], [0, 0]]}))
        coef = cli.parse_coefficient(f"file:{path}")
        assert "file:" in coef.label

    def test_file_rejects_bad_payload(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "mystery"}')
        with pytest.raises(cli._UsageError):
            cli.parse_coefficient(f"file:{path}")
        with pytest.raises(cli._UsageError):
            cli.parse_coefficient("file:/does/not/exist.json")


class TestExitCodes:
    def test_green_check_passes(self, capsys):
        assert run(["green-check", "--fixture", "transport-64", "--trials", "10"]) == 0
        out = capsys.readouterr().out
        assert "ok" in out and out.count("\n") == 1

    def test_green_check_impossible_tol_exit2(self):
        code = run(["green-check", "--fixture", "transport-64", "--trials", "5", "--tol", "1e-17"])
        assert code == 2

    def test_unknown_fixture_exit3(self, capsys):
        assert run(["green-check", "--fixture", "nope"]) == 3
        assert "invalid input" in capsys.readouterr().err

    def test_unknown_flag_exit3(self, capsys):
        assert run(["string", "--zeta", "0.5", "--frobnicate"]) == 3
        capsys.readouterr()

    def test_missing_subcommand_exit3(self, capsys):
        assert run([]) == 3
        capsys.readouterr()

    def test_help_exit0(self, capsys):
        assert run(["--help"]) == 0
        capsys.readouterr()

    def test_nonaccretive_fem_refused(self, capsys):
        assert run(["fem", "--shape", "square", "--n", "8", "--zeta", "-1.0"]) == 2
        assert "allow-nonaccretive" in capsys.readouterr().err

    def test_nonaccretive_string_escape_hatch(self, capsys):
        assert run(["string", "--zeta", "-0.5"]) == 2
        capsys.readouterr()
        assert run(["string", "--zeta", "-0.5", "--allow-nonaccretive"]) == 0
        capsys.readouterr()

    def test_out_into_missing_directory_exit4(self, tmp_path, capsys):
        target = str(tmp_path / "absent" / "r.json")
        assert run(["string", "--zeta", "0.5", "--out", target]) == 4
        assert "i/o failure" in capsys.readouterr().err

    def test_bad_threads_env_exit3(self, monkeypatch, capsys):
        monkeypatch.setenv("WORKBENCH_THREADS", "many")
        assert run(["string", "--zeta", "0.5"]) == 3
        capsys.readouterr()


class TestExtension:
    def test_cayley_mode(self, capsys, tmp_path):
        out = tmp_path / "cayley.json"
        code = run([
            "extension", "cayley", "--fixture", "transport-64",
            "--trials", "5", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["passed"] is True
        assert payload["max_round_trip"] < 1e-9
        capsys.readouterr()

    def test_mdiss_mode(self, capsys, tmp_path):
        out = tmp_path / "mdiss.json"
        assert run(["extension", "mdiss", "--fixture", "transport2-48", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["all_checks_ok"] is True
        assert run(["extension", "mdiss", "--fixture", "transport-64", "--skew"]) == 0
        capsys.readouterr()

    def test_rank_mode(self, capsys, tmp_path):
        out = tmp_path / "rank.json"
        code = run([
            "extension", "rank", "--fixture", "transport2-48", "--rank", "1",
            "--z", "const:1,2", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["satisfied"] is True
        assert payload["rank_parameter"] == 1
        capsys.readouterr()

    def test_rank_zero_perturbation(self, capsys):
        assert run(["extension", "rank", "--fixture", "transport-64", "--rank", "0"]) == 0
        assert "rank(resolvent diff)=0" in capsys.readouterr().out

    def test_rank_too_large_exit3(self, capsys):
        assert run(["extension", "rank", "--fixture", "transport-64", "--rank", "99"]) == 3
        capsys.readouterr()


class TestOutputs:
    def test_gate_csv_plus_verdict_sidecar(self, tmp_path, capsys):
        out = tmp_path / "gate.csv"
        code = run(["gate", "--zeta", "const:1,0", "--sections", "8,16,32", "--out", str(out)])
        assert code == 0
        assert out.read_text().splitlines()[0] == "N,k,sigma_k"
        sidecar = json.loads((tmp_path / "gate.json").read_text())
        assert sidecar["verdict"] == "compact"
        assert len(sidecar["indicators"]) == 3
        capsys.readouterr()

    def test_lq_json(self, tmp_path, capsys):
        out = tmp_path / "lq.json"
        assert run(["lq", "--zeta", "power:a=0.5", "--q", "1.5", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["theorem_applies"] is True
        capsys.readouterr()

    def test_string_reruns_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(["string", "--zeta", "const:0.5,0", "--out", str(a)]) == 0
        assert run(["string", "--zeta", "const:0.5,0", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        capsys.readouterr()

    def test_string_critical_message(self, capsys):
        assert run(["string", "--zeta", "1.0"]) == 0
        assert "critically damped" in capsys.readouterr().out

    def test_disk_json_report(self, tmp_path, capsys):
        out = tmp_path / "disk.json"
        assert run(["disk", "--zeta", "const:0,0.3", "--m-max", "1", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["metadata"]["all_counts_match"] is True
        capsys.readouterr()

    def test_march_csv_columns(self, tmp_path, capsys):
        out = tmp_path / "march.csv"
        code = run([
            "march", "--shape", "square", "--n", "5", "--zeta", "1.0",
            "--dt", "0.002", "--steps", "50", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "step,time,energy"
        assert len(lines) == 52
        capsys.readouterr()

    def test_converge_square_csv(self, tmp_path, capsys):
        out = tmp_path / "conv.csv"
        assert run(["converge", "--shape", "square", "--levels", "5,10,20", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "level,h,ref_re,ref_im,abs_error"
        assert len(lines) == 4
        capsys.readouterr()

    def test_converge_square_needs_zero_zeta(self, capsys):
        assert run(["converge", "--shape", "square", "--zeta", "0.5"]) == 3
        capsys.readouterr()

    def test_fem_summary_names_path(self, capsys):
        assert run(["fem", "--shape", "square", "--n", "6", "--zeta", "const:0,0.5", "--nev", "4"]) == 0
        assert "path real-direct" in capsys.readouterr().out

    def test_mesh_file_shape_roundtrip(self, tmp_path, capsys):
        from impedbench.fem import square_mesh

        path = tmp_path / "tiny.mesh"
        square_mesh(4).save(str(path))
        assert run(["fem", "--shape", str(path), "--zeta", "0.5", "--nev", "4"]) == 0
        capsys.readouterr()

    def test_n_with_braced_spec_exit3(self, capsys):
        assert run(["fem", "--shape", "square{8}", "--n", "4", "--zeta", "0.5"]) == 3
        capsys.readouterr()
