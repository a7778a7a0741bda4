import math

import numpy as np
import pytest

from photonstats.cli import main
from photonstats.config import RunConfig
from photonstats.ensemble import envelope
from photonstats.correlations import g2_atom
from photonstats.montecarlo import expected_rate
from photonstats.stream import read_stream


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def parse_report(text):
    values, section = {}, None
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("["):
            section = line.strip("[]")
        elif "=" in line:
            k, v = (x.strip() for x in line.split("=", 1))
            values[(section, k)] = float(v)
    return values


def test_help_names_units(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "MHz" in out and "us" in out


class TestModel:
    def test_outputs_and_classes(self, tmp_path, capsys):
        code, out, _ = run(capsys, "--out-dir", tmp_path, "model")
        assert code == 0
        for name in ("g1_atom.csv", "g2_atom.csv", "g2_nbar_0p15.csv", "g2_nbar_2.csv",
                     "g2_nbar_10.csv", "effective_config.ini"):
            assert (tmp_path / name).exists(), name
        lines = [ln for ln in out.splitlines() if ln.startswith("nbar_atoms")]
        assert "antibunched" in lines[0]
        assert "bunched" in lines[2] and "antibunched" not in lines[2]
        crossover = float(out.split("crossover_nbar =")[1].split()[0])
        assert 0.5 <= crossover <= 3.0

    def test_empty_sweep_is_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--out-dir", str(tmp_path), "model", "--nbar"])
        assert exc.value.code == 2

    def test_large_ensemble_is_pure_interference(self, tmp_path, capsys, params):
        code, _, _ = run(capsys, "--out-dir", tmp_path, "model", "--nbar", "1e9")
        assert code == 0
        data = read_csv(tmp_path / "g2_nbar_1e+09.csv")
        g1 = read_csv(tmp_path / "g1_atom.csv")
        f = RunConfig().envelope()
        mag2 = g1["re"] ** 2 + g1["im"] ** 2
        expect = 1 + envelope(g1["tau_s"], f) ** 2 * mag2
        sel = data["tau_s"] >= 0
        assert np.allclose(data["g2"][sel], np.interp(data["tau_s"][sel], g1["tau_s"], expect), atol=1e-6)

    def test_bad_config_is_reported(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[nonsense]\na = 1\n")
        code, _, err = run(capsys, "--config", bad, "--out-dir", tmp_path, "model")
        assert code == 1 and err.startswith("error:")


class TestSimulate:
    def test_deterministic_bytes(self, tmp_path, capsys):
        paths = []
        for k, threads in enumerate((1, 2)):
            out = tmp_path / f"run{k}"
            code, _, _ = run(capsys, "--seed", 11, "--threads", threads, "--out-dir", out,
                             "simulate", "--nbar", 1, "--drops", 3)
            assert code == 0
            paths.append(out / "stream.pstm")
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_no_atoms_no_clicks(self, tmp_path, capsys):
        code, out, _ = run(capsys, "--out-dir", tmp_path, "simulate", "--nbar", 0, "--drops", 2)
        assert code == 0
        assert "clicks = 0" in out
        assert read_stream(tmp_path / "stream.pstm").n_windows == 2

    def test_rate_matches_expectation(self, tmp_path, capsys, params):
        drops = 20
        code, _, _ = run(capsys, "--seed", 5, "--out-dir", tmp_path, "simulate",
                         "--nbar", 2, "--drops", drops)
        assert code == 0
        s = read_stream(tmp_path / "stream.pstm")
        per_window = sum(np.bincount(w, minlength=drops) for w in s.windows) / s.window_duration
        expect = expected_rate(params, RunConfig().transit(nbar_atoms=2.0))
        sigma = per_window.std(ddof=1) / math.sqrt(drops)
        assert abs(per_window.mean() - expect) < 3 * sigma


class TestCorrelate:
    def test_naive_and_fast_agree(self, tmp_path, capsys):
        run(capsys, "--out-dir", tmp_path, "simulate", "--nbar", 0.3, "--drops", 1)
        stream = tmp_path / "stream.pstm"
        code, out, _ = run(capsys, "--out-dir", tmp_path, "correlate", stream, "-o", tmp_path / "fast.csv")
        assert code == 0 and "pairs =" in out
        code, _, _ = run(capsys, "--out-dir", tmp_path, "correlate", stream, "--naive",
                         "-o", tmp_path / "naive.csv")
        assert code == 0
        assert (tmp_path / "fast.csv").read_bytes() == (tmp_path / "naive.csv").read_bytes()

    def test_bins_from_flags(self, tmp_path, capsys):
        run(capsys, "--out-dir", tmp_path, "simulate", "--nbar", 0.3, "--drops", 1)
        run(capsys, "--out-dir", tmp_path, "correlate", tmp_path / "stream.pstm",
            "--bin", 0.1, "--tau-max", 2)
        data = read_csv(tmp_path / "stream_g2.csv")
        assert data.size == 41
        assert data["tau_s"][0] == pytest.approx(-2e-6)

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "--out-dir", tmp_path, "correlate", tmp_path / "nope.pstm")
        assert code == 1 and "error" in err


class TestFit:
    def test_model_sweep(self, tmp_path, capsys, params):
        code, out, _ = run(capsys, "--out-dir", tmp_path, "fit")
        assert code == 0
        rep = parse_report(out)
        g2a0 = g2_atom(params, np.array([0.0])).values[0].real
        assert rep[("tau = 0 us", "offset")] == pytest.approx(2.0, abs=1e-6)
        assert rep[("tau = 0 us", "slope")] == pytest.approx(g2a0, abs=1e-6)
        assert rep[("tau = 1 us", "offset")] == pytest.approx(1.0, abs=0.02)
        assert ("derived", "coherence_time_s") in rep
        assert ("derived", "fano_factor[2]") in rep
        assert (tmp_path / "fit_report.txt").read_text() == out

    def test_two_points_underdetermined(self, tmp_path, capsys):
        code, _, err = run(capsys, "--out-dir", tmp_path, "fit", "--nbar", 1, 2)
        assert code == 1 and "3 distinct" in err

    def test_histogram_inputs(self, tmp_path, capsys):
        inputs = []
        for n in (0.5, 2, 10):
            d = tmp_path / f"n{n}"
            run(capsys, "--seed", 3, "--out-dir", d, "simulate", "--nbar", n, "--drops", 2)
            run(capsys, "--out-dir", d, "correlate", d / "stream.pstm")
            inputs.append(f"{d / 'stream_g2.csv'}:{n}")
        code, out, _ = run(capsys, "--out-dir", tmp_path, "fit", *inputs)
        assert code == 0
        rep = parse_report(out)
        assert ("tau = 0 us", "offset") in rep
        assert ("derived", "calibrated_nbar[2]") in rep

    def test_input_needs_atom_number(self, tmp_path, capsys):
        code, _, err = run(capsys, "--out-dir", tmp_path, "fit", "a.csv")
        assert code == 1 and "path.csv:nbar" in err


def test_effective_config_round_trip(tmp_path, capsys):
    cfg_file = tmp_path / "in.ini"
    cfg_file.write_text("[system]\ng_max = 3.0\n[sweep]\nnbar = 0.5, 4\n[simulation]\nseed = 9\n")
    code, _, _ = run(capsys, "--config", cfg_file, "--out-dir", tmp_path / "a", "model")
    assert code == 0
    echoed = tmp_path / "a" / "effective_config.ini"
    cfg = RunConfig.load(echoed)
    assert cfg == RunConfig.load(cfg_file)
    assert dict(cfg.system)["g_max"] == 3.0
    code, _, _ = run(capsys, "--config", echoed, "--out-dir", tmp_path / "b", "model")
    assert (tmp_path / "b" / "effective_config.ini").read_text() == echoed.read_text()
    assert (tmp_path / "b" / "g2_nbar_4.csv").read_bytes() == (tmp_path / "a" / "g2_nbar_4.csv").read_bytes()
