import json
import subprocess
import sys

import numpy as np
import pytest

from bistab import cli, export
from bistab.config import ConfigError, parse_config, resolve_params
from bistab.models import TWO_PI, device_preset

GHZ = TWO_PI * 1e9
MHZ = TWO_PI * 1e6

FIG2 = """
[run]
model = jc
cavity_cutoff = 60
drive_GHz = 10.6005

[params]
preset = ratios
"""


def write(tmp_path, text, name="job.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_empty_document_lists_required_keys():
    with pytest.raises(ConfigError) as e:
        parse_config("")
    assert "run.model" in str(e.value) and "params.preset" in str(e.value)


def test_negative_rate_names_key_and_line():
    text = "[run]\nmodel = jc\ndrive_scale = 1\n[params]\npreset = D2\ngamma = -1.0\n"
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert "params.gamma" in str(e.value) and "line 6" in str(e.value)


@pytest.mark.parametrize("text,needle", [
    ("[run]\nmodel = jc\nbogus = 1\n[params]\npreset = ratios\n", "run.bogus"),
    ("[run]\nmodel = jc\ntransmon_levels = two\n[params]\npreset = ratios\n", "run.transmon_levels"),
    ("[run]\nmodel = jc\ncavity_cutoff = 1\n[params]\npreset = ratios\n", "run.cavity_cutoff"),
    ("[run]\nmodel = jc\n[params]\npreset = ratios\n[sweep]\nstart = 10\nstop = 11\npoints = 1\n", "sweep.points"),
    ("[run]\nmodel = rabi\n[params]\npreset = ratios\n", "run.model"),
])
def test_config_errors_name_key(text, needle):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert needle in str(e.value)


def test_d2_preset_resolves_to_device_values():
    cfg = parse_config("[run]\nmodel = gjc\ndrive_scale = 0.1\n[params]\npreset = D2\n")
    p = resolve_params(cfg)
    d2 = device_preset("D2")
    for k in ("omega_c", "omega_q", "g", "chi", "kappa", "gamma", "gamma_phi"):
        assert getattr(p, k) == getattr(d2, k)
    assert p.eps_d == pytest.approx(0.1 * 2 * d2.kappa)


def test_overrides_apply():
    cfg = parse_config("[run]\nmodel = jc\ndrive_scale = 1\n[params]\npreset = D1\nkappa = 2.0\nf_c = 10.5\n")
    p = resolve_params(cfg, 10.51)
    assert p.kappa == pytest.approx(2 * MHZ)
    assert p.omega_c == pytest.approx(10.5 * GHZ)
    assert p.omega_d == pytest.approx(10.51 * GHZ)


def test_config_round_trip():
    text = FIG2 + "[sweep]\nstart = 10.59\nstop = 10.61\npoints = 5\n[trajectory]\nseed = 9\ndt = 0.001\n"
    cfg = parse_config(text)
    assert parse_config(cfg.to_text()) == cfg


def test_csv_format(tmp_path):
    path = export.write_csv(tmp_path / "t.csv", {"x": [0.1, 1 / 3], "z": [1 + 2j, 0.5j], "k": [1, 2]})
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().split("\n")
    assert lines[0] == "x,re_z,im_z,k"
    assert lines[1].split(",")[0] == "0.10000000000000001"
    assert lines[2].split(",")[0] == "0.33333333333333331"
    back = export.read_csv(path)
    assert np.array_equal(back["x"], [0.1, 1 / 3])


def test_sweep_schema_and_manifest_round_trip(tmp_path):
    text = FIG2.replace("cavity_cutoff = 60", "cavity_cutoff = 20") + "[sweep]\nstart = 10.599\nstop = 10.602\npoints = 3\n"
    code = cli.main(["sweep", "--config", write(tmp_path, text), "--out", str(tmp_path / "o"), "--workers", "1"])
    assert code == 0
    cols = export.read_csv(tmp_path / "o" / "sweep.csv")
    assert list(cols)[:5] == ["freq_GHz", "abs_a", "n_photon", "sigma_z", "abs_sm"]
    man = export.read_manifest(tmp_path / "o" / "manifest.json")
    assert man["status"] == "ok" and man["cutoff"] == [20, 20, 20]
    for k in ("versions", "seeds", "wall_time_s", "config"):
        assert k in man
    cfg = parse_config(man["config"])
    assert parse_config(text).replace(output_dir=str(tmp_path / "o")) == cfg


def test_traj_byte_identical(tmp_path):
    text = FIG2.replace("cavity_cutoff = 60", "cavity_cutoff = 10") + "[trajectory]\nt_max = 0.5\ndt = 0.002\n"
    cfgp = write(tmp_path, text)
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert cli.main(["traj", "--config", cfgp, "--out", str(out), "--seed", "7", "--workers", "1"]) == 0
        outs.append((out / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1]
    man = json.loads((tmp_path / "r0" / "manifest.json").read_text())
    assert man["seeds"]["trajectory"] == 7


def test_qfunc_two_peaks(tmp_path):
    out = tmp_path / "q"
    assert cli.main(["qfunc", "--config", write(tmp_path, FIG2), "--out", str(out), "--workers", "1"]) == 0
    modes = export.read_csv(out / "qfunc_modes.csv")
    assert len(modes["x"]) == 2
    assert export.read_manifest(out / "manifest.json")["summary"]["n_peaks"] == 2


def test_meanfield_command(tmp_path):
    text = "[run]\nmodel = meanfield\n[params]\npreset = ratios\n[sweep]\nstart = 10.59\nstop = 10.605\npoints = 16\n"
    out = tmp_path / "mf"
    assert cli.main(["meanfield", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    lo, hi = export.read_manifest(out / "manifest.json")["summary"]["bistable_window_GHz"]
    assert lo < 10.6005 < hi


def test_exit_code_config_error(tmp_path):
    assert cli.main(["steady", "--config", write(tmp_path, "[run]\nmodel = jc\n")]) == 2
    assert cli.main(["steady", "--config", str(tmp_path / "missing.ini")]) == 2
    assert cli.main(["reproduce", "fig9", "--out", str(tmp_path)]) == 2


def test_exit_code_numerical_failure(tmp_path):
    # dt·rate far above the stability guard
    text = FIG2.replace("cavity_cutoff = 60", "cavity_cutoff = 10") + "[trajectory]\nt_max = 10\ndt = 0.5\n"
    out = tmp_path / "bad"
    assert cli.main(["traj", "--config", write(tmp_path, text), "--out", str(out)]) == 3
    man = export.read_manifest(out / "manifest.json")
    assert man["status"] == "error" and man["error"]["type"] == "numerical"
    assert man["error"]["class"] == "StepSizeError"


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bistab.cli", "steady", "--config", write(tmp_path, "")],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "run.model" in r.stderr


def test_reproduce_fig1(tmp_path, capsys):
    assert cli.main(["reproduce", "fig1", "--out", str(tmp_path)]) == 0
    out = tmp_path / "fig1"
    lines = (out / "summary.txt").read_text().splitlines()
    assert lines == [line for line in capsys.readouterr().out.splitlines() if line.startswith("[")]
    assert lines[0].startswith("[PASS] criterion 3")
    man = export.read_manifest(out / "manifest.json")
    assert man["tag"] == "fig1" and man["checks"][0]["passed"]
    assert "meanfield_branches.csv" in man["files"]
    assert not list(out.glob("*.png"))


def test_reproduce_plot(tmp_path):
    pytest.importorskip("matplotlib")
    assert cli.main(["reproduce", "fig1", "--out", str(tmp_path), "--plot"]) == 0
    assert (tmp_path / "fig1" / "meanfield_branches.png").stat().st_size > 0
