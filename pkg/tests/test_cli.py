import csv
import json

import pytest

from bsde_eigen import cli

TINY = """
[problem]
name = linear_schrodinger
d = 1
c = 0.2

[train]
T = 0.1
N = 5
K = 16
order = 2
hidden = 4
iterations = 4
record_every = 2
lr = 1e-3
lr_boundaries =
gamma = 0.5
gamma_boundaries =
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


# -- presets ------------------------------------------------------------------------


def test_all_presets_parse():
    names = cli.preset_names()
    for expected in ("fp_d5", "fp_d10", "ls_d5", "ls_d10", "nls_d5", "nls_d10",
                     "dw_d10_first", "dw_d10_second", "dw_d1_first", "dw_d1_second", "ls_d1"):
        assert expected in names
    for name in names:
        cfg = cli.load_config(name)
        cli.apply_scale(cfg, "desk")


def test_ls_d5_preset_values():
    t = cli.load_config("ls_d5").train
    assert (t.T, t.N, t.hidden, t.K, t.iterations) == (0.3, 80, (80, 80, 80), 1024, 80000)
    assert t.lr.values == (1e-4, 5e-5, 1e-5) and t.lr.boundaries == (30000, 60000)


def test_nls_d5_preset_values():
    t = cli.load_config("nls_d5").train
    assert (t.clip_P, t.clip_Q, t.K) == (-5.0, 5.0, 2048)
    assert t.gamma.values == (0.2, 0.9, 0.99)


def test_second_eigenpair_presets():
    c = cli.load_config("dw_d10_second")
    assert c.train.lambda_freeze_steps == 20000 and c.second["lambda_offset"] == 0.1
    c = cli.load_config("dw_d1_second")
    assert c.second["init_eps"] == 0.3


def test_desk_scale_mapping():
    c = cli.apply_scale(cli.load_config("fp_d10"), "desk")
    assert c.train.iterations == 5000
    assert c.train.hidden == (40, 40, 40)
    assert c.train.lr.boundaries == (3000, 4000)
    assert c.train.K == 512
    assert c.train.N == 120


# -- config validation ----------------------------------------------------------------


@pytest.mark.parametrize("text", [
    "[problem]\nname = nope\nd = 1\n",
    "[problem]\nname = fokker_planck\n",
    "[problem]\nname = fokker_planck\nd = 1\nA = 3\n",
    "[problem]\nname = fokker_planck\nd = 1\n[train]\nbogus = 1\n",
    "[problem]\nname = fokker_planck\nd = 1\n[extra]\n",
    "[problem]\nname = fokker_planck\nd = 1\n[train]\nlr = 1, 2\nlr_boundaries =\n",
    "[problem]\nname = fokker_planck\nd = 1\n[train]\nK = 0\n",
    "[problem]\nname = fokker_planck\nd = 1\n[second]\nlambda_offset = 0.1\n",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_config(text)


def test_config_round_trip(tiny):
    cfg = cli.load_config(str(tiny))
    again = cli.parse_config(cfg.to_ini())
    assert again.train == cfg.train and again.problem == cfg.problem


# -- commands -----------------------------------------------------------------------


def test_train_outputs_and_rerun_from_echo(tiny, tmp_path, capsys):
    out = tmp_path / "a"
    code, _ = run(["train", "--config", tiny, "--out", out], capsys)
    assert code == 0
    for name in ("history.csv", "density.csv", "checkpoint.npz", "summary.json", "config.ini"):
        assert (out / name).is_file()
    rows = list(csv.reader(open(out / "density.csv")))
    assert rows[0] == ["bin_center", "density_net", "density_ref"] and len(rows) == 101
    summary = json.loads((out / "summary.json").read_text())
    assert summary["step"] == 4
    out2 = tmp_path / "b"
    assert run(["train", "--config", out / "config.ini", "--out", out2], capsys)[0] == 0
    assert (out / "history.csv").read_bytes() == (out2 / "history.csv").read_bytes()


def test_train_zero_iterations(tiny, tmp_path, capsys):
    out = tmp_path / "z"
    code, _ = run(["train", "--config", tiny, "--out", out, "--iterations", "0"], capsys)
    assert code == 0
    lines = (out / "history.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("0,")


def test_evaluate_matches_training(tiny, tmp_path, capsys):
    out = tmp_path / "e"
    run(["train", "--config", tiny, "--out", out], capsys)
    hist = (out / "history.csv").read_text().splitlines()[-1].split(",")
    code, cap = run(["evaluate", "--checkpoint", out / "checkpoint.npz", "--config", tiny], capsys)
    assert code == 0
    res = json.loads(cap.out)
    assert res["err_psi_l2"] == pytest.approx(float(hist[5]), rel=1e-12)
    assert res["err_lambda"] == pytest.approx(float(hist[4]), rel=1e-12)


def test_evaluate_errors(tiny, tmp_path, capsys):
    assert run(["evaluate", "--checkpoint", tmp_path / "missing.npz", "--config", tiny], capsys)[0] == 1
    other = tmp_path / "o"
    run(["train", "--config", "nls_d5", "--scale", "desk", "--iterations", "0", "--out", other], capsys)
    assert run(["evaluate", "--checkpoint", other / "checkpoint.npz", "--config", tiny], capsys)[0] == 1


def test_resume_continues(tiny, tmp_path, capsys):
    full = tmp_path / "full"
    run(["train", "--config", tiny, "--out", full], capsys)
    part = tmp_path / "part"
    run(["train", "--config", tiny, "--out", part, "--iterations", "2"], capsys)
    cont = tmp_path / "cont"
    code, _ = run(["train", "--config", tiny, "--out", cont, "--resume", part / "checkpoint.npz"], capsys)
    assert code == 0
    a = json.loads((full / "summary.json").read_text())
    b = json.loads((cont / "summary.json").read_text())
    assert a["lambda"] == b["lambda"]


def test_reference_commands(tmp_path, capsys):
    code, cap = run(["reference", "--c", "0", "--k", "1"], capsys)
    assert code == 0 and "lambda=0" in cap.out
    code, cap = run(["reference", "--freq", "2", "--c", "5", "--k", "1,2"], capsys)
    lams = [float(line.split("lambda=")[1]) for line in cap.out.splitlines() if "lambda=" in line]
    assert lams == [pytest.approx(-2.153, abs=1e-3), pytest.approx(-2.076, abs=1e-3)]
    code, cap = run(["reference", "--c", "0.2", "--k", "1"], capsys)
    lam = float(cap.out.split("lambda=")[1].split()[0])
    assert lam == pytest.approx(-0.02, abs=0.2**4)
    csv_path = tmp_path / "ref.csv"
    assert run(["reference", "--c", "1", "--k", "1,2", "--export", csv_path, "--points", "64"], capsys)[0] == 0
    rows = list(csv.reader(open(csv_path)))
    assert rows[0] == ["x", "psi_1", "psi_2"] and len(rows) == 65


def test_reference_from_config(tmp_path, capsys):
    code, cap = run(["reference", "--config", "dw_d1_first", "--k", "1,2", "--export", tmp_path / "x.csv"], capsys)
    assert code == 0 and "-2.153" in cap.out


def test_reference_invalid_k(capsys):
    assert run(["reference", "--k", "0"], capsys)[0] == 1
    assert run(["reference", "--k", "999", "--n-modes", "4"], capsys)[0] == 1
    assert run(["reference", "--k", "x"], capsys)[0] == 1


def test_usage_errors(capsys, tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["train"])
    assert info.value.code == 1
    assert run(["train", "--config", "no_such_preset", "--out", tmp_path], capsys)[0] == 1


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(TINY.replace("lr = 1e-3", "lr = 1e-3\nlambda_init = -1e308\nlambda_freeze_steps = 10"))
    code, cap = run(["train", "--config", cfg, "--out", tmp_path / "bad"], capsys)
    assert code == 2
    assert "numerical failure" in cap.err
