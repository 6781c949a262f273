import json

import pytest

from rootflip.cli import main
from rootflip.config import CI_PROFILE, OUTPUT_ENV, build_config
from rootflip.errors import ValidationError
from rootflip.pulse import read_pulse_csv


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


@pytest.fixture(scope="module")
def design_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("design")
    assert main(["design", "--ci", "--budget", "400", "--seed", "1", "--out", str(out),
                 "--excitation"]) == 0
    return out


def test_design_outputs(design_dir):
    for name in ("pulse.csv", "pattern.txt", "trace.csv", "roots.csv", "outcome.json",
                 "excitation.csv", "trace.png", "trace.svg", "pulse.png", "roots.svg"):
        assert (design_dir / name).exists(), name
    data = json.loads((design_dir / "outcome.json").read_text())
    assert data["config"]["nb"] == CI_PROFILE["nb"] and "output_dir" not in data["config"]
    assert data["result"]["evaluations"] <= 400
    assert data["duration_ratio_vs_min_phase"] >= 1.0
    assert len((design_dir / "pattern.txt").read_text().strip()) == data["n_root"]
    pulse = read_pulse_csv(design_dir / "pulse.csv")
    assert pulse.n_points == 256
    assert pulse.duration_ms == pytest.approx(data["result"]["duration_ms"], rel=1e-9)


def test_design_rerun_identical(design_dir, tmp_path):
    assert main(["design", "--ci", "--budget", "400", "--seed", "1", "--out", str(tmp_path),
                 "--excitation", "--no-plots"]) == 0
    a = json.loads((design_dir / "outcome.json").read_text())
    b = json.loads((tmp_path / "outcome.json").read_text())
    for d in (a, b):
        d.pop("timing")
        d["config"].pop("plots", None)
    assert a == b
    assert (design_dir / "pulse.csv").read_text() == (tmp_path / "pulse.csv").read_text()


@pytest.mark.parametrize("strategy", ["mc", "greedy", "exhaustive"])
def test_other_strategies(strategy, tmp_path, capsys):
    code, out, _ = run(["design", "--ci", "--strategy", strategy, "--budget", "200",
                        "--out", str(tmp_path), "--no-plots"], capsys)
    assert code == 0
    assert json.loads(out)["result"]["method"] in (strategy, "monte_carlo")


def test_checkpoint_resume(tmp_path):
    ck = tmp_path / "ck.npz"
    assert main(["design", "--ci", "--budget", "300", "--out", str(tmp_path / "a"),
                 "--checkpoint", str(ck), "--checkpoint-every", "2", "--no-plots"]) == 0
    assert ck.exists()
    assert main(["design", "--ci", "--budget", "300", "--out", str(tmp_path / "b"),
                 "--resume", str(ck), "--no-plots"]) == 0
    a = json.loads((tmp_path / "a" / "outcome.json").read_text())["result"]
    b = json.loads((tmp_path / "b" / "outcome.json").read_text())["result"]
    assert a["pattern"] == b["pattern"] and a["evaluations"] == b["evaluations"]


def test_verify_passes_on_design(design_dir, tmp_path, capsys):
    code, out, _ = run(["verify", "--ci", "--pulse", str(design_dir / "pulse.csv"),
                        "--compare", str(design_dir / "pulse.csv"), "--spins", "201",
                        "--out", str(tmp_path)], capsys)
    report = json.loads(out)
    assert code == 0 and report["pass"]
    assert report["checks"]["pair_profile_difference"]["value"] == 0
    for name in ("verify.json", "refocusing_profile.csv", "spin_echo_pulse.csv", "profiles.png"):
        assert (tmp_path / name).exists()


def test_verify_wrong_length(design_dir, tmp_path, capsys):
    code, _, err = run(["verify", "--pulse", str(design_dir / "pulse.csv"), "--out", str(tmp_path)],
                       capsys)
    assert code == 2 and json.loads(err)["error"] == "ValidationError"


def test_sweep(tmp_path, capsys):
    code, out, _ = run(["sweep", "--ci", "--axis", "tbw", "--values", "4", "40", "--budget", "60",
                        "--seeds", "0", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = (tmp_path / "sweep_tbw.csv").read_text().splitlines()
    assert rows[0].startswith("axis,value,seed")
    status = [r.split(",")[7] for r in rows[1:]]
    # TBW 40 cannot fit two bands in 256 samples; the point is reported, not fatal
    assert status == ["ok", "ok", "error"]
    assert (tmp_path / "sweep_tbw.png").exists()


@pytest.mark.parametrize("argv, code", [
    (["design", "--nb", "0"], 2),
    (["design", "--bogus"], 2),
    (["design", "--ci", "--budget", "6000"], 2),
    (["design", "--nb", "7", "--n-points", "64"], 2),
    ([], 2),
])
def test_exit_codes(argv, code, tmp_path, capsys):
    c, _, err = run(argv + ["--out", str(tmp_path)] if argv else argv, capsys)
    assert c == code
    assert json.loads(err)["exit_code"] == code


def test_exhaustive_cap_exit_code(tmp_path, capsys):
    c, _, err = run(["design", "--strategy", "exhaustive", "--nb", "7", "--tbw", "12",
                     "--out", str(tmp_path), "--no-plots"], capsys)
    assert c == 4 and json.loads(err)["error"] == "TooLarge"


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"nb": 3, "seed": 5, "output_dir": "from_file"}))
    cfg = build_config({}, str(cfg_file), env={})
    assert (cfg.nb, cfg.seed, cfg.output_dir) == (3, 5, "from_file")
    cfg = build_config({"seed": 9}, str(cfg_file), env={OUTPUT_ENV: "from_env"})
    assert (cfg.seed, cfg.output_dir) == (9, "from_env")
    cfg = build_config({"output_dir": "flag"}, str(cfg_file), env={OUTPUT_ENV: "from_env"})
    assert cfg.output_dir == "flag"
    cfg = build_config({"ci": True}, str(cfg_file), env={})
    assert cfg.n_points == 256 and cfg.nb == 2 and cfg.seed == 5


def test_config_rejects_bad_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    with pytest.raises(ValidationError):
        build_config({}, str(bad), env={})
    bad.write_text("[1, 2]")
    with pytest.raises(ValidationError):
        build_config({}, str(bad), env={})
    with pytest.raises(ValidationError):
        build_config({"memoize": True}, None, env={})
    assert build_config({"memoize": True, "reproduction": False}, None, env={}).memoize
