import json
import subprocess
import sys

import pytest

from roughcomm.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, list_experiments, main, report_csv
from roughcomm.config import ConfigError, parse_config, parse_config_text
from roughcomm.harness import CHECKERS

MINIMAL = """\
kernel.family = harmonic
kernel.params = {"m": 2}
experiments = ["khat_decay"]
experiment.khat_decay.j_list = [-2, -1]
experiment.khat_decay.stability = false
"""

NULL = """\
# null kernel, every checker
kernel.family = constant
kernel.params = {"value": 0.0}
experiments = ["lemma23", "khat_decay", "mu_fourier", "hormander", "approx_convergence", "difference_growth", "squarefunction", "qst1"]
seed = 7
output.format = both
"""

DETERMINISM = """\
kernel.family = harmonic
kernel.params = {"m": 2}
experiments = hormander, approx_convergence, squarefunction, qst1, khat_decay
experiment.squarefunction.count = 6
experiment.hormander.l_list = [1, 2, 3]
seed = 12345678901234567890
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- config parsing ---------------------------------------------------------------


def test_minimal_config_runs(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", "--config", str(cfg), "--output-dir", str(tmp_path / "out")]) == EXIT_OK
    assert "khat_decay: pass" in capsys.readouterr().out
    out = tmp_path / "out"
    assert {p.name for p in out.iterdir()} == {"khat_decay.csv", "summary.json", "manifest.json"}
    header = (out / "khat_decay.csv").read_text().splitlines()[0]
    assert header == "experiment,j,shell,rho,measured,envelope,ratio"


def test_beta_one_is_a_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL + "beta = 1.0\n")
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "beta" in err and "beta > 1" in err


def test_misspelled_key_is_named(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL.replace("kernel.family", "kernel.famly"))
    assert main(["validate", "--config", str(cfg)]) == EXIT_CONFIG
    assert "kernel.famly" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text,key",
    [
        ("seed = -1\n", "seed"),
        ("seed = 18446744073709551616\n", "seed"),
        ("output.format = xml\n", "output.format"),
        ("experiments = [\"nope\"]\n", "experiments"),
        ("experiment.khat_decay.bogus = 1\n", "experiment.khat_decay.bogus"),
        ("grid.n = 100\n", "grid.n"),
        ("kernel.family = file\nkernel.params = {\"path\": \"missing.txt\"}\n", "kernel.params"),
    ],
)
def test_invalid_values_name_the_key(tmp_path, text, key):
    base = "\n".join(line for line in MINIMAL.splitlines() if not line.startswith(text.split("=")[0].strip()))
    with pytest.raises(ConfigError) as exc:
        parse_config_text(base + "\n" + text, tmp_path)
    assert exc.value.key.startswith(key)


def test_duplicate_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        parse_config_text(MINIMAL + "seed = 1\nseed = 2\n", tmp_path)


def test_config_digest_is_stable(tmp_path):
    a = parse_config_text(MINIMAL, tmp_path)
    b = parse_config_text("# comment\n" + MINIMAL, tmp_path)
    assert a.digest() == b.digest()
    assert a.digest() != parse_config_text(MINIMAL + "seed = 1\n", tmp_path).digest()


# --- list / validate ------------------------------------------------------------------


def test_list_names_every_checker(tmp_path, capsys):
    assert main(["list"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(CHECKERS) == 8
    names = [line.split(":")[0] for line in lines]
    assert names == list(CHECKERS)
    cfg = parse_config_text(f"experiments = {json.dumps(names)}\n", tmp_path)
    assert cfg.experiments == names
    assert list_experiments() == "\n".join(lines)


def test_validate(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["validate", "--config", str(cfg)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("ok: 1 experiment(s)")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "roughcomm.cli", "list"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.count("\n") == 8


# --- run ------------------------------------------------------------------------------


def test_null_kernel_run(tmp_path):
    cfg = _write(tmp_path, NULL)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--output-dir", str(out), "--threads", "1"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert all(v["status"] == "pass" for v in summary.values())
    for name, entry in summary.items():
        if name == "squarefunction":
            # the square function of [a, S_l] does not involve the kernel
            assert entry["fitted_C"] > 0
        else:
            assert entry["fitted_C"] == 0.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["exit_status"] == EXIT_OK
    assert len(manifest["config_hash"]) == 64
    assert (out / "hormander.json").exists() and (out / "hormander.csv").exists()


def test_precondition_failure_is_errored(tmp_path, capsys):
    cfg = _write(tmp_path, 'experiments = ["approx_convergence"]\nexperiment.approx_convergence.grid.n = 256\n')
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--output-dir", str(out)]) == EXIT_FAIL
    summary = json.loads((out / "summary.json").read_text())
    assert summary["approx_convergence"]["status"] == "errored"
    assert "n <= 96" in summary["approx_convergence"]["error"]
    assert not (out / "approx_convergence.csv").exists()


def test_bad_threads(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    assert main(["run", "--config", str(cfg), "--threads", "0"]) == EXIT_CONFIG


def test_repeat_runs_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, DETERMINISM)
    outs = []
    for i, threads in enumerate(("1", "4")):
        out = tmp_path / f"o{i}"
        assert main(["run", "--config", str(cfg), "--output-dir", str(out), "--threads", threads]) == EXIT_OK
        outs.append(out)
    for name in ("hormander", "approx_convergence", "squarefunction", "qst1", "khat_decay"):
        assert (outs[0] / f"{name}.csv").read_bytes() == (outs[1] / f"{name}.csv").read_bytes()


def test_report_csv_uses_repr_floats(tmp_path):
    cfg = parse_config_text(MINIMAL, tmp_path)
    report = CHECKERS["khat_decay"](**cfg.checker_kwargs("khat_decay"))
    text = report_csv(report)
    first = text.splitlines()[1].split(",")
    assert float(first[-3]) == report.measured[0]


def test_parse_config_from_file(tmp_path):
    cfg = parse_config(_write(tmp_path, MINIMAL + "output.dir = results\n"))
    assert cfg.resolve(cfg.output_dir) == tmp_path / "results"
