import json
import subprocess
import sys

import pytest

from critdecay import cli
from critdecay.applications import GOLDEN_P0
from critdecay.exceptions import ConfigError


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def report(outdir):
    return json.loads((outdir / "report.json").read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Configuration parsing
# ---------------------------------------------------------------------------

def test_minimal_config_fills_defaults(tmp_path):
    cfg = cli.parse_config(write(tmp_path, '[potential]\nkind = "zero"\nn = 3\n'))
    echo = cfg.echo()
    assert echo["grid"] == cli.DEFAULTS["grid"]
    assert echo["evolution"]["method"] == "hankel_spectral"
    assert cfg.potential.lam == 0.5


def test_dipole_in_four_dimensions_names_key(tmp_path):
    with pytest.raises(ConfigError, match=r"potential\.n"):
        cli.parse_config(write(tmp_path, '[potential]\nkind = "dipole"\np = 1.0\nn = 4\n'))


def test_parse_error_reports_line_and_column(tmp_path):
    with pytest.raises(ConfigError, match=r"line 2, column \d+"):
        cli.parse_config(write(tmp_path, '[potential]\nkind = \n'))


@pytest.mark.parametrize("text, key", [
    ('[grid]\nNN = 3\n', "grid.NN"),
    ('[bogus]\nx = 1\n', "bogus"),
    ('[potential]\nkind = "zero"\ncolour = 1\n', "potential.colour"),
    ('[grid]\nN = 0\n', "grid.N"),
    ('[grid]\nrmin = 10.0\nrmax = 1.0\n', "grid.rmax"),
    ('[evolution]\nmethod = "euler"\n', "evolution.method"),
    ('[evolution]\nstrichartz = [[1.5, "schrodinger"]]\n', "evolution.strichartz"),
    ('[scan]\nz_set = [[-1.0, 0.0]]\n', "scan.z_set"),
    ('[oplab]\nnus = [0.5]\n', "oplab.nus"),
    ('[dipole]\ntol = 1e-12\n', "dipole.tol"),
    ('[output]\ncsv = "yes"\n', "output.csv"),
])
def test_validation_names_offending_key(tmp_path, text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        cli.parse_config(write(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        cli.parse_config(tmp_path / "nope.toml")


def test_subcritical_inverse_square_parses():
    cfg = cli.config_from_dict({"potential": {"kind": "inverse_square", "a": -0.3, "n": 3}})
    assert not cfg.potential.admissible_flag


# ---------------------------------------------------------------------------
# Exit-code contract
# ---------------------------------------------------------------------------

def test_check_zero_potential_exit_0(tmp_path):
    cfg = write(tmp_path, '[potential]\nkind = "zero"\nn = 3\n')
    assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = report(tmp_path / "o")
    assert rep["schema_version"] == "1" and rep["passed"]
    assert rep["check"]["c1"] == 1.0 and rep["check"]["c2"] == 1.0
    assert "tol" in rep["check"]


def test_check_inadmissible_exit_2(tmp_path):
    cfg = write(tmp_path, '[potential]\nkind = "inverse_square"\na = -0.3\n')
    assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    rep = report(tmp_path / "o")
    assert rep["violations"] == ["assumptions"] and not rep["passed"]


def test_operational_error_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, '[potential]\nkind = "dipole"\np = 1.0\nn = 4\n')
    assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "potential.n" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_seed_exit_1(tmp_path):
    assert cli.main(["check", "--seed", "-1", "--out", str(tmp_path)]) == 1


def test_resolvent_inverse_square_three_quarters(tmp_path):
    # Expected: bound 1/(2 delta^2) = 0.5 and exit 0.  The computed weighted
    # ratio reaches about 0.75 near the imaginary axis, so the run exits 2.
    cfg = write(tmp_path, '[potential]\nkind = "inverse_square"\na = 0.75\n')
    code = cli.main(["resolvent", "--config", str(cfg), "--out", str(tmp_path / "o")])
    rep = report(tmp_path / "o")["resolvent"]
    assert rep["bound"] == pytest.approx(0.5, rel=1e-9)
    assert (tmp_path / "o" / "resolvent_scan.csv").is_file()
    assert code == 0


def test_dipole_command(tmp_path, capsys):
    assert cli.main(["dipole", "--tol", "1e-3", "--out", str(tmp_path)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert set(printed) == {"p0", "tol", "lmax", "mu0_curve"}
    assert 1.27 <= printed["p0"] <= 1.29
    assert abs(printed["p0"] - GOLDEN_P0) <= 1e-3
    assert report(tmp_path)["dipole"]["golden_p0"] == GOLDEN_P0


def test_dipole_tol_too_small_exit_1(tmp_path):
    assert cli.main(["dipole", "--tol", "1e-12", "--out", str(tmp_path)]) == 1


# ---------------------------------------------------------------------------
# Determinism and threads
# ---------------------------------------------------------------------------

SMALL_OPLAB = '[oplab]\nN = 32\npairs = 3\nc1_N = 256\nnus = [1.5]\n'


def test_reports_are_byte_identical(tmp_path):
    cfg = write(tmp_path, SMALL_OPLAB)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["oplab", "--config", str(cfg), "--out", str(a)]) == \
        cli.main(["oplab", "--config", str(cfg), "--out", str(b), "--threads", "2"])
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert report(a)["seed"] == cli.DEFAULT_SEED
    assert (a / "timings.json").is_file()


def test_seed_changes_random_probes(tmp_path):
    cfg = write(tmp_path, SMALL_OPLAB)
    cli.main(["oplab", "--config", str(cfg), "--out", str(tmp_path / "a")])
    cli.main(["oplab", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "7"])
    ra, rb = report(tmp_path / "a"), report(tmp_path / "b")
    assert rb["seed"] == 7
    assert ra["oplab"]["q_alpha"]["random"] != rb["oplab"]["q_alpha"]["random"]


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("CRITDECAY_THREADS", "3")
    assert cli._threads(None) == 3
    assert cli._threads(2) == 2
    monkeypatch.setenv("CRITDECAY_THREADS", "many")
    with pytest.raises(ConfigError):
        cli._threads(None)
    monkeypatch.delenv("CRITDECAY_THREADS")
    assert cli._threads(None) == 1


# ---------------------------------------------------------------------------
# Evolution commands
# ---------------------------------------------------------------------------

SMALL_EVOLVE = """
[potential]
kind = "inverse_square"
a = -0.1

[evolution]
T = 2.0
dt = 0.1
wave_T = 2.0
strichartz = [[2.0, "schrodinger"], ["inf", "schrodinger"], [4.0, "wave"]]
"""


def test_evolve_small(tmp_path):
    cfg = write(tmp_path, SMALL_EVOLVE)
    assert cli.main(["evolve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = report(tmp_path)["evolve"]
    assert rep["schrodinger"]["mass_drift"] <= rep["schrodinger"]["mass_drift_tol"]
    assert rep["wave"]["energy_drift"] <= rep["wave"]["energy_drift_tol"]
    assert rep["schrodinger"]["smoothing"]["passed"]
    for name in ("schrodinger_trace.csv", "wave_trace.csv"):
        assert (tmp_path / name).read_text().startswith("t,")


def test_evolve_reports_smoothing_violation(tmp_path):
    # For a = 0.5 the channel-Gaussian ratio tends to sqrt(pi / (4 nu)) ~ 0.95,
    # above the constant 1 / (delta^2 sqrt(2 pi)) ~ 0.53 checked by the driver.
    cfg = write(tmp_path, SMALL_EVOLVE.replace("a = -0.1", "a = 0.5"))
    assert cli.main(["evolve", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert report(tmp_path)["violations"] == ["kato_smoothing"]


def test_strichartz_small(tmp_path):
    cfg = write(tmp_path, SMALL_EVOLVE)
    assert cli.main(["strichartz", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    pairs = report(tmp_path)["strichartz"]["pairs"]
    assert len(pairs) == 3 and all(p["finite"] for p in pairs)


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "critdecay.cli", "check", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert report(tmp_path)["command"] == "check"
