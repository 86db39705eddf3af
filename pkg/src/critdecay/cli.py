"""Command-line driver: ``critdecay <command> [--config PATH] [--out DIR] ...``.

Commands ``check``, ``resolvent``, ``evolve``, ``strichartz``, ``oplab``,
``dipole`` and ``all`` read a TOML run configuration, run the corresponding
verifications and write ``report.json`` (plus CSV side files) to the output
directory.  Exit status: 0 when every contractual bound holds, 2 when a bound
is violated, 1 on operational errors (bad configuration, unresolved grids,
non-convergence).

Reports are deterministic: identical configurations give byte-identical
``report.json``; wall-clock timings go to a separate ``timings.json``.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import __version__, applications, evolution, oplab, potentials, radial, resolvent
from .exceptions import ConfigError, CritDecayError, PreconditionError

__all__ = ["RunConfig", "parse_config", "config_from_dict", "run", "main", "COMMANDS",
           "DEFAULT_SEED", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1"
DEFAULT_SEED = 0x5EED
COMMANDS = ("check", "resolvent", "evolve", "strichartz", "oplab", "dipole", "all")
EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2

# Tolerances each reported check is compared against.
CONSERVATION_TOL = {"hankel_spectral": 1e-10, "crank_nicolson": 1e-6}
ENERGY_TOL = {"hankel_spectral": 1e-8, "leapfrog": 1e-5}
OPLAB_TOL = 1e-8
C1_TOL = 0.02
MELLIN_TOL = 1e-6
MELLIN_RATIONAL_TOL = 1e-10

DEFAULTS: dict[str, dict[str, Any]] = {
    "potential": {"kind": "zero", "n": 3},
    "grid": {"rmin": 1e-3, "rmax": 1e3, "N": 4096},
    "scan": {"z_set": "default", "f_samples": "default", "lmax": 24, "channels": 7,
             "tol": resolvent.DEFAULT_TOL, "truncation_check": True},
    "evolution": {"T": 50.0, "dt": 0.1, "method": "hankel_spectral",
                  "wave_method": "hankel_spectral", "wave_T": 10.0, "data": "channel_gaussian",
                  "width": 1.0, "strichartz": [[2.0, "schrodinger"], [4.0, "wave"]]},
    "oplab": {"N": 256, "pairs": 10, "alpha": 1.0, "gamma": 0.75, "nus": [1.5, 2.0, 3.0],
              "c1_N": 1024},
    "dipole": {"tol": 1e-3, "lmax": 40, "scan": [0.0, 2.0, 41]},
    "output": {"dir": ".", "report": "report.json", "csv": True},
}

POTENTIAL_KEYS = {"kind", "n", "a", "p", "profile", "q_poly"}
PROFILE_KEYS = {"family", "c", "exponent", "scale"}


@dataclass
class RunConfig:
    """Validated configuration with defaults applied (see :data:`DEFAULTS`)."""

    sections: dict
    source: Optional[str] = None
    potential: Optional[potentials.Potential] = field(default=None, repr=False)

    def section(self, name: str) -> dict:
        return self.sections[name]

    def echo(self) -> dict:
        return copy.deepcopy(self.sections)


def _err(key: str, msg: str) -> ConfigError:
    return ConfigError(f"{key}: {msg}")


def _number(key: str, v, positive: bool = False, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(key, "expected a number")
    if integer and not (isinstance(v, int) or float(v).is_integer()):
        raise _err(key, "expected an integer")
    if not math.isfinite(float(v)):
        raise _err(key, "must be finite")
    if positive and not v > 0:
        raise _err(key, "must be positive")
    return int(v) if integer else float(v)


def _validate_potential(sec: dict) -> potentials.Potential:
    for k in sec:
        if k not in POTENTIAL_KEYS:
            raise _err(f"potential.{k}", "unknown key")
    if isinstance(sec.get("profile"), dict):
        for k in sec["profile"]:
            if k not in PROFILE_KEYS:
                raise _err(f"potential.profile.{k}", "unknown key")
    try:
        return potentials.build_potential(sec)
    except PreconditionError as exc:
        msg = str(exc)
        key = "potential.n" if ("n must" in msg or "R^3" in msg or "dimension" in msg) else "potential"
        raise _err(key, msg) from None


def config_from_dict(raw: dict, source: Optional[str] = None) -> RunConfig:
    """Validate a parsed configuration mapping and fill defaults.

    Raises
    ------
    ConfigError
        Naming the offending key for unknown sections/keys or bad values.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    sections = copy.deepcopy(DEFAULTS)
    for name, sec in raw.items():
        if name not in DEFAULTS:
            raise _err(name, "unknown section")
        if not isinstance(sec, dict):
            raise _err(name, "expected a table")
        if name == "potential":
            sections[name] = dict(sec)
            continue
        for k, v in sec.items():
            if k not in DEFAULTS[name]:
                raise _err(f"{name}.{k}", "unknown key")
            sections[name][k] = v
    pot = sections["potential"]
    pot.setdefault("n", 3)
    V = _validate_potential(pot)
    g = sections["grid"]
    _number("grid.rmin", g["rmin"], positive=True)
    _number("grid.rmax", g["rmax"], positive=True)
    if not g["rmin"] < g["rmax"]:
        raise _err("grid.rmax", "must exceed grid.rmin")
    _number("grid.N", g["N"], positive=True, integer=True)
    s = sections["scan"]
    if s["z_set"] != "default":
        if not isinstance(s["z_set"], list) or not all(
                isinstance(z, list) and len(z) == 2 for z in s["z_set"]):
            raise _err("scan.z_set", 'expected "default" or a list of [re, im] pairs')
        for z in s["z_set"]:
            if not _number("scan.z_set", z[0]) > 0:
                raise _err("scan.z_set", "Re z must be positive")
            _number("scan.z_set", z[1])
    if s["f_samples"] != "default":
        raise _err("scan.f_samples", 'only "default" is supported')
    _number("scan.lmax", s["lmax"], positive=True, integer=True)
    _number("scan.channels", s["channels"], positive=True, integer=True)
    _number("scan.tol", s["tol"], positive=True)
    e = sections["evolution"]
    for k in ("T", "dt", "wave_T", "width"):
        _number(f"evolution.{k}", e[k], positive=True)
    if e["method"] not in ("hankel_spectral", "crank_nicolson"):
        raise _err("evolution.method", "expected hankel_spectral or crank_nicolson")
    if e["wave_method"] not in ("hankel_spectral", "leapfrog"):
        raise _err("evolution.wave_method", "expected hankel_spectral or leapfrog")
    if e["data"] not in ("channel_gaussian", "gaussian"):
        raise _err("evolution.data", "expected channel_gaussian or gaussian")
    if not isinstance(e["strichartz"], list):
        raise _err("evolution.strichartz", "expected a list of [p, equation]")
    for pair in e["strichartz"]:
        if not (isinstance(pair, list) and len(pair) == 2 and pair[1] in evolution.EQUATIONS):
            raise _err("evolution.strichartz", "entries are [p, \"schrodinger\" | \"wave\"]")
        p = pair[0]
        if not (p == "inf" or isinstance(p, (int, float))):
            raise _err("evolution.strichartz", "p must be a number or \"inf\"")
        try:
            evolution.admissible_pair(pair[1], V.n, math.inf if p == "inf" else float(p))
        except PreconditionError as exc:
            raise _err("evolution.strichartz", str(exc)) from None
    o = sections["oplab"]
    for k in ("N", "pairs", "c1_N"):
        _number(f"oplab.{k}", o[k], positive=True, integer=True)
    _number("oplab.alpha", o["alpha"], positive=True)
    _number("oplab.gamma", o["gamma"], positive=True)
    if not isinstance(o["nus"], list) or not all(_number("oplab.nus", x) > 1 for x in o["nus"]):
        raise _err("oplab.nus", "expected a list of orders > 1")
    d = sections["dipole"]
    if _number("dipole.tol", d["tol"], positive=True) < 1e-10:
        raise _err("dipole.tol", "must be at least 1e-10")
    _number("dipole.lmax", d["lmax"], positive=True, integer=True)
    if not (isinstance(d["scan"], list) and len(d["scan"]) == 3):
        raise _err("dipole.scan", "expected [p_min, p_max, count]")
    _number("dipole.scan", d["scan"][2], positive=True, integer=True)
    out = sections["output"]
    if not isinstance(out["dir"], str) or not isinstance(out["report"], str):
        raise _err("output", "dir and report must be strings")
    if not isinstance(out["csv"], bool):
        raise _err("output.csv", "expected a boolean")
    return RunConfig(sections, source, V)


def parse_config(path) -> RunConfig:
    """Read and validate a TOML configuration file.

    Raises
    ------
    ConfigError
        On a missing file, a syntax error (message carries line and column)
        or a validation error naming the offending key.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error in {p}: {exc}") from None
    return config_from_dict(raw, str(p))


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


@dataclass
class _Context:
    cfg: RunConfig
    seed: int
    tol: Optional[float]
    threads: int
    csv: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def map(self, fn: Callable, items: Sequence):
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, items))

    def verdict(self, name: str, passed: bool):
        if not passed:
            self.violations.append(name)


def _task_check(ctx: _Context) -> dict:
    V = ctx.cfg.potential
    rep = potentials.assumption_report(V)
    ctx.verdict("assumptions", rep.passed)
    return {"potential": V.describe(), **rep.to_dict(), "delta_sq": rep.delta_sq,
            "tol": potentials.POSITIVITY_MARGIN}


def _task_resolvent(ctx: _Context) -> dict:
    V = ctx.cfg.potential
    s, g = ctx.cfg.section("scan"), ctx.cfg.section("grid")
    grid = radial.make_log_grid(g["rmin"], g["rmax"], int(g["N"]), V.n)
    zs = None if s["z_set"] == "default" else [complex(a, b) for a, b in s["z_set"]]
    samples = resolvent.default_f_samples(grid, channels=int(s["channels"]))
    tol = s["tol"] if ctx.tol is None else ctx.tol
    rep = resolvent.resolvent_scan(V, zs, samples, tol=tol,
                                   truncation_check=bool(s["truncation_check"]))
    ctx.verdict("resolvent", rep.passed)
    ctx.csv["resolvent_scan.csv"] = rep.to_csv()
    return rep.to_dict()


def _evolution_data(ctx: _Context, velocity: bool):
    V = ctx.cfg.potential
    e = ctx.cfg.section("evolution")
    w = float(e["width"])
    if e["data"] == "gaussian":
        prof = lambda r: np.exp(-np.asarray(r) ** 2 / (2 * w * w))
        return evolution.axisymmetric_data(V, prof, prof if velocity else None)
    return evolution.channel_gaussian(V, w, velocity=velocity)


def _task_evolve(ctx: _Context) -> dict:
    V = ctx.cfg.potential
    e = ctx.cfg.section("evolution")
    out = {}
    d = _evolution_data(ctx, False)
    tr = evolution.evolve_schrodinger(V, d, float(e["T"]), float(e["dt"]), e["method"])
    sm = evolution.smoothing_norm(tr)
    drift = float(np.ptp(tr.mass) / tr.mass[0])
    ctol = CONSERVATION_TOL[e["method"]]
    out["schrodinger"] = {"method": e["method"], "T": tr.T, "dt": tr.dt,
                          "smoothing": sm.to_dict(), "mass_drift": drift,
                          "mass_drift_tol": ctol, "info": tr.info,
                          "sobolev_norms": d.sobolev_norms}
    ctx.verdict("kato_smoothing", sm.passed)
    ctx.verdict("mass_conservation", drift <= ctol)
    ctx.csv["schrodinger_trace.csv"] = tr.to_csv()
    dw = _evolution_data(ctx, True)
    tw = evolution.evolve_wave(V, dw, None, float(e["wave_T"]), float(e["dt"]), e["wave_method"])
    mw = evolution.smoothing_norm(tw)
    edrift = float(np.ptp(tw.energy) / tw.energy[0])
    etol = ENERGY_TOL[e["wave_method"]]
    out["wave"] = {"method": e["wave_method"], "T": tw.T, "dt": tw.dt,
                   "morawetz": mw.to_dict(), "energy_drift": edrift, "energy_drift_tol": etol,
                   "info": tw.info, "sobolev_norms": dw.sobolev_norms}
    ctx.verdict("energy_conservation", edrift <= etol)
    ctx.csv["wave_trace.csv"] = tw.to_csv()
    return out


def _task_strichartz(ctx: _Context) -> dict:
    V = ctx.cfg.potential
    e = ctx.cfg.section("evolution")
    res = []
    traces = {}
    for p, eq in e["strichartz"]:
        if eq not in traces:
            if eq == "schrodinger":
                traces[eq] = evolution.evolve_schrodinger(V, _evolution_data(ctx, False),
                                                          float(e["T"]), float(e["dt"]), e["method"])
            else:
                traces[eq] = evolution.evolve_wave(V, _evolution_data(ctx, True), None,
                                                   float(e["wave_T"]), float(e["dt"]),
                                                   e["wave_method"])
        q = evolution.admissible_pair(eq, V.n, math.inf if p == "inf" else float(p))
        r = evolution.strichartz_norm(traces[eq], q)
        finite = bool(math.isfinite(r.value))
        ctx.verdict(f"strichartz({eq},{p})", finite)
        res.append({**r.to_dict(), "finite": finite, "T": traces[eq].T})
    return {"pairs": res}


def _task_oplab(ctx: _Context) -> dict:
    o = ctx.cfg.section("oplab")
    tol = OPLAB_TOL if ctx.tol is None else ctx.tol
    alpha, gamma = float(o["alpha"]), float(o["gamma"])
    rng = np.random.default_rng(ctx.seed)
    seeds = [int(x) for x in rng.integers(0, 2 ** 32, size=int(o["pairs"]))]

    def one(seed):
        pair = oplab.random_pair(int(o["N"]), seed)
        g = np.random.default_rng(seed + 1).standard_normal(pair.size)
        a = oplab.q_integral_identity(pair, alpha, g).relative_error
        b = oplab.q_reconstruction_identity(pair, alpha, gamma, g).relative_error
        return {"seed": seed, "integral_rel_err": a, "reconstruction_rel_err": b}

    rows = ctx.map(one, seeds)
    ok = all(r["integral_rel_err"] <= tol and r["reconstruction_rel_err"] <= tol for r in rows)
    ctx.verdict("q_alpha_identities", ok)
    ch = oplab.channel_pair()
    gch = np.exp(-np.log(ch.omega) ** 2 / 8.0)       # smooth bump in log r
    chan = {"integral_rel_err": oplab.q_integral_identity(ch, alpha, gch).relative_error,
            "reconstruction_rel_err":
                oplab.q_reconstruction_identity(ch, alpha, gamma, gch).relative_error}
    ctx.verdict("q_alpha_channel", max(chan.values()) <= tol)
    c, comm = oplab.commutator_hypothesis_check(ch, seed=ctx.seed)
    c1s = ctx.map(lambda nu: oplab.c1_operator_check(
        float(nu), radial.make_c1_grid(int(o["c1_N"]))), list(o["nus"]))
    c1ok = all(x.relative_error <= C1_TOL for x in c1s)
    ctx.verdict("c1_norm", c1ok)
    mell = [radial.mellin_sup_scan(float(nu), 0.5) for nu in o["nus"]]
    mok = all(abs(m.sup_modulus - m.analytic_sup) <= MELLIN_TOL and abs(m.y_at_max) == 0.0
              and m.max_discrepancy <= MELLIN_RATIONAL_TOL for m in mell)
    ctx.verdict("mellin_sup", mok)
    return {"q_alpha": {"alpha": alpha, "gamma": gamma, "tol": tol, "random": rows,
                        "channel": chan, "passed": ok},
            "commutator": {"c": c, **comm.to_dict()},
            "c1": {"tol": C1_TOL, "checks": [x.to_dict() for x in c1s], "passed": c1ok},
            "mellin": {"tol": MELLIN_TOL, "rational_tol": MELLIN_RATIONAL_TOL, "passed": mok,
                       "scans": [{"nu": m.nu, "y_at_max": m.y_at_max, "sup": m.sup_modulus,
                                  "analytic": m.analytic_sup,
                                  "rational_discrepancy": m.max_discrepancy} for m in mell]}}


def _task_dipole(ctx: _Context) -> dict:
    d = ctx.cfg.section("dipole")
    tol = float(d["tol"] if ctx.tol is None else ctx.tol)
    if tol < 1e-10:
        raise ConfigError("--tol must be at least 1e-10 for the dipole bisection")
    lmax = int(d["lmax"])
    crit = applications.critical_dipole_moment(tol, lmax)
    lo, hi, cnt = d["scan"]
    ps = np.linspace(float(lo), float(hi), int(cnt))
    curve = ctx.map(lambda p: applications.dipole_mu0(float(p), lmax).to_dict(), list(ps))
    ctx.verdict("dipole_bracket", crit.mu0_below > applications.CRITICAL_LEVEL > crit.mu0_above)
    return {"p0": crit.p0, "tol": tol, "lmax": lmax, "bracket": list(crit.bracket),
            "iterations": crit.iterations, "convergence": crit.convergence,
            "golden_p0": applications.GOLDEN_P0, "mu0_curve": curve}


TASKS: dict[str, Callable[[_Context], dict]] = {
    "check": _task_check,
    "resolvent": _task_resolvent,
    "evolve": _task_evolve,
    "strichartz": _task_strichartz,
    "oplab": _task_oplab,
    "dipole": _task_dipole,
}


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("CRITDECAY_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CRITDECAY_THREADS must be an integer, got {env!r}") from None
    return 1


def run(command: str, config: RunConfig, out: Optional[Path] = None, seed: int = DEFAULT_SEED,
        tol: Optional[float] = None, threads: Optional[int] = None) -> int:
    """Execute ``command`` and write the report; return the exit status."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    outcfg = config.section("output")
    outdir = Path(outcfg["dir"] if out is None else out)
    ctx = _Context(config, int(seed), tol, _threads(threads))
    names = list(TASKS) if command == "all" else [command]
    report: dict = {"schema_version": SCHEMA_VERSION, "command": command,
                    "config": config.echo(), "seed": ctx.seed, "tol_override": tol,
                    "versions": {"critdecay": __version__, "numpy": np.__version__,
                                 "scipy": __import__("scipy").__version__}}
    timings = {}
    for name in names:
        t0 = time.perf_counter()
        report[name] = TASKS[name](ctx)
        timings[name] = time.perf_counter() - t0
    report["violations"] = list(ctx.violations)
    report["passed"] = not ctx.violations
    outdir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    (outdir / outcfg["report"]).write_text(text, encoding="utf-8")
    (outdir / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    if outcfg["csv"]:
        for fname, body in ctx.csv.items():
            (outdir / fname).write_text(body, encoding="utf-8")
    if command == "dipole":
        d = report["dipole"]
        print(json.dumps(_jsonable({k: d[k] for k in ("p0", "tol", "lmax", "mu0_curve")})))
    return EXIT_OK if not ctx.violations else EXIT_VIOLATION


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critdecay", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="TOML run configuration")
    ap.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED,
                    help="seed for random probes (default 0x5EED)")
    ap.add_argument("--tol", type=float, help="tolerance override for the command's checks")
    ap.add_argument("--threads", type=int, help="worker threads (fallback: CRITDECAY_THREADS)")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = parse_config(args.config) if args.config else config_from_dict({})
        return run(args.command, cfg, args.out, args.seed, args.tol, args.threads)
    except (CritDecayError, OSError) as exc:
        print(f"critdecay: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
