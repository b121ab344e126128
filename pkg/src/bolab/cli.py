"""Config-driven experiment runner.

Usage::

    bolab <solve|norms|gauge-check|estimates|flow-holder> CONFIG

CONFIG is a ``key = value`` text file (``#`` starts a comment).  Keys are
checked against the table for the subcommand before anything runs; an unknown
key, a missing required key or a malformed value exits with status 1 and a
message naming the key.  Numerical failures exit with status 2 and still
leave a manifest describing what was written.

Relative ``output_dir`` values are resolved against ``$BOLAB_OUTPUT_ROOT``
when it is set, else against the working directory.  Every float written to
CSV uses 17 significant digits; the CSV bodies depend only on the config.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .estimates import (BLOCK_CASES, ShellEnsemble, bilinear_ratio, block_product_ratio, bump,
                        commutator_ratio, flow_holder_experiment, linear_estimates,
                        plancherel_bilinear_identity, plateau, vanishing_sweep, write_report_csv)
from .gauge import (SIGN_CONVENTION, GaugeDivergenceError, antiderivative_residuals,
                    gauge_forward, renorm_residual, write_residual_csv)
from .littlewood_paley import DyadicPartition
from .norms import (INF, NormSpec, WindowedTrajectory, besov_norm, mixed_norm, norm_row,
                    sobolev_norm, write_norm_csv, xsbq_norm, y_norm)
from .solver import (SOLITON_SIGN, BlowUpError, SolverConfig, galilean_restore, load_trajectory,
                     run, save_trajectory, soliton)
from .spectral import DISPERSION_SIGN, Field, Grid1D, Trajectory

OUTPUT_ROOT_ENV = "BOLAB_OUTPUT_ROOT"
KINDS = ("solve", "norms", "gauge-check", "estimates", "flow-holder")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _float(v):
    v = v.strip().lower()
    if v in ("inf", "infinity"):
        return INF
    return float(v)


def _int(v):
    return int(v.strip())


def _str(v):
    return v.strip()


def _float_list(v):
    return [_float(x) for x in v.split(",") if x.strip()]


def _name_list(v):
    return [x.strip() for x in v.split(",") if x.strip()]


COMMON = {"kind": _str, "output_dir": _str, "seed": _int}

SCHEMA = {
    "solve": {"initial": _str, "n_points": _int, "length": _float, "t_end": _float,
              "dt": _float, "record_every": _int, "dealias": _float, "c": _float,
              "x0": _float, "amplitude": _float, "band": _int},
    "norms": {"checkpoint": _str, "norms": _str},
    "gauge-check": {"checkpoint": _str, "order": _int, "j_min": _int, "j_max": _int},
    "estimates": {"cases": _name_list, "seeds": _int, "j_min": _int, "j_max": _int,
                  "kappa": _float, "model": _str, "plateau_factor": _float},
    "flow-holder": {"n_points": _int, "length": _float, "t_end": _float, "dt": _float,
                    "record_every": _int, "eps": _float_list, "amplitude": _float,
                    "band": _int},
}

DEFAULTS = {
    "solve": {"initial": "soliton", "n_points": 1024, "length": 100.0, "t_end": 5.0,
              "dt": 0.0025, "record_every": 2, "dealias": 2.0 / 3.0, "c": 1.0,
              "amplitude": 0.1, "band": 8},
    "norms": {"norms": "y:s=0.25"},
    "gauge-check": {"order": 4},
    "estimates": {"cases": [], "seeds": 20, "j_min": 3, "j_max": 7, "kappa": 0.01,
                  "model": "gaussian", "plateau_factor": 4.0},
    "flow-holder": {"n_points": 256, "length": 2 * np.pi, "t_end": 2.0, "dt": 0.002,
                    "record_every": 5, "eps": [1e-1, 1e-2, 1e-3, 1e-4], "amplitude": 0.6,
                    "band": 4},
}

REQUIRED = {"norms": ("checkpoint",), "gauge-check": ("checkpoint",)}

ESTIMATE_CASES = ("strichartz", "maximal", "smoothing", "bilinear", "commutator",
                  "plancherel", "vanishing") + tuple(BLOCK_CASES)


def parse_config(text: str, kind: str) -> dict:
    """Parse and validate; returns the config with defaults filled in."""
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown experiment kind {kind!r}")
    table = {**COMMON, **SCHEMA[kind]}
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in table:
            raise ConfigError(key, f"unknown key for '{kind}'")
        if key in raw:
            raise ConfigError(key, "given twice")
        try:
            raw[key] = table[key](value)
        except ValueError as exc:
            raise ConfigError(key, f"bad value {value!r} ({exc})") from None
    if raw.get("kind", kind) != kind:
        raise ConfigError("kind", f"config is for {raw['kind']!r}, not {kind!r}")
    for key in REQUIRED.get(kind, ()):
        if key not in raw:
            raise ConfigError(key, "required")
    cfg = {"kind": kind, "output_dir": f"bolab-{kind}", "seed": 0}
    cfg.update(DEFAULTS[kind])
    cfg.update(raw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    kind = cfg["kind"]
    positive = ("n_points", "length", "t_end", "dt", "record_every", "seeds", "kappa",
                "amplitude", "band", "plateau_factor", "c")
    for key in positive:
        if key in cfg and not cfg[key] > 0:
            raise ConfigError(key, "must be positive")
    if "n_points" in cfg and cfg["n_points"] % 2:
        raise ConfigError("n_points", "must be even")
    if kind == "solve" and cfg["initial"] not in ("soliton", "random"):
        raise ConfigError("initial", "must be 'soliton' or 'random'")
    if kind == "estimates":
        for name in cfg["cases"]:
            if name not in ESTIMATE_CASES:
                raise ConfigError("cases", f"unknown case {name!r}")
        if cfg["model"] not in ("gaussian", "packet"):
            raise ConfigError("model", "must be 'gaussian' or 'packet'")
        if cfg["j_max"] - cfg["j_min"] < 1:
            raise ConfigError("j_max", "need j_max > j_min")
    if kind == "flow-holder" and len(cfg["eps"]) < 2:
        raise ConfigError("eps", "need at least two values")
    if kind == "norms":
        parse_norm_list(cfg["norms"])


def parse_norm_list(text: str) -> list:
    """``family:key=value,...; family:...`` into (family, params) pairs.

    Families: besov (s, p, q), lb (rho, s, p, q), bl (s, p, q, rho),
    xsbq (s, b, q), y (s), sobolev (s).
    """
    keys = {"besov": ("s", "p", "q"), "lb": ("rho", "s", "p", "q"), "bl": ("s", "p", "q", "rho"),
            "xsbq": ("s", "b", "q"), "y": ("s",), "sobolev": ("s",)}
    out = []
    for item in (x.strip() for x in text.split(";")):
        if not item:
            continue
        fam, _, rest = item.partition(":")
        fam = fam.strip()
        if fam not in keys:
            raise ConfigError("norms", f"unknown family {fam!r}")
        params = {}
        for kv in (x.strip() for x in rest.split(",") if x.strip()):
            k, _, v = kv.partition("=")
            k = k.strip()
            if k not in keys[fam]:
                raise ConfigError("norms", f"{fam} takes {keys[fam]}, got {k!r}")
            try:
                params[k] = _float(v)
            except ValueError:
                raise ConfigError("norms", f"bad value {v!r} for {fam}.{k}") from None
        missing = [k for k in keys[fam] if k not in params]
        if missing:
            raise ConfigError("norms", f"{fam} is missing {missing}")
        out.append((fam, params))
    return out


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _g(v) -> str:
    return format(float(v), ".17g")


def output_dir(cfg) -> Path:
    p = Path(cfg["output_dir"])
    if not p.is_absolute():
        root = os.environ.get(OUTPUT_ROOT_ENV)
        p = Path(root) / p if root else Path.cwd() / p
    return p


@dataclass
class Manifest:
    cfg: dict
    outputs: list
    results: dict
    partition_id: str | None = None
    status: str = "ok"
    error: str | None = None

    def write(self, path: Path) -> None:
        doc = {
            "kind": self.cfg["kind"],
            "status": self.status,
            "error": self.error,
            "config": {k: v for k, v in sorted(self.cfg.items())},
            "outputs": self.outputs,
            "results": self.results,
            "partition_id": self.partition_id,
            "dispersion": {"DISPERSION_SIGN": DISPERSION_SIGN, "SOLITON_SIGN": SOLITON_SIGN,
                           "multiplier": "exp(-i t xi|xi|)", "hilbert": "-i sgn(xi)",
                           "gauge": SIGN_CONVENTION},
            "tolerances": TOLERANCES,
            "versions": {"bolab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


TOLERANCES = {
    "mass_drift": 1e-8,
    "mean_drift": 1e-12,
    "hamiltonian_drift": 1e-6,
    "renorm_residual": 1e-3,
    "antiderivative_space": 1e-10,
    "antiderivative_time": 1e-6,
    "plateau_factor": 4.0,
    "vanishing": 1e-10,
    "plancherel": 1e-3,
}


def _random_field(grid: Grid1D, band: int, amplitude: float, seed: int) -> Field:
    """Real mean-zero data on modes 1..band with L^2 norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    spec = np.zeros(grid.n_points, dtype=complex)
    m = np.arange(1, band + 1)
    spec[m] = (rng.standard_normal(band) + 1j * rng.standard_normal(band)) / m
    spec[-m] = np.conj(spec[m])
    f = Field.from_spectrum(grid, spec)
    return f.with_values(f.values * amplitude / f.norm())


def mean_free(traj):
    """Galilean reduction of a trajectory: ``u(t, x + mu t) - mu``."""
    mu = float(np.mean(traj.values[0]))
    return galilean_restore(traj, -mu), mu


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def do_solve(cfg, out: Path, man: Manifest):
    grid = Grid1D(cfg["n_points"], cfg["length"])
    if cfg["initial"] == "soliton":
        u0 = soliton(grid, cfg["c"], cfg.get("x0"))
    else:
        u0 = _random_field(grid, cfg["band"], cfg["amplitude"], cfg["seed"])
    sc = SolverConfig(grid, cfg["t_end"], dt=cfg["dt"], dealias=cfg["dealias"],
                      record_every=cfg["record_every"])
    man.partition_id = DyadicPartition(grid).partition_id
    try:
        traj, ledger = run(sc, u0)
    except BlowUpError as exc:
        exc.ledger.to_csv(out / "conservation.csv")
        man.outputs.append("conservation.csv")
        man.results["last_valid_time"] = exc.last_valid_time
        raise
    save_trajectory(out / "trajectory.npz", traj,
                    {"initial": cfg["initial"], "dt": sc.step_size, "t_end": cfg["t_end"]})
    ledger.to_csv(out / "conservation.csv")
    man.outputs += ["trajectory.npz", "conservation.csv"]
    man.results.update(drift=ledger.drift(), dt=sc.step_size, n_steps=sc.n_steps,
                       n_frames=len(traj))


def do_norms(cfg, out: Path, man: Manifest):
    traj, _ = load_trajectory(cfg["checkpoint"])
    P = DyadicPartition(traj.grid)
    man.partition_id = P.partition_id
    wt = WindowedTrajectory(traj)
    rows = []
    for fam, p in parse_norm_list(cfg["norms"]):
        if fam == "besov":
            spec = NormSpec.besov(p["s"], p["p"], p["q"])
            value = max(besov_norm(traj.frame(i), spec, P) for i in range(len(traj)))
        elif fam == "sobolev":
            spec = NormSpec("sobolev", s=p["s"])
            value = max(sobolev_norm(traj.frame(i), p["s"]) for i in range(len(traj)))
        elif fam == "lb":
            spec = NormSpec.lb(p["rho"], p["s"], p["p"], p["q"])
            value = mixed_norm(traj, spec, P)
        elif fam == "bl":
            spec = NormSpec.bl(p["s"], p["p"], p["q"], p["rho"])
            value = mixed_norm(traj, spec, P)
        elif fam == "xsbq":
            spec = NormSpec.xsbq(p["s"], p["b"], p["q"])
            value = xsbq_norm(wt, spec, P)
        else:
            spec = NormSpec("y", s=p["s"])
            value = y_norm(traj, p["s"], P)
        taper = wt.taper_id if fam == "xsbq" else "none"
        rows.append(norm_row(spec, value, taper, traj.grid.grid_id))
    write_norm_csv(out / "norms.csv", rows)
    man.outputs.append("norms.csv")
    man.results["rows"] = len(rows)


def do_gauge_check(cfg, out: Path, man: Manifest):
    traj, _ = load_trajectory(cfg["checkpoint"])
    traj, mu = mean_free(traj)
    P = DyadicPartition(traj.grid)
    man.partition_id = P.partition_id
    pair = gauge_forward(traj, P)
    res = antiderivative_residuals(traj, pair.antiderivative, cfg["order"])
    j_lo = cfg.get("j_min", 2)
    j_hi = cfg.get("j_max", P.j_max - 3)
    if not 0 <= j_lo <= j_hi <= P.j_max:
        raise ConfigError("j_max", f"shell range [{j_lo}, {j_hi}] outside [0, {P.j_max}]")
    # every other frame: doubles the time step of the residual's t-derivative
    coarse = gauge_forward(Trajectory(traj.grid, np.asarray(traj.times)[::2], traj.values[::2]), P)
    reports = []
    for j in range(j_lo, j_hi + 1):
        r = renorm_residual(pair, j, cfg["order"])
        rc = renorm_residual(coarse, j, cfg["order"])
        r.refinement_factor = rc.residual / r.residual if r.residual > 0 else math.inf
        reports.append(r)
    write_residual_csv(out / "residuals.csv", reports)
    man.outputs.append("residuals.csv")
    man.results.update(
        galilean_mean=mu,
        antiderivative_residuals=res,
        max_residual=max(r.residual for r in reports),
        min_refinement_factor=min(r.refinement_factor for r in reports),
        shells=[j_lo, j_hi])


def do_estimates(cfg, out: Path, man: Manifest):
    seeds = tuple(range(cfg["seed"], cfg["seed"] + cfg["seeds"]))
    j_range = range(cfg["j_min"], cfg["j_max"] + 1)
    ens = ShellEnsemble(seeds=seeds, kappa=cfg["kappa"], model=cfg["model"])
    reports, summary = [], {}
    cases = list(cfg["cases"])
    linear = [c for c in cases if c in ("strichartz", "maximal", "smoothing")]
    if linear:
        res = linear_estimates(ens, j_range, 0.0, tuple(linear))
        for name in linear:
            reports += res[name]
            summary[name] = plateau(res[name])
    for name in cases:
        if name == "bilinear":
            r = bilinear_ratio(ens, j_range)
        elif name == "commutator":
            r = commutator_ratio(ens, j_range)
        elif name in BLOCK_CASES:
            r = block_product_ratio(name, seeds)
            summary[name] = plateau(r, key="n")
            reports += r
            continue
        elif name == "plancherel":
            summary[name] = _plancherel_summary(cfg["seed"])
            continue
        elif name == "vanishing":
            v = vanishing_sweep(6, seed=cfg["seed"])
            summary[name] = {"configurations": len(v), "max_relative_output": max(x for _, x in v)}
            continue
        else:
            continue
        reports += r
        summary[name] = plateau(r)
    write_report_csv(out / "estimates.csv", reports)
    man.outputs.append("estimates.csv")
    for name, val in summary.items():
        if isinstance(val, tuple):
            f, env = val
            val = {"plateau_factor": f, "envelope": {str(k): v for k, v in env.items()},
                   "within_factor": bool(f <= cfg["plateau_factor"])}
        man.results[name] = val


def _plancherel_summary(seed):
    rng = np.random.default_rng(seed)
    h = 0.01
    eta = h * np.arange(int(6 / h) + 1)
    errs = []
    for _ in range(3):
        a = rng.uniform(0.5, 1.5)
        b = a + rng.uniform(0.5, 1.0)
        c = b + rng.uniform(0.3, 1.0)
        d = c + rng.uniform(0.5, 1.0)
        f = bump(eta, a, b)
        g = bump(eta, c, d) * np.exp(1j * rng.uniform(0, 2 * np.pi) * eta)
        errs.append(plancherel_bilinear_identity(f, g, h, 20.0)[2])
    return {"max_rel_err": max(errs)}


def do_flow_holder(cfg, out: Path, man: Manifest):
    grid = Grid1D(cfg["n_points"], cfg["length"])
    u0 = _random_field(grid, cfg["band"], cfg["amplitude"], cfg["seed"])
    d = _random_field(grid, cfg["band"], 1.0, cfg["seed"] + 1)
    res = flow_holder_experiment(u0, d, cfg["eps"], cfg["t_end"], dt=cfg["dt"],
                                 record_every=cfg["record_every"])
    names = list(res["norms"])
    with open(out / "flow_holder.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps"] + names)
        for i, e in enumerate(res["eps"]):
            w.writerow([_g(e)] + [_g(res["norms"][n][i]) for n in names])
    man.outputs.append("flow_holder.csv")
    man.results["slopes"] = res["slopes"]


def _check_finite(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v)
    elif isinstance(obj, float) and math.isnan(obj):
        raise FloatingPointError("non-finite result")


RUNNERS = {"solve": do_solve, "norms": do_norms, "gauge-check": do_gauge_check,
           "estimates": do_estimates, "flow-holder": do_flow_holder}


def run_experiment(cfg: dict) -> int:
    """Run a parsed config; returns the exit status."""
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(cfg, [], {})
    status = EXIT_OK
    try:
        RUNNERS[cfg["kind"]](cfg, out, man)
        _check_finite(man.results)
    except ConfigError as exc:
        man.status, man.error, status = "config-error", str(exc), EXIT_CONFIG
    except (BlowUpError, GaugeDivergenceError, FloatingPointError, np.linalg.LinAlgError,
            ArithmeticError) as exc:
        man.status, man.error, status = "numerical-failure", f"{type(exc).__name__}: {exc}", EXIT_NUMERIC
    except (OSError, KeyError) as exc:
        man.status, man.error, status = "config-error", f"{type(exc).__name__}: {exc}", EXIT_CONFIG
    man.write(out / "manifest.json")
    if status:
        print(f"bolab: {man.error}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="bolab", description=__doc__.split("\n\n")[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("config", type=Path)
    args = ap.parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"bolab: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, args.kind)
    except ConfigError as exc:
        print(f"bolab: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
