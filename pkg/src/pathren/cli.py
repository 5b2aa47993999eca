"""Command-line experiment runner.

Each subcommand reads a TOML config, runs one named experiment, writes CSV
tables (plus a small generated plot script), and records a JSON manifest
holding the config snapshot, the effective seed, and the sha256 of every
output file. ``pathren rerun --manifest <file>`` re-executes the recorded
experiment and exits 0 only if every CSV reproduces bit-for-bit.

Exit codes: 0 success, 1 failed numerical gate (ito-check slope out of
window, rerun mismatch), 2 config or model errors.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # python < 3.11
    import tomli as tomllib

from . import __version__, kernels
from .action import ActionConfig, action_renormalized, ito_residual
from .estimator import (Potential, TestFunction, batch_std_error,
                        semigroup_element, weak_coupling_compare)
from .katoclass import (RadialPotentialSpec, exp_bound_mc, kato_criterion,
                        kato_mc)
from .params import ModelParams, PathrenError, RngSpec, TimeGrid
from .paths import refine, sample_ensemble, sample_start_points


class ConfigError(PathrenError):
    """Malformed config file: unknown keys, wrong types, missing sections."""


# --- config schema ----------------------------------------------------------

_NUM = (int, float)          # TOML ints are accepted where floats are expected
_STR = (str,)
_INT = (int,)
_LIST = (list,)

_SCHEMA = {
    "run": {"experiment": _STR, "seed": _INT, "out_dir": _STR},
    "model": {"eps": _NUM, "lam": _NUM, "g": _NUM, "n_particles": _INT,
              "nu": _NUM, "kappa": _NUM, "dispersion": _STR,
              "fourier_norm": _STR},
    "grid": {"t_horizon": _NUM, "n_steps": _INT, "tau": _NUM},
    "paths": {"n_paths": _INT},
    "kernels_table": {"eps_values": _LIST, "x_values": _LIST,
                      "t_values": _LIST},
    "renorm_sweep": {"eps_values": _LIST, "n_paths": _INT, "route": _STR,
                     "backend": _STR, "start_spread": _NUM},
    "ito_check": {"levels": _LIST, "n_paths": _INT, "slope_min": _NUM,
                  "slope_max": _NUM, "start_spread": _NUM},
    "semigroup": {"t_horizons": _LIST, "n_steps": _INT, "n_paths": _INT,
                  "center": _LIST, "width": _NUM, "potential": _STR,
                  "depth": _NUM, "well_width": _NUM, "delta": _NUM,
                  "yukawa_g": _NUM, "yukawa_nu": _NUM},
    "yukawa_sweep": {"kappa_values": _LIST, "nu": _NUM, "n_paths": _INT,
                     "g": _NUM, "width": _NUM, "eps": _NUM, "lam": _NUM},
    "kato": {"s_values": _LIST, "d": _INT, "t_values": _LIST,
             "beta_values": _LIST, "tau": _NUM, "n_paths": _INT,
             "n_starts": _INT, "n_steps": _INT},
}

# sections (and keys within them) each experiment cannot run without
_REQUIRED = {
    "kernels-table": {"kernels_table": ("eps_values", "x_values", "t_values")},
    "renorm-sweep": {"grid": ("t_horizon", "n_steps"),
                     "renorm_sweep": ("eps_values", "n_paths")},
    "ito-check": {"grid": ("t_horizon", "n_steps"),
                  "ito_check": ("levels", "n_paths")},
    "semigroup": {"semigroup": ("t_horizons", "n_steps", "n_paths", "width")},
    "yukawa-sweep": {"grid": ("t_horizon", "n_steps"),
                     "yukawa_sweep": ("kappa_values", "n_paths")},
    "kato": {"kato": ("s_values",)},
}


def load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}")


def validate_config(config, command=None):
    """Reject unknown sections/keys and wrong value types outright."""
    if not isinstance(config, dict):
        raise ConfigError("top level of the config must be a table")
    for section, entries in config.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(entries, dict):
            raise ConfigError(f"[{section}] must be a table of key = value")
        for key, val in entries.items():
            want = _SCHEMA[section].get(key)
            if want is None:
                raise ConfigError(f"unknown config key {section}.{key}")
            if isinstance(val, bool) or not isinstance(val, want):
                names = "/".join(t.__name__ for t in want)
                raise ConfigError(
                    f"{section}.{key} must be of type {names}, "
                    f"got {type(val).__name__}")
    if command is not None:
        declared = config.get("run", {}).get("experiment")
        if declared is not None and declared != command:
            raise ConfigError(
                f"config declares experiment {declared!r} but the "
                f"{command!r} subcommand was invoked")
        for section, keys in _REQUIRED[command].items():
            if section not in config:
                raise ConfigError(f"{command} needs a [{section}] section")
            for key in keys:
                if key not in config[section]:
                    raise ConfigError(f"{command} needs {section}.{key}")
    return config


def _float_list(values, where):
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a list of numbers")
    if not out:
        raise ConfigError(f"{where} must not be empty")
    return out


def _int_list(values, where):
    out = _float_list(values, where)
    if any(v != int(v) for v in out):
        raise ConfigError(f"{where} must be a list of integers")
    return [int(v) for v in out]


def _model_params(config, **overrides):
    sec = dict(config.get("model", {}))
    sec.update(overrides)
    return ModelParams(
        eps=float(sec.get("eps", 0.0)),
        lam=float(sec.get("lam", 1.0)),
        g=float(sec.get("g", 1.0)),
        n_particles=int(sec.get("n_particles", 1)),
        nu=float(sec.get("nu", 0.0)),
        kappa=float(sec.get("kappa", 1.0)),
        dispersion=sec.get("dispersion", "massless"),
        fourier_norm=sec.get("fourier_norm", "plain"),
    )


def _time_grid(config):
    sec = config["grid"]
    t = float(sec["t_horizon"])
    return TimeGrid(t, int(sec["n_steps"]), float(sec.get("tau", t)))


def _n_paths(section, config):
    if "n_paths" in section:
        return int(section["n_paths"])
    return int(config.get("paths", {}).get("n_paths", 0))


def _spread_ensemble(grid, n_paths, params, spread, rng_spec):
    # Gaussian start cloud: coincident particles sit exactly on the
    # equal-time singularity, so spread = 0 is rejected for N >= 2.
    if spread <= 0 and params.n_particles > 1:
        raise ConfigError("start_spread must be > 0 for multiple particles")
    starts = sample_start_points(n_paths, params.n_particles,
                                 np.zeros((params.n_particles, 3)),
                                 spread, rng_spec) if spread > 0 else None
    return sample_ensemble(grid, n_paths, params.n_particles, rng_spec,
                           start_points=starts)


# --- output helpers ---------------------------------------------------------

def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt_cell(v) for v in row])
    return Path(path)


def sha256_of(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Quick-look plot for {csv_name} (requires matplotlib)."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
needed = {needed!r}
with open(here / "{csv_name}", newline="") as fh:
    rows = [r for r in csv.DictReader(fh)
            if all(r[c] not in ("", "inf", "-inf", "nan") for c in needed)]

def col(name):
    return [float(r[name]) for r in rows]

fig, ax = plt.subplots()
{plot_lines}
ax.set_xlabel("{xcol}")
ax.set_ylabel("{ylabel}")
{scale_lines}ax.legend()
fig.tight_layout()
out = here / "{png_name}"
fig.savefig(out, dpi=150)
print("wrote", out)
'''


def _write_plot_script(out_dir, stem, csv_name, xcol, ycols, ylabel,
                       logx=False, logy=False):
    plot_lines = "\n".join(
        f'ax.plot(col("{xcol}"), col("{y}"), marker="o", label="{y}")'
        for y in ycols)
    scale_lines = ""
    if logx:
        scale_lines += 'ax.set_xscale("log")\n'
    if logy:
        scale_lines += 'ax.set_yscale("log")\n'
    text = _PLOT_TEMPLATE.format(
        csv_name=csv_name, needed=[xcol] + list(ycols),
        plot_lines=plot_lines, xcol=xcol, ylabel=ylabel,
        scale_lines=scale_lines, png_name=f"{stem}.png")
    path = Path(out_dir) / f"{stem}_plot.py"
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


# --- run manifest -----------------------------------------------------------

@dataclass
class RunManifest:
    """Everything needed to reproduce a run and verify its outputs."""

    command: str
    config: dict
    seed: int
    threads: int
    started: str
    finished: str
    version: str
    outputs: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _configure_threads(threads):
    if threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else format(v, ".12g")
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


# --- experiments ------------------------------------------------------------

def cmd_kernels_table(config, out_dir, rng_spec):
    """Tabulate the pair kernels on a grid of (eps, |x|, t) points."""
    sec = config["kernels_table"]
    base = _model_params(config)
    eps_values = _float_list(sec["eps_values"], "kernels_table.eps_values")
    x_values = _float_list(sec["x_values"], "kernels_table.x_values")
    t_values = _float_list(sec["t_values"], "kernels_table.t_values")

    rows = []
    n_singular = 0
    for eps in eps_values:
        params = replace(base, eps=eps)
        for x in x_values:
            for t in t_values:
                try:
                    wv = kernels.eval_W(params, x, t)
                    pv = kernels.eval_phi(params, x, t)
                    gv = kernels.eval_grad_phi(
                        params, np.array([x, 0.0, 0.0]), t)
                    gn = float(np.linalg.norm(gv.value))
                    err = max(wv.est_error, pv.est_error, gv.est_error)
                    rows.append((eps, params.lam, x, t, wv.value, pv.value,
                                 gn, err, "ok"))
                except PathrenError as exc:
                    n_singular += 1
                    rows.append((eps, params.lam, x, t, None, None, None,
                                 None, type(exc).__name__))

    csv_path = write_csv(
        Path(out_dir) / "kernels_table.csv",
        ["eps", "lambda", "x_norm", "t", "W", "phi", "grad_phi_norm",
         "est_error", "status"],
        rows)
    plot = _write_plot_script(out_dir, "kernels_table", csv_path.name,
                              "x_norm", ["W", "phi"], "kernel value")
    return [csv_path, plot], {"n_points": len(rows),
                              "n_singular": n_singular}


def cmd_renorm_sweep(config, out_dir, rng_spec):
    """Action breakdowns on one shared ensemble across a regulator sweep."""
    sec = config["renorm_sweep"]
    base = _model_params(config)
    grid = _time_grid(config)
    eps_values = _float_list(sec["eps_values"], "renorm_sweep.eps_values")
    n_paths = _n_paths(sec, config)
    route = sec.get("route", "decomposed")
    backend = sec.get("backend", "table")
    spread = float(sec.get("start_spread", 1.0))

    ensemble = _spread_ensemble(grid, n_paths, base, spread, rng_spec)

    detail_rows = []
    summary = []          # (eps, ln_inv, ct, mean_ren, se_ren, mean_tot, gap)
    prev_s_ren = None
    fit_pts = []          # (ln_inv, mean_s_total) over eps > 0
    phi_pts = []          # (ln_inv, phi(0,0))
    for eps in eps_values:
        params = replace(base, eps=eps)
        cfg = ActionConfig(params=params, route=route, backend=backend)
        br = action_renormalized(ensemble, cfg)
        for pid in range(n_paths):
            detail_rows.append((
                eps, pid,
                None if br.s_total is None else br.s_total[pid],
                None if br.s_dd is None else br.s_dd[pid],
                None if br.s_od is None else br.s_od[pid],
                None if br.x_term is None else br.x_term[pid],
                None if br.y_term is None else br.y_term[pid],
                None if br.z_term is None else br.z_term[pid],
                br.s_ren[pid], br.diag_counterterm, br.route))
        ln_inv = np.inf if eps <= 0 else float(np.log(1.0 / eps))
        mean_ren = float(np.mean(br.s_ren))
        se_ren = float(batch_std_error(br.s_ren))
        mean_tot = float(np.mean(br.s_total))
        gap = (None if prev_s_ren is None
               else float(np.mean(np.abs(br.s_ren - prev_s_ren))))
        summary.append([eps, ln_inv, br.diag_counterterm, mean_ren, se_ren,
                        mean_tot, gap])
        prev_s_ren = br.s_ren
        if eps > 0:
            fit_pts.append((ln_inv, mean_tot))
            phi_pts.append((ln_inv, kernels.phi_diag(params).value))

    fit_slope = slope_ref = None
    if len(fit_pts) >= 2:
        xs, ys = np.array(fit_pts).T
        fit_slope = float(np.polyfit(xs, ys, 1)[0])
        xs, ps = np.array(phi_pts).T
        phi_slope = float(np.polyfit(xs, ps, 1)[0])
        slope_ref = 4.0 * base.n_particles * grid.t_horizon * phi_slope
    summary_rows = [row + [fit_slope, slope_ref] for row in summary]

    detail_path = write_csv(
        Path(out_dir) / "renorm_breakdown.csv",
        ["eps", "path_id", "s_total", "s_dd", "s_od", "x_term", "y_term",
         "z_term", "s_ren", "diag_counterterm", "route"],
        detail_rows)
    summary_path = write_csv(
        Path(out_dir) / "renorm_summary.csv",
        ["eps", "ln_inv_eps", "diag_counterterm", "mean_s_ren", "se_s_ren",
         "mean_s_total", "cauchy_gap_s_ren", "fit_slope_s_total",
         "slope_ref_from_phi"],
        summary_rows)
    plot = _write_plot_script(out_dir, "renorm_summary", summary_path.name,
                              "ln_inv_eps", ["mean_s_ren", "mean_s_total"],
                              "action")
    extras = {"fit_slope_s_total": fit_slope,
              "slope_ref_from_phi": slope_ref}
    return [detail_path, summary_path, plot], extras


def cmd_ito_check(config, out_dir, rng_spec):
    """Refinement ladder for the pathwise rewrite defect; gates on the slope."""
    sec = config["ito_check"]
    base = _model_params(config)
    grid_sec = config["grid"]
    t_horizon = float(grid_sec["t_horizon"])
    tau = float(grid_sec.get("tau", t_horizon))
    levels = _int_list(sec["levels"], "ito_check.levels")
    n_paths = _n_paths(sec, config)
    slope_min = float(sec.get("slope_min", 0.4))
    slope_max = float(sec.get("slope_max", 0.6))
    for a, b in zip(levels, levels[1:]):
        if b != 2 * a:
            raise ConfigError("ito_check.levels must double at each step")

    spread = float(sec.get("start_spread", 1.0))
    cfg = ActionConfig(params=base, route="naive")
    ensemble = _spread_ensemble(TimeGrid(t_horizon, levels[0], tau),
                                n_paths, base, spread, rng_spec)
    rows = []
    for i, n_steps in enumerate(levels):
        if i > 0:
            ensemble = refine(ensemble)
        resid, parts = ito_residual(ensemble, cfg, return_parts=True)
        rms = float(np.sqrt(np.mean(resid ** 2)))
        rms_dd = float(np.sqrt(np.mean(parts.s_dd ** 2)))
        dt = ensemble.grid.dt
        rows.append((n_steps, dt, rms, rms_dd,
                     rms / rms_dd if rms_dd > 0 else None))

    dts = np.array([r[1] for r in rows])
    rmss = np.array([r[2] for r in rows])
    slope = float(np.polyfit(np.log(dts), np.log(rmss), 1)[0])
    passed = slope_min <= slope <= slope_max

    csv_path = write_csv(
        Path(out_dir) / "ito_check.csv",
        ["n_steps", "dt", "rms_residual", "rms_s_dd", "residual_over_s_dd"],
        rows)
    plot = _write_plot_script(out_dir, "ito_check", csv_path.name, "dt",
                              ["rms_residual"], "rms residual",
                              logx=True, logy=True)
    extras = {"slope": slope, "slope_min": slope_min, "slope_max": slope_max,
              "slope_passed": passed}
    return [csv_path, plot], extras


def _potential_from_config(sec, base):
    kind = sec.get("potential", "zero")
    if kind == "zero":
        return Potential(kind="zero")
    if kind == "bounded-well":
        return Potential(kind="bounded-well",
                         depth=float(sec.get("depth", 1.0)),
                         width=float(sec.get("well_width", 1.0)))
    if kind == "harmonic":
        return Potential(kind="harmonic", delta=float(sec.get("delta", 0.0)))
    if kind == "yukawa-pairwise":
        return Potential(kind="yukawa-pairwise",
                         g=float(sec.get("yukawa_g", base.g)),
                         nu=float(sec.get("yukawa_nu", 1.0)))
    raise ConfigError(f"unknown semigroup.potential {kind!r}")


def cmd_semigroup(config, out_dir, rng_spec):
    """Matrix elements and the energy proxy over a list of time horizons."""
    sec = config["semigroup"]
    base = _model_params(config)
    horizons = _float_list(sec["t_horizons"], "semigroup.t_horizons")
    n_steps = int(sec["n_steps"])
    n_paths = _n_paths(sec, config)
    width = float(sec["width"])
    dim = 3 * base.n_particles
    center = _float_list(sec["center"], "semigroup.center") \
        if "center" in sec else [0.0] * dim
    if len(center) != dim:
        raise ConfigError(f"semigroup.center needs {dim} coordinates")
    f = TestFunction(center=np.array(center), width=width)
    potential = _potential_from_config(sec, base)
    cfg = ActionConfig(params=base)

    rows = []
    for t in horizons:
        grid = TimeGrid(t, n_steps, t)
        est = semigroup_element(f, f, potential, cfg, grid, n_paths, rng_spec)
        if est.mean > 0:
            proxy = -np.log(est.mean) / (2.0 * t)
            band = est.std_error / (est.mean * 2.0 * t)
        else:
            proxy = band = np.nan
        free_ref = (1.0 + t / width ** 2) ** (-1.5 * base.n_particles)
        rows.append((t, n_paths, est.mean, est.std_error, proxy, band,
                     free_ref))

    csv_path = write_csv(
        Path(out_dir) / "semigroup.csv",
        ["t_horizon", "n_paths", "element", "element_se", "energy_proxy",
         "proxy_band", "free_reference"],
        rows)
    plot = _write_plot_script(out_dir, "semigroup", csv_path.name,
                              "t_horizon", ["element", "free_reference"],
                              "matrix element")
    return [csv_path, plot], {"potential": potential.kind}


def cmd_yukawa_sweep(config, out_dir, rng_spec):
    """Stiff-field elements vs the pairwise-potential limit over kappa."""
    sec = config["yukawa_sweep"]
    base = _model_params(config)
    grid = _time_grid(config)
    kappas = _float_list(sec["kappa_values"], "yukawa_sweep.kappa_values")
    nu = float(sec.get("nu", 0.5))
    n_paths = _n_paths(sec, config)
    g = float(sec.get("g", base.g))
    width = float(sec.get("width", 1.0))
    eps = float(sec.get("eps", 0.0))
    lam = float(sec.get("lam", 0.0))
    f = TestFunction(center=np.zeros(3 * base.n_particles), width=width)

    result = weak_coupling_compare(f, f, kappas, nu, grid, n_paths, rng_spec,
                                   g=g, lam=lam, eps=eps)
    rows = [(r["kappa"], r["element"], r["element_se"], r["reference"],
             r["reference_se"], r["gap"], r["gap_se"], r["n_paths"])
            for r in result]

    csv_path = write_csv(
        Path(out_dir) / "yukawa_sweep.csv",
        ["kappa", "element", "element_se", "reference", "reference_se",
         "gap", "gap_se", "n_paths"],
        rows)
    plot = _write_plot_script(out_dir, "yukawa_sweep", csv_path.name,
                              "kappa", ["gap"], "element - reference",
                              logx=True)
    extras = {"nu": nu, "g": g, "eps": eps, "lam": lam,
              "final_gap": rows[-1][5]}
    return [csv_path, plot], extras


def cmd_kato(config, out_dir, rng_spec):
    """Singular-potential certification plus its Monte-Carlo cross-checks."""
    sec = config["kato"]
    s_values = _float_list(sec["s_values"], "kato.s_values")
    d = int(sec.get("d", 3))
    t_values = _float_list(sec["t_values"], "kato.t_values") \
        if "t_values" in sec else []
    beta_values = _float_list(sec["beta_values"], "kato.beta_values") \
        if "beta_values" in sec else []
    tau = float(sec.get("tau", 0.5))
    n_paths = _n_paths(sec, config) or 500
    n_starts = int(sec.get("n_starts", 4))
    n_steps = int(sec.get("n_steps", 256))

    verdict_rows = []
    mc_rows = []
    bound_rows = []
    for s in s_values:
        spec = RadialPotentialSpec(s=s, d=d)
        report = kato_criterion(spec)
        verdict_rows.append((s, d, report.verdict, report.small_r_slope,
                             report.cutoff_stable, report.reason or ""))
        if not report.passed:
            continue
        if t_values:
            for t, value, se in kato_mc(spec, t_values, n_paths, n_starts,
                                        rng_spec, n_steps=n_steps):
                mc_rows.append((s, t, value, se))
        if beta_values:
            for row in exp_bound_mc(spec, beta_values, tau, n_paths,
                                    rng_spec, n_steps=n_steps,
                                    n_starts=n_starts):
                bound_rows.append((s, row["beta"], tau, row["value"],
                                   row["std_error"], row["argmax_radius"]))

    outputs = [write_csv(
        Path(out_dir) / "kato_verdicts.csv",
        ["s", "d", "verdict", "vanish_power", "cutoff_stable", "reason"],
        verdict_rows)]
    if mc_rows:
        mc_path = write_csv(
            Path(out_dir) / "kato_mc.csv",
            ["s", "t", "value", "std_error"], mc_rows)
        outputs.append(mc_path)
        outputs.append(_write_plot_script(out_dir, "kato_mc", mc_path.name,
                                          "t", ["value"],
                                          "sup over starts of E int |V|"))
    if bound_rows:
        outputs.append(write_csv(
            Path(out_dir) / "kato_exp_bounds.csv",
            ["s", "beta", "tau", "value", "std_error", "argmax_radius"],
            bound_rows))
    n_passed = sum(1 for r in verdict_rows if r[2] == "pass")
    return outputs, {"n_passed": n_passed,
                     "n_failed": len(verdict_rows) - n_passed}


_COMMANDS = {
    "kernels-table": cmd_kernels_table,
    "renorm-sweep": cmd_renorm_sweep,
    "ito-check": cmd_ito_check,
    "semigroup": cmd_semigroup,
    "yukawa-sweep": cmd_yukawa_sweep,
    "kato": cmd_kato,
}


def run_experiment(command, config, out_dir, seed=None, threads=0):
    """Run one experiment, write its outputs, and return the manifest."""
    validate_config(config, command)
    _configure_threads(threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eff_seed = int(seed if seed is not None
                   else config.get("run", {}).get("seed", 0))
    rng_spec = RngSpec(seed=eff_seed)
    started = _utc_now()
    outputs, extras = _COMMANDS[command](config, out, rng_spec)
    manifest = RunManifest(
        command=command, config=_json_safe(config), seed=eff_seed,
        threads=threads, started=started, finished=_utc_now(),
        version=__version__,
        outputs=[{"name": p.name, "sha256": sha256_of(p)} for p in outputs],
        extras=_json_safe(extras))
    man_path = out / f"{command.replace('-', '_')}_manifest.json"
    with open(man_path, "w", newline="") as fh:
        json.dump(asdict(manifest), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest, man_path


def rerun_from_manifest(manifest_path, out_dir=None):
    """Re-execute a recorded run; report which outputs reproduce exactly."""
    man_path = Path(manifest_path)
    try:
        with open(man_path) as fh:
            recorded = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}")
    for key in ("command", "config", "seed", "outputs"):
        if key not in recorded:
            raise ConfigError(f"manifest is missing {key!r}")
    command = recorded["command"]
    if command not in _COMMANDS:
        raise ConfigError(f"manifest names unknown command {command!r}")
    out = Path(out_dir) if out_dir else man_path.parent / "rerun"
    manifest, _ = run_experiment(command, recorded["config"], out,
                                 seed=recorded["seed"],
                                 threads=int(recorded.get("threads", 0)))
    old = {o["name"]: o["sha256"] for o in recorded["outputs"]}
    new = {o["name"]: o["sha256"] for o in manifest.outputs}
    report = []
    for name in sorted(old):
        if name not in new:
            report.append((name, "missing"))
        elif old[name] != new[name]:
            report.append((name, "mismatch"))
        else:
            report.append((name, "ok"))
    for name in sorted(set(new) - set(old)):
        report.append((name, "unexpected"))
    identical = all(status == "ok" for _, status in report)
    return identical, report


# --- entry point ------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pathren",
        description="Path-integral renormalization experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--out", default=None,
                       help="output directory (default: run.out_dir or '.')")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=0,
                       help="BLAS/OMP thread cap (0 = leave defaults)")
    p = sub.add_parser("rerun",
                       help="re-execute a recorded run and verify its outputs")
    p.add_argument("--manifest", required=True, help="manifest JSON file")
    p.add_argument("--out", default=None,
                   help="directory for the re-run (default: <manifest "
                        "dir>/rerun)")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            identical, report = rerun_from_manifest(args.manifest, args.out)
            for name, status in report:
                print(f"{status:10s} {name}")
            print("rerun: outputs reproduce bit-for-bit" if identical
                  else "rerun: OUTPUT MISMATCH")
            return 0 if identical else 1
        config = load_config(args.config)
        out_dir = args.out or config.get("run", {}).get("out_dir", ".")
        manifest, man_path = run_experiment(
            args.command, config, out_dir,
            seed=args.seed, threads=args.threads)
        for entry in manifest.outputs:
            print(f"wrote {Path(out_dir) / entry['name']}")
        print(f"wrote {man_path}")
        if args.command == "ito-check":
            ex = manifest.extras
            print(f"ito-check slope {ex['slope']:.4f} "
                  f"(window [{ex['slope_min']}, {ex['slope_max']}]): "
                  + ("pass" if ex["slope_passed"] else "FAIL"))
            if not ex["slope_passed"]:
                return 1
        return 0
    except PathrenError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error[ValueError]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
