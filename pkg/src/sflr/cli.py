"""Command line front end.

Subcommands: fit, gcv, experiment, diagnose, simulate.  Each reads an
optional JSON config file; the flags --seed, --out, --threads, and
--variant override the corresponding config entries.  Unknown config
keys are rejected before any computation.  Exit codes: 0 on success, 2
for validation problems, 3 for numerical failures.

Every output file carries '#' metadata lines with the schema version, a
hash of the effective config, and the seed; floats are written with 17
significant digits, so reruns with identical inputs are byte-identical.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from ._serialize import config_hash, fmt, write_csv, write_json
from .diagnostics import empirical_eigendecay, write_spectrum_csv
from .errors import NumericalError, ValidationError
from .estimator import SemiNormFit, fit, make_gram_set
from .functional_data import read_curves_csv, read_matrix_csv, simpson_rule
from .kernels import BernoulliKernel, GaussianKernel, PolynomialKernel, gram_matrix
from .model_selection import default_grid, grid_search, write_gcv_surface
from .simulation import (
    SCENARIOS,
    SimConfig,
    SweepConfig,
    generate_dataset,
    run_scenario,
    write_report,
)

TOP_KEYS = {"schema_version", "seed", "out_dir", "threads", "variant",
            "fit", "gcv", "experiment", "diagnose", "simulate"}
DATA_KEYS = {"curves", "scalars", "responses", "kernel_z", "lambda_grid", "xi_grid",
             "gcv_dof"}
EXPERIMENT_KEYS = {"scenario", "n", "upsilon1", "upsilon2", "reps", "n_star",
                   "sigma_eps", "grid_points", "lambda_grid", "xi_grid", "gcv_dof"}
DIAGNOSE_KEYS = {"curves", "scalars", "n", "upsilon1", "upsilon2", "grid_points",
                 "k_range"}
SIMULATE_KEYS = {"n", "n_star", "upsilon1", "upsilon2", "sigma_eps", "grid_points"}


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ValidationError(f"config {where}: unknown keys {unknown}")


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ValidationError(f"config {path}: top level must be an object")
    _check_keys(cfg, TOP_KEYS, "top level")
    if cfg.get("schema_version", 1) != 1:
        raise ValidationError("config: unsupported schema_version")
    return cfg


def _section(cfg: dict, name: str, allowed: set) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ValidationError(f"config {name}: must be an object")
    _check_keys(sec, allowed, name)
    return sec


def _parse_grid(spec, name: str) -> np.ndarray:
    if spec is None:
        return default_grid()
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if isinstance(spec, dict):
        _check_keys(spec, {"num", "min", "max"}, name)
        return default_grid(int(spec.get("num", 20)),
                            float(spec.get("min", 1e-6)), float(spec.get("max", 1.0)))
    raise ValidationError(f"config {name}: expected a list or {{num,min,max}} object")


def _parse_kernel(spec) -> object:
    if spec is None:
        return BernoulliKernel()
    if not isinstance(spec, dict) or "name" not in spec:
        raise ValidationError("config kernel_z: expected an object with a 'name'")
    name = spec["name"]
    if name == "bernoulli":
        _check_keys(spec, {"name"}, "kernel_z")
        return BernoulliKernel()
    if name == "gaussian":
        _check_keys(spec, {"name", "bandwidth"}, "kernel_z")
        return GaussianKernel(bandwidth=float(spec.get("bandwidth", 1.0)))
    if name == "polynomial":
        _check_keys(spec, {"name", "degree"}, "kernel_z")
        return PolynomialKernel(degree=int(spec.get("degree", 1)))
    raise ValidationError(f"config kernel_z: unknown kernel {name!r}")


class Settings:
    """Effective settings after merging config and flags."""

    def __init__(self, args, cfg: dict):
        self.command = args.command
        self.seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")
        self.out_dir = args.out or cfg.get("out_dir") or "sflr_out"
        self.threads = args.threads if args.threads is not None else int(cfg.get("threads", 1))
        if self.threads < 1:
            raise ValidationError("threads must be at least 1")
        self.variant = args.variant or cfg.get("variant") or "seminorm"
        self.cfg = cfg

    def meta(self) -> dict:
        # threads and out_dir do not affect results, so they stay out of
        # the hash that identifies the analysis
        effective = dict(self.cfg)
        effective.update({"command": self.command, "seed": self.seed,
                          "variant": self.variant})
        effective.pop("out_dir", None)
        effective.pop("threads", None)
        return {"tool": f"sflr {__version__}", "command": self.command,
                "config_sha256": config_hash(effective), "seed": self.seed}

    def outpath(self, name: str) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, name)


def _load_dataset(sec: dict):
    for key in ("curves", "scalars", "responses"):
        if key not in sec:
            raise ValidationError(f"config: data section needs a '{key}' path")
    curves, rule = read_curves_csv(sec["curves"])
    scalars = read_matrix_csv(sec["scalars"])
    responses = read_matrix_csv(sec["responses"])
    n = curves.shape[0]
    if scalars.shape[0] != n:
        raise ValidationError(
            f"row count mismatch: {sec['curves']} has {n} rows but "
            f"{sec['scalars']} has {scalars.shape[0]}")
    if responses.shape[0] != n:
        raise ValidationError(
            f"row count mismatch: {sec['curves']} has {n} rows but "
            f"{sec['responses']} has {responses.shape[0]}")
    if responses.shape[1] != 1:
        raise ValidationError(f"{sec['responses']}: expected a single column")
    z = scalars[:, 0] if scalars.shape[1] == 1 else scalars
    return curves, rule, z, responses[:, 0]


def _fit_search(settings: Settings, sec: dict):
    curves, rule, z, y = _load_dataset(sec)
    gram = make_gram_set(curves, z, y, kernel_z=_parse_kernel(sec.get("kernel_z")),
                         rule=rule)
    surface = grid_search(gram, _parse_grid(sec.get("lambda_grid"), "lambda_grid"),
                          _parse_grid(sec.get("xi_grid"), "xi_grid"),
                          variant=settings.variant,
                          dof=str(sec.get("gcv_dof", "smoother")))
    return gram, surface


def cmd_fit(settings: Settings) -> int:
    sec = _section(settings.cfg, "fit", DATA_KEYS)
    gram, surface = _fit_search(settings, sec)
    result = fit(gram, surface.best_config)
    meta = settings.meta()

    rows = []
    if isinstance(result, SemiNormFit):
        blocks = (("d", result.d), ("c", result.c), ("l", result.l), ("eta", result.eta))
    else:
        blocks = (("c", result.c), ("eta", result.eta))
    for name, values in blocks:
        rows.extend([name, str(i), fmt(float(v))]
                    for i, v in enumerate(values, start=1))
    write_csv(settings.outpath("coefficients.csv"), ["component", "index", "value"],
              rows, meta)

    fitted_rows = [[str(i + 1), fmt(float(yi)), fmt(float(yh)), fmt(float(yi - yh))]
                   for i, (yi, yh) in enumerate(zip(gram.y, result.fitted))]
    write_csv(settings.outpath("fitted.csv"), ["row", "y", "fitted", "residual"],
              fitted_rows, meta)
    write_gcv_surface(surface, settings.outpath("gcv_surface.csv"), meta)
    write_json(settings.outpath("summary.json"), {
        "command": "fit", "n": gram.n, "variant": settings.variant,
        "lam": surface.best_lam, "xi": surface.best_xi,
        "gcv": float(surface.scores[surface.best_index]),
        "meta": meta,
    })
    return 0


def cmd_gcv(settings: Settings) -> int:
    sec = _section(settings.cfg, "gcv", DATA_KEYS)
    gram, surface = _fit_search(settings, sec)
    meta = settings.meta()
    write_gcv_surface(surface, settings.outpath("gcv_surface.csv"), meta)
    write_json(settings.outpath("summary.json"), {
        "command": "gcv", "n": gram.n, "variant": settings.variant,
        "lam": surface.best_lam, "xi": surface.best_xi,
        "gcv": float(surface.scores[surface.best_index]),
        "failures": len(surface.failures), "meta": meta,
    })
    return 0


def _plot_report(report, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sflr"
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharex=True)
    combos = sorted({(c["upsilon1"], c["upsilon2"]) for c in report.cells})
    for u1, u2 in combos:
        sub = sorted((c for c in report.cells
                      if c["upsilon1"] == u1 and c["upsilon2"] == u2),
                     key=lambda c: c["n"])
        ns = [c["n"] for c in sub]
        label = f"u1={u1:g}, u2={u2:g}"
        for ax, key in zip(axes, ("err_beta_mean", "err_g_mean")):
            vals = np.array([c[key] for c in sub])
            if np.all(~np.isfinite(vals)):
                continue
            ax.loglog(ns, vals, marker="o", label=label)
    axes[0].set_title("functional component")
    axes[1].set_title("scalar component")
    for ax in axes:
        ax.set_xlabel("n")
        ax.grid(True, which="both", alpha=0.3)
        if ax.lines:
            ax.legend(fontsize="small")
    axes[0].set_ylabel("mean squared prediction error")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_experiment(settings: Settings) -> int:
    sec = _section(settings.cfg, "experiment", EXPERIMENT_KEYS)
    lam_grid = sec.get("lambda_grid")
    xi_grid = sec.get("xi_grid")
    sweep = SweepConfig(
        ns=tuple(int(v) for v in sec.get("n", [50, 100, 200])),
        upsilon1s=tuple(float(v) for v in sec.get("upsilon1", [1.1])),
        upsilon2s=tuple(float(v) for v in sec.get("upsilon2", [1.5])),
        scenario=sec.get("scenario", "both_unknown"),
        reps=int(sec.get("reps", 20)),
        seed=settings.seed,
        n_star=int(sec.get("n_star", 1000)),
        sigma_eps=float(sec.get("sigma_eps", 1.0)),
        grid_points=int(sec.get("grid_points", 201)),
        lambda_values=None if lam_grid is None else tuple(_parse_grid(lam_grid, "lambda_grid")),
        xi_values=None if xi_grid is None else tuple(_parse_grid(xi_grid, "xi_grid")),
        gcv_dof=str(sec.get("gcv_dof", "full_map")),
    )
    report = run_scenario(sweep, threads=settings.threads)
    meta = settings.meta()
    write_report(report, settings.outpath(""), meta)
    _plot_report(report, settings.outpath("errors.svg"))
    write_json(settings.outpath("summary.json"), {
        "command": "experiment", "config": report.config,
        "cells": report.cells, "slopes": report.slopes, "meta": meta,
    })
    return 0


def cmd_diagnose(settings: Settings) -> int:
    sec = _section(settings.cfg, "diagnose", DIAGNOSE_KEYS)
    k_range = sec.get("k_range")
    if k_range is not None:
        k_range = (int(k_range[0]), int(k_range[1]))
    if "curves" in sec or "scalars" in sec:
        if not ("curves" in sec and "scalars" in sec):
            raise ValidationError("config diagnose: need both 'curves' and 'scalars'")
        curves, rule = read_curves_csv(sec["curves"])
        z = read_matrix_csv(sec["scalars"])[:, 0]
    else:
        cfg = SimConfig(n=int(sec.get("n", 200)),
                        upsilon1=float(sec.get("upsilon1", 1.1)),
                        upsilon2=float(sec.get("upsilon2", 1.5)),
                        n_star=1, grid_points=int(sec.get("grid_points", 201)))
        data = generate_dataset(cfg, settings.seed)
        curves, rule, z = data.x, data.rule, data.z
    n = curves.shape[0]
    gram = make_gram_set(curves, z, np.zeros(n), rule=rule)
    meta = settings.meta()
    payload = {"command": "diagnose", "n": n, "meta": meta}
    for name, matrix in (("sigma", gram.sigma), ("gz", gram.gram_z)):
        report = empirical_eigendecay(matrix / n, k_range=k_range)
        write_spectrum_csv(report, settings.outpath(f"spectrum_{name}.csv"), meta)
        payload[f"exponent_{name}"] = report.exponent
    write_json(settings.outpath("summary.json"), payload)
    return 0


def cmd_simulate(settings: Settings) -> int:
    sec = _section(settings.cfg, "simulate", SIMULATE_KEYS)
    cfg = SimConfig(n=int(sec.get("n", 100)),
                    upsilon1=float(sec.get("upsilon1", 1.1)),
                    upsilon2=float(sec.get("upsilon2", 1.5)),
                    n_star=int(sec.get("n_star", 1)),
                    sigma_eps=float(sec.get("sigma_eps", 1.0)),
                    grid_points=int(sec.get("grid_points", 201)))
    data = generate_dataset(cfg, settings.seed)
    meta = settings.meta()

    def matrix_rows(arr):
        return [[fmt(float(v)) for v in row] for row in np.atleast_2d(arr)]

    write_csv(settings.outpath("curves.csv"),
              [f"t{j}" for j in range(data.rule.size)], matrix_rows(data.x), meta,
              columns_as_comment=True)
    write_csv(settings.outpath("scalars.csv"), ["z"],
              [[fmt(float(v))] for v in data.z], meta, columns_as_comment=True)
    write_csv(settings.outpath("responses.csv"), ["y"],
              [[fmt(float(v))] for v in data.y], meta, columns_as_comment=True)
    write_csv(settings.outpath("truth.csv"), ["functional", "scalar"],
              [[fmt(float(f)), fmt(float(g))] for f, g in zip(data.f, data.g)], meta,
              columns_as_comment=True)
    write_json(settings.outpath("summary.json"), {
        "command": "simulate", "n": cfg.n, "grid_points": cfg.grid_points,
        "upsilon1": cfg.upsilon1, "upsilon2": cfg.upsilon2,
        "sigma_eps": cfg.sigma_eps, "meta": meta,
    })
    return 0


COMMANDS = {"fit": cmd_fit, "gcv": cmd_gcv, "experiment": cmd_experiment,
            "diagnose": cmd_diagnose, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sflr",
        description="Penalized least-squares fits for semi-functional regression",
    )
    parser.add_argument("--version", action="version", version=f"sflr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    help_text = {
        "fit": "fit one dataset with GCV-selected penalties",
        "gcv": "score the GCV surface without writing fit artifacts",
        "experiment": "run a Monte-Carlo sweep over (n, u1, u2) cells",
        "diagnose": "report empirical eigenvalue decay of the Gram operators",
        "simulate": "write one synthetic dataset",
    }
    for name, text in help_text.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker processes (experiment)")
        p.add_argument("--variant", choices=["kernel", "seminorm"],
                       help="estimator variant")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        settings = Settings(args, cfg)
        return COMMANDS[args.command](settings)
    except ValidationError as exc:
        print(f"sflr: validation error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"sflr: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
