"""Command line entry point: ``bistab <command> --config <path> [--out DIR] [--seed N] [--workers N]``.

Exit status 0 on success, 2 for configuration errors, 3 for numerical failures.
Every run writes ``manifest.json`` next to its CSV tables.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import export
from .config import ConfigError, RunConfig, parse_config, resolve_params
from .fpe import HypergeometricError, fpe_sweep
from .hilbert import partial_trace
from .master import NumericalError, observables, solve_model, transmission_sweep
from .meanfield import RootScanError, bistable_window, mb_sweep
from .models import TWO_PI, SingularDetuningError, critical_photon_number
from .phasespace import default_extent, find_modes, photon_distribution, q_function
from .trajectory import StepSizeError, Thresholds, ensemble_run, label_states, sse_simulate, switching_stats

__all__ = ["main", "run", "COMMANDS", "NUMERICAL_ERRORS", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC"]

log = logging.getLogger("bistab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

NUMERICAL_ERRORS = (
    NumericalError, StepSizeError, RootScanError, HypergeometricError, SingularDetuningError,
    ArithmeticError, np.linalg.LinAlgError,
)

GHZ = TWO_PI * 1e9


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _cutoff(cfg: RunConfig):
    return cfg.cavity_cutoff


def _fixed_cutoff(cfg: RunConfig, p) -> int:
    """Single-point commands need one cutoff; ``auto`` uses 2·max(N_crit, (ε/κ)²) + 20, capped at 80."""
    if cfg.cavity_cutoff != "auto":
        return int(cfg.cavity_cutoff)
    n_lin = (p.eps_d / p.kappa) ** 2 if p.kappa > 0 else 0.0
    try:
        n_c = critical_photon_number(p.g, p.delta)
    except ZeroDivisionError:
        n_c = 0.0
    return int(min(80, 2 * min(max(n_c, 1.0), n_lin) + 20))


def _require_drive(cfg: RunConfig) -> float:
    if cfg.drive_GHz is None and cfg.preset != "ratios":
        raise ConfigError("run.drive_GHz is required for this command")
    return cfg.drive_GHz if cfg.drive_GHz is not None else 10.6005


def _sim_model(cfg: RunConfig) -> str:
    if cfg.model not in ("jc", "gjc", "duffing"):
        raise ConfigError(f"run.model = {cfg.model} is not a master-equation model (use jc, gjc or duffing)")
    return cfg.model


# ---------------------------------------------------------------- commands

def cmd_meanfield(cfg: RunConfig, out: Path, workers: int) -> dict:
    p = resolve_params(cfg)
    f = cfg.frequencies_GHz()
    sw = mb_sweep(p, f * GHZ)
    rows = {k: [] for k in ("freq_GHz", "branch", "label", "stable", "n_photon", "alpha", "beta", "zeta",
                            "max_real_eig")}
    for w, branches in sw:
        for i, b in enumerate(branches):
            rows["freq_GHz"].append(w / GHZ)
            rows["branch"].append(i)
            rows["label"].append(b.label)
            rows["stable"].append(b.stable)
            rows["n_photon"].append(b.state.n_photon)
            rows["alpha"].append(b.state.alpha)
            rows["beta"].append(b.state.beta)
            rows["zeta"].append(b.state.zeta)
            rows["max_real_eig"].append(b.max_real_eig)
    files = [export.write_csv(out / "meanfield_branches.csv", rows)]
    win = bistable_window(sw)
    summary = {"bistable_window_GHz": None if win is None else [win[0] / GHZ, win[1] / GHZ]}
    return {"files": files, "summary": summary}


def cmd_steady(cfg: RunConfig, out: Path, workers: int) -> dict:
    model = _sim_model(cfg)
    p = resolve_params(cfg, _require_drive(cfg))
    cutoff = _fixed_cutoff(cfg, p)
    rho, spec = solve_model(model, p, cutoff, cfg.transmon_levels)
    obs = observables(rho, spec)
    rho_c = rho if spec is None else partial_trace(rho, spec, "cavity")
    files = [
        export.write_csv(out / "steady_observables.csv", {
            "freq_GHz": [p.omega_d / GHZ], "abs_a": [abs(obs["a"])], "a": [obs["a"]],
            "n_photon": [obs["n"]], "sigma_z": [obs["sz"]], "abs_sm": [abs(obs["sm"])],
        }),
        export.write_csv(out / "photon_distribution.csv", {
            "n": np.arange(rho_c.shape[0]), "P_n": photon_distribution(rho_c)}),
    ]
    if len(obs["pops"]):
        files.append(export.write_csv(out / "transmon_populations.csv", {
            "level": np.arange(len(obs["pops"])), "P_q": obs["pops"]}))
    return {"files": files, "summary": {"n_photon": obs["n"], "abs_a": abs(obs["a"])}, "cutoff": cutoff}


def cmd_sweep(cfg: RunConfig, out: Path, workers: int) -> dict:
    f = cfg.frequencies_GHz()
    p = resolve_params(cfg)
    if cfg.model == "fpe":
        r = fpe_sweep(p, f * GHZ, cfg.fpe_convention)
        cols = {"freq_GHz": f, "abs_a": r.amp_a}
        cut = None
    else:
        model = _sim_model(cfg)
        r = transmission_sweep(p, model, f * GHZ, levels=cfg.transmon_levels, cutoff=cfg.cavity_cutoff,
                               workers=workers)
        cols = r.columns()
        cols["cutoff"] = r.cutoffs
        cut = [int(c) for c in r.cutoffs]
    if r.errors and len(r.errors) == len(f):
        raise NumericalError(f"every sweep point failed; first: {r.errors[0][1]}")
    files = [export.write_csv(out / "sweep.csv", cols)]
    return {"files": files, "summary": {"failed_points": [[w / GHZ, msg] for w, msg in r.errors]},
            "cutoff": cut}


def cmd_fpe(cfg: RunConfig, out: Path, workers: int) -> dict:
    f = cfg.frequencies_GHz()
    p = resolve_params(cfg)
    r = fpe_sweep(p, f * GHZ, cfg.fpe_convention)
    if r.errors and len(r.errors) == len(f):
        raise NumericalError(f"every FPE point failed; first: {r.errors[0][1]}")
    files = [export.write_csv(out / "fpe.csv", {"freq_GHz": f, "abs_a": r.amp_a})]
    return {"files": files, "summary": {"convention": cfg.fpe_convention,
                                        "failed_points": [[w / GHZ, m] for w, m in r.errors]}}


def cmd_traj(cfg: RunConfig, out: Path, workers: int) -> dict:
    model = _sim_model(cfg)
    p = resolve_params(cfg, _require_drive(cfg))
    cutoff = _fixed_cutoff(cfg, p)
    if cfg.M == 1:
        rec = sse_simulate(p, model, seed=cfg.seed, t_max=cfg.t_max, dt=cfg.dt, scheme=cfg.scheme,
                           cutoff=cutoff, levels=cfg.transmon_levels, record_every=cfg.record_every)
        summary = {}
        cols = {"t": rec.times, "n_photon": rec.n_photon, "sigma_z": rec.sigma_z,
                "sigma_minus": rec.sigma_minus, "a": rec.alpha}
        if model != "duffing":
            labels = label_states(rec, _thresholds(p))
            st = switching_stats(rec, labels)
            cols["label"] = labels
            summary = {"n_switches": st.n_switches, "simultaneity": st.simultaneity,
                       "mean_dwell": {k: st.mean_dwell(k) for k in st.dwell_times},
                       "insufficient_statistics": st.insufficient_statistics}
        files = [export.write_csv(out / "trajectory.csv", cols)]
        return {"files": files, "summary": summary, "cutoff": cutoff, "seeds": {"trajectory": cfg.seed}}
    s = ensemble_run(p, model, M=cfg.M, seed=cfg.seed, t_max=cfg.t_max, dt=cfg.dt, scheme=cfg.scheme,
                     cutoff=cutoff, levels=cfg.transmon_levels, record_every=cfg.record_every,
                     t_burn=cfg.t_burn, workers=workers)
    files = [
        export.write_csv(out / "ensemble.csv", {
            "t": s.times, "mean_n": s.mean_n, "se_n": s.se_n, "mean_sz": s.mean_sz, "se_sz": s.se_sz,
            "abs_mean_a": s.abs_mean_alpha, "mean_abs_a": s.mean_abs_alpha}),
        export.write_csv(out / "trajectory_means.csv", {
            "index": np.arange(s.M), "n_photon": s.trajectory_means["n"], "sigma_z": s.trajectory_means["sz"],
            "a": np.array(s.trajectory_means["a"])}),
    ]
    mean, se = s.steady_mean("n")
    return {"files": files, "summary": {"steady_n": mean, "steady_n_se": se}, "cutoff": cutoff,
            "seeds": {"base": cfg.seed, "scheme": "SeedSequence(base, spawn_key=(i,))", "M": cfg.M}}


def _thresholds(p) -> Thresholds:
    try:
        n_c = critical_photon_number(p.g, p.delta)
    except ZeroDivisionError:
        return Thresholds()
    # dim ≈ 1 photon, bright ≈ N_crit: boundary at their geometric mean
    return Thresholds.from_peaks(1.0, n_c)


def cmd_qfunc(cfg: RunConfig, out: Path, workers: int) -> dict:
    model = _sim_model(cfg)
    p = resolve_params(cfg, _require_drive(cfg))
    cutoff = _fixed_cutoff(cfg, p)
    rho, spec = solve_model(model, p, cutoff, cfg.transmon_levels)
    rho_c = rho if spec is None else partial_trace(rho, spec, "cavity")
    if cfg.q_extent == "auto":
        try:
            extent = default_extent(critical_photon_number(p.g, p.delta))
        except ZeroDivisionError:
            extent = 5.0
        # grid corners sit at √2·extent; keep them inside 0.8·cutoff
        extent = min(extent, math.sqrt(0.4 * cutoff))
    else:
        extent = cfg.q_extent
    q = q_function(rho_c, extent, cfg.q_resolution)
    X, Y = np.meshgrid(q.x, q.y)
    modes = find_modes(q)
    files = [
        export.write_csv(out / "qfunc.csv", {"x": X.ravel(), "y": Y.ravel(), "Q": q.values.ravel()}),
        export.write_csv(out / "qfunc_modes.csv", {
            "x": [m.x for m in modes.peaks], "y": [m.y for m in modes.peaks],
            "height": [m.height for m in modes.peaks], "n_photon": [m.n_photon for m in modes.peaks]}),
    ]
    return {"files": files, "summary": {"n_peaks": len(modes), "equal_height": modes.equal_height},
            "cutoff": cutoff}


COMMANDS = {
    "meanfield": cmd_meanfield,
    "steady": cmd_steady,
    "sweep": cmd_sweep,
    "traj": cmd_traj,
    "qfunc": cmd_qfunc,
    "fpe": cmd_fpe,
}


# ---------------------------------------------------------------- orchestration

def run(command: str, cfg: RunConfig, out: Path | str | None = None, workers: int | None = None,
        extra: dict | None = None) -> tuple[int, dict]:
    """Execute one command, write its tables and ``manifest.json``; return (exit status, manifest)."""
    out = Path(out if out is not None else cfg.output_dir)
    workers = workers or default_workers()
    t0 = time.perf_counter()
    manifest = {
        "command": command,
        "config": cfg.to_text(),
        "versions": export.versions(),
        "seeds": {"trajectory": cfg.seed},
        "workers": workers,
    }
    if extra:
        manifest.update(extra)
    status = EXIT_OK
    try:
        res = COMMANDS[command](cfg, out, workers)
        manifest["status"] = "ok"
        manifest["files"] = [Path(f).name for f in res["files"]]
        manifest["summary"] = res.get("summary", {})
        manifest["cutoff"] = res.get("cutoff", cfg.cavity_cutoff)
        if "seeds" in res:
            manifest["seeds"] = res["seeds"]
    except ConfigError as exc:
        status = EXIT_CONFIG
        manifest.update(status="error", error={"type": "config", "class": type(exc).__name__, "message": str(exc)})
    except NUMERICAL_ERRORS as exc:
        status = EXIT_NUMERIC
        manifest.update(status="error", error={"type": "numerical", "class": type(exc).__name__,
                                               "message": str(exc)})
        log.debug("numerical failure\n%s", traceback.format_exc())
    manifest["wall_time_s"] = time.perf_counter() - t0
    export.write_manifest(out / "manifest.json", manifest)
    return status, manifest


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bistab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, help="trajectory seed (overrides [trajectory] seed)")
    common.add_argument("--workers", type=int, help="worker processes (default: available cores)")
    common.add_argument("-v", "--verbose", action="store_true")
    for name in COMMANDS:
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--config", required=True)
    r = sub.add_parser("reproduce", parents=[common])
    r.add_argument("tag")
    r.add_argument("--config", help="optional; only [output] and [trajectory] seed are read")
    r.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    return ap


def _load(path: str) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args.config) if args.config else None
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "reproduce":
        from .recipes import TAGS, reproduce

        if args.tag not in TAGS:
            print(f"config error: unknown tag {args.tag!r}; known: {', '.join(TAGS)}", file=sys.stderr)
            return EXIT_CONFIG
        out = Path(args.out or (cfg.output_dir if cfg else "out")) / args.tag
        seed = args.seed if args.seed is not None else (cfg.seed if cfg else None)
        status, manifest = reproduce(args.tag, out, seed=seed, workers=args.workers or default_workers(),
                                     plot=args.plot)
        for line in manifest.get("checks_text", []):
            print(line)
    else:
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.out:
            cfg = cfg.replace(output_dir=args.out)
        status, manifest = run(args.command, cfg, cfg.output_dir, args.workers)
    if status != EXIT_OK:
        err = manifest.get("error", {})
        print(f"{err.get('type', 'error')} error: {err.get('message', '')}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
