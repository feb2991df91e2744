"""Desk-scale reproduction recipes and their property checks.

Each ``criterion_*`` function runs one check and returns a :class:`Check`
carrying the verdict plus the tables it computed.  ``reproduce(tag, ...)``
runs the checks belonging to a figure tag, writes their tables as CSV, a
``summary.txt`` with one PASS/FAIL line per check and ``manifest.json``.
"""

from __future__ import annotations

import logging
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from . import export
from .fpe import fpe_sweep
from .hilbert import partial_trace
from .master import observables, solve_model, transmission_sweep
from .meanfield import bistable_window, mb_steady_states, mb_sweep
from .models import TWO_PI, SystemParams, critical_photon_number, device_preset, ratio_params
from .phasespace import default_extent, find_modes, photon_distribution, q_function
from .trajectory import Thresholds, ensemble_run, label_states, sse_simulate, switching_stats

__all__ = [
    "Check", "TAGS", "reproduce", "has_interior_minimum", "dip_frequency", "refine_peak",
    "criterion_1", "criterion_2", "criterion_3", "criterion_4", "criterion_5", "criterion_6",
    "criterion_7", "criterion_9", "criterion_10", "criterion_11", "criterion_12",
]

log = logging.getLogger(__name__)

GHZ = TWO_PI * 1e9
MHZ = TWO_PI * 1e6

FIG2_DRIVE_GHZ = 10.6005
MF_GRID_GHZ = (10.56, 10.61, 201)

SWITCH_SEED = 7
SWITCH_T_MAX = 400.0
SWITCH_CUTOFF = 40

ENSEMBLE_SEED = 2024
ENSEMBLE_M = 200

# drive scale ε_d/(2κ) -> Fock cutoff for the 4-level D1 sweeps
D1_SCALES = ((10.0, 20), (30.0, 20), (60.0, 30))
D1_GRID_GHZ = (10.500, 10.520, 201)

D2_LOW_SCALE = 0.1
D2_TEMPERATURE = 0.2
D2_LEVELS = 10
D2_CUTOFF = 6
D2_GRID_GHZ = (10.606, 10.620, 41)


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.criterion}: {self.name}: {self.detail}"

    def record(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "passed": bool(self.passed),
                "detail": self.detail, "summary": self.summary}


def _grid(spec) -> np.ndarray:
    return np.linspace(*spec)


def has_interior_minimum(values) -> bool:
    """True when some interior sample is strictly below both neighbours."""
    v = np.asarray(values, dtype=float)
    return bool(np.any((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))


def dip_frequency(freqs, values) -> float:
    """Location of the most prominent interior minimum, NaN if none."""
    idx, props = find_peaks(-np.asarray(values, dtype=float), prominence=0)
    if len(idx) == 0:
        return math.nan
    return float(freqs[idx[np.argmax(props["prominences"])]])


def refine_peak(freqs, values) -> float:
    """Maximum location refined by a parabola through the top three samples."""
    v = np.asarray(values, dtype=float)
    i = int(np.nanargmax(v))
    if i == 0 or i == len(v) - 1:
        return float(freqs[i])
    y0, y1, y2 = v[i - 1], v[i], v[i + 1]
    h = freqs[i + 1] - freqs[i]
    denom = y0 - 2 * y1 + y2
    return float(freqs[i] + (0.5 * h * (y0 - y2) / denom if denom != 0 else 0.0))


def fig2_params(f_GHz: float = FIG2_DRIVE_GHZ) -> SystemParams:
    return ratio_params(f_d=f_GHz)


def _thresholds(p: SystemParams) -> Thresholds:
    return Thresholds.from_peaks(1.0, critical_photon_number(p.g, p.delta))


# ---------------------------------------------------------------- criteria

def criterion_1() -> Check:
    n = critical_photon_number(0.14, 1.0)
    return Check(1, "N_crit at g/delta = 0.14", 12.5 <= n <= 13.0, f"N_crit = {n:.4f}, need [12.5, 13.0]",
                 summary={"N_crit": n})


def criterion_2(draws: int = 10, seed: int = 2, cutoff: int = 30) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        kappa = rng.uniform(0.2, 2.0)
        det = rng.uniform(-3.0, 3.0)
        eps = rng.uniform(0.2, 2.0) * abs(kappa + 1j * det)
        p = SystemParams(omega_c=det, omega_q=-40.0, g=0.0, eps_d=eps, omega_d=0.0, kappa=kappa,
                         gamma=rng.uniform(0.1, 1.0))
        rho, spec = solve_model("jc", p, cutoff)
        a = observables(rho, spec)["a"]
        ref = eps / (kappa + 1j * det)
        worst = max(worst, abs(a - ref) / abs(ref))
    return Check(2, "empty-cavity steady amplitude", worst <= 1e-8,
                 f"max relative error {worst:.2e} over {draws} draws, need <= 1e-8", summary={"max_rel_err": worst})


def _mf_sweep():
    f = _grid(MF_GRID_GHZ)
    return f, mb_sweep(fig2_params(), f * GHZ)


def criterion_3() -> Check:
    f, sw = _mf_sweep()
    counts = np.array([len(b) for _, b in sw])
    tri = np.flatnonzero(counts == 3)
    contiguous = len(tri) > 0 and bool(np.all(np.diff(tri) == 1))
    win = bistable_window(sw)
    contains = win is not None and win[0] / GHZ <= FIG2_DRIVE_GHZ <= win[1] / GHZ
    at = mb_steady_states(fig2_params())
    middle_unstable = len(at) == 3 and [b.stable for b in at] == [True, False, True]
    ok = contiguous and contains and middle_unstable
    rows = {k: [] for k in ("freq_GHz", "branch", "label", "stable", "n_photon", "zeta", "max_real_eig")}
    for w, branches in sw:
        for i, b in enumerate(branches):
            for k, v in (("freq_GHz", w / GHZ), ("branch", i), ("label", b.label), ("stable", b.stable),
                         ("n_photon", b.state.n_photon), ("zeta", b.state.zeta), ("max_real_eig", b.max_real_eig)):
                rows[k].append(v)
    wtxt = "none" if win is None else f"[{win[0] / GHZ:.5f}, {win[1] / GHZ:.5f}] GHz"
    detail = (f"3-branch window {wtxt}, contiguous={contiguous}, contains {FIG2_DRIVE_GHZ}={contains}, "
              f"stability at {FIG2_DRIVE_GHZ} = {[b.stable for b in at]}")
    summary = {"window_GHz": None if win is None else [win[0] / GHZ, win[1] / GHZ]}
    return Check(3, "mean-field bistable window", ok, detail, {"meanfield_branches": rows}, summary)


def criterion_4(cutoff: int = 60, resolution: int = 101) -> Check:
    p = fig2_params()
    rho, spec = solve_model("jc", p, cutoff)
    rho_c = partial_trace(rho, spec, "cavity")
    q = q_function(rho_c, default_extent(critical_photon_number(p.g, p.delta)), resolution)
    modes = find_modes(q)
    ns = sorted(m.n_photon for m in modes.peaks)
    ok = len(ns) == 2 and 0.2 <= ns[0] <= 3 and 6 <= ns[1] <= 26
    X, Y = np.meshgrid(q.x, q.y)
    tables = {
        "qfunc": {"x": X.ravel(), "y": Y.ravel(), "Q": q.values.ravel()},
        "qfunc_modes": {"x": [m.x for m in modes.peaks], "y": [m.y for m in modes.peaks],
                        "height": [m.height for m in modes.peaks], "n_photon": [m.n_photon for m in modes.peaks]},
        "photon_distribution": {"n": np.arange(cutoff), "P_n": photon_distribution(rho_c)},
    }
    detail = f"{len(ns)} peaks at |alpha|^2 = {[round(v, 3) for v in ns]}, need 2 with dim in [0.2, 3], bright in [6, 26]"
    return Check(4, "Q-function bimodality", ok, detail, tables, {"peak_n_photon": ns})


def criterion_5(points: int = 41, cutoff: int = 50, workers: int = 1) -> Check:
    """Dip in |a| and |sm| but not in n or the excited population (1 + sz)/2."""
    _, sw = _mf_sweep()
    win = bistable_window(sw)
    if win is None:
        return Check(5, "coherent-cancellation dip", False, "no mean-field bistable window found")
    f = np.linspace(win[0], win[1], points)
    r = transmission_sweep(fig2_params(), "jc", f, cutoff=cutoff, workers=workers)
    excited = (1 + r.sigma_z) / 2
    dips = {
        "abs_a": has_interior_minimum(r.amp_a),
        "abs_sm": has_interior_minimum(r.amp_sm),
        "n_photon": has_interior_minimum(r.n_photon),
        "excited_population": has_interior_minimum(excited),
        "abs_sigma_z": has_interior_minimum(np.abs(r.sigma_z)),
    }
    ok = dips["abs_a"] and dips["abs_sm"] and not dips["n_photon"] and not dips["excited_population"]
    cols = r.columns()
    cols["excited_population"] = excited
    fa = dip_frequency(f / GHZ, r.amp_a)
    fsz = dip_frequency(f / GHZ, np.abs(r.sigma_z))
    detail = (f"interior minima: |a| {dips['abs_a']} (at {fa:.5f} GHz), |sm| {dips['abs_sm']}, "
              f"n {dips['n_photon']}, (1+sz)/2 {dips['excited_population']}; "
              f"diagnostic |sz| minimum {dips['abs_sigma_z']} (at {fsz:.5f} GHz)")
    return Check(5, "coherent-cancellation dip", ok, detail, {"window_sweep": cols},
                 {"interior_minima": dips, "window_GHz": [win[0] / GHZ, win[1] / GHZ], "dip_GHz": fa})


def criterion_6(seed: int = SWITCH_SEED, t_max: float = SWITCH_T_MAX, cutoff: int = SWITCH_CUTOFF,
                dt: float = 0.002) -> Check:
    p = fig2_params()
    rec = sse_simulate(p, "jc", seed=seed, t_max=t_max, dt=dt, scheme="weak2", cutoff=cutoff)
    labels = label_states(rec, _thresholds(p))
    st = switching_stats(rec, labels)
    ok = st.n_switches >= 5 and st.simultaneity >= 0.8
    tables = {"trajectory": {"t": rec.times, "n_photon": rec.n_photon, "sigma_z": rec.sigma_z,
                             "sigma_minus": rec.sigma_minus, "a": rec.alpha, "label": labels}}
    summary = {"seed": seed, "n_switches": st.n_switches, "simultaneity": st.simultaneity,
               "mean_dwell": {k: st.mean_dwell(k) for k in st.dwell_times}}
    detail = f"{st.n_switches} switches (need >= 5), simultaneity {st.simultaneity:.3f} (need >= 0.8), seed {seed}"
    return Check(6, "simultaneous switching", ok, detail, tables, summary)


def ensemble_point() -> SystemParams:
    """Reduced point with a fast relaxation gap for the ensemble consistency check."""
    return ratio_params(drive_over_2kappa=1.0, two_kappa_over_gamma=1.0, f_d=10.612)


def criterion_7(M: int = ENSEMBLE_M, seed: int = ENSEMBLE_SEED, cutoff: int = 30, workers: int = 1,
                t_max: float = 10.0, t_burn: float = 6.0) -> Check:
    p = ensemble_point()
    rho, spec = solve_model("jc", p, cutoff)
    n_me = observables(rho, spec)["n"]
    s = ensemble_run(p, "jc", M=M, seed=seed, t_max=t_max, dt=0.002, scheme="weak2", cutoff=cutoff,
                     t_burn=t_burn, workers=workers)
    mean, se = s.steady_mean("n")
    ok = abs(mean - n_me) <= 3 * se
    tables = {"ensemble": {"t": s.times, "mean_n": s.mean_n, "se_n": s.se_n, "mean_sz": s.mean_sz},
              "trajectory_means": {"index": np.arange(M), "n_photon": s.trajectory_means["n"]}}
    detail = f"ensemble <n> = {mean:.5f} +- {se:.5f}, master equation {n_me:.5f}, |diff| = {abs(mean - n_me) / se:.2f} SE (need <= 3)"
    return Check(7, "trajectory vs master equation", ok, detail, tables,
                 {"ensemble_n": mean, "se": se, "me_n": n_me, "M": M, "seed": seed})


def criterion_9() -> Check:
    from .fpe import effective_params, fpe_first_moment

    p = device_preset("D1").replace(omega_d=10.52 * GHZ)
    p0 = p.replace(g=0.0, eps_d=3 * MHZ)
    e0 = effective_params(p0)
    exact = fpe_first_moment(p0) == 2 * p0.eps_d / e0.gamma_c_tilde
    small = p.replace(eps_d=0.1 * p.kappa)
    e = effective_params(small)
    lead = (2 * small.eps_d / e.gamma_c_tilde) * (1 - 4 * small.g**2 / (e.gamma_c_tilde * e.gamma_q_tilde))
    rel = abs(fpe_first_moment(small) - lead) / abs(lead)
    ratio = fpe_first_moment(small.replace(eps_d=2 * small.eps_d)) / fpe_first_moment(small)
    lin = abs(ratio - 2) / 2
    ok = exact and rel <= 0.01 and lin <= 0.01
    detail = f"g=0 exact {exact}; small-drive error vs leading order {rel:.2e}; doubling deviation {lin:.2e} (need <= 1e-2)"
    return Check(9, "first-moment limits", ok, detail, summary={"rel_err": rel, "linearity": lin})


def d1_params(scale: float) -> SystemParams:
    p = device_preset("D1")
    return p.replace(eps_d=scale * 2 * p.kappa)


def criterion_10(scales=D1_SCALES, workers: int = 1) -> Check:
    f = _grid(D1_GRID_GHZ)
    table = {"freq_GHz": f}
    dips = []
    for scale, cutoff in scales:
        r = transmission_sweep(d1_params(scale), "gjc", f * GHZ, levels=4, cutoff=cutoff, workers=workers)
        table[f"abs_a_scale{scale:g}"] = r.amp_a
        table[f"n_photon_scale{scale:g}"] = r.n_photon
        dips.append(dip_frequency(f, r.amp_a))
    ok = all(math.isfinite(d) for d in dips) and all(a > b for a, b in zip(dips[:-1], dips[1:]))
    detail = ", ".join(f"scale {s:g}: dip {d:.4f} GHz" for (s, _), d in zip(scales, dips)) + "; need strictly decreasing"
    return Check(10, "dip shifts down with drive", ok, detail, {"gjc4_scales": table},
                 {"dips_GHz": dips, "scales": [s for s, _ in scales], "cutoffs": [c for _, c in scales]})


def d2_params(scale: float = D2_LOW_SCALE) -> SystemParams:
    p = device_preset("D2", temperature=D2_TEMPERATURE)
    return p.replace(eps_d=scale * 2 * p.kappa)


def criterion_11(cutoff: int = D2_CUTOFF, check_cutoff: int = 8, workers: int = 1) -> Check:
    f = _grid(D2_GRID_GHZ)
    p = d2_params()
    r = transmission_sweep(p, "gjc", f * GHZ, levels=D2_LEVELS, cutoff=cutoff, workers=workers)
    peak = refine_peak(f, r.amp_a)
    i = int(np.nanargmax(r.amp_a))
    rho, spec = solve_model("gjc", p.replace(omega_d=f[i] * GHZ), check_cutoff, D2_LEVELS)
    conv = abs(abs(observables(rho, spec)["a"]) - r.amp_a[i]) / r.amp_a[i]
    ok = abs(peak - 10.614) <= 0.003
    cols = r.columns()
    detail = (f"peak {peak:.5f} GHz (need 10.614 +- 0.003; observed 10.612), "
              f"cutoff {cutoff} vs {check_cutoff} at peak differs by {conv:.1e}")
    return Check(11, "low-power dressed frequency", ok, detail, {"d2_low_power": cols},
                 {"peak_GHz": peak, "cutoff_change": conv})


def criterion_12(points: int = 21, cutoff: int = 30) -> Check:
    f = np.linspace(10.59, 10.61, points) * GHZ
    p = fig2_params().replace(chi=-0.242 * GHZ)
    a = transmission_sweep(p, "jc", f, cutoff=cutoff)
    b = transmission_sweep(p, "gjc", f, levels=2, cutoff=cutoff)
    diff = max(float(np.max(np.abs(getattr(a, k) - getattr(b, k)))) for k in ("amp_a", "n_photon", "sigma_z", "amp_sm"))
    return Check(12, "two-level GJC equals JC", diff <= 1e-9, f"max pointwise difference {diff:.1e}, need <= 1e-9",
                 summary={"max_diff": diff})


# ---------------------------------------------------------------- extra tables

def _fig3b_models(workers: int) -> dict:
    f = _grid(D1_GRID_GHZ)
    scale, cutoff = D1_SCALES[1]
    p = d1_params(scale)
    cols = {"freq_GHz": f}
    cols["gjc4"] = transmission_sweep(p, "gjc", f * GHZ, levels=4, cutoff=cutoff, workers=workers).amp_a
    cols["jc"] = transmission_sweep(p, "jc", f * GHZ, cutoff=cutoff, workers=workers).amp_a
    cols["duffing"] = transmission_sweep(p, "duffing", f * GHZ, cutoff=cutoff, workers=workers).amp_a
    cols["fpe"] = fpe_sweep(p, f * GHZ).amp_a
    cols["fpe_chi20"] = fpe_sweep(p.replace(chi=-20 * MHZ), f * GHZ).amp_a
    return {"fig3b_models": cols}


def _si2_fpe() -> dict:
    f = _grid(D2_GRID_GHZ)
    cols = {"freq_GHz": f}
    for scale in (0.1, 1.0, 3.0):
        cols[f"fpe_scale{scale:g}"] = fpe_sweep(d2_params(scale), f * GHZ).amp_a
    return {"d2_fpe": cols}


def _si5_histogram(seed: int, t_max: float = 200.0, cutoff: int = SWITCH_CUTOFF) -> tuple[dict, dict]:
    p = fig2_params()
    rec = sse_simulate(p, "jc", seed=seed, t_max=t_max, dt=0.002, scheme="weak2", cutoff=cutoff)
    edges = np.arange(0, cutoff + 1) - 0.5
    hist, _ = np.histogram(rec.n_photon, bins=edges, density=True)
    rho, spec = solve_model("jc", p, cutoff)
    P = photon_distribution(partial_trace(rho, spec, "cavity"))
    return ({"photon_histogram": {"n": np.arange(cutoff), "trajectory_density": hist, "P_n_master": P}},
            {"histogram_seed": seed, "histogram_t_max": t_max})


def _si6_tables(cutoff: int = 60) -> dict:
    p0 = fig2_params().replace(chi=-0.242 * GHZ)
    tables = {}
    for f in (10.6082, 10.6091):
        p = p0.replace(omega_d=f * GHZ)
        rho, spec = solve_model("gjc", p, cutoff, 4)
        rho_c = partial_trace(rho, spec, "cavity")
        obs = observables(rho, spec)
        tag = f"{f:.4f}".replace(".", "p")
        tables[f"si6_pn_{tag}"] = {"n": np.arange(cutoff), "P_n": photon_distribution(rho_c)}
        tables[f"si6_pq_{tag}"] = {"level": np.arange(4), "P_q": obs["pops"]}
        q = q_function(rho_c, default_extent(critical_photon_number(p.g, p.delta)), 101)
        X, Y = np.meshgrid(q.x, q.y)
        tables[f"si6_q_{tag}"] = {"x": X.ravel(), "y": Y.ravel(), "Q": q.values.ravel()}
    f = _grid(D1_GRID_GHZ)
    p = d1_params(D1_SCALES[1][0])
    tables["si6_fpe_chi"] = {"freq_GHz": f, "chi150": fpe_sweep(p, f * GHZ).amp_a,
                             "chi20": fpe_sweep(p.replace(chi=-20 * MHZ), f * GHZ).amp_a}
    return tables


# ---------------------------------------------------------------- tags

def _tag_fig1(seed, workers):
    return [criterion_3()], {}


def _tag_fig2(seed, workers):
    return [criterion_1(), criterion_4(), criterion_6(seed=SWITCH_SEED if seed is None else seed)], {}


def _tag_fig3b(seed, workers):
    return [criterion_10(workers=workers)], _fig3b_models(workers)


def _tag_si2(seed, workers):
    return [criterion_11(workers=workers)], _si2_fpe()


def _tag_si4(seed, workers):
    return [criterion_5(workers=workers)], {}


def _tag_si5(seed, workers):
    s = ENSEMBLE_SEED if seed is None else seed
    tables, _ = _si5_histogram(SWITCH_SEED if seed is None else seed)
    return [criterion_7(seed=s, workers=workers)], tables


def _tag_si6(seed, workers):
    return [], _si6_tables()


TAGS = {
    "fig1": _tag_fig1,
    "fig2": _tag_fig2,
    "fig3b": _tag_fig3b,
    "si2": _tag_si2,
    "si4": _tag_si4,
    "si5": _tag_si5,
    "si6": _tag_si6,
}


def reproduce(tag: str, out, seed: int | None = None, workers: int = 1, plot: bool = False) -> tuple[int, dict]:
    """Run the recipe for ``tag`` into ``out``; return (exit status, manifest)."""
    from .cli import EXIT_NUMERIC, EXIT_OK, NUMERICAL_ERRORS

    if tag not in TAGS:
        raise KeyError(f"unknown tag {tag!r}; known: {', '.join(TAGS)}")
    out = Path(out)
    t0 = time.perf_counter()
    manifest = {"command": "reproduce", "tag": tag, "versions": export.versions(),
                "seeds": {"override": seed}, "workers": workers}
    status = EXIT_OK
    try:
        checks, extra = TAGS[tag](seed, workers)
        tables = dict(extra)
        for c in checks:
            tables.update(c.tables)
        files = [export.write_csv(out / f"{name}.csv", cols) for name, cols in tables.items()]
        text = [c.line() for c in checks]
        (out / "summary.txt").write_text("".join(line + "\n" for line in text))
        files.append(out / "summary.txt")
        if plot:
            files += plot_tables(out, tables)
        manifest.update(status="ok", files=[Path(f).name for f in files], checks=[c.record() for c in checks],
                        checks_text=text)
    except NUMERICAL_ERRORS as exc:
        status = EXIT_NUMERIC
        manifest.update(status="error", error={"type": "numerical", "class": type(exc).__name__,
                                               "message": str(exc)})
        log.debug("numerical failure\n%s", traceback.format_exc())
    manifest["wall_time_s"] = time.perf_counter() - t0
    export.write_manifest(out / "manifest.json", manifest)
    return status, manifest


def plot_tables(out: Path, tables: dict) -> list:
    """One PNG per table; matplotlib is imported only here."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    files = []
    for name, cols in tables.items():
        keys = list(cols)
        fig, ax = plt.subplots(figsize=(6, 4))
        if keys[:3] == ["x", "y", "Q"]:
            x = np.unique(cols["x"])
            y = np.unique(cols["y"])
            ax.contourf(x, y, np.asarray(cols["Q"]).reshape(len(y), len(x)), levels=30)
            ax.set_xlabel("x")
            ax.set_ylabel("y")
        else:
            xk = keys[0]
            for k in keys[1:]:
                v = np.asarray(cols[k])
                if v.dtype.kind in "fi" and k not in ("index", "branch", "stable"):
                    style = "." if name == "meanfield_branches" else "-"
                    ax.plot(cols[xk], v, style, label=k, ms=2)
            ax.set_xlabel(xk)
            ax.legend(fontsize=7)
        ax.set_title(name)
        fig.tight_layout()
        path = out / f"{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        files.append(path)
    return files
