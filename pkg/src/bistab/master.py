"""Lindblad master-equation engine: Liouvillian assembly, evolution, steady states, sweeps.

Density matrices are vectorized row-major (``rho.reshape(-1)``), for which
``vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import HilbertSpec, DimensionError, expectation, partial_trace
from .models import SystemParams, build_hamiltonian, collapse_channels, LindbladChannel, thermal_occupation

__all__ = [
    "Liouvillian", "SweepResult", "NumericalError", "SteadyStateError",
    "build_liouvillian", "evolve", "steady_state", "solve_model",
    "observables", "transmission_sweep", "trace_distance",
]

log = logging.getLogger(__name__)

DIRECT_MAX_DIM = 250_000


class NumericalError(RuntimeError):
    pass


class SteadyStateError(NumericalError):
    pass


@dataclass(frozen=True)
class Liouvillian:
    """Superoperator acting on row-major vectorized density matrices."""

    hilbert_dim: int
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return self.hilbert_dim**2

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        d = self.hilbert_dim
        return (self.matrix @ np.asarray(rho).reshape(-1)).reshape(d, d)


def _spre(A):
    return sp.kron(A, sp.identity(A.shape[0], dtype=complex), format="csr")


def _spost(A):
    return sp.kron(sp.identity(A.shape[0], dtype=complex), sp.csr_matrix(A).T, format="csr")


def build_liouvillian(H, channels: list[LindbladChannel]) -> Liouvillian:
    """``ρ ↦ -i[H, ρ] + Σ_k (C_k ρ C_k† - ½{C_k†C_k, ρ})`` with ``C_k = √rate_k op_k``."""
    H = sp.csr_matrix(H, dtype=complex)
    d = H.shape[0]
    L = -1j * (_spre(H) - _spost(H))
    for ch in channels:
        if ch.operator.shape != (d, d):
            raise DimensionError(f"channel {ch.kind} has shape {ch.operator.shape}, H is {d}x{d}")
        if ch.rate == 0:
            continue
        C = ch.jump
        Cd = C.getH().tocsr()
        CdC = (Cd @ C).tocsr()
        L = L + sp.kron(C, C.conj(), format="csr") - 0.5 * (_spre(CdC) + _spost(CdC))
    L = sp.csr_matrix(L)
    L.eliminate_zeros()
    return Liouvillian(d, L)


def trace_distance(rho, sigma) -> float:
    ev = np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma))
    return 0.5 * float(np.sum(np.abs(ev)))


def _hermitize(rho):
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def steady_state(L: Liouvillian, method: str = "auto", tol: float = 1e-12) -> np.ndarray:
    """Unique trace-one null vector of the Liouvillian.

    The bordered system ``[[L, t],[tᵀ, 0]] [x, λ] = [0, 1]`` (``t`` = vectorized
    identity) is nonsingular exactly when the null space is one dimensional.
    ``method`` is ``"direct"`` (sparse LU), ``"iterative"`` (ILU-preconditioned
    GMRES) or ``"auto"`` (direct up to ``DIRECT_MAX_DIM``).
    """
    d = L.hilbert_dim
    n = L.dim
    scale = float(abs(L.matrix).max()) or 1.0
    t = sp.csr_matrix(np.eye(d, dtype=complex).reshape(1, -1))
    A = sp.bmat([[L.matrix / scale, t.T], [t, None]], format="csc")
    rhs = np.zeros(n + 1, dtype=complex)
    rhs[-1] = 1.0
    if method == "auto":
        method = "direct" if n <= DIRECT_MAX_DIM else "iterative"
    if method == "direct":
        try:
            lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SteadyStateError(f"degenerate null space (multiplicity > 1): {exc}") from exc
        x = lu.solve(rhs)
    elif method == "iterative":
        ilu = spla.spilu(A, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve, dtype=complex)
        x, info = spla.gmres(A, rhs, M=M, rtol=tol, restart=200, maxiter=2000)
        if info != 0:
            res = np.linalg.norm(A @ x - rhs)
            raise SteadyStateError(f"GMRES did not converge (info={info}, residual={res:.3g})")
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SteadyStateError("degenerate null space (singular bordered system)")
    lam = x[-1]
    if abs(lam) > 1e-6:
        raise SteadyStateError(f"bordered solve inconsistent, multiplier {abs(lam):.3g}")
    rho = _hermitize(x[:-1].reshape(d, d))
    res = np.linalg.norm(L.matrix @ rho.reshape(-1)) / scale
    if res > 1e-6:
        raise SteadyStateError(f"steady-state residual {res:.3g}")
    return rho


def _dopri_tableau():
    c = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
    a = [
        [],
        [1 / 5],
        [3 / 40, 9 / 40],
        [44 / 45, -56 / 15, 32 / 9],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
    b5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
    b4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
    return c, a, b5, b4


def evolve(
    rho0,
    L: Liouvillian,
    t_eval,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    h0: float | None = None,
    h_min: float = 1e-300,
    max_steps: int = 10_000_000,
) -> list[np.ndarray]:
    """Integrate dρ/dt = L ρ with adaptive Dormand–Prince 5(4).

    Each accepted step is symmetrized and renormalized.  Returns the density
    matrices at ``t_eval`` (``t_eval[0]`` is the initial time).
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if abs(np.trace(rho0) - 1) > 1e-9:
        raise ValueError("initial state must have unit trace")
    t_eval = np.asarray(t_eval, dtype=float)
    d = L.hilbert_dim
    M = L.matrix
    f = lambda y: M @ y
    _, a, b5, b4 = _dopri_tableau()
    err_w = b5 - b4

    y = rho0.reshape(-1).copy()
    t = float(t_eval[0])
    out = [rho0.copy()]
    if M.nnz == 0:
        return [rho0.copy() for _ in t_eval]
    if h0 is None:
        norm = float(abs(M).sum(axis=1).max())
        h0 = 0.01 / norm
    h = h0
    k1 = f(y)
    steps = 0
    for t_target in t_eval[1:]:
        while t < t_target:
            h_try = min(h, t_target - t)
            k = [k1]
            for i in range(1, 7):
                yi = y + h_try * sum(ai * kj for ai, kj in zip(a[i], k) if ai != 0)
                k.append(f(yi))
            y_new = y + h_try * sum(bi * ki for bi, ki in zip(b5, k) if bi != 0)
            err = h_try * sum(ei * ki for ei, ki in zip(err_w, k) if ei != 0)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = float(np.sqrt(np.mean(np.abs(err / sc) ** 2)))
            if en <= 1.0:
                t += h_try
                r = y_new.reshape(d, d)
                y = _hermitize(r).reshape(-1)
                k1 = f(y)
                fac = 5.0 if en == 0 else min(5.0, 0.9 * en ** (-0.2))
            else:
                fac = max(0.2, 0.9 * en ** (-0.2))
            h = h_try * fac
            steps += 1
            if h < h_min or steps > max_steps:
                raise NumericalError(f"step-size underflow at t = {t:.6g} (h = {h:.3g})")
        out.append(y.reshape(d, d).copy())
    return out


@dataclass
class SweepResult:
    """Steady-state observables per drive frequency; absent observables are NaN."""

    frequencies: np.ndarray
    amp_a: np.ndarray
    n_photon: np.ndarray
    sigma_z: np.ndarray
    amp_sm: np.ndarray
    transmon_populations: np.ndarray
    cutoffs: np.ndarray
    errors: list = field(default_factory=list)

    def __len__(self):
        return len(self.frequencies)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {
            "freq_GHz": self.frequencies / (2 * math.pi * 1e9),
            "abs_a": self.amp_a,
            "n_photon": self.n_photon,
            "sigma_z": self.sigma_z,
            "abs_sm": self.amp_sm,
        }
        for j in range(self.transmon_populations.shape[1]):
            cols[f"P_q{j}"] = self.transmon_populations[:, j]
        return cols


def solve_model(model: str, params: SystemParams, cutoff: int, levels: int = 2, method="auto"):
    """Assemble and solve one steady state.  Returns ``(rho, spec)``; spec is None for Duffing."""
    if model == "duffing":
        H = build_hamiltonian("duffing", params, cutoff)
        ch = collapse_channels(params, cutoff)
        return steady_state(build_liouvillian(H, ch), method=method), None
    if model == "jc":
        levels = 2
    spec = HilbertSpec(cutoff, levels)
    H = build_hamiltonian(model, params, spec)
    return steady_state(build_liouvillian(H, collapse_channels(params, spec)), method=method), spec


def observables(rho, spec: HilbertSpec | None) -> dict:
    """Cavity amplitude, photon number and transmon observables of a steady state."""
    if spec is None:
        from .hilbert import annihilation

        a = annihilation(rho.shape[0])
        return {
            "a": expectation(rho, a),
            "n": expectation(rho, a.getH() @ a).real,
            "sz": math.nan, "sm": math.nan + 0j, "pops": np.array([]),
        }
    rho_q = partial_trace(rho, spec, "transmon")
    return {
        "a": expectation(rho, spec.a()),
        "n": expectation(rho, spec.num()).real,
        "sz": expectation(rho, spec.sigma_z()).real,
        "sm": expectation(rho, spec.transmon_lowering()),
        "pops": np.real(np.diag(rho_q)),
    }


def _cutoff_guess(params: SystemParams) -> int:
    n_lin = (params.eps_d / max(params.kappa, 1e-300)) ** 2 + thermal_occupation(params.omega_c, params.temperature)
    return int(min(max(6, 2 * n_lin + 6), 40))


def _solve_point(args):
    model, params, cutoff, levels, method, rel_tol, step, max_cutoff = args
    if cutoff != "auto":
        rho, spec = solve_model(model, params, int(cutoff), levels, method)
        return observables(rho, spec), int(cutoff)
    c = _cutoff_guess(params)
    rho, spec = solve_model(model, params, c, levels, method)
    obs = observables(rho, spec)
    while True:
        c_next = c + step
        if c_next > max_cutoff:
            raise NumericalError(f"cutoff auto-raise exceeded {max_cutoff} (last ⟨n⟩ = {obs['n']:.4g})")
        rho, spec = solve_model(model, params, c_next, levels, method)
        obs_next = observables(rho, spec)
        if abs(obs_next["n"] - obs["n"]) <= rel_tol * max(abs(obs_next["n"]), 1e-12):
            return obs_next, c_next
        c, obs = c_next, obs_next


def transmission_sweep(
    params: SystemParams,
    model: str,
    frequencies,
    levels: int = 2,
    cutoff: int | str = "auto",
    workers: int = 1,
    method: str = "auto",
    rel_tol: float = 0.005,
    cutoff_step: int = 10,
    max_cutoff: int = 200,
) -> SweepResult:
    """Steady-state observables at each drive frequency (rad/s).

    ``cutoff="auto"`` raises the Fock cutoff in steps of ``cutoff_step`` until
    ⟨n⟩ changes by less than ``rel_tol`` (relative) between cutoffs.  Failed
    points are recorded in ``errors`` and filled with NaN.
    """
    freqs = np.asarray(frequencies, dtype=float)
    d = np.diff(freqs)
    if len(freqs) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("frequency grid must be strictly monotone")
    if model == "jc":
        levels = 2
    n_levels = 0 if model == "duffing" else levels
    jobs = [(model, params.replace(omega_d=float(w)), cutoff, levels, method, rel_tol, cutoff_step, max_cutoff)
            for w in freqs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_solve_point_safe, jobs))
    else:
        results = [_solve_point_safe(j) for j in jobs]
    N = len(freqs)
    out = SweepResult(freqs, np.full(N, np.nan), np.full(N, np.nan), np.full(N, np.nan),
                      np.full(N, np.nan), np.full((N, n_levels), np.nan), np.zeros(N, dtype=int))
    for i, (res, err) in enumerate(results):
        if err is not None:
            out.errors.append((float(freqs[i]), err))
            continue
        obs, c = res
        out.amp_a[i] = abs(obs["a"])
        out.n_photon[i] = obs["n"]
        out.sigma_z[i] = obs["sz"]
        out.amp_sm[i] = abs(obs["sm"])
        if n_levels:
            out.transmon_populations[i] = obs["pops"]
        out.cutoffs[i] = c
    return out


def _solve_point_safe(job):
    try:
        return _solve_point(job), None
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
