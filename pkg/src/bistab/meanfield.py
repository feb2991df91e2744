"""Maxwell–Bloch mean-field dynamics of the driven JC oscillator.

Steady states are located through the scalar self-consistency for the
intracavity photon number x = |α|², which makes the branch count explicit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .models import SystemParams, critical_photon_number

__all__ = [
    "MBState", "BranchPoint", "RootScanError", "mb_rhs", "mb_jacobian",
    "mb_steady_states", "mb_sweep", "integrate_mb", "bistable_window",
]

log = logging.getLogger(__name__)


class RootScanError(RuntimeError):
    pass


@dataclass(frozen=True)
class MBState:
    alpha: complex
    beta: complex
    zeta: float

    def to_real(self) -> np.ndarray:
        return np.array([self.alpha.real, self.alpha.imag, self.beta.real, self.beta.imag, self.zeta])

    @classmethod
    def from_real(cls, y) -> "MBState":
        return cls(complex(y[0], y[1]), complex(y[2], y[3]), float(y[4]))

    @property
    def n_photon(self) -> float:
        return abs(self.alpha) ** 2


@dataclass(frozen=True)
class BranchPoint:
    state: MBState
    stable: bool
    drive_frequency: float
    label: str = ""
    max_real_eig: float = float("nan")


def _coherence_rate(p: SystemParams) -> float:
    # Matches the master-equation dephasing channel √γ_φ Σ_j j|j⟩⟨j|.
    return 0.5 * p.gamma + 0.5 * p.gamma_phi


def mb_rhs(state: MBState, p: SystemParams) -> MBState:
    """Time derivative of (α, β, ζ) under factorized JC dynamics."""
    a, b, z = state.alpha, state.beta, state.zeta
    G = _coherence_rate(p)
    da = -(p.kappa + 1j * p.delta_c) * a - 1j * p.g * b + p.eps_d
    db = -(G + 1j * p.delta_q) * b + 1j * p.g * a * z
    dz = -p.gamma * (z + 1) + 2j * p.g * (np.conj(a) * b - a * np.conj(b))
    return MBState(complex(da), complex(db), float(np.real(dz)))


def _rhs_real(t, y, p):
    return mb_rhs(MBState.from_real(y), p).to_real()


def mb_jacobian(state: MBState, p: SystemParams) -> np.ndarray:
    """Exact 5×5 Jacobian in (Re α, Im α, Re β, Im β, ζ)."""
    ar, ai, br, bi, z = state.to_real()
    k, dc, dq, g, G, gm = p.kappa, p.delta_c, p.delta_q, p.g, _coherence_rate(p), p.gamma
    # dζ/dt = -γ(ζ+1) - 4g (ar bi - ai br)   [= 2ig(α*β - αβ*)]
    return np.array([
        [-k, dc, 0, g, 0],
        [-dc, -k, -g, 0, 0],
        [0, -g * z, -G, dq, -g * ai],
        [g * z, 0, -dq, -G, g * ar],
        [-4 * g * bi, 4 * g * br, 4 * g * ai, -4 * g * ar, -gm],
    ], dtype=float)


def _zeta_scale(p: SystemParams) -> float:
    G = _coherence_rate(p)
    return 4 * p.g**2 * G / (p.gamma * (G**2 + p.delta_q**2))


def _denominator(x, p: SystemParams):
    G = _coherence_rate(p)
    zeta = -1.0 / (1.0 + _zeta_scale(p) * x)
    return p.kappa + 1j * p.delta_c - p.g**2 * zeta / (G + 1j * p.delta_q), zeta


def _residual(x, p):
    D, _ = _denominator(x, p)
    return x * abs(D) ** 2 - p.eps_d**2


def _state_from_x(x: float, p: SystemParams) -> MBState:
    D, zeta = _denominator(x, p)
    alpha = p.eps_d / D
    beta = 1j * p.g * zeta * alpha / (_coherence_rate(p) + 1j * p.delta_q)
    return MBState(complex(alpha), complex(beta), float(zeta))


def mb_steady_states(p: SystemParams, n_scan: int = 1000, x_max: float | None = None) -> list[BranchPoint]:
    """All mean-field fixed points, sorted by photon number, with stability flags.

    ``x = |α|²`` is scanned on a log grid and sign changes of the residual are
    refined with Brent's method.  Since Re(denominator) ≥ κ, every root obeys
    ``x ≤ (ε_d/κ)²``, which is used as the default upper scan limit.
    """
    if p.gamma <= 0:
        raise ValueError("mean-field steady states need gamma > 0")
    if p.eps_d == 0:
        xs = [0.0]
    else:
        if x_max is None:
            x_max = (p.eps_d / p.kappa) ** 2 * (1 + 1e-9) if p.kappa > 0 else 10 * critical_photon_number(p.g, p.delta)
        grid = np.concatenate([[0.0], np.logspace(np.log10(x_max) - 14, np.log10(x_max), n_scan)])
        f = np.array([_residual(x, p) for x in grid])
        xs = []
        for i in np.flatnonzero(np.sign(f[:-1]) != np.sign(f[1:])):
            if f[i + 1] == 0:
                xs.append(grid[i + 1])
                continue
            xs.append(brentq(_residual, grid[i], grid[i + 1], xtol=1e-300, rtol=1e-14, args=(p,)))
        if not xs:
            raise RootScanError(
                f"no sign change on [0, {x_max:.3g}]: F(0)={f[0]:.3g}, F(x_max)={f[-1]:.3g}"
            )
    out = []
    labels = {1: ["single"], 3: ["dim", "unstable", "bright"]}.get(len(xs), [f"root{i}" for i in range(len(xs))])
    for x, lab in zip(sorted(xs), labels):
        st = _state_from_x(x, p)
        lam = np.linalg.eigvals(mb_jacobian(st, p)).real.max()
        out.append(BranchPoint(st, bool(lam < 0), p.omega_d, lab, float(lam)))
    return out


def mb_sweep(p: SystemParams, frequencies, **kw) -> list[tuple[float, list[BranchPoint]]]:
    """Steady-state branches at each drive frequency (rad/s, monotone grid)."""
    freqs = np.asarray(frequencies, dtype=float)
    d = np.diff(freqs)
    if len(freqs) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("frequency grid must be strictly monotone")
    return [(float(w), mb_steady_states(p.replace(omega_d=float(w)), **kw)) for w in freqs]


def bistable_window(sweep) -> tuple[float, float] | None:
    """(first, last) frequency with three branches, or None."""
    tri = [w for w, br in sweep if len(br) == 3]
    return (min(tri), max(tri)) if tri else None


def integrate_mb(state: MBState, p: SystemParams, t_max: float, rtol=1e-9, atol=1e-12) -> MBState:
    sol = solve_ivp(_rhs_real, (0.0, t_max), state.to_real(), args=(p,), method="LSODA", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return MBState.from_real(sol.y[:, -1])
