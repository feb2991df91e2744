"""Drive-frame Hamiltonians (GJC, JC, Duffing), Lindblad channels and device presets.

All frequencies and rates are angular (rad/s).  Every Hamiltonian is written in
the frame rotating at the drive frequency, so it is time independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.constants as const
import scipy.sparse as sp

from .hilbert import HilbertSpec, annihilation, ketbra, _clean

__all__ = [
    "TWO_PI", "SystemParams", "DeviceParams", "LindbladChannel", "DEVICES",
    "SingularDetuningError", "transmon_frequency", "thermal_occupation",
    "build_jc", "build_gjc", "build_duffing", "build_hamiltonian", "collapse_channels",
    "critical_photon_number", "kerr_coefficient", "dressed_cavity_frequency",
    "device_preset", "ratio_params",
]

TWO_PI = 2 * math.pi


class SingularDetuningError(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, all angular frequencies in rad/s, temperature in K."""

    omega_c: float
    omega_q: float
    g: float
    chi: float = 0.0
    eps_d: float = 0.0
    omega_d: float = 0.0
    kappa: float = 0.0
    gamma: float = 0.0
    gamma_phi: float = 0.0
    temperature: float = 0.0
    alpha_coeffs: tuple | None = None
    beta_coeffs: tuple | None = None

    def __post_init__(self):
        for name in ("kappa", "gamma", "gamma_phi", "temperature"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def delta(self) -> float:
        """Qubit-cavity detuning |ω_c - ω_q|."""
        return abs(self.omega_c - self.omega_q)

    @property
    def delta_c(self) -> float:
        return self.omega_c - self.omega_d

    @property
    def delta_q(self) -> float:
        return self.omega_q - self.omega_d

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def with_drive_ghz(self, f_d: float) -> "SystemParams":
        return replace(self, omega_d=TWO_PI * f_d * 1e9)


@dataclass(frozen=True)
class DeviceParams:
    """One row of the device table (frequencies in GHz, times in μs)."""

    name: str
    f_c: float
    delta_over_2pi: float
    g_over_2pi: float
    EJ_over_EC: float
    T1: float
    T2: float
    chi_over_2pi: float
    kappa_over_gamma: float

    def __post_init__(self):
        if self.T2 > 2 * self.T1:
            raise ValueError(f"{self.name}: T2 = {self.T2} exceeds 2*T1 = {2 * self.T1}")

    @property
    def gamma(self) -> float:
        return 1e6 / self.T1

    @property
    def gamma_phi(self) -> float:
        return 1e6 / self.T2 - 1e6 / (2 * self.T1)

    def system_params(self, **overrides) -> SystemParams:
        omega_c = TWO_PI * self.f_c * 1e9
        p = SystemParams(
            omega_c=omega_c,
            omega_q=omega_c - TWO_PI * self.delta_over_2pi * 1e9,
            g=TWO_PI * self.g_over_2pi * 1e9,
            chi=TWO_PI * self.chi_over_2pi * 1e9,
            omega_d=omega_c,
            kappa=self.kappa_over_gamma * self.gamma,
            gamma=self.gamma,
            gamma_phi=self.gamma_phi,
        )
        return replace(p, **overrides)


# κ is not tabulated.  D1 sits in the κ ≈ γ regime, D2 in 2κ ≫ γ; the
# defaults below encode those regimes and are overridable everywhere.
DEVICES = {
    "D1": DeviceParams("D1", 10.426, 0.984, 0.313, 314, 2.64, 4.00, -0.150, 1.0),
    "D2": DeviceParams("D2", 10.567, 2.383, 0.335, 165, 2.20, 2.10, -0.242, 6.0),
}


def device_preset(name: str, **overrides) -> SystemParams:
    try:
        dev = DEVICES[name.upper()]
    except KeyError:
        raise KeyError(f"unknown device {name!r}; known: {sorted(DEVICES)}") from None
    return dev.system_params(**overrides)


def ratio_params(
    g_over_delta: float = 0.14,
    drive_over_2kappa: float = 25 / 3,
    two_kappa_over_gamma: float = 12.0,
    kappa: float = TWO_PI * 0.65e6,
    g: float = TWO_PI * 0.335e9,
    f_c: float = 10.567,
    f_d: float = 10.6005,
    gamma_phi: float = 0.0,
    temperature: float = 0.0,
) -> SystemParams:
    """Two-level parameter set specified by rate ratios (frequencies in GHz).

    The defaults are the bistable JC point: g/δ = 0.14, ε_d/(2κ) = 25/3,
    2κ/γ = 12, with the coupling and bare cavity frequency of device D2 and the
    qubit below the cavity.
    """
    delta = g / g_over_delta
    omega_c = TWO_PI * f_c * 1e9
    return SystemParams(
        omega_c=omega_c,
        omega_q=omega_c - delta,
        g=g,
        eps_d=drive_over_2kappa * 2 * kappa,
        omega_d=TWO_PI * f_d * 1e9,
        kappa=kappa,
        gamma=2 * kappa / two_kappa_over_gamma,
        gamma_phi=gamma_phi,
        temperature=temperature,
    )


def transmon_frequency(n, omega_q: float, chi: float):
    """Duffing ladder ``ω_n = ω_q n - χ n(1-n)/2``; ``ω_2 - 2ω_1 = χ``."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("level index must be >= 0")
    out = omega_q * n - chi * n * (1 - n) / 2
    return float(out) if out.ndim == 0 else out


def thermal_occupation(omega: float, temperature: float) -> float:
    """Bose–Einstein occupation n̄(ω) = 1/(exp(ħω/k_BT) - 1)."""
    if temperature <= 0:
        return 0.0
    x = const.hbar * omega / (const.k * temperature)
    return float(1.0 / math.expm1(x))


def _drive(a, eps_d: float) -> sp.csr_matrix:
    ad = a.getH()
    return 1j * eps_d * (ad - a)


def _check_levels(spec: HilbertSpec, levels: int | None = None):
    if levels is not None and spec.transmon_levels != levels:
        raise ValueError(f"model needs transmon_levels == {levels}, got {spec.transmon_levels}")


def build_jc(params: SystemParams, spec: HilbertSpec) -> sp.csr_matrix:
    """``Δω_c a†a + (Δω_q/2)σ_z + g(a†σ- + aσ+) + iε_d(a† - a)``."""
    _check_levels(spec, 2)
    a = spec.a()
    sm = spec.transmon_op(ketbra(2, 0, 1))
    sz = spec.transmon_op(sp.diags([-1.0, 1.0]).astype(complex))
    H = (
        params.delta_c * (a.getH() @ a)
        + 0.5 * params.delta_q * sz
        + params.g * (a.getH() @ sm + a @ sm.getH())
        + _drive(a, params.eps_d)
    )
    return _clean(H)


def build_gjc(params: SystemParams, spec: HilbertSpec) -> sp.csr_matrix:
    """Multilevel transmon coupled to the cavity in the RWA.

    The transmon energies are shifted by ``-Δω_q/2`` so that two levels reproduce
    the JC Hamiltonian entry for entry.
    """
    L = spec.transmon_levels
    n = np.arange(L)
    levels = transmon_frequency(n, params.omega_q, params.chi) - n * params.omega_d
    levels = np.atleast_1d(levels) - 0.5 * params.delta_q
    a = spec.a()
    ladder = sum(np.sqrt(m + 1) * ketbra(L, m, m + 1) for m in range(L - 1))
    b = spec.transmon_op(ladder)
    H = (
        spec.transmon_op(sp.diags(levels).astype(complex))
        + params.delta_c * (a.getH() @ a)
        + params.g * (a.getH() @ b + a @ b.getH())
        + _drive(a, params.eps_d)
    )
    return _clean(H)


def kerr_coefficient(g: float, delta: float) -> float:
    """Magnitude ``g⁴/δ³`` of the dispersive Kerr term."""
    if delta == 0:
        raise SingularDetuningError("detuning δ = 0: dispersive expansion is singular")
    return g**4 / delta**3


def build_duffing(params: SystemParams, spec: HilbertSpec | int) -> sp.csr_matrix:
    """Cavity-only dressed Duffing Hamiltonian with the qubit frozen in its ground state."""
    cutoff = spec if isinstance(spec, int) else spec.cavity_cutoff
    delta = params.delta
    K = kerr_coefficient(params.g, delta)
    a = annihilation(cutoff)
    ad = a.getH()
    linear = params.delta_c + K + params.g**2 / delta - 2 * K
    H = linear * (ad @ a) - K * (ad @ ad @ a @ a) + _drive(a, params.eps_d)
    return _clean(H)


def build_hamiltonian(model: str, params: SystemParams, spec: HilbertSpec) -> sp.csr_matrix:
    if model == "jc":
        return build_jc(params, spec)
    if model == "gjc":
        return build_gjc(params, spec)
    if model == "duffing":
        return build_duffing(params, spec)
    raise ValueError(f"unknown model {model!r}")


@dataclass(frozen=True)
class LindbladChannel:
    """Dissipator ``D[√rate · operator]``."""

    operator: sp.csr_matrix = field(repr=False)
    rate: float
    kind: str

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"negative rate {self.rate} for {self.kind}")

    @property
    def jump(self) -> sp.csr_matrix:
        return _clean(math.sqrt(self.rate) * self.operator)


def collapse_channels(
    params: SystemParams, spec: HilbertSpec | int, cavity_only: bool = False
) -> list[LindbladChannel]:
    """Cavity loss/thermal, transmon relaxation and dephasing channels.

    Relaxation uses ``Σ_j α_j |j⟩⟨j+1|`` and dephasing ``Σ_j β_j |j⟩⟨j|``.
    Unless overridden in ``params``, ``α_j = √(j+1)`` and ``β_j = j``.
    ``cavity_only`` (or an integer ``spec``) gives the bare-cavity channels used
    by the Duffing model.
    """
    nbar = thermal_occupation(params.omega_c, params.temperature)
    if isinstance(spec, int) or cavity_only:
        cutoff = spec if isinstance(spec, int) else spec.cavity_cutoff
        a = annihilation(cutoff)
    else:
        a = spec.a()
    out = [LindbladChannel(a, 2 * params.kappa * (nbar + 1), "cavity-loss")]
    if nbar > 0:
        out.append(LindbladChannel(_clean(a.getH()), 2 * params.kappa * nbar, "cavity-thermal"))
    if isinstance(spec, int) or cavity_only:
        return out

    L = spec.transmon_levels
    alpha = np.sqrt(np.arange(1, L)) if params.alpha_coeffs is None else np.asarray(params.alpha_coeffs)
    beta = np.arange(L, dtype=float) if params.beta_coeffs is None else np.asarray(params.beta_coeffs)
    if len(alpha) < L - 1 or len(beta) < L:
        raise ValueError("alpha_coeffs needs L-1 entries and beta_coeffs L entries")
    relax = sum(alpha[j] * ketbra(L, j, j + 1) for j in range(L - 1))
    dephase = sp.diags(beta[:L].astype(complex))
    out.append(LindbladChannel(spec.transmon_op(relax), params.gamma, "transmon-relax"))
    out.append(LindbladChannel(spec.transmon_op(dephase), params.gamma_phi, "transmon-dephase"))
    return out


def critical_photon_number(g: float, delta: float) -> float:
    """``N_crit = δ²/(4g²)``."""
    if g == 0:
        raise ZeroDivisionError("N_crit undefined for g = 0")
    return delta**2 / (4 * g**2)


def dressed_cavity_frequency(params: SystemParams) -> float:
    """Low-power cavity frequency with the qubit in its ground state, ``ω_c + g²/δ`` (sign-aware)."""
    return params.omega_c + params.g**2 / (params.omega_c - params.omega_q)
