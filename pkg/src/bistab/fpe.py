"""Closed-form steady cavity amplitude of the effective Fokker–Planck model.

The transmon is treated as a Duffing oscillator with anharmonicity χ and the
cavity is adiabatically eliminated.  The steady first moment is

    ⟨a⟩ = (2/γ̃_c) [ε_d - (ε̃ g / (χ c)) · ₀F₂(c+1, c*; z) / ₀F₂(c, c*; z)],
    z = 2|ε̃/χ|²,  ε̃ = -2igε_d/γ̃_c,  c = γ̃_q/(2iχ).

Two conventions for the effective decay constants are provided:

``"printed"``
    γ̃_c = κ + 2iΔω_c and γ̃_q = γ + 2iΔω_q + 2g²/γ̃_c.
``"consistent"``
    γ̃_c = 2κ + 2iΔω_c and γ̃_q = γ + 2iΔω_q + 4g²/γ̃_c.  This is the choice
    whose weak-drive limit coincides with the master-equation linear response
    ε_d/(κ + iΔω_c + g²/(γ/2 + iΔω_q)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .master import SweepResult
from .models import SystemParams

__all__ = [
    "EffectiveParams", "HypergeometricError", "hyp0f2", "effective_params",
    "fpe_first_moment", "fpe_linear_moment", "fpe_sweep", "CONVENTIONS",
]

CONVENTIONS = ("printed", "consistent")


class HypergeometricError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EffectiveParams:
    gamma_c_tilde: complex
    gamma_q_tilde: complex
    eps_tilde: complex
    c: complex


def _is_pole(x: complex) -> bool:
    return x.imag == 0 and x.real <= 0 and float(x.real).is_integer()


def hyp0f2(a: complex, b: complex, z: complex, rtol: float = 1e-16, max_terms: int = 100_000) -> complex:
    """Generalized hypergeometric ₀F₂(;a, b; z) by direct series summation.

    Terms follow ``t_{k+1} = t_k z / ((k+1)(a+k)(b+k))``.  Summation stops once
    the remaining ratios are monotonically below 1/2 and the geometric tail
    bound ``2|t_{k+1}|`` is below ``rtol·|S|``.
    """
    a, b, z = complex(a), complex(b), complex(z)
    if _is_pole(a) or _is_pole(b):
        raise HypergeometricError(f"Pochhammer pole: a={a}, b={b}")
    if z == 0:
        return 1.0 + 0j
    k_mono = max(0.0, -a.real, -b.real)
    term = 1.0 + 0j
    total = 1.0 + 0j
    comp = 0.0 + 0j  # Kahan compensation
    for k in range(max_terms):
        ratio = z / ((k + 1) * (a + k) * (b + k))
        term *= ratio
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if k > k_mono and abs(ratio) < 0.5 and 2 * abs(term) * abs(ratio) <= rtol * abs(total):
            return total
    raise HypergeometricError(f"0F2 series did not converge in {max_terms} terms (z={z})")


def effective_params(p: SystemParams, convention: str = "printed") -> EffectiveParams:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; use one of {CONVENTIONS}")
    if p.chi == 0:
        raise ZeroDivisionError("c = γ̃_q/(2iχ) undefined for χ = 0")
    if convention == "printed":
        gc = p.kappa + 2j * p.delta_c
        pull = 2.0
    else:
        gc = 2 * p.kappa + 2j * p.delta_c
        pull = 4.0
    if gc == 0:
        raise ZeroDivisionError("γ̃_c = 0")
    gq = p.gamma + 2j * p.delta_q + pull * p.g**2 / gc
    eps = -2j * p.g * p.eps_d / gc
    c = gq / (2j * p.chi)
    return EffectiveParams(complex(gc), complex(gq), complex(eps), complex(c))


def fpe_first_moment(p: SystemParams, convention: str = "printed") -> complex:
    """Steady ⟨a⟩ of the effective Fokker–Planck model."""
    e = effective_params(p, convention)
    if p.g == 0:
        return 2 * p.eps_d / e.gamma_c_tilde
    z = 2 * abs(e.eps_tilde / p.chi) ** 2
    ratio = hyp0f2(e.c + 1, e.c.conjugate(), z) / hyp0f2(e.c, e.c.conjugate(), z)
    return (2 / e.gamma_c_tilde) * (p.eps_d - e.eps_tilde * p.g / (p.chi * e.c) * ratio)


def fpe_linear_moment(p: SystemParams, convention: str = "printed") -> complex:
    """Weak-drive limit of :func:`fpe_first_moment` (both ₀F₂ → 1)."""
    e = effective_params(p, convention)
    return (2 * p.eps_d / e.gamma_c_tilde) * (1 - 4 * p.g**2 / (e.gamma_c_tilde * e.gamma_q_tilde))


def fpe_sweep(p: SystemParams, frequencies, convention: str = "printed") -> SweepResult:
    """|⟨a⟩| over drive frequencies (rad/s); failing points are NaN and logged in ``errors``."""
    freqs = np.asarray(frequencies, dtype=float)
    d = np.diff(freqs)
    if len(freqs) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("frequency grid must be strictly monotone")
    N = len(freqs)
    nan = np.full(N, np.nan)
    out = SweepResult(freqs, nan.copy(), nan.copy(), nan.copy(), nan.copy(), np.zeros((N, 0)),
                      np.zeros(N, dtype=int))
    for i, w in enumerate(freqs):
        try:
            out.amp_a[i] = abs(fpe_first_moment(p.replace(omega_d=float(w)), convention))
        except (HypergeometricError, ZeroDivisionError, OverflowError) as exc:
            out.errors.append((float(w), str(exc)))
    return out
