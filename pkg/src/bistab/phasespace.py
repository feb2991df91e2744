"""Husimi Q function, photon statistics, Bloch vectors and peak detection."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "QGrid", "Peak", "ModeSet", "TruncationWarning", "q_function", "photon_distribution",
    "bloch_vector", "find_modes", "default_extent",
]

log = logging.getLogger(__name__)


class TruncationWarning(UserWarning):
    pass


@dataclass
class QGrid:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # values[iy, ix]

    @property
    def resolution(self) -> int:
        return len(self.x)

    @property
    def x_range(self):
        return (float(self.x[0]), float(self.x[-1]))

    @property
    def y_range(self):
        return (float(self.y[0]), float(self.y[-1]))

    @property
    def cell_area(self) -> float:
        return float((self.x[1] - self.x[0]) * (self.y[1] - self.y[0]))

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)


@dataclass(frozen=True)
class Peak:
    x: float
    y: float
    height: float

    @property
    def n_photon(self) -> float:
        return self.x**2 + self.y**2


@dataclass
class ModeSet:
    peaks: list = field(default_factory=list)
    equal_height: bool = False

    def __len__(self):
        return len(self.peaks)


def default_extent(n_crit: float) -> float:
    return 1.5 * math.sqrt(n_crit)


def q_function(rho_cavity, extent: float | tuple = 5.0, resolution: int = 101, y_extent=None) -> QGrid:
    """Q(α) = ⟨α|ρ|α⟩/π on a square grid ``x, y ∈ [-extent, extent]``.

    ``⟨n|α⟩ = exp(-|α|²/2) αⁿ/√n!`` is evaluated in log space so large cutoffs
    do not overflow.
    """
    rho = np.asarray(rho_cavity)
    N = rho.shape[0]
    if isinstance(extent, tuple):
        x = np.linspace(extent[0], extent[1], resolution)
    else:
        x = np.linspace(-extent, extent, resolution)
    if y_extent is None:
        y = x.copy()
    elif isinstance(y_extent, tuple):
        y = np.linspace(y_extent[0], y_extent[1], resolution)
    else:
        y = np.linspace(-y_extent, y_extent, resolution)
    X, Y = np.meshgrid(x, y)
    alpha = (X + 1j * Y).ravel()
    r2_max = float(np.max(np.abs(alpha) ** 2))
    if r2_max > 0.8 * N:
        warnings.warn(
            f"grid reaches |α|² = {r2_max:.3g} > 0.8·cutoff = {0.8 * N:.3g}; Q unreliable there",
            TruncationWarning, stacklevel=2,
        )
    n = np.arange(N)
    r = np.abs(alpha)
    logr = np.log(np.where(r > 0, r, 1.0))
    logmag = -0.5 * r[:, None] ** 2 + n[None, :] * logr[:, None] - 0.5 * gammaln(n + 1)[None, :]
    coeff = np.exp(logmag) * np.exp(1j * n[None, :] * np.angle(alpha)[:, None])
    coeff[r == 0, 1:] = 0.0
    # ⟨α|ρ|α⟩ = Σ_mn ⟨α|m⟩ ρ_mn ⟨n|α⟩
    q = np.einsum("km,mn,kn->k", coeff.conj(), rho, coeff, optimize=True).real / math.pi
    return QGrid(x, y, np.clip(q, 0.0, None).reshape(X.shape))


def photon_distribution(rho_cavity) -> np.ndarray:
    return np.clip(np.real(np.diag(np.asarray(rho_cavity))), 0.0, None)


def bloch_vector(rho_qubit) -> tuple[float, float, float]:
    rho = np.asarray(rho_qubit)
    if rho.shape != (2, 2):
        raise ValueError(f"Bloch vector needs a 2x2 density matrix, got {rho.shape}")
    sx = 2 * rho[0, 1].real
    sy = -2 * rho[0, 1].imag
    # basis order (|g⟩, |e⟩), σ_z = diag(-1, 1)
    sz = (rho[1, 1] - rho[0, 0]).real
    return float(sx), float(sy), float(sz)


def find_modes(q: QGrid, rel_threshold: float = 0.01, merge_cells: float = 1.0, equal_tol: float = 0.05) -> ModeSet:
    """Local maxima of Q above ``rel_threshold`` of the global maximum.

    Maxima closer than ``merge_cells`` grid spacings are merged.  The two
    dominant peaks are flagged equal when their heights differ by less than
    ``equal_tol`` (relative to the larger).
    """
    v = np.asarray(q.values)
    if v.size == 0:
        raise ValueError("empty Q grid")
    if v.shape[0] < 32 or v.shape[1] < 32:
        raise ValueError("find_modes needs resolution >= 32")
    vmax = v.max()
    pad = np.pad(v, 1, mode="constant", constant_values=-np.inf)
    neigh = np.stack([pad[1 + dy:1 + dy + v.shape[0], 1 + dx:1 + dx + v.shape[1]]
                      for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)])
    is_max = (v >= neigh.max(axis=0)) & (v > rel_threshold * vmax)
    iy, ix = np.nonzero(is_max)
    order = np.argsort(-v[iy, ix])
    kept: list[tuple[int, int]] = []
    for k in order:
        cand = (iy[k], ix[k])
        if all(max(abs(cand[0] - j[0]), abs(cand[1] - j[1])) > merge_cells for j in kept):
            kept.append(cand)
    peaks = [Peak(float(q.x[j[1]]), float(q.y[j[0]]), float(v[j])) for j in kept]
    equal = len(peaks) >= 2 and (peaks[0].height - peaks[1].height) <= equal_tol * peaks[0].height
    return ModeSet(peaks, bool(equal))
