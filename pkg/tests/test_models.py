import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bistab.hilbert import HilbertSpec, is_hermitian
from bistab.models import (
    TWO_PI, DeviceParams, SingularDetuningError, SystemParams, build_duffing, build_gjc, build_hamiltonian,
    build_jc, collapse_channels, critical_photon_number, device_preset, kerr_coefficient, ratio_params,
    thermal_occupation, transmon_frequency,
)

GHZ = TWO_PI * 1e9
MHZ = TWO_PI * 1e6


def params(**kw):
    base = dict(omega_c=10.0 * GHZ, omega_q=8.0 * GHZ, g=0.2 * GHZ, chi=-0.2 * GHZ, eps_d=3 * MHZ,
                omega_d=10.05 * GHZ, kappa=1 * MHZ, gamma=0.5 * MHZ, gamma_phi=0.1 * MHZ)
    base.update(kw)
    return SystemParams(**base)


def test_transmon_frequency():
    wq, chi = 7.0, -0.3
    assert transmon_frequency(0, wq, chi) == 0
    assert transmon_frequency(1, wq, chi) == wq
    assert transmon_frequency(2, wq, chi) - 2 * transmon_frequency(1, wq, chi) == pytest.approx(chi)


def test_jc_uncoupled_diagonal():
    p = params(g=0.0, eps_d=0.0)
    H = build_jc(p, HilbertSpec(6, 2)).toarray()
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    p = params(g=0.0, eps_d=0.0, omega_d=7.5 * GHZ)
    H = build_jc(p, HilbertSpec(6, 2)).toarray()
    assert np.min(np.diag(H).real) == pytest.approx(-(p.omega_q - p.omega_d) / 2)


def test_jc_hermitian_and_excitation_conserving():
    spec = HilbertSpec(6, 2)
    assert is_hermitian(build_jc(params(), spec), tol=1e-12 * GHZ)
    H = build_jc(params(eps_d=0.0), spec).toarray()
    N = (spec.num() + spec.projector(1)).toarray()
    assert np.abs(H @ N - N @ H).max() < 1e-12 * np.abs(H).max()


def test_jc_requires_two_levels():
    with pytest.raises(ValueError):
        build_jc(params(), HilbertSpec(5, 3))


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.01, 0.5), st.floats(0, 20), st.floats(9.5, 10.5))
def test_gjc_two_levels_equals_jc(chi, g, eps, fd):
    p = params(chi=chi * GHZ, g=g * GHZ, eps_d=eps * MHZ, omega_d=fd * GHZ)
    spec = HilbertSpec(7, 2)
    assert np.array_equal(build_gjc(p, spec).toarray(), build_jc(p, spec).toarray())


def test_gjc_coupling_elements():
    p = params()
    spec = HilbertSpec(6, 4)
    H = build_gjc(p, spec).toarray()
    assert H.shape == (24, 24)
    assert is_hermitian(H, tol=1e-12 * GHZ)
    idx = lambda n, j: n * 4 + j
    for n in range(5):
        assert H[idx(n, 1), idx(n + 1, 0)] == pytest.approx(p.g * math.sqrt(n + 1))
        # second transmon rung carries √2
        assert H[idx(n, 2), idx(n + 1, 1)] == pytest.approx(p.g * math.sqrt(2) * math.sqrt(n + 1))


def test_gjc_d1_hermitian():
    p = device_preset("D1").replace(eps_d=1 * MHZ)
    spec = HilbertSpec(10, 4)
    H = build_gjc(p, spec)
    assert H.shape == (40, 40)
    assert is_hermitian(H, tol=1e-12 * GHZ)


def test_duffing_coefficients():
    g, delta = 0.14 * 2.383 * GHZ, 2.383 * GHZ
    K = kerr_coefficient(g, delta)
    assert K / MHZ == pytest.approx(0.14**4 * 2383, rel=1e-12)
    assert K / MHZ == pytest.approx(0.915, abs=1e-3)
    p = ratio_params()
    H = build_duffing(p, 8).toarray()
    K = kerr_coefficient(p.g, p.delta)
    lin = p.delta_c + K + p.g**2 / p.delta - 2 * K
    assert H[1, 1].real == pytest.approx(lin)
    # ⟨2|a†²a²|2⟩ = 2, so H_22 = 2·lin − 2K: the Kerr term is negative
    assert H[2, 2].real == pytest.approx(2 * lin - 2 * K)
    assert is_hermitian(H, tol=1e-6)
    with pytest.raises(SingularDetuningError):
        build_duffing(p.replace(omega_q=p.omega_c), 8)


def test_build_hamiltonian_dispatch():
    p = params()
    spec = HilbertSpec(5, 2)
    assert np.array_equal(build_hamiltonian("jc", p, spec).toarray(), build_jc(p, spec).toarray())
    with pytest.raises(ValueError):
        build_hamiltonian("rabi", p, spec)


def test_channels_zero_temperature():
    spec = HilbertSpec(5, 2)
    ch = collapse_channels(params(), spec)
    assert len(ch) == 3
    kinds = {c.kind for c in ch}
    assert "cavity-thermal" not in kinds
    relax = next(c for c in ch if c.kind == "transmon-relax")
    p = params()
    sm = spec.transmon_lowering().toarray()
    assert np.allclose(relax.jump.toarray(), math.sqrt(p.gamma) * sm)
    assert all(c.rate >= 0 for c in ch)


def test_channels_thermal():
    p = params(omega_c=10.567 * GHZ, temperature=0.2)
    nbar = thermal_occupation(p.omega_c, 0.2)
    assert nbar == pytest.approx(0.086, abs=1e-3)
    ch = collapse_channels(p, HilbertSpec(5, 3))
    assert len(ch) == 4
    loss = next(c for c in ch if c.kind == "cavity-loss")
    therm = next(c for c in ch if c.kind == "cavity-thermal")
    assert loss.rate == pytest.approx(2 * p.kappa * (nbar + 1))
    assert therm.rate == pytest.approx(2 * p.kappa * nbar)


def test_critical_photon_number():
    assert critical_photon_number(0.14, 1.0) == pytest.approx(12.755, abs=1e-3)
    assert critical_photon_number(0.5, 1.0) == pytest.approx(1.0)
    assert critical_photon_number(0.2, 1.0) == pytest.approx(4 * critical_photon_number(0.4, 1.0))
    with pytest.raises(ZeroDivisionError):
        critical_photon_number(0.0, 1.0)


def test_device_presets():
    d1, d2 = device_preset("D1"), device_preset("D2")
    assert d1.omega_c / GHZ == pytest.approx(10.426)
    assert d2.g / GHZ == pytest.approx(0.335)
    assert d1.chi / MHZ == pytest.approx(-150)
    assert d2.chi / MHZ == pytest.approx(-242)
    assert (d1.g**2 / d1.delta) / MHZ == pytest.approx(99.6, abs=0.1)
    assert d2.gamma == pytest.approx(1e6 / 2.20)
    assert d2.gamma_phi == pytest.approx(1e6 / 2.10 - 1e6 / 4.40)
    # dressed ground-state cavity frequency of D2
    assert (d2.omega_c + d2.g**2 / d2.delta) / GHZ == pytest.approx(10.612, abs=0.003)
    assert device_preset("d2", temperature=0.2).temperature == 0.2
    with pytest.raises(KeyError):
        device_preset("D3")


def test_device_params_physicality():
    with pytest.raises(ValueError):
        DeviceParams("X", 10.0, 1.0, 0.1, 50, T1=1.0, T2=2.5, chi_over_2pi=-0.2, kappa_over_gamma=1.0)


def test_negative_rates_rejected():
    with pytest.raises(ValueError):
        params(gamma=-1.0)
    with pytest.raises(ValueError):
        params(temperature=-0.1)


def test_ratio_params():
    p = ratio_params()
    assert p.g / p.delta == pytest.approx(0.14)
    assert p.eps_d / (2 * p.kappa) == pytest.approx(25 / 3)
    assert 2 * p.kappa / p.gamma == pytest.approx(12)
