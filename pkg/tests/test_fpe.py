import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bistab.fpe import (
    HypergeometricError, effective_params, fpe_first_moment, fpe_linear_moment, fpe_sweep, hyp0f2,
)
from bistab.models import TWO_PI, device_preset

mpmath = pytest.importorskip("mpmath")

GHZ = TWO_PI * 1e9
MHZ = TWO_PI * 1e6


def ref0f2(a, b, z):
    mpmath.mp.dps = 40
    return complex(mpmath.hyper([], [a, b], z))


@settings(max_examples=40, deadline=None)
@given(st.floats(-30, 30), st.floats(0.1, 30), st.floats(-30, 30), st.floats(0, 5e4))
def test_hyp0f2_matches_mpmath(ar, ai, br, z):
    a = complex(ar, ai)
    b = complex(br, -ai)
    ref = ref0f2(a, b, z)
    assert abs(hyp0f2(a, b, z) - ref) <= 1e-10 * abs(ref)


def test_hyp0f2_special_values():
    assert hyp0f2(2.0, 3.0, 0.0) == 1
    assert hyp0f2(1.0, 1.0, 1.0).real == pytest.approx(ref0f2(1, 1, 1).real, rel=1e-15)
    with pytest.raises(HypergeometricError):
        hyp0f2(-2.0, 1.0, 1.0)


def test_hyp0f2_conjugation_symmetry():
    a, b, z = 1.3 + 4.2j, 2.1 - 0.7j, 37.0
    assert hyp0f2(a.conjugate(), b.conjugate(), z) == pytest.approx(hyp0f2(a, b, z).conjugate(), rel=1e-14)


def d1(**kw):
    return device_preset("D1").replace(**kw)


@pytest.mark.parametrize("convention", ["printed", "consistent"])
def test_weak_drive_limit(convention):
    p = d1(eps_d=1e-4 * MHZ, omega_d=10.52 * GHZ)
    assert fpe_first_moment(p, convention) == pytest.approx(fpe_linear_moment(p, convention), rel=1e-6)


def test_consistent_convention_matches_linear_response():
    p = d1(eps_d=1e-4 * MHZ)
    for f in (10.50, 10.52, 10.53):
        q = p.replace(omega_d=f * GHZ)
        lin = q.eps_d / (q.kappa + 1j * q.delta_c + q.g**2 / (q.gamma / 2 + 1j * q.delta_q))
        assert fpe_first_moment(q, "consistent") == pytest.approx(lin, rel=1e-6)


def test_effective_params():
    p = d1(eps_d=1 * MHZ, omega_d=10.52 * GHZ)
    e = effective_params(p, "printed")
    assert e.gamma_c_tilde == pytest.approx(p.kappa + 2j * p.delta_c)
    assert e.c == pytest.approx(e.gamma_q_tilde / (2j * p.chi))
    with pytest.raises(ValueError):
        effective_params(p, "other")
    with pytest.raises(ZeroDivisionError):
        effective_params(p.replace(chi=0.0), "printed")


def test_sweep_shape_and_monotone_check():
    p = d1(eps_d=10 * 2 * device_preset("D1").kappa)
    f = np.linspace(10.50, 10.52, 11) * GHZ
    r = fpe_sweep(p, f)
    assert r.amp_a.shape == (11,) and np.all(np.isfinite(r.amp_a)) and not r.errors
    with pytest.raises(ValueError):
        fpe_sweep(p, f[::-1][[0, 2, 1]])
