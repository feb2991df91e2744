import itertools
import math

import numpy as np
import pytest
import scipy.linalg as la

from bistab.models import SystemParams, ratio_params
from bistab.trajectory import (
    BRIGHT, DARK, DIM, TRANSIT, SSEProblem, StepSizeError, Thresholds, TrajectoryRecord, _weak2_update,
    ensemble_run, isodata_midpoint, label_states, smooth, sse_simulate, switching_stats, trajectory_seed,
)


def empty_cavity(eps=1.0, detuning=0.5):
    # 2κ = 1, so time units are already 1/(2κ)
    return SystemParams(omega_c=detuning, omega_q=-50.0, g=0.0, eps_d=eps, omega_d=0.0, kappa=0.5, gamma=0.1)


class LinearSDE:
    """dX = A X dt + Σ B_j X dW_j, shaped like SSEProblem for the weak2 update."""

    def __init__(self, A, Bs):
        self.A, self.Bs = A, Bs
        self.noise_dim = len(Bs)

    def _apply(self, psi):
        return np.zeros((0,) + psi.shape), np.zeros((0, psi.shape[1]))

    def drift(self, psi, *_):
        return self.A @ psi

    def diffusion(self, psi, *_):
        return np.stack([B @ psi for B in self.Bs])


def test_weak2_second_order_by_enumeration():
    # exact expectation over the discrete increments, no sampling noise
    A = np.array([[-0.5, 0.3], [-0.2, -0.4]])
    B1 = np.array([[0.3, 0.2], [0.0, 0.1]])
    B2 = np.array([[0.1, 0.0], [0.4, -0.2]])
    prob = LinearSDE(A, [B1, B2])
    x0 = np.array([1.0, 0.5])
    T, I = 1.0, np.eye(2)
    G = np.kron(A, I) + np.kron(I, A) + np.kron(B1, B1) + np.kron(B2, B2)
    exact2 = la.expm(G * T) @ np.kron(x0, x0)
    errs = []
    for dt in (0.2, 0.1, 0.05):
        s = math.sqrt(3 * dt)
        w = [(-s, 1 / 6), (0.0, 2 / 3), (s, 1 / 6)]
        T2 = np.zeros((4, 4))
        for (w1, p1), (w2, p2), (v, pv) in itertools.product(w, w, [(-dt, 0.5), (dt, 0.5)]):
            M = np.stack([_weak2_update(prob, e, dt, np.array([w1, w2]), np.array([[0, -v], [v, 0]])) for e in I], 1)
            T2 += p1 * p2 * pv * np.kron(M, M)
        n = int(round(T / dt))
        errs.append(np.abs(np.linalg.matrix_power(T2, n) @ np.kron(x0, x0) - exact2).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.2), ratios


def test_deterministic_for_seed():
    p = ratio_params(drive_over_2kappa=1.0)
    kw = dict(t_max=0.5, dt=0.002, cutoff=8)
    a = sse_simulate(p, "jc", seed=11, **kw)
    b = sse_simulate(p, "jc", seed=11, **kw)
    c = sse_simulate(p, "jc", seed=12, **kw)
    assert np.array_equal(a.n_photon, b.n_photon) and np.array_equal(a.alpha, b.alpha)
    assert not np.array_equal(a.n_photon, c.n_photon)


def test_vacuum_without_drive_stays_vacuum():
    rec = sse_simulate(empty_cavity(eps=0.0), "jc", seed=0, t_max=2.0, dt=0.01, cutoff=5)
    assert np.all(rec.n_photon == 0)
    assert np.allclose(rec.sigma_z, -1, atol=1e-12)


@pytest.mark.parametrize("scheme,tol", [("euler", 1e-2), ("weak2", 1e-4)])
def test_empty_cavity_relaxes_to_coherent_state(scheme, tol):
    # coherent states are eigenstates of a, so heterodyne noise vanishes on them
    p = empty_cavity()
    alpha = p.eps_d / (p.kappa + 1j * (p.omega_c - p.omega_d))
    rec = sse_simulate(p, "jc", seed=3, t_max=30.0, dt=0.005, cutoff=14, scheme=scheme)
    assert rec.n_photon[-1] == pytest.approx(abs(alpha) ** 2, rel=tol)
    assert rec.alpha[-1] == pytest.approx(alpha, rel=tol)
    assert rec.n_photon[-1] - abs(rec.alpha[-1]) ** 2 < 1e-4


def test_step_size_guard():
    with pytest.raises(StepSizeError):
        sse_simulate(empty_cavity(), "jc", t_max=1.0, dt=0.5, cutoff=5)
    with pytest.raises(ValueError):
        sse_simulate(empty_cavity(), "jc", t_max=0.1, dt=0.01, cutoff=5, scheme="milstein")


def test_record_layout():
    rec = sse_simulate(empty_cavity(), "jc", seed=0, t_max=1.0, dt=0.01, cutoff=5, record_every=0.1,
                       snapshot_every=0.5)
    assert len(rec) == 11
    assert np.allclose(rec.times, np.arange(11) * 0.1)
    assert rec.snapshot_times == pytest.approx([0.0, 0.5, 1.0])
    assert all(abs(np.linalg.norm(s) - 1) < 1e-12 for s in rec.snapshot_states)


def test_heterodyne_noise_count():
    prob = SSEProblem(ratio_params(), "jc", cutoff=6)
    assert prob.noise_dim == 2 * len(prob.C)
    assert prob.unit == pytest.approx(2 * ratio_params().kappa)


def test_trajectory_seeds_independent():
    a = np.random.default_rng(trajectory_seed(5, 0)).random(4)
    b = np.random.default_rng(trajectory_seed(5, 1)).random(4)
    c = np.random.default_rng(trajectory_seed(5, 0)).random(4)
    assert not np.array_equal(a, b) and np.array_equal(a, c)


def test_ensemble_independent_of_workers():
    p = ratio_params(drive_over_2kappa=1.0)
    kw = dict(M=3, seed=4, t_max=0.2, dt=0.002, cutoff=6, t_burn=0.1)
    s1 = ensemble_run(p, "jc", workers=1, **kw)
    s2 = ensemble_run(p, "jc", workers=2, **kw)
    assert np.array_equal(s1.mean_n, s2.mean_n)
    m, se = s1.steady_mean("n")
    assert math.isfinite(m) and se >= 0


def synthetic(n, sz, dt=0.1):
    n = np.asarray(n, float)
    t = np.arange(len(n)) * dt
    return TrajectoryRecord(0, t, n, np.asarray(sz, float), np.zeros(len(n), complex), np.zeros(len(n), complex))


def test_labels_with_hysteresis_and_transit():
    th = Thresholds(dark=0.15, boundary=4.0, hysteresis=0.2)
    n = [1] * 20 + [4.0] * 5 + [10] * 20 + [3.5] * 5 + [10] * 10 + [0.05] * 20
    sz = [-0.9] * 60 + [0.5] * 20
    labels = label_states(synthetic(n, sz), th, window=0.0)
    assert set(labels[:20]) == {DIM}
    assert set(labels[20:25]) == {TRANSIT}
    assert set(labels[25:45]) == {BRIGHT}
    # a dip into the band that returns to bright stays bright
    assert set(labels[45:50]) == {BRIGHT}
    assert set(labels[60:]) == {DARK}
    with pytest.raises(ValueError):
        label_states(synthetic(n, sz), Thresholds(dark=5.0, boundary=4.0))


def test_switching_stats_synthetic():
    block = [1.0] * 50 + [20.0] * 50
    n = block * 3
    sz = [-0.9 if v < 5 else 0.1 for v in n]
    rec = synthetic(n, sz)
    st = switching_stats(rec, label_states(rec, Thresholds(boundary=4.0), window=0.0), window=0.0)
    assert st.n_switches == 5
    assert st.simultaneity == pytest.approx(1.0)
    assert st.mean_dwell(BRIGHT) == pytest.approx(5.0)
    assert not st.insufficient_statistics


def test_smooth_and_isodata():
    t = np.arange(10) * 0.5
    assert np.allclose(smooth(np.ones(10), t, 2.0), 1.0)
    v = np.r_[np.zeros(30), np.ones(70)]
    assert isodata_midpoint(v) == pytest.approx(0.5)
