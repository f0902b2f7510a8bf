"""Chirped mode-sum kernels: engines agree, sums integrate correctly."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

import qfall.kernels as kernels
from qfall.errors import ConfigError, DomainError
from qfall.kernels import (mode_chirp_sums, mode_chirp_sums_numba,
                           mode_chirp_sums_numpy, simpson_weights)


@pytest.fixture
def engine_guard():
    saved = kernels._engine
    yield
    kernels._engine = saved


def make_problem(n_modes=24, n_z=4097, seed=7):
    rng = np.random.default_rng(seed)
    z = np.linspace(0.0, 1.2e-3, n_z)
    w = simpson_weights(n_z, z[1] - z[0])
    envelope = np.exp(-((z - 4e-4) / 3e-4) ** 2)
    chi_w = np.empty((n_modes, n_z))
    idx_cut = np.empty(n_modes, dtype=np.int64)
    for n in range(n_modes):
        chi_w[n] = np.sin((n + 1) * 7e3 * z + 0.3 * n) * envelope * w
        cut = int(rng.integers(n_z // 2, n_z + 1))
        chi_w[n, cut:] = 0.0
        idx_cut[n] = cut
    k = 9
    alpha = 10 ** rng.uniform(5.5, 7.5, k)
    zprime = rng.uniform(-0.06, 0.06, k)
    invtau = rng.uniform(3.5, 4.5, k)
    gtau = rng.uniform(2.0, 2.7, k)
    return chi_w, z, idx_cut, alpha, zprime, invtau, gtau


class TestSimpsonWeights:
    def test_integrates_cubic_exactly(self):
        z = np.linspace(0.0, 1.0, 21)
        w = simpson_weights(21, z[1] - z[0])
        assert w @ z ** 3 == pytest.approx(0.25, rel=1e-14)
        assert w.sum() == pytest.approx(1.0, rel=1e-14)

    def test_rejects_even_count(self):
        with pytest.raises(DomainError):
            simpson_weights(20, 0.1)
        with pytest.raises(DomainError):
            simpson_weights(21, -0.1)


class TestEngines:
    def test_cross_implementation_agreement(self):
        args = make_problem()
        chi_w = args[0]
        f_np, g_np = mode_chirp_sums_numpy(*args)
        f_nb, g_nb = mode_chirp_sums_numba(*args)
        budget = np.sum(np.abs(chi_w), axis=1)  # cancellation-safe scale
        assert np.abs(f_np - f_nb).max(axis=0) == pytest.approx(
            np.zeros(chi_w.shape[0]), abs=1e-12 * budget.max())
        assert np.abs(g_np - g_nb).max() < 1e-11 * budget.max()

    def test_numba_deterministic(self):
        args = make_problem(n_modes=8, n_z=1025)
        f1, g1 = mode_chirp_sums_numba(*args)
        f2, g2 = mode_chirp_sums_numba(*args)
        assert np.array_equal(f1, f2)
        assert np.array_equal(g1, g2)

    def test_dispatch_follows_engine(self, engine_guard):
        args = make_problem(n_modes=4, n_z=513)
        kernels.set_engine("numpy")
        f_a, _ = mode_chirp_sums(*args)
        f_ref, _ = mode_chirp_sums_numpy(*args)
        assert np.array_equal(f_a, f_ref)
        kernels.set_engine("numba")
        f_b, _ = mode_chirp_sums(*args)
        f_nb, _ = mode_chirp_sums_numba(*args)
        assert np.array_equal(f_b, f_nb)

    def test_cut_matches_explicit_zeroing(self):
        chi_w, z, idx_cut, *rest = make_problem(n_modes=6, n_z=2049)
        full_cut = np.full(6, z.shape[0], dtype=np.int64)
        f_a, g_a = mode_chirp_sums_numba(chi_w, z, idx_cut, *rest)
        f_b, g_b = mode_chirp_sums_numba(chi_w, z, full_cut, *rest)
        # tails are already zero in chi_w, so the cut must not change values
        budget = np.sum(np.abs(chi_w))
        assert np.abs(f_a - f_b).max() < 1e-13 * budget
        assert np.abs(g_a - g_b).max() < 1e-12 * budget

    def test_engine_selection_errors(self, engine_guard):
        with pytest.raises(ConfigError):
            kernels.set_engine("fortran")

    def test_env_parsing(self, engine_guard, monkeypatch):
        monkeypatch.setenv("QFALL_JIT", "0")
        assert kernels._engine_from_env() == "numpy"
        monkeypatch.setenv("QFALL_JIT", "numba")
        assert kernels._engine_from_env() == "numba"
        monkeypatch.setenv("QFALL_JIT", "auto")
        assert kernels._engine_from_env() in ("numpy", "numba")
        monkeypatch.setenv("QFALL_JIT", "sometimes")
        with pytest.raises(ConfigError):
            kernels._engine_from_env()

    def test_shape_validation(self):
        chi_w, z, idx_cut, alpha, zprime, invtau, gtau = make_problem(4, 513)
        with pytest.raises(DomainError):
            mode_chirp_sums_numpy(chi_w, z[:-1], idx_cut, alpha, zprime,
                                  invtau, gtau)
        bad_cut = idx_cut.copy()
        bad_cut[0] = z.shape[0] + 5
        with pytest.raises(DomainError):
            mode_chirp_sums_numpy(chi_w, z, bad_cut, alpha, zprime, invtau,
                                  gtau)


class TestQuadratureOracle:
    def test_single_profile_against_adaptive_quadrature(self):
        # one smooth profile, moderate chirp: the weighted sum must match an
        # independent adaptive integration of the same integrand
        n_z = 4001
        z = np.linspace(0.0, 1.0, n_z)
        w = simpson_weights(n_z, z[1] - z[0])
        profile = np.exp(-((z - 0.42) / 0.11) ** 2)
        chi_w = (profile * w)[None, :]
        idx_cut = np.asarray([n_z], dtype=np.int64)
        alpha = np.asarray([40.0])
        zprime = np.asarray([0.3])
        invtau = np.asarray([2.0])
        gtau = np.asarray([0.7])
        F, G = mode_chirp_sums_numpy(chi_w, z, idx_cut, alpha, zprime,
                                     invtau, gtau)

        def fre(x):
            return math.exp(-((x - 0.42) / 0.11) ** 2) * math.cos(
                40.0 * (0.3 - x) ** 2)

        def fim(x):
            return math.exp(-((x - 0.42) / 0.11) ** 2) * math.sin(
                40.0 * (0.3 - x) ** 2)

        def gre(x):
            return fre(x) * ((0.3 - x) * 2.0 - 0.7)

        def gim(x):
            return fim(x) * ((0.3 - x) * 2.0 - 0.7)

        want_f = quad(fre, 0, 1, limit=200)[0] + 1j * quad(fim, 0, 1,
                                                           limit=200)[0]
        want_g = quad(gre, 0, 1, limit=200)[0] + 1j * quad(gim, 0, 1,
                                                           limit=200)[0]
        assert F[0, 0] == pytest.approx(want_f, rel=1e-8)
        assert G[0, 0] == pytest.approx(want_g, rel=1e-8)
