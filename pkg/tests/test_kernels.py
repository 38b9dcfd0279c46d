import numpy as np
import pytest

from shellspec.gamma import BETA, GAMMA5, I4
from shellspec.kernels import (
    SpectralParam, dirac_apply_fd, double_layer_kernel, phi_massless, phi_z, psi_z, riesz_kernel,
    sqrt_branch,
)

X = np.random.default_rng(5).normal(size=(12, 3))


def herm(M):
    return M.conj().swapaxes(-1, -2)


def test_sqrt_branch():
    assert sqrt_branch(SpectralParam(0.5, 1.0)) == pytest.approx(1j * np.sqrt(0.75), abs=1e-15)
    assert sqrt_branch(SpectralParam(0.0, 1.0)) == 1j
    p = SpectralParam(0.3 + 0.4j, 1.0)
    w = sqrt_branch(p)
    assert w.imag > 0
    assert abs(w * w - (p.z**2 - 1)) <= 1e-14
    for z in (1.0, -1.5):
        with pytest.raises(ValueError):
            SpectralParam(z, 1.0)
    with pytest.raises(ValueError):
        SpectralParam(0.0, 0.0)


def test_psi_values_and_decay():
    p = SpectralParam(0.0, 1.0)
    assert psi_z(np.array([1.0, 0, 0]), p) == pytest.approx(np.exp(-1) / (4 * np.pi), rel=1e-14)
    a = SpectralParam(0.6, 1.0)
    v = psi_z(X, a)
    assert np.all(np.abs(v.imag) == 0) and np.all(v.real > 0)
    r1, r2 = 5.0, 9.0
    ratio = psi_z(np.array([r2, 0, 0]), a) / psi_z(np.array([r1, 0, 0]), a)
    rate = -np.log(ratio.real * r2 / r1) / (r2 - r1)
    assert rate == pytest.approx(0.8, rel=1e-12)
    with pytest.raises(ValueError):
        psi_z(np.zeros(3), a)


@pytest.mark.parametrize("z", [0.0, 0.5, -0.3 + 0.2j, 2.0 + 0.5j])
def test_phi_pde_residual(z):
    p = SpectralParam(z, 1.0)
    y0 = np.array([0.1, -0.2, 0.3])
    x0 = y0 + np.array([0.6, 0.0, 0.8])
    res = dirac_apply_fd(lambda pts: phi_z(pts - y0, p), x0, p.z, p.m, step=1e-3)
    assert np.abs(res).max() / np.abs(phi_z(x0 - y0, p)).max() <= 1e-6


def test_hermitian_kernel():
    for z in (0.3, 0.2 + 0.7j):
        p = SpectralParam(z, 1.0)
        assert np.abs(herm(phi_z(-X, p)) - phi_z(X, p.conj())).max() <= 1e-14
    a = SpectralParam(0.4, 1.0)
    assert np.abs(herm(phi_z(X, a)) - phi_z(-X, a)).max() <= 1e-14


def test_anticommutator_identities():
    a = SpectralParam(0.45, 1.3)
    F = phi_z(X, a)
    psi = psi_z(X, a)[:, None, None]
    lhs = BETA @ F + F @ BETA
    assert np.abs(lhs - 2 * (a.m * I4 + a.z * BETA) * psi).max() <= 1e-13
    g5b = GAMMA5 @ BETA
    z = SpectralParam(0.3 + 0.2j, 1.0)
    Fz = phi_z(X, z)
    lhs = g5b @ Fz + Fz @ g5b
    assert np.abs(lhs - 2 * z.z * g5b * psi_z(X, z)[:, None, None]).max() <= 1e-13


def test_conjugation_flips_energy():
    a = SpectralParam(0.45, 1.0)
    g5b = GAMMA5 @ BETA
    lhs = g5b @ phi_z(X, a) @ np.linalg.inv(g5b)
    assert np.abs(lhs + phi_z(X, SpectralParam(-0.45, 1.0))).max() <= 1e-13


def test_massless_kernel():
    x = np.array([0.3, -0.4, 1.2])
    K = phi_massless(x)
    assert np.allclose(phi_massless(-x), -K)
    assert np.allclose(K.conj().T, phi_massless(-x))
    assert np.allclose(np.abs(phi_massless(2 * x)), np.abs(K) / 4)


def test_double_layer_and_riesz():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 3))
    x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)
    assert double_layer_kernel(x, y, y) == pytest.approx(-1 / (8 * np.pi * np.linalg.norm(x - y)))
    d = x - y
    s = sum(d[k] * riesz_kernel(x, y, k) for k in range(3))
    assert s == pytest.approx(1 / (4 * np.pi * np.linalg.norm(d)))
    for k in range(3):
        assert riesz_kernel(x, y, k) == pytest.approx(-riesz_kernel(y, x, k))
    with pytest.raises(ValueError):
        riesz_kernel(x, x, 0)
