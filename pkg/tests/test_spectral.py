import numpy as np
import pytest

from shellspec.gamma import Coupling
from shellspec.kernels import dirac_apply_fd
from shellspec.spectral import (
    CriticalCouplingError, GapSpectrumEstimator, chebyshev_grid, eigen_density, kappa_tilde,
    mapped_coupling, scan, shell_map_em, spectral_correspondence_test, sufficiency_classifier,
)

# analytic root of the electrostatic shell eps = 1 on the unit sphere, m = 1
# (matching spherical Bessel solutions across r = 1, j = 1/2 channel)
SPHERE_ROOT = -0.652658


@pytest.fixture(scope="module")
def eps1_scan(sphere1):
    return scan(sphere1, Coupling("electrostatic", 1.0), 1.0, n_samples=48)


def test_mappings():
    assert kappa_tilde(Coupling("electrostatic", 1.0)) == (-4.0, -0.0, 0.0)
    assert shell_map_em(1.0, 0.0) == (-4.0, -0.0)
    for e, mu in ((1.5, 0.5), (0.3, 2.0), (-1.0, 0.25)):
        assert np.allclose(shell_map_em(*shell_map_em(e, mu)), (e, mu), rtol=1e-14)
    assert np.allclose(kappa_tilde(kappa_tilde((1.0, 0.5, 0.3))), (1.0, 0.5, 0.3))
    assert mapped_coupling(Coupling.kappa(1.0, 0.0, 0.0)).strengths == (-4.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        shell_map_em(1.0, 1.0)


def test_chebyshev_grid_in_gap():
    g = chebyshev_grid(32, 2.0)
    assert np.all(np.diff(g) > 0)
    assert np.all(np.abs(g) < 2.0)


def test_critical_and_degenerate_refused(sphere1):
    with pytest.raises(CriticalCouplingError):
        scan(sphere1, Coupling("electrostatic", 2.0), 1.0)
    with pytest.raises(CriticalCouplingError):
        scan(sphere1, Coupling.kappa(1.0, 1.0, 0.0), 1.0)
    with pytest.raises(CriticalCouplingError):
        scan(sphere1, Coupling("anomalous_magnetic", 2.0), 1.0)


def test_sufficiency_classifier():
    norms = {"C": 0.63, "W": 0.62}
    r = sufficiency_classifier(0.3, 1.0, norms)
    assert r["selfadjoint_by"] == "lorentz_dominant"
    r = sufficiency_classifier(1.0, 0.0, norms)
    assert r["selfadjoint_by"] == "small_coupling"
    assert r["w_window_empty"]
    assert sufficiency_classifier(2.0, 0.0, norms)["selfadjoint_by"] == "none"
    assert sufficiency_classifier(3.0, 0.0, norms)["w_window_as_union"]


@pytest.mark.slow
def test_electrostatic_root_matches_analytic(eps1_scan):
    roots = eps1_scan.roots
    assert len(roots) == 1
    r = roots[0]
    assert abs(r.a - SPHERE_ROOT) <= 1e-3
    assert r.multiplicity == 2
    assert r.resolved
    lo, hi = r.bracket
    assert lo <= r.a <= hi
    assert np.all(np.abs(eps1_scan.a_samples) < 1.0)
    d = eps1_scan.to_dict()
    assert d["roots"][0]["multiplicity"] == 2
    assert eps1_scan.to_csv().startswith("a,min_eig,neg_count")


@pytest.mark.slow
def test_eigen_density(sphere1, eps1_scan):
    a = eps1_scan.roots[0].a
    g, phi = eigen_density(sphere1, Coupling("electrostatic", 1.0), 1.0, a)
    assert g.shape == (4 * sphere1.n, 2)
    w = np.repeat(sphere1.weights, 4)
    assert np.allclose(np.einsum("i,ik->k", w, np.abs(g) ** 2), 1.0)
    x0 = np.array([[0.0, 0.0, 0.2], [0.0, 1.9, 0.0]])
    res = dirac_apply_fd(phi, x0, a, 1.0, step=1e-3)
    assert np.abs(res).max() / np.abs(phi(x0)).max() <= 1e-3
    r = np.array([4.0, 8.0])
    v = np.array([np.linalg.norm(phi(np.array([[0.0, 0.0, t]]))) for t in r])
    rate = -np.log(v[1] * r[1] / (v[0] * r[0])) / (r[1] - r[0])
    assert rate == pytest.approx(np.sqrt(1 - a * a), rel=0.2)


@pytest.mark.slow
def test_mapped_coupling_shares_root(sphere1, eps1_scan):
    s2 = scan(sphere1, Coupling("electrostatic", -4.0), 1.0, n_samples=48)
    rep = spectral_correspondence_test(sphere1, Coupling("electrostatic", 1.0), 1.0, scans=(eps1_scan, s2))
    assert rep["plus_convention"]["ok"]
    assert rep["verdict"] == "+a supported"


@pytest.mark.slow
def test_magnetic_only_has_no_roots(sphere1):
    assert len(scan(sphere1, Coupling("magnetic", 1.0), 1.0, n_samples=32).roots) == 0


@pytest.mark.slow
def test_estimator_api(sphere1):
    est = GapSpectrumEstimator(Coupling("electrostatic", 0.3), mass=1.0, n_samples=24)
    assert est.get_params()["n_samples"] == 24
    est.fit(sphere1)
    assert est.roots_.size == 0
    vals = est.predict([0.0, 0.5])
    assert vals.shape == (2,) and np.all(np.abs(vals) > 0.05)
    with pytest.raises(ValueError):
        est.predict([1.0])
    with pytest.raises(TypeError):
        GapSpectrumEstimator(Coupling("electrostatic", 0.3)).fit(np.zeros(3))
