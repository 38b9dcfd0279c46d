import numpy as np
import pytest

from conftest import unit_normals
from shellspec.gamma import (
    ALPHA, BETA, GAMMA5, I4, LOCAL_FAMILIES, Coupling, DegenerateCouplingError, alpha_dot,
    beta_transform, classify, conjugate_and_sgn, conjugate_matrix, coupling_matrix,
    gamma_transform, p4_holds, projector_defect,
)

TOL = 1e-14


def anti(a, b):
    return a @ b + b @ a


def test_generators_hermitian_unitary():
    for m in (*ALPHA, BETA, GAMMA5):
        assert np.abs(m - m.conj().T).max() <= TOL
        assert np.abs(m @ m - I4).max() <= TOL


def test_clifford_relations():
    for j in range(3):
        assert np.abs(anti(ALPHA[j], BETA)).max() <= TOL
        for k in range(3):
            assert np.abs(anti(ALPHA[j], ALPHA[k]) - 2 * (j == k) * I4).max() <= TOL


def test_gamma5_identity():
    assert np.abs(-1j * ALPHA[0] @ ALPHA[1] @ ALPHA[2] - GAMMA5).max() == 0
    assert np.abs(anti(GAMMA5, BETA)).max() <= TOL
    for a in ALPHA:
        assert np.abs(GAMMA5 @ a - a @ GAMMA5).max() <= TOL


def test_alpha_dot():
    assert np.array_equal(alpha_dot([0, 0, 1]), ALPHA[2])
    assert np.abs(alpha_dot([0, 0, 0])).max() == 0
    N = unit_normals(5)
    an = alpha_dot(N)
    assert np.abs(an @ an - I4).max() <= 1e-14


def _all_couplings():
    out = [Coupling(f, (1.7,)) for f in LOCAL_FAMILIES if f != "combined"]
    out += [Coupling.kappa(1.3, -0.4, 0.8), Coupling.kappa(0.0, 2.0, 0.0)]
    return out


@pytest.mark.parametrize("c", _all_couplings(), ids=lambda c: c.family)
def test_hermitian_and_scalar_product(c):
    N = unit_normals(9)
    A = coupling_matrix(c, N)
    assert np.abs(A - A.conj().swapaxes(-1, -2)).max() <= TOL
    conj, sgn = conjugate_and_sgn(c)
    At = conj(N)
    assert np.abs(A @ At - sgn * I4).max() <= 1e-13
    assert np.abs(At @ A - sgn * I4).max() <= 1e-13


def test_coupling_examples():
    N = np.array([0.0, 0.6, 0.8])
    assert np.allclose(coupling_matrix(Coupling("lorentz", 2.0), N), 2 * BETA, atol=0)
    m = coupling_matrix(Coupling("modified_lorentz", 1.0), N)
    assert np.allclose(m, 1j * GAMMA5 @ BETA, atol=0)
    assert np.abs(m - m.conj().T).max() == 0
    assert np.abs(coupling_matrix(Coupling.kappa(0, 0, 0), N)).max() == 0


def test_kappa_sgn_and_conjugate():
    assert conjugate_and_sgn(Coupling.kappa(2, 0, 0))[1] == 4
    assert conjugate_and_sgn(Coupling.kappa(0, 2, 0))[1] == -4
    assert conjugate_and_sgn(Coupling.kappa(1.5, 0.5, 0.25))[1] == pytest.approx(1.5**2 - 0.25 - 0.0625)
    N = np.array([0.0, 0.0, 1.0])
    c = Coupling.kappa(1.0, 2.0, 3.0)
    assert np.allclose(conjugate_matrix(c, N), I4 - 2 * BETA - 3 * ALPHA[2], atol=0)


def test_degenerate_and_invalid():
    with pytest.raises(DegenerateCouplingError):
        conjugate_and_sgn(Coupling.kappa(1, 1, 0))
    with pytest.raises(ValueError):
        coupling_matrix(Coupling("electrostatic", 1.0), [0.0, 0.0, 1.1])
    with pytest.raises(ValueError):
        Coupling("nonsense", 1.0)
    with pytest.raises(ValueError):
        Coupling("combined", (1.0, 2.0))
    with pytest.raises(ValueError):
        coupling_matrix(Coupling("cauchy", (0.0, 4.0), mass=1.0), [0, 0, 1])


def test_transformation_table():
    assert beta_transform(Coupling("electrostatic", 1.5)) == Coupling("lorentz", 1.5)
    assert beta_transform(Coupling("magnetic", 1.5)).family == "anomalous_magnetic"
    assert gamma_transform(Coupling("magnetic", 0.7)) == Coupling("modified_magnetic", 0.7)
    assert gamma_transform(beta_transform(Coupling("electrostatic", 1.0))).family == "modified_lorentz"
    assert gamma_transform(beta_transform(Coupling("magnetic", 1.0))).family == "modified_anomalous_magnetic"


@pytest.mark.parametrize("family", ["electrostatic", "lorentz", "magnetic", "anomalous_magnetic",
                                    "modified_electrostatic", "modified_lorentz", "modified_magnetic",
                                    "modified_anomalous_magnetic"])
def test_transforms_are_matrix_products_up_to_phase(family):
    N = unit_normals(4)
    c = Coupling(family, 1.0)
    A = coupling_matrix(c, N)
    for M, tr in ((BETA, beta_transform), (GAMMA5, gamma_transform)):
        B = coupling_matrix(tr(c), N)
        prod = M @ A
        k = np.unravel_index(np.argmax(np.abs(B[0])), (4, 4))
        phase = prod[0][k] / B[0][k]
        assert abs(abs(phase) - 1) <= TOL
        assert np.abs(prod - phase * B).max() <= TOL


def test_double_beta_returns_electrostatic():
    N = unit_normals(3)
    A = coupling_matrix(Coupling("electrostatic", 1.2), N)
    assert np.abs(BETA @ (BETA @ A) - A).max() <= TOL
    assert beta_transform(beta_transform(Coupling("electrostatic", 1.2))) == Coupling("electrostatic", 1.2)


def test_classification_examples():
    assert classify(Coupling("lorentz", 2.0))["confining"]
    assert not classify(Coupling("lorentz", 2.0))["critical"]
    r = classify(Coupling("anomalous_magnetic", 2.0))
    assert r["critical"] and r["confining"]
    r = classify(Coupling("electrostatic", 1.0))
    assert not r["critical"] and not r["confining"]
    assert classify(Coupling("electrostatic", 2.0))["critical"]
    assert classify(Coupling.kappa(1, 1, 0))["degenerate"]


def test_p3_and_p4():
    N = unit_normals(6)
    for mu in (2.0, -2.0):
        assert projector_defect(Coupling("modified_lorentz", mu), N) <= 1e-14
    # idempotence needs (gamma5 beta alpha.N / mu)^2 = 1/4, i.e. |mu| = 2
    for mu in (0.5, 3.0):
        assert projector_defect(Coupling("modified_lorentz", mu), N) > 0.1
    assert projector_defect(Coupling("electrostatic", 1.0), N) > 0.1
    assert p4_holds(Coupling.kappa(0.0, 2.0, 0.0), N)
    assert p4_holds(Coupling.kappa(np.sqrt(5.0), 3.0, 0.0), N)
    assert not p4_holds(Coupling.kappa(1.0, 2.0, 1.0), N)


def test_classification_stable_under_gamma():
    for c in (Coupling("electrostatic", 2.0), Coupling("lorentz", 2.0), Coupling("magnetic", 2.0),
              Coupling("anomalous_magnetic", 2.0), Coupling("electrostatic", 0.5)):
        a, b = classify(c), classify(gamma_transform(c))
        assert (a["critical"], a["confining"]) == (b["critical"], b["confining"])


def test_electrostatic_lorentz_swap_under_beta():
    a = classify(Coupling("electrostatic", 2.0))
    b = classify(beta_transform(Coupling("electrostatic", 2.0)))
    assert (a["critical"], a["confining"]) == (b["confining"], b["critical"])
