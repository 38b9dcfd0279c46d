import numpy as np
import pytest

from shellspec.gamma import BETA, GAMMA5, I4, Coupling, alpha_dot, coupling_matrix
from shellspec.kernels import SpectralParam, dirac_apply_fd
from shellspec.operators import (
    alpha_normal, assemble_cauchy, assemble_multiplication, assemble_single_layer, assemble_W,
    calderon_projector, dump_operator, evaluate_layer_potential, kernel_symmetry_defect,
    lambda_operators, load_operator, nontangential_trace, smooth_densities,
)
from shellspec.gamma import sigma_dot


def rel(op, x, y):
    return float(np.max(op.norm_of(x - y) / op.norm_of(y)))


def test_laplace_single_layer_of_constant(sphere2):
    S = assemble_single_layer(sphere2, SpectralParam(0.0, 1e-8))
    one = np.zeros((sphere2.n, 4))
    one[:, 0] = 1.0
    val = S.apply(one.ravel()).reshape(-1, 4)[:, 0]
    assert np.abs(val - 1.0).max() <= 1e-3


def test_single_layer_symmetry_and_mass_monotone(sphere2):
    p = SpectralParam(0.3, 1.0)
    assert kernel_symmetry_defect(assemble_single_layer(sphere2, p)) <= 1e-10
    assert kernel_symmetry_defect(assemble_cauchy(sphere2, p)) <= 1e-10
    n1 = assemble_single_layer(sphere2, SpectralParam(0.0, 0.5)).norm()
    n2 = assemble_single_layer(sphere2, SpectralParam(0.0, 2.0)).norm()
    assert n2 < n1


def test_symmetry_is_undefined_without_far_pairs(sphere1):
    assert np.isnan(kernel_symmetry_defect(assemble_cauchy(sphere1, SpectralParam(0.0, 1.0))))


@pytest.mark.parametrize("a", [0.0, 0.5])
def test_square_C_and_norm(sphere1, sphere2, a):
    p = SpectralParam(a, 1.0)
    defects = []
    for q in (sphere1, sphere2):
        G = smooth_densities(q, 4)
        NC = alpha_normal(q) @ assemble_cauchy(q, p)
        defects.append(rel(NC, NC.apply(NC.apply(G)), -G / 4))
    assert defects[1] <= 5e-2
    assert defects[1] < defects[0]
    assert assemble_cauchy(sphere2, p).norm() >= 0.49


def test_square_W_and_W(sphere2):
    q = sphere2
    W = assemble_W(q)
    sN = assemble_multiplication(q, sigma_dot(q.normals))
    T = sN @ W
    G = smooth_densities(q, 4, d=2)
    assert rel(W, T.apply(T.apply(G)), -G / 4) <= 5e-2
    assert W.norm() >= 0.49
    assert kernel_symmetry_defect(W) <= 1e-10


def test_beta_anticommutator_offdiagonal_exact(sphere1):
    a = 0.4
    p = SpectralParam(a, 1.0)
    C = assemble_cauchy(sphere1, p).matrix
    S = assemble_single_layer(sphere1, p).matrix
    B = np.kron(np.eye(sphere1.n), BETA)
    D = B @ C + C @ B - 2 * np.kron(np.eye(sphere1.n), I4 + a * BETA) @ S
    mask = np.kron(1 - np.eye(sphere1.n), np.ones((4, 4))).astype(bool)
    assert np.abs(D[mask]).max() <= 1e-13 * np.abs(C).max()


def test_multiplication_operators(sphere1):
    q = sphere1
    aN = alpha_normal(q)
    g = np.random.default_rng(0).normal(size=4 * q.n)
    assert np.allclose(aN.apply(aN.apply(g)), g, atol=1e-14)
    A = assemble_multiplication(q, lambda N: coupling_matrix(Coupling.kappa(1, 2, 3), N),
                                require_hermitian=True)
    assert A.blockdiag.shape == (q.n, 4, 4)
    g5 = assemble_multiplication(q, GAMMA5)
    assert np.allclose(g5.apply(g5.apply(g)), g)
    with pytest.raises(ValueError):
        assemble_multiplication(q, 1j * np.eye(4), require_hermitian=True)


def test_weighted_adjoint(sphere1):
    C = assemble_cauchy(sphere1, SpectralParam(0.2 + 0.3j, 1.0))
    f, g = smooth_densities(sphere1, 2).T
    lhs = C.inner(C.apply(f), g)
    rhs = C.inner(f, C.adjoint().apply(g))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_calderon_projectors(sphere2):
    p = SpectralParam(0.3, 1.0)
    C = assemble_cauchy(sphere2, p)
    Pp = calderon_projector(sphere2, p, "+", cauchy=C)
    Pm = calderon_projector(sphere2, p, "-", cauchy=C)
    G = smooth_densities(sphere2, 4)
    assert np.abs(Pp.apply(G) + Pm.apply(G) - G).max() <= 1e-14
    PG = Pp.apply(G)
    assert rel(C, Pp.apply(PG), PG) <= 5e-2
    assert float(np.max(C.norm_of(Pp.apply(Pm.apply(G))))) <= 5e-2
    with pytest.raises(ValueError):
        calderon_projector(sphere2, p, "x")


def test_sandwiched_cauchy_zero_case(sphere1):
    c = Coupling("sandwiched_cauchy", (0.0, 4.0), mass=1.0)
    plus, _ = lambda_operators(sphere1, c, SpectralParam(0.0, 1.0))
    assert np.abs(plus.matrix).max() == 0.0


def test_local_lambda_structure(sphere1):
    c = Coupling.kappa(1.0, 0.5, 0.0)
    p = SpectralParam(0.2, 1.0)
    plus, minus = lambda_operators(sphere1, c, p)
    C = assemble_cauchy(sphere1, p).matrix
    assert np.abs((plus.matrix + minus.matrix) / 2 - np.kron(np.eye(sphere1.n), np.eye(4) - 0.5 * BETA) / 0.75
                  ).max() <= 1e-14
    assert np.abs((plus.matrix - minus.matrix) / 2 - C).max() <= 1e-14


def test_layer_potential_solves_pde(sphere1):
    p = SpectralParam(0.3 + 0.1j, 1.0)
    g = smooth_densities(sphere1, 1)[:, 0]
    x0 = np.array([[0.0, 0.3, 2.2], [0.1, 0.0, -0.2]])
    field = lambda pts: evaluate_layer_potential(sphere1, g, p, pts)  # noqa: E731
    res = dirac_apply_fd(field, x0, p.z, p.m, step=1e-3)
    assert np.abs(res).max() / np.abs(field(x0)).max() <= 1e-4
    h = smooth_densities(sphere1, 1, seed=3)[:, 0]
    lin = evaluate_layer_potential(sphere1, 2 * g - h, p, x0)
    assert np.allclose(lin, 2 * field(x0) - evaluate_layer_potential(sphere1, h, p, x0))


def test_layer_potential_decay(sphere1):
    a = SpectralParam(0.6, 1.0)
    g = smooth_densities(sphere1, 1)[:, 0]
    v10 = np.linalg.norm(evaluate_layer_potential(sphere1, g, a, [[10.0, 0, 0]]))
    v20 = np.linalg.norm(evaluate_layer_potential(sphere1, g, a, [[20.0, 0, 0]]))
    assert v20 <= 3 * np.exp(-0.8 * 10) * v10


def test_zero_density_traces(sphere1):
    p = SpectralParam(0.3, 1.0)
    t = nontangential_trace(sphere1, np.zeros(4 * sphere1.n, complex), p, "+", [0.05, 0.1])
    assert np.abs(t).max() == 0
    with pytest.raises(ValueError):
        nontangential_trace(sphere1, np.zeros(4 * sphere1.n), p, "+", [0.1])


def test_dump_roundtrip(sphere1, tmp_path):
    C = assemble_cauchy(sphere1, SpectralParam(0.25 + 0.5j, 1.5))
    path = dump_operator(C, tmp_path / "c.bin")
    head, M = load_operator(path)
    assert head == {"d": 4, "N": sphere1.n, "z": 0.25 + 0.5j, "m": 1.5}
    assert np.array_equal(M, C.matrix)
    raw = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_operator(tmp_path / "short.bin")


def test_density_length_checked(sphere1):
    with pytest.raises(ValueError):
        alpha_normal(sphere1).apply(np.zeros(5))
    assert np.allclose(alpha_dot(sphere1.normals).shape, (sphere1.n, 4, 4))
