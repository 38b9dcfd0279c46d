import numpy as np
import pytest

from shellspec.geometry import GeometrySpec, MeshError, build_quadrature, nontangential_offsets, read_off


def test_sphere_area_normals_and_closure(sphere2):
    q = sphere2
    assert q.n == 864
    assert abs(q.area - 4 * np.pi) <= 1e-3
    assert np.abs(np.linalg.norm(q.normals, axis=1) - 1).max() <= 1e-10
    assert np.all(q.weights > 0)
    assert np.linalg.norm(q.weights @ q.normals) <= 1e-6
    assert np.allclose(q.normals, q.points, atol=1e-12)


def test_h_halves_per_doubling(sphere1, sphere2):
    assert sphere1.n == 216
    assert sphere2.h == pytest.approx(sphere1.h / 2, rel=1e-4)


def test_torus_area():
    q = build_quadrature(GeometrySpec("torus", {"R": 2.0, "r": 0.5}, 2))
    assert abs(q.area - 4 * np.pi**2) <= 1e-3
    assert np.linalg.norm(q.weights @ q.normals) <= 1e-6
    # outward: normals point away from the tube centre line
    rho = np.hypot(q.points[:, 0], q.points[:, 1])
    centre = np.stack([2 * q.points[:, 0] / rho, 2 * q.points[:, 1] / rho, 0 * rho], axis=1)
    assert np.all(np.einsum("ij,ij->i", q.points - centre, q.normals) > 0)


def test_ellipsoid_closure():
    q = build_quadrature(GeometrySpec("ellipsoid", {"a": 1.0, "b": 0.8, "c": 1.3}, 2))
    assert np.linalg.norm(q.weights @ q.normals) <= 1e-6
    assert np.abs(np.linalg.norm(q.normals, axis=1) - 1).max() <= 1e-10


def test_rounded_cube_area():
    spec = GeometrySpec("rounded_cube", {"edge": 2.0, "rho": 0.4}, 2)
    q = build_quadrature(spec)
    assert abs(q.area - spec.analytic_area) <= 1e-3
    assert np.linalg.norm(q.weights @ q.normals) <= 1e-6


@pytest.mark.parametrize("kind,params", [
    ("sphere", {"r": -1.0}),
    ("torus", {"R": 1.0, "r": 2.0}),
    ("rounded_cube", {"edge": 2.0, "rho": 1.0}),
    ("blob", {}),
])
def test_invalid_specs(kind, params):
    with pytest.raises(ValueError):
        GeometrySpec(kind, params, 1)


def test_resolution_must_be_positive():
    with pytest.raises(ValueError):
        GeometrySpec("sphere", {}, 0)


def test_offsets(sphere1):
    inner = nontangential_offsets(sphere1, 0.01, "+")
    outer = nontangential_offsets(sphere1, 0.01, "-")
    assert np.allclose(np.linalg.norm(inner, axis=1), 0.99)
    assert np.allclose(np.linalg.norm(outer, axis=1), 1.01)
    with pytest.raises(ValueError):
        nontangential_offsets(sphere1, 0.0, "+")


OCTA = """OFF
6 8 0
1 0 0
-1 0 0
0 1 0
0 -1 0
0 0 1
0 0 -1
3 0 2 4
3 2 1 4
3 1 3 4
3 3 0 4
3 2 0 5
3 1 2 5
3 3 1 5
3 0 3 5
"""


def test_mesh_octahedron(tmp_path):
    path = tmp_path / "octa.off"
    path.write_text(OCTA)
    q = build_quadrature(GeometrySpec("mesh", {"path": str(path)}, 1))
    assert q.n == 8
    assert q.area == pytest.approx(4 * np.sqrt(3))
    assert np.linalg.norm(q.weights @ q.normals) <= 1e-12
    assert np.all(np.einsum("ij,ij->i", q.points, q.normals) > 0)


def test_mesh_errors(tmp_path):
    open_mesh = "\n".join(OCTA.strip().splitlines()[:-1]).replace("6 8 0", "6 7 0")
    p = tmp_path / "open.off"
    p.write_text(open_mesh)
    with pytest.raises(MeshError, match="watertight"):
        build_quadrature(GeometrySpec("mesh", {"path": str(p)}, 1))
    p2 = tmp_path / "flat.off"
    p2.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n")
    with pytest.raises(MeshError, match="degenerate"):
        build_quadrature(GeometrySpec("mesh", {"path": str(p2)}, 1))
    with pytest.raises(MeshError):
        read_off(tmp_path / "missing.off")
