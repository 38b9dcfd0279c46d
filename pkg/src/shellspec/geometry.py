"""Surface quadratures for closed surfaces.

Parametric surfaces are covered by quadrilateral panels in smooth charts; each
panel carries a tensor Gauss-Legendre rule of order ``p``.  Nodes are stored
panel by panel, ``p*p`` consecutive nodes per panel with the first chart
coordinate varying slowest.  Triangle meshes (OFF files) use one node per face
at the centroid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GeometrySpec",
    "SurfaceQuadrature",
    "build_quadrature",
    "nontangential_offsets",
    "read_off",
    "MeshError",
]


class MeshError(ValueError):
    """Unreadable, degenerate or non-watertight triangle mesh."""


_KINDS = {
    "sphere": ("r",),
    "ellipsoid": ("a", "b", "c"),
    "torus": ("R", "r"),
    "rounded_cube": ("edge", "rho"),
    "mesh": ("path",),
}
_DEFAULTS = {
    "sphere": {"r": 1.0},
    "ellipsoid": {"a": 1.0, "b": 1.0, "c": 1.0},
    "torus": {"R": 2.0, "r": 0.5},
    "rounded_cube": {"edge": 2.0, "rho": 0.2},
    "mesh": {},
}


@dataclass(frozen=True)
class GeometrySpec:
    """Description of a closed surface and its refinement level.

    ``resolution`` is the number of panels along each edge of a chart face
    (cube-sphere kinds) or along the short direction of the torus; the mesh
    size halves when the resolution doubles.  ``order`` is the number of
    Gauss-Legendre points per panel direction.
    """

    kind: str
    params: dict = field(default_factory=dict)
    resolution: int = 2
    order: int = 6

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        params = dict(_DEFAULTS[self.kind])
        params.update(self.params or {})
        missing = [k for k in _KINDS[self.kind] if k not in params]
        if missing:
            raise ValueError(f"{self.kind} needs parameters {missing}")
        if self.kind != "mesh":
            for k in _KINDS[self.kind]:
                params[k] = float(params[k])
                if not params[k] > 0:
                    raise ValueError(f"{self.kind} parameter {k} must be positive")
        if self.kind == "torus" and not params["r"] < params["R"]:
            raise ValueError("torus needs r < R")
        if self.kind == "rounded_cube" and not params["rho"] < params["edge"] / 2:
            raise ValueError("rounded_cube needs 0 < rho < edge/2")
        if int(self.resolution) < 1:
            raise ValueError("resolution must be a positive integer")
        if int(self.order) < 2:
            raise ValueError("order must be at least 2")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "resolution", int(self.resolution))
        object.__setattr__(self, "order", int(self.order))

    def refined(self, factor: int = 2) -> "GeometrySpec":
        return GeometrySpec(self.kind, dict(self.params), self.resolution * factor, self.order)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params),
                "resolution": self.resolution, "order": self.order}

    @property
    def analytic_area(self) -> float | None:
        p = self.params
        if self.kind == "sphere":
            return 4 * np.pi * p["r"] ** 2
        if self.kind == "torus":
            return 4 * np.pi**2 * p["R"] * p["r"]
        if self.kind == "rounded_cube":
            c = p["edge"] - 2 * p["rho"]
            return 6 * c * c + 6 * np.pi * p["rho"] * c + 4 * np.pi * p["rho"] ** 2
        return None


# ---------------------------------------------------------------- charts

_FACES = [(k, s) for k in range(3) for s in (1.0, -1.0)]


def _cube_direction(face, xi, eta):
    """Unit direction and its chart derivatives on an equiangular cube face."""
    k, s = _FACES[face]
    k1, k2 = (k + 1) % 3, (k + 2) % 3
    a, b = np.tan(xi), np.tan(eta)
    c = np.zeros(np.shape(xi) + (3,))
    c[..., k] = s
    c[..., k1] = s * a
    c[..., k2] = b
    cx = np.zeros_like(c)
    cy = np.zeros_like(c)
    cx[..., k1] = s / np.cos(xi) ** 2
    cy[..., k2] = 1.0 / np.cos(eta) ** 2
    n = np.linalg.norm(c, axis=-1)[..., None]
    d = c / n
    dx = (cx - d * np.sum(d * cx, axis=-1, keepdims=True)) / n
    dy = (cy - d * np.sum(d * cy, axis=-1, keepdims=True)) / n
    return d, dx, dy


class _Chart:
    """Smooth surface parametrizations ``(chart id, u, v) -> (x, x_u, x_v)``."""

    def __init__(self, spec: GeometrySpec):
        self.spec = spec
        self.kind = spec.kind
        self.p = spec.params

    def __call__(self, cid, u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        if self.kind == "torus":
            return self._torus(u, v)
        d, du, dv = _cube_direction(cid, u, v)
        if self.kind == "sphere":
            r = self.p["r"]
            return r * d, r * du, r * dv
        if self.kind == "ellipsoid":
            sc = np.array([self.p["a"], self.p["b"], self.p["c"]])
            return d * sc, du * sc, dv * sc
        if self.kind == "rounded_cube":
            return self._rounded(d, du, dv)
        raise AssertionError(self.kind)

    def _torus(self, u, v):
        R, r = self.p["R"], self.p["r"]
        rho = R + r * np.cos(v)
        x = np.stack([rho * np.cos(u), rho * np.sin(u), r * np.sin(v)], axis=-1)
        xu = np.stack([-rho * np.sin(u), rho * np.cos(u), np.zeros_like(u)], axis=-1)
        xv = np.stack([-r * np.sin(v) * np.cos(u), -r * np.sin(v) * np.sin(u), r * np.cos(v)], axis=-1)
        return x, xu, xv

    def _rounded(self, d, du, dv):
        half = self.p["edge"] / 2
        rr = self.p["rho"]
        c0 = half - rr

        def excess(x):
            q = np.abs(x) - c0
            return np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0) - rr

        lo = np.zeros(d.shape[:-1])
        hi = np.full(d.shape[:-1], half * np.sqrt(3.0) + rr)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            out = excess(mid[..., None] * d) > 0
            hi = np.where(out, mid, hi)
            lo = np.where(out, lo, mid)
        t = 0.5 * (lo + hi)
        x = t[..., None] * d
        q = np.maximum(np.abs(x) - c0, 0.0) * np.sign(x)
        g = q / np.linalg.norm(q, axis=-1, keepdims=True)
        gd = np.sum(g * d, axis=-1)
        tu = -t * np.sum(g * du, axis=-1) / gd
        tv = -t * np.sum(g * dv, axis=-1) / gd
        xu = tu[..., None] * d + t[..., None] * du
        xv = tv[..., None] * d + t[..., None] * dv
        return x, xu, xv


# ---------------------------------------------------------------- quadrature


@dataclass
class SurfaceQuadrature:
    """Nodes, outward unit normals and positive weights on a closed surface."""

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    h: float
    patch_id: np.ndarray
    descriptor: GeometrySpec
    order: int = 1
    chart: object = None
    panel_chart: np.ndarray | None = None
    panel_bounds: np.ndarray | None = None
    triangles: np.ndarray | None = None  # (n_faces, 3, 3) vertex coordinates for meshes

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def is_parametric(self) -> bool:
        return self.chart is not None

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def n_panels(self) -> int:
        return 0 if self.panel_bounds is None else len(self.panel_bounds)

    def panel_nodes(self, P: int) -> slice:
        k = self.order**2
        return slice(P * k, (P + 1) * k)

    def panel_geometry(self, P: int, s, t):
        """Points, unit normals and area elements at reference coords ``(s, t)``.

        ``s, t`` lie in ``[-1, 1]``; the returned area element already includes
        the affine factor from the reference square to the chart rectangle.
        """
        u0, u1, v0, v1 = self.panel_bounds[P]
        u = u0 + 0.5 * (np.asarray(s) + 1.0) * (u1 - u0)
        v = v0 + 0.5 * (np.asarray(t) + 1.0) * (v1 - v0)
        x, xu, xv = self.chart(self.panel_chart[P], u, v)
        nrm = np.cross(xu, xv)
        jac = np.linalg.norm(nrm, axis=-1)
        scale = 0.25 * (u1 - u0) * (v1 - v0)
        return x, nrm / jac[..., None], jac * scale, xu * 0.5 * (u1 - u0), xv * 0.5 * (v1 - v0)

    def summary(self) -> dict:
        return {
            "kind": self.descriptor.kind,
            "n_nodes": self.n,
            "n_panels": self.n_panels,
            "order": self.order,
            "h": self.h,
            "area": self.area,
        }


def _panels(spec: GeometrySpec):
    k = spec.resolution
    if spec.kind == "torus":
        R, r = spec.params["R"], spec.params["r"]
        nv = 2 * k
        nu = int(np.ceil(nv * R / r))
        us = np.linspace(0, 2 * np.pi, nu + 1)
        vs = np.linspace(0, 2 * np.pi, nv + 1)
        bounds = [(us[i], us[i + 1], vs[j], vs[j + 1]) for i in range(nu) for j in range(nv)]
        return np.zeros(len(bounds), int), np.array(bounds)
    edges = np.linspace(-np.pi / 4, np.pi / 4, k + 1)
    if spec.kind == "rounded_cube":
        # panel edges on the flat-face/rounded-strip junctions keep panels smooth
        half = spec.params["edge"] / 2
        xc = np.arctan((half - spec.params["rho"]) / half)
        ms = max(1, k // 3)
        edges = np.concatenate([
            np.linspace(-np.pi / 4, -xc, ms + 1)[:-1],
            np.linspace(-xc, xc, k + 1),
            np.linspace(xc, np.pi / 4, ms + 1)[1:],
        ])
    k = len(edges) - 1
    cids, bounds = [], []
    for f in range(6):
        for i in range(k):
            for j in range(k):
                cids.append(f)
                bounds.append((edges[i], edges[i + 1], edges[j], edges[j + 1]))
    return np.array(cids), np.array(bounds)


def build_quadrature(spec: GeometrySpec) -> SurfaceQuadrature:
    """Discretize the surface described by ``spec``."""
    if spec.kind == "mesh":
        return _mesh_quadrature(spec)
    chart = _Chart(spec)
    cids, bounds = _panels(spec)
    p = spec.order
    g, gw = np.polynomial.legendre.leggauss(p)
    S, T = np.meshgrid(g, g, indexing="ij")
    Wt = np.outer(gw, gw).ravel()
    q = SurfaceQuadrature(
        points=np.empty((0, 3)), normals=np.empty((0, 3)), weights=np.empty(0), h=0.0,
        patch_id=np.empty(0, int), descriptor=spec, order=p, chart=chart,
        panel_chart=cids, panel_bounds=bounds,
    )
    pts, nrms, wts = [], [], []
    for P in range(len(bounds)):
        x, nrm, jac, _, _ = q.panel_geometry(P, S.ravel(), T.ravel())
        pts.append(x)
        nrms.append(nrm)
        wts.append(jac * Wt)
    q.points = np.concatenate(pts)
    q.normals = np.concatenate(nrms)
    q.weights = np.concatenate(wts)
    q.patch_id = np.repeat(np.arange(len(bounds)), p * p)
    q.h = float(np.sqrt(q.weights.sum() / q.n))
    for a in (q.points, q.normals, q.weights, q.patch_id):
        a.setflags(write=False)
    return q


# ---------------------------------------------------------------- meshes


def read_off(path) -> tuple[np.ndarray, np.ndarray]:
    """Read vertices and triangulated faces from an OFF file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    try:
        if tokens[0].upper() != "OFF":
            raise MeshError(f"{path}: missing OFF header")
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        verts = np.array(tokens[pos:pos + 3 * nv], float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            idx = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
            pos += 1 + k
            faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, k - 1))
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed OFF data") from exc
    faces = np.array(faces, int)
    if faces.size == 0 or faces.min() < 0 or faces.max() >= nv:
        raise MeshError(f"{path}: face indices out of range")
    return verts, faces


def _mesh_quadrature(spec: GeometrySpec) -> SurfaceQuadrature:
    verts, faces = read_off(spec.params["path"])
    tri = verts[faces]
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    if np.any(area < 1e-14):
        raise MeshError(f"{int(np.sum(area < 1e-14))} degenerate triangles (area < 1e-14)")
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise MeshError(f"mesh is not watertight: {int(np.sum(counts == 1))} boundary edges")
    volume = np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0
    if volume < 0:
        tri = tri[:, ::-1]
        cr = -cr
    normals = cr / (2 * area[:, None])
    pts = tri.mean(axis=1)
    return SurfaceQuadrature(
        points=pts, normals=normals, weights=area, h=float(np.sqrt(area.sum() / len(area))),
        patch_id=np.arange(len(area)), descriptor=spec, order=1, triangles=tri,
    )


def nontangential_offsets(q: SurfaceQuadrature, t: float, side: str) -> np.ndarray:
    """Points at distance ``t`` from the nodes along the normal.

    ``side='+'`` moves into the interior domain, ``side='-'`` into the exterior.
    """
    if not t > 0:
        raise ValueError("offset t must be positive")
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    sgn = -1.0 if side == "+" else 1.0
    return q.points + sgn * t * q.normals
