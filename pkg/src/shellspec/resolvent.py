"""Resolvent of the coupled operator applied to point sources.

For a point source ``delta_{y0} xi`` the free resolvent is the column
``x -> phi^z(x - y0) xi``.  The coupled resolvent is

    u = phi^z(. - y0) xi - Phi^z[(Lambda^z_+)^{-1} t]

with ``t`` the boundary trace of the free part.  Linear systems use a dense
LU factorization with iterative refinement; the inverse is never formed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .gamma import Coupling
from .geometry import SurfaceQuadrature
from .kernels import SpectralParam, phi_z
from .operators import BoundaryOperator, assemble_cauchy, evaluate_layer_potential, lambda_operators

__all__ = [
    "PointSource",
    "IllConditionedError",
    "LambdaSolver",
    "free_resolvent_trace",
    "free_resolvent",
    "krein_apply",
    "boundary_condition_defect",
    "KreinResolvent",
]


class IllConditionedError(RuntimeError):
    """``Lambda^z_+`` is numerically singular (``z`` at or near an eigenvalue)."""


@dataclass(frozen=True)
class PointSource:
    location: np.ndarray
    spinor: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.location, float).reshape(3)
        xi = np.asarray(self.spinor, complex).reshape(4)
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "spinor", xi)

    @classmethod
    def unit(cls, location, spinor) -> "PointSource":
        xi = np.asarray(spinor, complex).reshape(4)
        nrm = np.linalg.norm(xi)
        if nrm == 0:
            raise ValueError("spinor must be nonzero to normalize")
        return cls(location, xi / nrm)


def _check_off_surface(q: SurfaceQuadrature, y0, min_dist: float = 0.0):
    d = float(np.min(np.linalg.norm(q.points - y0, axis=1)))
    if d <= max(min_dist, 1e-12):
        raise ValueError(f"source at distance {d:.3g} from the surface nodes")
    return d


def free_resolvent(src: PointSource, p: SpectralParam, pts) -> np.ndarray:
    """``phi^z(x - y0) xi`` at ``pts`` of shape ``(n, 3)``; returns ``(n, 4)``."""
    pts = np.atleast_2d(np.asarray(pts, float))
    return phi_z(pts - src.location, p) @ src.spinor


def free_resolvent_trace(src: PointSource, q: SurfaceQuadrature, p: SpectralParam) -> np.ndarray:
    """Node-major density ``(phi^z(x_i - y0) xi)_i`` of length ``4N``."""
    _check_off_surface(q, src.location, 0.1 * q.h)
    return free_resolvent(src, p, q.points).reshape(-1)


class LambdaSolver:
    """Dense LU of the weighted symmetric form of a boundary operator with conditioning report."""

    def __init__(self, op: BoundaryOperator, cond_tol: float = 1e-8, refine_steps: int = 3):
        self.op = op
        self.sw = np.sqrt(op.weights)
        self.M = op.symmetric_form()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            self.lu = linalg.lu_factor(self.M, check_finite=False)
        self.norm = float(linalg.norm(self.M, 2)) if self.M.shape[0] <= 1500 else _power_norm(self.M)
        if self.norm == 0 or np.any(np.diag(self.lu[0]) == 0):
            self.sigma_min = 0.0
        else:
            self.sigma_min = _smallest_singular(self.lu, self.M.shape[0])
        self.ratio = self.sigma_min / self.norm if self.norm > 0 else 0.0
        self.refine_steps = refine_steps
        if not self.ratio > cond_tol:
            raise IllConditionedError(
                f"sigma_min/||Lambda|| = {self.ratio:.3e} <= {cond_tol:g}: z is at or near an eigenvalue"
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``Lambda x = b`` for densities ``b`` (original, unweighted coordinates)."""
        bs = self.sw[:, None] * np.asarray(b).reshape(len(self.sw), -1)
        x = linalg.lu_solve(self.lu, bs)
        for _ in range(self.refine_steps):
            r = bs - self.M @ x
            x = x + linalg.lu_solve(self.lu, r)
        out = x / self.sw[:, None]
        return out.reshape(np.shape(b))

    def info(self) -> dict:
        return {"sigma_min": self.sigma_min, "norm": self.norm, "ratio": self.ratio}


def _power_norm(M, iters: int = 60, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M.shape[1]) + 0j
    s = 0.0
    for _ in range(iters):
        y = M.conj().T @ (M @ x)
        s_new = np.sqrt(np.linalg.norm(y))
        x = y / np.linalg.norm(y)
        if abs(s_new - s) <= 1e-10 * s_new:
            break
        s = s_new
    return float(np.sqrt(np.linalg.norm(M.conj().T @ (M @ x))))


def _smallest_singular(lu, n: int, iters: int = 60, seed: int = 0) -> float:
    """Inverse power iteration on ``(M^H M)^{-1}`` using an LU factorization."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = linalg.lu_solve(lu, linalg.lu_solve(lu, x, trans=2))
        lam_new = np.linalg.norm(y)
        x = y / lam_new
        if abs(lam_new - lam) <= 1e-10 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(1.0 / np.sqrt(lam)) if np.isfinite(lam) and lam > 0 else 0.0


def krein_apply(src: PointSource, q: SurfaceQuadrature, c: Coupling, p: SpectralParam, pts, *,
                cond_tol: float = 1e-8, solver: LambdaSolver | None = None,
                return_info: bool = False):
    """Coupled resolvent applied to ``delta_{y0} xi`` at ``pts``.

    Raises
    ------
    IllConditionedError
        When ``sigma_min(Lambda) <= cond_tol * ||Lambda||``.
    """
    if solver is None:
        plus, _ = lambda_operators(q, c, p)
        solver = LambdaSolver(plus, cond_tol)
    t = free_resolvent_trace(src, q, p)
    g = solver.solve(t)
    pts = np.atleast_2d(np.asarray(pts, float))
    u = free_resolvent(src, p, pts) - evaluate_layer_potential(q, g, p, pts)
    if return_info:
        info = solver.info()
        info["density_norm"] = float(solver.op.norm_of(g)[0])
        info["trace_norm"] = float(solver.op.norm_of(t)[0])
        return u, info
    return u


def boundary_condition_defect(src: PointSource, q: SurfaceQuadrature, c: Coupling,
                              p: SpectralParam, *, solver: LambdaSolver | None = None) -> float:
    """Relative defect of ``t_u = -(A^{-1} + C^0)[g]`` with ``g = -(Lambda^z_+)^{-1} t``.

    Here ``t_u = t - (C^z - C^0)(Lambda^z_+)^{-1} t`` is the trace of the
    regular part of the resolvent output and ``C^0`` the Cauchy operator at
    ``z = 0``.
    """
    plus, _ = lambda_operators(q, c, p)
    if solver is None:
        solver = LambdaSolver(plus)
    t = free_resolvent_trace(src, q, p)
    x = solver.solve(t)
    g = -x
    Cz = assemble_cauchy(q, p)
    C0 = assemble_cauchy(q, SpectralParam(0.0, p.m))
    tu = t - (Cz.apply(x) - C0.apply(x))
    ainv = plus - Cz  # the local (or nonlocal) coupling part of Lambda_+
    rhs = -(ainv.apply(g) + C0.apply(g))
    return float(plus.norm_of(tu - rhs)[0] / plus.norm_of(t)[0])


class KreinResolvent(BaseEstimator):
    """Estimator-style front end: ``fit`` factorizes ``Lambda^z_+``, ``predict`` evaluates."""

    def __init__(self, coupling: Coupling | None = None, z: complex = 0.0, mass: float = 1.0,
                 cond_tol: float = 1e-8):
        self.coupling = coupling
        self.z = z
        self.mass = mass
        self.cond_tol = cond_tol

    def fit(self, X: SurfaceQuadrature, y=None):
        if not isinstance(X, SurfaceQuadrature):
            raise TypeError("fit expects a SurfaceQuadrature")
        if self.coupling is None:
            raise ValueError("coupling must be set")
        self.quadrature_ = X
        self.param_ = SpectralParam(self.z, self.mass)
        plus, _ = lambda_operators(X, self.coupling, self.param_)
        self.solver_ = LambdaSolver(plus, self.cond_tol)
        self.conditioning_ = self.solver_.info()
        return self

    def predict(self, X, source: PointSource):
        check_is_fitted(self, "solver_")
        return krein_apply(source, self.quadrature_, self.coupling, self.param_, X,
                           solver=self.solver_)
