"""Discrete boundary operators on a surface quadrature.

Densities are stored node-major: entry ``d*i + a`` is spinor component ``a``
at node ``i``.  Operators are kept in structured form

    sum_t  M_t (x) A_t  +  blockdiag(F)

with ``M_t`` a constant ``d x d`` matrix and ``A_t`` a scalar ``N x N``
Nystrom matrix (kernel times source weight), so that matrix-vector products
cost a few ``N x N`` products.  The dense matrix is built on request.  Inner
products and adjoints use the quadrature weights.
"""
from __future__ import annotations

import math
import struct
import warnings
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, svds

from . import _nearfield as nf
from .gamma import ALPHA, BETA, I4, SIGMA, Coupling, alpha_dot, conjugate_and_sgn
from .geometry import SurfaceQuadrature, nontangential_offsets
from .kernels import SpectralParam

__all__ = [
    "BoundaryOperator",
    "static_parts",
    "assemble_single_layer",
    "assemble_cauchy",
    "assemble_W",
    "double_layer",
    "adjoint_double_layer",
    "riesz",
    "assemble_multiplication",
    "alpha_normal",
    "lambda_operators",
    "calderon_projector",
    "evaluate_layer_potential",
    "nontangential_trace",
    "kernel_symmetry_defect",
    "dump_operator",
    "load_operator",
    "smooth_densities",
    "LowOrderWarning",
]


class LowOrderWarning(UserWarning):
    """Emitted when a mesh geometry forces the low-order principal-value fallback."""


def _as_cols(g, dN):
    g = np.asarray(g)
    if g.shape[0] != dN:
        raise ValueError(f"density has length {g.shape[0]}, expected {dN}")
    return g.reshape(dN, -1), g.shape


class BoundaryOperator:
    """Operator on densities over a surface quadrature.

    Parameters
    ----------
    quadrature : SurfaceQuadrature
    d : int
        Spinor dimension per node (1, 2 or 4).
    label : str
        Identity tag used in reports.
    terms : list of (M, A)
        Kronecker terms ``M (x) A`` with ``M`` of shape ``(d, d)`` and ``A``
        of shape ``(N, N)``.
    blockdiag : ndarray, optional
        Node-wise ``(N, d, d)`` matrices.
    apply_fn : callable, optional
        Matrix-free action on arrays of shape ``(d*N, k)``; used for
        composite operators instead of ``terms``.
    """

    def __init__(self, quadrature: SurfaceQuadrature, d: int, label: str, *, terms=(),
                 blockdiag=None, apply_fn=None, spectral_param: SpectralParam | None = None):
        self.quadrature = quadrature
        self.d = int(d)
        self.label = label
        self.spectral_param = spectral_param
        self.terms = list(terms)
        self.blockdiag = blockdiag
        self._apply_fn = apply_fn
        self._dense = None

    # -- basic properties
    @property
    def n(self) -> int:
        return self.quadrature.n

    @property
    def shape(self):
        k = self.d * self.n
        return (k, k)

    @property
    def structured(self) -> bool:
        return self._apply_fn is None

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights repeated per spinor component."""
        return np.repeat(self.quadrature.weights, self.d)

    def __repr__(self):
        return f"BoundaryOperator({self.label!r}, d={self.d}, N={self.n})"

    # -- action
    def apply(self, g):
        cols, shape = _as_cols(g, self.d * self.n)
        if self._dense is not None:
            return (self._dense @ cols).reshape(shape)
        if self._apply_fn is not None:
            return self._apply_fn(cols).reshape(shape)
        n, d = self.n, self.d
        G = cols.reshape(n, d, -1)
        k = G.shape[2]
        out = np.zeros(G.shape, dtype=np.result_type(cols.dtype, complex))
        for M, A in self.terms:
            H = np.einsum("ab,jbk->jak", M, G).reshape(n, d * k)
            out += (A @ H).reshape(n, d, k)
        if self.blockdiag is not None:
            out += np.einsum("iab,ibk->iak", self.blockdiag, G)
        return out.reshape(shape)

    __call__ = apply

    def __matmul__(self, other):
        if isinstance(other, BoundaryOperator):
            self._check(other)
            a, b = self, other
            if a.structured and not a.terms and b.structured and not b.terms:
                bd = np.einsum("iab,ibc->iac", a.blockdiag, b.blockdiag)
                return BoundaryOperator(a.quadrature, a.d, f"{a.label}*{b.label}", blockdiag=bd)
            return BoundaryOperator(
                a.quadrature, a.d, f"{a.label}*{b.label}",
                apply_fn=lambda x: a.apply(b.apply(x)),
                spectral_param=a.spectral_param or b.spectral_param,
            )
        return self.apply(other)

    def _check(self, other):
        if other.quadrature is not self.quadrature or other.d != self.d:
            raise ValueError("operators live on different discretizations")

    def _combine(self, other, sign, label):
        if np.isscalar(other):
            other = identity(self.quadrature, self.d, scale=other)
        self._check(other)
        if self.structured and other.structured:
            terms = self.terms + [(sign * M, A) for M, A in other.terms]
            bd = self.blockdiag
            if other.blockdiag is not None:
                bd = sign * other.blockdiag if bd is None else bd + sign * other.blockdiag
            return BoundaryOperator(self.quadrature, self.d, label, terms=terms, blockdiag=bd,
                                    spectral_param=self.spectral_param or other.spectral_param)
        a, b = self, other
        return BoundaryOperator(self.quadrature, self.d, label,
                                apply_fn=lambda x: a.apply(x) + sign * b.apply(x),
                                spectral_param=a.spectral_param or b.spectral_param)

    def __add__(self, other):
        return self._combine(other, 1.0, f"({self.label}+{getattr(other, 'label', other)})")

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0, f"({self.label}-{getattr(other, 'label', other)})")

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        if self.structured:
            bd = None if self.blockdiag is None else c * self.blockdiag
            return BoundaryOperator(self.quadrature, self.d, f"{c}*{self.label}",
                                    terms=[(c * M, A) for M, A in self.terms], blockdiag=bd,
                                    spectral_param=self.spectral_param)
        a = self
        return BoundaryOperator(self.quadrature, self.d, f"{c}*{self.label}",
                                apply_fn=lambda x: c * a.apply(x), spectral_param=a.spectral_param)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    # -- dense forms
    @property
    def matrix(self) -> np.ndarray:
        """Dense ``(d*N, d*N)`` complex matrix (built and cached on first use)."""
        if self._dense is None:
            dN = self.d * self.n
            if self.structured:
                out = np.zeros((dN, dN), dtype=complex)
                for M, A in self.terms:
                    out += np.kron(A, M)
                if self.blockdiag is not None:
                    for a in range(self.d):
                        for b in range(self.d):
                            out[a::self.d, b::self.d][np.diag_indices(self.n)] += self.blockdiag[:, a, b]
            else:
                out = np.zeros((dN, dN), dtype=complex)
                step = 256
                for c0 in range(0, dN, step):
                    E = np.zeros((dN, min(step, dN - c0)))
                    E[np.arange(c0, c0 + E.shape[1]), np.arange(E.shape[1])] = 1.0
                    out[:, c0:c0 + E.shape[1]] = self.apply(E)
            self._dense = out
        return self._dense

    def release(self):
        """Drop the cached dense matrix."""
        self._dense = None

    def symmetric_form(self) -> np.ndarray:
        """``W^{1/2} M W^{-1/2}``: the matrix in an orthonormal basis of the weighted space."""
        sw = np.sqrt(self.weights)
        return self.matrix * sw[:, None] / sw[None, :]

    def hermitian_part(self):
        """Hermitian part of the symmetrized matrix and the relative size of the rest."""
        M = self.symmetric_form()
        H = 0.5 * (M + M.conj().T)
        skew = np.linalg.norm(M - H) / max(np.linalg.norm(H), 1e-300)
        return H, float(skew)

    # -- weighted-metric utilities
    def inner(self, f, g):
        w = self.weights
        f = np.asarray(f).reshape(len(w), -1)
        g = np.asarray(g).reshape(len(w), -1)
        return np.einsum("i,ik,ik->k", w, f.conj(), g)

    def norm_of(self, g) -> np.ndarray:
        return np.sqrt(np.abs(self.inner(g, g)))

    def as_linear_operator(self) -> LinearOperator:
        """Action of ``W^{1/2} M W^{-1/2}`` (orthonormal-basis form) for iterative solvers."""
        sw = np.sqrt(self.weights)
        op = self
        adj = self.adjoint()

        def mv(x):
            x = np.asarray(x)
            y = x.reshape(len(sw), -1) / sw[:, None]
            return (sw[:, None] * op.apply(y)).reshape(x.shape)

        def rmv(x):
            x = np.asarray(x)
            y = x.reshape(len(sw), -1) / sw[:, None]
            return (sw[:, None] * adj.apply(y)).reshape(x.shape)

        return LinearOperator(self.shape, matvec=mv, rmatvec=rmv, dtype=complex)

    def adjoint(self) -> "BoundaryOperator":
        """Adjoint in the weighted inner product, ``W^{-1} M^H W``."""
        w = self.quadrature.weights
        if self.structured:
            terms = [(M.conj().T, (A.conj().T * w[None, :]) / w[:, None]) for M, A in self.terms]
            bd = None if self.blockdiag is None else np.conj(np.swapaxes(self.blockdiag, 1, 2))
            return BoundaryOperator(self.quadrature, self.d, f"adj({self.label})", terms=terms,
                                    blockdiag=bd)
        Wd = self.weights
        Madj = (self.matrix.conj().T * Wd[None, :]) / Wd[:, None]
        out = BoundaryOperator(self.quadrature, self.d, f"adj({self.label})",
                               apply_fn=lambda x: Madj @ x)
        out._dense = Madj
        return out

    def norm(self, *, dense_limit: int = 1500, tol: float = 1e-6) -> float:
        """Largest singular value in the weighted metric (iterative above ``dense_limit``)."""
        if self.d * self.n <= dense_limit:
            return float(np.linalg.norm(self.symmetric_form(), 2))
        s = svds(self.as_linear_operator(), k=1, return_singular_vectors=False, tol=tol,
                 random_state=0)
        return float(s[0])


def identity(q: SurfaceQuadrature, d: int, scale=1.0) -> BoundaryOperator:
    bd = np.broadcast_to(scale * np.eye(d, dtype=complex), (q.n, d, d)).copy()
    return BoundaryOperator(q, d, "I" if scale == 1.0 else f"{scale}I", blockdiag=bd)


# ---------------------------------------------------------------- assembly


def static_parts(q: SurfaceQuadrature):
    """Cached z-independent matrices ``S0`` (Laplace single layer) and Riesz ``R_k``."""
    cache = getattr(q, "_static_parts", None)
    if cache is None:
        if not q.is_parametric:
            warnings.warn("mesh geometry: flat-panel principal values (lower order)",
                          LowOrderWarning, stacklevel=3)
        cache = nf.assemble_static(q)
        q._static_parts = cache
    return cache


def _dynamic_parts(q: SurfaceQuadrature, p: SpectralParam):
    cache = getattr(q, "_dynamic_cache", None)
    if cache is None:
        cache = q._dynamic_cache = {}
    key = (p.z, p.m)
    if key not in cache:
        if len(cache) >= 2:
            cache.pop(next(iter(cache)))
        S0, R = static_parts(q)
        Q, Rd = nf.assemble_dynamic(q, p.w)
        cache[key] = (S0 + Q, R + Rd)
    return cache[key]


def assemble_single_layer(q: SurfaceQuadrature, p: SpectralParam) -> BoundaryOperator:
    """``S^z`` acting componentwise on 4-spinors."""
    S, _ = _dynamic_parts(q, p)
    return BoundaryOperator(q, 4, "S", terms=[(I4, S)], spectral_param=p)


def assemble_cauchy(q: SurfaceQuadrature, p: SpectralParam) -> BoundaryOperator:
    """Principal-value Cauchy operator ``C^z`` with kernel ``phi^z(x - y)``."""
    S, V = _dynamic_parts(q, p)
    terms = [(p.z * I4 + p.m * BETA, S)] + [(1j * ALPHA[k], V[k]) for k in range(3)]
    return BoundaryOperator(q, 4, "C", terms=terms, spectral_param=p)


def assemble_W(q: SurfaceQuadrature) -> BoundaryOperator:
    """Massless 2x2 Cauchy operator with kernel ``i sigma.(x-y)/(4 pi |x-y|^3)``."""
    _, R = static_parts(q)
    return BoundaryOperator(q, 2, "W", terms=[(1j * SIGMA[k], R[k]) for k in range(3)])


def riesz(q: SurfaceQuadrature, k: int) -> BoundaryOperator:
    _, R = static_parts(q)
    return BoundaryOperator(q, 1, f"R{k + 1}", terms=[(np.ones((1, 1)), R[k])])


def double_layer(q: SurfaceQuadrature) -> BoundaryOperator:
    """Harmonic double layer ``K = sum_k R_k N_k``."""
    _, R = static_parts(q)
    A = sum(R[k] * q.normals[None, :, k] for k in range(3))
    return BoundaryOperator(q, 1, "K", terms=[(np.ones((1, 1)), A)])


def adjoint_double_layer(q: SurfaceQuadrature) -> BoundaryOperator:
    """``K* = -sum_k N_k R_k`` (kernel ``N(x).(y - x)/(4 pi |x-y|^3)``)."""
    _, R = static_parts(q)
    A = -sum(q.normals[:, None, k] * R[k] for k in range(3))
    return BoundaryOperator(q, 1, "K*", terms=[(np.ones((1, 1)), A)])


def assemble_multiplication(q: SurfaceQuadrature, field, *, label="F",
                            require_hermitian=False, atol=1e-12) -> BoundaryOperator:
    """Block-diagonal operator with ``field(i)`` at node ``i``.

    ``field`` is an array ``(N, d, d)``, a single ``(d, d)`` matrix, or a
    callable mapping the ``(N, 3)`` normals to ``(N, d, d)`` matrices.
    """
    if callable(field):
        F = np.asarray(field(q.normals))
    else:
        F = np.asarray(field)
        if F.ndim == 2:
            F = np.broadcast_to(F, (q.n,) + F.shape)
    if F.shape[0] != q.n or F.shape[1] != F.shape[2]:
        raise ValueError("field must provide one square matrix per node")
    if require_hermitian:
        defect = np.max(np.abs(F - np.conj(np.swapaxes(F, 1, 2))))
        if defect > atol:
            raise ValueError(f"field is not Hermitian (defect {defect:.2e})")
    return BoundaryOperator(q, F.shape[1], label, blockdiag=np.array(F, dtype=complex))


def alpha_normal(q: SurfaceQuadrature) -> BoundaryOperator:
    return assemble_multiplication(q, alpha_dot(q.normals), label="aN")


def _cauchy_lambda(q, c: Coupling, p: SpectralParam):
    a, lam = c.strengths
    pa = SpectralParam(a, c.mass)
    if abs(p.m - c.mass) > 1e-14:
        raise ValueError("spectral parameter mass differs from the coupling mass")
    Ca = assemble_cauchy(q, pa)
    Cz = Ca if p.z == pa.z else assemble_cauchy(q, p)
    if lam == 0:
        raise ValueError("coupling constant must be nonzero")
    if c.family == "cauchy":
        aN = alpha_normal(q)
        core = (-4.0 / lam) * (aN @ Ca @ aN)
    else:
        core = (-4.0 / lam) * Ca
    plus = core + Cz
    minus = core - Cz
    if c.family == "sandwiched_cauchy" and p.z == pa.z and lam == 4.0:
        # identical matrices: the difference is exactly zero
        zero = BoundaryOperator(q, 4, "0", blockdiag=np.zeros((q.n, 4, 4), complex))
        plus = zero
    plus.label, minus.label = "Lambda+", "Lambda-"
    plus.spectral_param = minus.spectral_param = p
    return plus, minus


def lambda_operators(q: SurfaceQuadrature, c: Coupling, p: SpectralParam, *,
                     minus: str = "standard"):
    """``Lambda_+ = A^{-1} + C^z`` and its partner ``Lambda_-``.

    ``A^{-1}`` is applied as ``~A / sgn`` node by node.  ``minus='standard'``
    gives ``A^{-1} - C^z``; ``minus='kappa'`` gives ``A / sgn - C^z`` (the
    variant used for the combined electrostatic/Lorentz/magnetic family).
    The Cauchy-operator families use their own nonlocal couplings.
    """
    if not c.is_local:
        return _cauchy_lambda(q, c, p)
    conj, sgn = conjugate_and_sgn(c)
    from .gamma import coupling_matrix

    Ainv = conj(q.normals) / sgn
    C = assemble_cauchy(q, p)
    plus = C + BoundaryOperator(q, 4, "Ainv", blockdiag=Ainv)
    if minus == "standard":
        mdiag = Ainv
    elif minus == "kappa":
        mdiag = coupling_matrix(c, q.normals) / sgn
    else:
        raise ValueError("minus must be 'standard' or 'kappa'")
    minus_op = BoundaryOperator(q, 4, "Ainv", blockdiag=mdiag) - C
    plus.label, minus_op.label = "Lambda+", "Lambda-"
    return plus, minus_op


def calderon_projector(q: SurfaceQuadrature, p: SpectralParam, side: str, *,
                       transposed: bool = False, cauchy: BoundaryOperator | None = None):
    """``1/2 +- i (alpha.N) C^z``, or ``1/2 +- i C^z (alpha.N)`` when ``transposed``."""
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    sgn = 1.0 if side == "+" else -1.0
    C = cauchy if cauchy is not None else assemble_cauchy(q, p)
    aN = alpha_normal(q)
    prod = (C @ aN) if transposed else (aN @ C)
    out = prod * (sgn * 1j) + 0.5
    out.label = f"P{side}{'T' if transposed else ''}"
    return out


def resolved_basis(q: SurfaceQuadrature, fraction: float = 1.0 / 6.0, d: int = 4) -> np.ndarray:
    """Orthonormal basis of resolved densities in the symmetric (weighted) coordinates.

    The dominant eigenvectors of the static single layer are the smoothest
    surface modes; keeping ``ceil(fraction * N)`` of them for each of the
    ``d`` components removes the under-resolved modes whose discrete spectrum is
    spurious.  ``fraction = 1`` keeps everything.
    """
    key = (round(float(fraction), 12), d)
    cache = q.__dict__.setdefault("_resolved_basis", {})
    if key in cache:
        return cache[key]
    if d != 4 and (key[0], 4) in cache:
        V = cache[(key[0], 4)][::4, ::4]
        B = np.kron(V, np.eye(d))
        B.setflags(write=False)
        cache[key] = B
        return B
    n = q.n
    ns = n if fraction >= 1 else max(4, int(math.ceil(fraction * n)))
    if ns >= n:
        V = np.eye(n)
    else:
        S0 = static_parts(q)[0]
        sw = np.sqrt(q.weights)
        Ss = sw[:, None] * S0 / sw[None, :]
        Ss = 0.5 * (Ss + Ss.T)
        _, V = linalg.eigh(Ss, subset_by_index=[n - ns, n - 1])
        V = V[:, ::-1]
    B = np.kron(V, np.eye(d))
    B.setflags(write=False)
    cache[key] = B
    return B


# ---------------------------------------------------------------- off-surface


def evaluate_layer_potential(q: SurfaceQuadrature, g, p: SpectralParam, pts):
    """``Phi^z[g](x) = sum_j phi^z(x - x_j) w_j g_j`` with near-field correction.

    ``g`` has shape ``(4N,)`` or ``(4N, k)``; the result has shape
    ``(len(pts), 4)`` or ``(len(pts), 4, k)``.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    g = np.asarray(g)
    single = g.ndim == 1
    G = g.reshape(q.n, 4, -1)
    dist = _min_distance(q, pts)
    if np.any(dist < 0.1 * q.h):
        warnings.warn("evaluation point closer than 0.1 h to the surface; accuracy degraded",
                      stacklevel=2)
    w = p.w

    def kern(d):
        return nf.full_kernel(d, w)

    comp = nf.potential_components(q, pts, kern, G, dtype=complex)  # (n, 4comp, 4, k)
    scal = p.z * I4 + p.m * BETA
    out = np.einsum("ab,nbk->nak", scal, comp[:, 0])
    for k in range(3):
        out += 1j * np.einsum("ab,nbk->nak", ALPHA[k], comp[:, k + 1])
    return out[..., 0] if single else out


def _min_distance(q, pts):
    out = np.empty(len(pts))
    for a in range(0, len(pts), 512):
        d = np.linalg.norm(pts[a:a + 512, None, :] - q.points[None, :, :], axis=2)
        out[a:a + 512] = d.min(axis=1)
    return out


def nontangential_trace(q: SurfaceQuadrature, g, p: SpectralParam, side: str, t_levels):
    """Limit of ``Phi^z[g]`` along the normal from side ``'+'`` (interior) or ``'-'``.

    Values at the offsets ``t_levels`` are extrapolated to ``t = 0`` with the
    interpolating polynomial through all levels.
    """
    t_levels = np.asarray(t_levels, float)
    if t_levels.size < 2:
        raise ValueError("need at least two offset levels")
    if np.any(t_levels <= 0) or len(np.unique(t_levels)) != len(t_levels):
        raise ValueError("offset levels must be distinct and positive")
    g = np.asarray(g)
    vals = []
    for t in t_levels:
        pts = nontangential_offsets(q, t, side)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals.append(evaluate_layer_potential(q, g, p, pts))
    coef = np.array([
        np.prod([tk / (tk - tj) for k, tk in enumerate(t_levels) if k != j])
        for j, tj in enumerate(t_levels)
    ])
    out = np.tensordot(coef, np.array(vals), axes=(0, 0))
    return out.reshape(g.shape)


# ---------------------------------------------------------------- checks and io


def far_pair_mask(q: SurfaceQuadrature, eta: float = 2.5) -> np.ndarray:
    """Node pairs integrated with the plain rule in both directions."""
    if not q.is_parametric:
        return ~np.eye(q.n, dtype=bool)
    c, r = nf.panel_extent(q)
    pid = q.patch_id
    dist = np.linalg.norm(q.points[:, None, :] - c[None, :, :], axis=2)  # (N, P)
    far_np = dist > eta * r[None, :]
    m = far_np[:, pid]
    return m & m.T


def kernel_symmetry_defect(op: BoundaryOperator, eta: float = 2.5) -> float:
    """Relative self-adjointness defect of the plain-rule (kernel) entries.

    Every Kronecker term must have a Hermitian or skew-Hermitian spinor factor;
    the matching (skew-)symmetry of the kernel is then checked on far pairs.
    """
    if not op.structured:
        raise ValueError("kernel symmetry is defined for structured operators")
    q = op.quadrature
    mask = far_pair_mask(q, eta)
    if not mask.any():
        return float("nan")  # too coarse: every pair carries near-field corrections
    w = q.weights
    worst, scale = 0.0, 0.0
    for M, A in op.terms:
        if np.allclose(M, M.conj().T, atol=1e-14):
            s = 1.0
        elif np.allclose(M, -M.conj().T, atol=1e-14):
            s = -1.0
        else:
            raise ValueError("spinor factor neither Hermitian nor skew-Hermitian")
        B = A / w[None, :]
        D = np.where(mask, B - s * B.conj().T, 0.0)
        worst = max(worst, float(np.abs(D).max()) * float(np.abs(M).max()))
        scale = max(scale, float(np.abs(np.where(mask, B, 0.0)).max()) * float(np.abs(M).max()))
    return worst / scale if scale else 0.0


_HEADER = struct.Struct("<QQddd")


def dump_operator(op: BoundaryOperator, path) -> Path:
    """Write the dense matrix: header ``{d, N, z_re, z_im, m}`` then interleaved (re, im) float64."""
    path = Path(path)
    p = op.spectral_param
    z = complex(p.z) if p is not None else 0j
    m = float(p.m) if p is not None else 0.0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(op.d, op.n, z.real, z.imag, m))
        M = np.ascontiguousarray(op.matrix, dtype="<c16")
        fh.write(M.view("<f8").tobytes())
    return path


def load_operator(path):
    """Read a matrix written by :func:`dump_operator`; returns ``(header, matrix)``."""
    raw = Path(path).read_bytes()
    d, N, zr, zi, m = _HEADER.unpack_from(raw)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).view("<c16")
    dN = d * N
    if data.size != dN * dN:
        raise ValueError("truncated operator dump")
    return {"d": d, "N": N, "z": complex(zr, zi), "m": m}, data.reshape(dN, dN)


def smooth_densities(q: SurfaceQuadrature, count: int, *, d: int = 4, degree: int = 3,
                     seed: int = 42) -> np.ndarray:
    """Random smooth spinor densities: low-degree polynomials in the coordinates.

    Returns ``(d*N, count)`` complex, each column of unit weighted norm.
    """
    rng = np.random.default_rng(seed)
    x = q.points / np.max(np.abs(q.points))
    monos = [np.ones(q.n)]
    for deg in range(1, degree + 1):
        for i in range(deg + 1):
            for j in range(deg + 1 - i):
                k = deg - i - j
                monos.append(x[:, 0] ** i * x[:, 1] ** j * x[:, 2] ** k)
    B = np.stack(monos, axis=1)  # (N, nm)
    coef = rng.normal(size=(B.shape[1], d, count)) + 1j * rng.normal(size=(B.shape[1], d, count))
    G = np.einsum("im,mak->iak", B, coef).reshape(d * q.n, count)
    w = np.repeat(q.weights, d)
    G /= np.sqrt(np.einsum("i,ik->k", w, np.abs(G) ** 2))[None, :]
    return G
