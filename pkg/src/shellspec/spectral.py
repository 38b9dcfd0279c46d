"""Gap eigenvalues of delta-shell Dirac operators via the boundary operator ``Lambda_+``.

A gap energy ``a`` is an eigenvalue exactly when ``Lambda^a_+`` has a
nontrivial kernel.  ``Lambda^a_+`` is self-adjoint in the weighted inner
product.  Nystrom matrices are not exactly symmetric and their
under-resolved modes carry a spurious spectrum that fills the gap of the
Cauchy operator, so the scan works with the compression of the symmetric form
onto the dominant eigenvectors of the static single layer (the smoothest
surface modes).  The Hermitian part of that compression is diagonalized and
the discarded skew part is recorded.

Roots are located from changes of the inertia (number of negative
eigenvalues) between samples and refined with Brent's method on the crossing
eigenvalue.  Time-reversal symmetry makes every eigenvalue of ``Lambda^a_+``
at least doubly degenerate, so roots come with even multiplicity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import brentq, minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .gamma import Coupling, classify
from .geometry import SurfaceQuadrature
from .kernels import SpectralParam
from .operators import assemble_cauchy, evaluate_layer_potential, lambda_operators, resolved_basis

__all__ = [
    "CriticalCouplingError",
    "SpectralScan",
    "Root",
    "compressed_lambda",
    "lambda_hermitian",
    "chebyshev_grid",
    "scan",
    "refine_roots",
    "determinant_sweep",
    "eigen_density",
    "kappa_tilde",
    "shell_map_em",
    "mapped_coupling",
    "spectral_correspondence_test",
    "sufficiency_classifier",
    "norm_profile",
    "GapSpectrumEstimator",
]


# roots whose compressed kernel vector leaves a larger relative residual on the
# full discretization are flagged as unresolved
RESOLVED_RESIDUAL = 0.05


class CriticalCouplingError(ValueError):
    """The coupling is critical; the boundary operator is not Fredholm-controlled."""


@dataclass
class Root:
    a: float
    multiplicity: int
    residual: float
    bracket: tuple
    branch_value: float

    @property
    def resolved(self) -> bool:
        """Whether the near-kernel density is resolved by the full discretization."""
        return self.residual <= RESOLVED_RESIDUAL

    def to_dict(self):
        return {"a": self.a, "multiplicity": self.multiplicity, "residual": self.residual,
                "bracket": list(self.bracket), "branch_value": self.branch_value,
                "resolved": self.resolved}


@dataclass
class SpectralScan:
    """Sampled branch values of ``Lambda^a_+`` and located roots."""

    coupling: Coupling
    mass: float
    geometry: dict
    resolution: int
    a_samples: np.ndarray
    branches: np.ndarray  # (n_samples, n_track) eigenvalues nearest zero, ascending
    min_eigs: np.ndarray  # signed eigenvalue of smallest magnitude per sample
    neg_counts: np.ndarray
    skew: np.ndarray  # relative anti-Hermitian part discarded per sample
    roots: list = field(default_factory=list)

    @property
    def root_values(self) -> np.ndarray:
        return np.array([r.a for r in self.roots])

    def to_dict(self) -> dict:
        return {
            "coupling": self.coupling.to_dict(),
            "mass": self.mass,
            "geometry": self.geometry,
            "resolution": self.resolution,
            "a_samples": self.a_samples.tolist(),
            "branches": self.branches.tolist(),
            "min_eigs": self.min_eigs.tolist(),
            "max_skew": float(np.max(self.skew)) if len(self.skew) else 0.0,
            "roots": [r.to_dict() for r in self.roots],
        }

    def to_csv(self) -> str:
        k = self.branches.shape[1]
        lines = ["a,min_eig,neg_count," + ",".join(f"branch{j}" for j in range(k))]
        for a, me, nc, br in zip(self.a_samples, self.min_eigs, self.neg_counts, self.branches):
            lines.append(f"{a:.12g},{me:.12g},{int(nc)}," + ",".join(f"{b:.12g}" for b in br))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- core evaluations


def _check_scannable(c: Coupling):
    if c.is_local:
        info = classify(c)
        if info.get("degenerate"):
            raise CriticalCouplingError(f"{c.family} coupling has sgn = 0 (degenerate)")
        if info["critical"]:
            raise CriticalCouplingError(
                f"{c.family} coupling with strengths {c.strengths} is critical (sgn = 4): "
                "Lambda_+ is then compact up to zero and the gap scan is refused"
            )


def compressed_lambda(q: SurfaceQuadrature, c: Coupling, a: float, m: float,
                      fraction: float = 1.0 / 6.0):
    """Compression ``B^H W^{1/2} Lambda^a_+ W^{-1/2} B`` onto the resolved basis."""
    p = SpectralParam(a, m)
    plus, _ = lambda_operators(q, c, p)
    B = resolved_basis(q, fraction)
    sw = np.sqrt(plus.weights)
    return B.conj().T @ (sw[:, None] * plus.apply(B / sw[:, None]))


def lambda_hermitian(q: SurfaceQuadrature, c: Coupling, a: float, m: float,
                     fraction: float = 1.0 / 6.0):
    """Hermitian part of the compressed ``Lambda^a_+`` and the relative skew part dropped."""
    M = compressed_lambda(q, c, a, m, fraction)
    H = 0.5 * (M + M.conj().T)
    skew = float(np.linalg.norm(M - H) / max(np.linalg.norm(H), 1e-300))
    return H, skew


def chebyshev_grid(n: int, m: float, margin: float = 0.999) -> np.ndarray:
    k = np.arange(n)
    x = -np.cos((2 * k + 1) * np.pi / (2 * n))
    return margin * m * x


class _Evaluator:
    """Memoized eigen-decompositions of the compressed ``Lambda^a_+``."""

    def __init__(self, q, c, m, fraction):
        self.q, self.c, self.m, self.fraction = q, c, m, fraction
        self._cache = {}

    def __call__(self, a: float):
        a = float(a)
        if a not in self._cache:
            H, skew = lambda_hermitian(self.q, self.c, a, self.m, self.fraction)
            w, v = linalg.eigh(H)
            self._cache[a] = (w, v, skew)
        return self._cache[a]

    def neg(self, a):
        return int(np.sum(self(a)[0] < 0))

    def value(self, a, index):
        return float(self(a)[0][index])

    def nearest(self, a):
        w = self(a)[0]
        return float(w[np.argmin(np.abs(w))])


def scan(q: SurfaceQuadrature, c: Coupling, m: float, *, n_samples: int = 64,
         margin: float = 0.999, tol_root: float | None = None, n_track: int = 8,
         a_samples=None, fraction: float = 1.0 / 6.0) -> SpectralScan:
    """Scan the gap for eigenvalues of the coupled operator.

    Raises
    ------
    CriticalCouplingError
        For critical or degenerate couplings.
    """
    _check_scannable(c)
    if not m > 0:
        raise ValueError("mass must be positive")
    tol_root = 1e-6 * m if tol_root is None else tol_root
    if a_samples is None:
        a_samples = chebyshev_grid(n_samples, m, margin)
    a_samples = np.sort(np.asarray(a_samples, float))
    if np.any(np.abs(a_samples) >= m):
        raise ValueError("samples must lie strictly inside the gap (-m, m)")
    ev = _Evaluator(q, c, m, fraction)
    a_list = list(a_samples)
    # refine where branch magnitudes dip or adjacent eigenvectors lose overlap
    for _ in range(3):
        extra = []
        mins = np.array([abs(ev.nearest(a)) for a in a_list])
        for i in range(len(a_list) - 1):
            lo, hi = a_list[i], a_list[i + 1]
            dip = (0 < i < len(a_list) - 1 and mins[i] < 0.25 * min(mins[i - 1], mins[i + 1]))
            if dip or _overlap(ev, lo, hi, n_track) < 0.9:
                extra.append(0.5 * (lo + hi))
        if not extra:
            break
        a_list = sorted(set(a_list) | set(extra))
    a_samples = np.array(a_list)
    recs = [ev(a) for a in a_samples]
    branches = np.array([np.sort(w[np.argsort(np.abs(w))[:n_track]]) for w, _, _ in recs])
    min_eigs = np.array([w[np.argmin(np.abs(w))] for w, _, _ in recs])
    negs = np.array([int(np.sum(w < 0)) for w, _, _ in recs])
    skew = np.array([s for _, _, s in recs])
    out = SpectralScan(c, m, q.descriptor.to_dict(), q.descriptor.resolution, a_samples,
                       branches, min_eigs, negs, skew)
    for i in range(len(a_samples) - 1):
        if negs[i] != negs[i + 1]:
            out.roots.extend(_refine_bracket(ev, a_samples[i], a_samples[i + 1],
                                             negs[i], negs[i + 1], tol_root))
    return out


def _overlap(ev, lo, hi, n_track):
    """Smallest overlap between the near-zero eigenspaces at adjacent samples."""
    w0, v0, _ = ev(lo)
    w1, v1, _ = ev(hi)
    i0 = np.argsort(np.abs(w0))[:n_track]
    i1 = np.argsort(np.abs(w1))[: n_track + 4]
    # fraction of each tracked vector captured by the neighbouring near-zero space
    proj = np.linalg.norm(v1[:, i1].conj().T @ v0[:, i0], axis=0) ** 2
    # only the branches closest to zero matter for root detection
    return float(np.min(proj[: max(2, n_track // 2)]))


def _refine_bracket(ev, lo, hi, neg_lo, neg_hi, tol_root, depth=0):
    """Locate the crossings inside ``[lo, hi]`` where the inertia changes."""
    if depth > 40 or hi - lo < 1e-13:
        return []
    idx = min(neg_lo, neg_hi)
    f = lambda a: ev.value(a, idx)  # noqa: E731
    if f(lo) * f(hi) > 0:
        mid = 0.5 * (lo + hi)
        nm = ev.neg(mid)
        out = []
        if nm != neg_lo:
            out += _refine_bracket(ev, lo, mid, neg_lo, nm, tol_root, depth + 1)
        if nm != neg_hi:
            out += _refine_bracket(ev, mid, hi, nm, neg_hi, tol_root, depth + 1)
        return out
    a_star = brentq(f, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)
    w, v, _ = ev(a_star)
    mult = max(1, int(np.sum(np.abs(w) <= 10 * tol_root)))
    near = np.argsort(np.abs(w))[:mult]
    res = _residual(ev, a_star, v[:, near])
    roots = [Root(float(a_star), mult, res, (float(lo), float(hi)), float(w[near[0]]))]
    if mult < abs(neg_hi - neg_lo):
        # other crossings share the bracket
        eps = 1e-9 * max(1.0, abs(a_star))
        if a_star - eps > lo:
            n_left = ev.neg(a_star - eps)
            if n_left != neg_lo:
                roots += _refine_bracket(ev, lo, a_star - eps, neg_lo, n_left, tol_root, depth + 1)
        if a_star + eps < hi:
            n_right = ev.neg(a_star + eps)
            if n_right != neg_hi:
                roots += _refine_bracket(ev, a_star + eps, hi, n_right, neg_hi, tol_root, depth + 1)
    return sorted(roots, key=lambda r: r.a)


def _residual(ev, a, vecs_c):
    """``max ||Lambda^a_+ g|| / ||g||`` for near-kernel vectors, on the full discretization."""
    q, c, m = ev.q, ev.c, ev.m
    p = SpectralParam(a, m)
    plus, _ = lambda_operators(q, c, p)
    B = resolved_basis(q, ev.fraction)
    sw = np.sqrt(plus.weights)
    g = (B @ vecs_c) / sw[:, None]
    r = plus.apply(g)
    return float(np.max(plus.norm_of(r) / plus.norm_of(g)))


def refine_roots(q: SurfaceQuadrature, c: Coupling, m: float, guesses, *, window: float = 0.02,
                 fraction: float = 1.0 / 6.0):
    """Re-locate roots on another discretization, starting from ``guesses``.

    Brent's method on the compressed branch through zero inside
    ``[a0 - window, a0 + window]``; the bracket shrinks if it holds several
    crossings.
    """
    ev = _Evaluator(q, c, m, fraction)
    out = []
    for a0 in guesses:
        lo, hi = max(a0 - window, -0.9999 * m), min(a0 + window, 0.9999 * m)
        nl, nh = ev.neg(lo), ev.neg(hi)
        if nl == nh:
            res = minimize_scalar(lambda a: abs(ev.nearest(a)), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            out.append(float(res.x))
            continue
        roots = _refine_bracket(ev, lo, hi, nl, nh, 1e-6 * m)
        best = min(roots, key=lambda r: abs(r.a - a0))
        out.append(best.a)
    return np.array(out)


def determinant_sweep(q: SurfaceQuadrature, c: Coupling, m: float, a_grid, *,
                      depth_threshold: float = 8.0, fraction: float = 1.0 / 6.0):
    """Brute-force oracle: roots as deep minima of ``log|det Lambda^a_+|``.

    Eigenvalues of ``Lambda^a_+`` come in degenerate pairs, so the
    determinant never changes sign; zeros are found as local minima of the
    log-modulus, refined with a bounded scalar minimization and accepted when
    they lie ``depth_threshold`` e-folds below the neighbouring samples.
    """
    a_grid = np.sort(np.asarray(a_grid, float))

    def logdet(a):
        H, _ = lambda_hermitian(q, c, a, m, fraction)
        return float(np.linalg.slogdet(H)[1])

    vals = np.array([logdet(a) for a in a_grid])
    roots = []
    for i in range(1, len(a_grid) - 1):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]:
            res = minimize_scalar(logdet, bounds=(a_grid[i - 1], a_grid[i + 1]), method="bounded",
                                  options={"xatol": 1e-12})
            if min(vals[i - 1], vals[i + 1]) - res.fun > depth_threshold:
                roots.append(float(res.x))
    return np.array(roots), vals


def eigen_density(q: SurfaceQuadrature, c: Coupling, m: float, a_star: float, *,
                  tol: float | None = None, fraction: float = 1.0 / 6.0):
    """Near-kernel densities of ``Lambda^{a*}_+`` and the eigenfunction evaluator.

    Returns ``(g, phi)`` where ``g`` has shape ``(4N, k)`` with unit weighted
    norm columns (``k`` the near-kernel dimension) and ``phi(pts)`` evaluates
    ``Phi^{a*}[g]``.
    """
    tol = 1e-6 * m if tol is None else tol
    H, _ = lambda_hermitian(q, c, a_star, m, fraction)
    w, v = linalg.eigh(H)
    order = np.argsort(np.abs(w))
    k = max(1, int(np.sum(np.abs(w) <= 10 * tol)))
    # keep exact degenerate partners (time-reversal pairs)
    while k < len(w) and abs(abs(w[order[k]]) - abs(w[order[k - 1]])) <= 1e-8 * max(1.0, abs(w[order[k]])) \
            and abs(w[order[k]]) < 1e-3:
        k += 1
    B = resolved_basis(q, fraction)
    sw = np.sqrt(np.repeat(q.weights, 4))
    g = (B @ v[:, order[:k]]) / sw[:, None]
    g /= np.sqrt(np.einsum("i,ik->k", sw**2, np.abs(g) ** 2))[None, :]
    p = SpectralParam(a_star, m)

    def phi(pts):
        return evaluate_layer_potential(q, g, p, pts)

    return g, phi


# ---------------------------------------------------------------- mappings


def kappa_tilde(c) -> tuple[float, float, float]:
    """``(-4 eps/s, -4 mu/s, 4 eta/s)`` with ``s = eps^2 - mu^2 - eta^2``."""
    if isinstance(c, Coupling):
        k = c.as_kappa()
        if k is None:
            raise ValueError("kappa_tilde needs a coupling of the combined family")
    else:
        k = tuple(float(x) for x in c)
    e, mu, eta = k
    s = e * e - mu * mu - eta * eta
    if s == 0:
        raise ValueError("sgn = 0: mapping undefined")
    return (-4 * e / s, -4 * mu / s, 4 * eta / s)


def shell_map_em(eps: float, mu: float) -> tuple[float, float]:
    """``(-4 eps/(eps^2 - mu^2), -4 mu/(eps^2 - mu^2))``."""
    s = eps * eps - mu * mu
    if s == 0:
        raise ValueError("eps^2 = mu^2: mapping undefined")
    return (-4 * eps / s, -4 * mu / s)


def mapped_coupling(c: Coupling) -> Coupling:
    return Coupling.kappa(*kappa_tilde(c))


def spectral_correspondence_test(q: SurfaceQuadrature, c: Coupling, m: float, *,
                                 tol: float | None = None, scan_kwargs=None,
                                 scans=None) -> dict:
    """Compare the roots of ``c`` with those of the mapped coupling at ``+a`` and ``-a``."""
    tol = 1e-3 * m if tol is None else tol
    scan_kwargs = scan_kwargs or {}
    ct = mapped_coupling(c)
    if scans is None:
        s1 = scan(q, c, m, **scan_kwargs)
        s2 = scan(q, ct, m, **scan_kwargs)
    else:
        s1, s2 = scans
    r1, r2 = s1.root_values, s2.root_values

    def match(x, y):
        if len(x) == 0:
            return True, 0.0
        if len(y) == 0:
            return False, math.inf
        d = np.abs(x[:, None] - y[None, :]).min(axis=1)
        return bool(np.all(d <= tol)), float(d.max())

    plus_fw, plus_err = match(r1, r2)
    plus_bw, plus_err2 = match(r2, r1)
    minus_fw, minus_err = match(r1, -r2)
    minus_bw, minus_err2 = match(-r2, r1)
    plus_ok = plus_fw and plus_bw
    minus_ok = minus_fw and minus_bw
    if len(r1) == 0 and len(r2) == 0:
        verdict = "both spectra empty (consistent with either convention)"
    elif plus_ok and not minus_ok:
        verdict = "+a supported"
    elif minus_ok and not plus_ok:
        verdict = "-a supported"
    elif plus_ok and minus_ok:
        verdict = "both supported (spectrum symmetric under a -> -a)"
    else:
        verdict = "neither supported"
    return {
        "coupling": c.to_dict(),
        "mapped": ct.to_dict(),
        "roots": r1.tolist(),
        "mapped_roots": r2.tolist(),
        "plus_convention": {"ok": plus_ok, "max_error": max(plus_err, plus_err2)},
        "minus_convention": {"ok": minus_ok, "max_error": max(minus_err, minus_err2)},
        "tolerance": tol,
        "verdict": verdict,
    }


def norm_profile(q: SurfaceQuadrature, m: float, n_points: int = 9, margin: float = 0.999):
    """Discrete ``||C^a||`` on a uniform grid of ``n_points`` energies in the gap."""
    grid = np.linspace(-margin * m, margin * m, n_points)
    norms = np.array([assemble_cauchy(q, SpectralParam(a, m)).norm() for a in grid])
    return grid, norms


def sufficiency_classifier(eps: float, mu: float, norms: dict) -> dict:
    """Which sufficient self-adjointness condition holds with the discrete norm estimates.

    ``norms`` holds ``C`` (``||C_Sigma||``), ``W`` (``||W||``) and optionally
    ``C0``.  The two-sided bound on ``eps^2 - mu^2`` involving ``||W||`` is
    empty whenever ``||W|| >= 1/2``; it is evaluated literally and also as
    the union of its two one-sided cases.
    """
    s = eps * eps - mu * mu
    nC, nW = float(norms["C"]), float(norms["W"])
    checks = {
        "lorentz_dominant": abs(eps) != abs(mu) and mu * mu > eps * eps,
        "small_coupling": 0 < abs(s) < 1.0 / nC**2,
        "w_window": abs(eps) != abs(mu) and eps * eps > mu * mu and 16 * nW**2 < s < 1.0 / nW**2,
    }
    union_b = eps * eps > mu * mu and (s < 1.0 / nW**2 or s > 16 * nW**2)
    if abs(s - 4.0) < 1e-12:
        chosen = "none"
        note = "eps^2 - mu^2 = 4 is critical"
    else:
        chosen = next((k for k in ("lorentz_dominant", "small_coupling", "w_window") if checks[k]), "none")
        note = ""
    return {
        "selfadjoint_by": chosen,
        "conditions": checks,
        "w_window_as_union": bool(union_b and abs(s - 4.0) >= 1e-12),
        "w_window_empty": 16 * nW**2 >= 1.0 / nW**2,
        "note": note,
    }


# ---------------------------------------------------------------- estimator


class GapSpectrumEstimator(BaseEstimator):
    """Estimator-style front end to :func:`scan`.

    ``fit`` takes a :class:`SurfaceQuadrature`; ``predict`` returns the signed
    eigenvalue of smallest magnitude of ``Lambda^a_+`` at the requested
    energies.
    """

    def __init__(self, coupling: Coupling | None = None, mass: float = 1.0, n_samples: int = 64,
                 margin: float = 0.999, tol_root: float | None = None, n_track: int = 8,
                 fraction: float = 1.0 / 6.0):
        self.fraction = fraction
        self.coupling = coupling
        self.mass = mass
        self.n_samples = n_samples
        self.margin = margin
        self.tol_root = tol_root
        self.n_track = n_track

    def fit(self, X: SurfaceQuadrature, y=None):
        if not isinstance(X, SurfaceQuadrature):
            raise TypeError("fit expects a SurfaceQuadrature")
        if self.coupling is None:
            raise ValueError("coupling must be set")
        self.quadrature_ = X
        self.scan_ = scan(X, self.coupling, self.mass, n_samples=self.n_samples,
                          margin=self.margin, tol_root=self.tol_root, n_track=self.n_track,
                          fraction=self.fraction)
        self.roots_ = self.scan_.root_values
        return self

    def predict(self, A):
        check_is_fitted(self, "scan_")
        A = check_array(np.asarray(A, float).reshape(-1, 1), ensure_2d=True).ravel()
        if np.any(np.abs(A) >= self.mass):
            raise ValueError("energies must lie strictly inside the gap")
        ev = _Evaluator(self.quadrature_, self.coupling, self.mass, self.fraction)
        return np.array([ev.nearest(a) for a in A])
