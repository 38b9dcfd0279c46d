"""Numerical checks of the boundary-operator identities and qualitative diagnostics.

Identity defects are measured on random smooth densities (low-degree
polynomial spinors of unit weighted norm): the identities hold for the
continuous operators and a Nystrom discretization reproduces them on
resolved densities only.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .gamma import (
    BETA,
    GAMMA5,
    Coupling,
    alpha_dot,
    classify,
    conjugate_and_sgn,
    coupling_matrix,
    p4_holds,
    projector_defect,
    sigma_dot,
)
from .geometry import GeometrySpec, SurfaceQuadrature, build_quadrature
from .kernels import SpectralParam
from .operators import (
    BoundaryOperator,
    adjoint_double_layer,
    alpha_normal,
    assemble_cauchy,
    assemble_multiplication,
    assemble_single_layer,
    assemble_W,
    calderon_projector,
    double_layer,
    far_pair_mask,
    kernel_symmetry_defect,
    lambda_operators,
    nontangential_trace,
    resolved_basis,
    riesz,
    smooth_densities,
)
from .resolvent import _smallest_singular

__all__ = [
    "TRACE_LEVELS",
    "relative_defect",
    "identity_suite",
    "jump_relation_check",
    "adjoint_relation_defect",
    "DecayProfile",
    "compactness_profile",
    "confinement_check",
    "cauchy_coupling_identities",
    "eta_exact_inverse_check",
    "convergence_study",
    "observed_order",
    "to_markdown",
    "to_json",
]

# offsets (in units of h) used to extrapolate nontangential traces
TRACE_LEVELS = (0.25, 0.5, 0.75, 1.0)


def relative_defect(op_apply, G: np.ndarray, target: np.ndarray, ref: BoundaryOperator) -> float:
    """``max_k ||op(g_k) - target_k|| / ||g_k||`` in the weighted norm."""
    r = op_apply(G) - target
    return float(np.max(ref.norm_of(r) / ref.norm_of(G)))


def _mult(q, field_, label):
    return assemble_multiplication(q, field_, label=label)


def adjoint_relation_defect(q: SurfaceQuadrature, p: SpectralParam) -> float:
    """Far-pair defect of ``(C^z)^* = C^{conj z}`` in the weighted metric.

    Compares the Kronecker factors of both operators entry by entry on node
    pairs integrated with the plain rule.
    """
    C = assemble_cauchy(q, p)
    Cb = assemble_cauchy(q, p.conj())
    mask = far_pair_mask(q)
    if not mask.any():
        return math.nan
    w = q.weights
    worst, scale = 0.0, 0.0
    for (M1, A1), (M2, A2) in zip(C.terms, Cb.terms):
        # adjoint of M1 (x) A1 is M1^H (x) W^{-1} A1^H W
        B1 = (A1 / w[None, :]).conj().T
        B2 = A2 / w[None, :]
        # the spinor factors satisfy M1^H = +-M2
        if np.allclose(M1.conj().T, M2, atol=1e-14):
            s = 1.0
        elif np.allclose(M1.conj().T, -M2, atol=1e-14):
            s = -1.0
        else:
            raise ValueError("spinor factors do not match under conjugation")
        D = np.where(mask, s * B1 - B2, 0.0)
        amp = float(np.abs(M2).max())
        worst = max(worst, float(np.abs(D).max()) * amp)
        scale = max(scale, float(np.abs(np.where(mask, B2, 0.0)).max()) * amp)
    return worst / scale if scale else 0.0


def identity_suite(q: SurfaceQuadrature, m: float = 1.0, a_values=(0.0, 0.5), *,
                   n_densities: int = 6, seed: int = 42, z_complex: complex = 0.3 + 0.2j) -> dict:
    """Boundary-operator identities and norm bounds at one resolution."""
    G4 = smooth_densities(q, n_densities, seed=seed)
    G2 = smooth_densities(q, n_densities, d=2, seed=seed)
    aN = alpha_normal(q)
    out = {"N": q.n, "h": q.h, "resolution": q.descriptor.resolution, "mass": m, "a": {}}

    W = assemble_W(q)
    sN = _mult(q, sigma_dot(q.normals), "sN")
    T = sN @ W
    out["square_W"] = relative_defect(lambda g: T.apply(T.apply(g)), G2, -G2 / 4, W)
    out["norm_W"] = W.norm()
    out["symmetry_W"] = kernel_symmetry_defect(W)

    beta = _mult(q, BETA, "beta")
    g5b = _mult(q, GAMMA5 @ BETA, "g5b")
    for a in a_values:
        p = SpectralParam(a, m)
        C = assemble_cauchy(q, p)
        S = assemble_single_layer(q, p)
        NC = aN @ C
        rec = {}
        rec["square_C"] = relative_defect(lambda g: NC.apply(NC.apply(g)), G4, -G4 / 4, C)
        for side in ("+", "-"):
            for tr in (False, True):
                P = calderon_projector(q, p, side, transposed=tr, cauchy=C)
                PG = P.apply(G4)
                rec[f"calderon{side}{'T' if tr else ''}"] = relative_defect(P.apply, PG, PG, C)
        Pp = calderon_projector(q, p, "+", cauchy=C)
        Pm = calderon_projector(q, p, "-", cauchy=C)
        rec["complementary"] = relative_defect(lambda g: Pp.apply(Pm.apply(g)), G4, 0 * G4, C)
        rec["sum_identity"] = relative_defect(lambda g: Pp.apply(g) + Pm.apply(g), G4, G4, C)
        rec["norm_C"] = C.norm()
        rec["symmetry_C"] = kernel_symmetry_defect(C)
        rec["symmetry_S"] = kernel_symmetry_defect(S)
        mab = _mult(q, m * np.eye(4) + a * BETA, "m+aB")
        rec["beta_anticommutator"] = relative_defect(
            lambda g: beta.apply(C.apply(g)) + C.apply(beta.apply(g)), G4, 2 * mab.apply(S.apply(G4)), C)
        rec["gamma5beta_anticommutator"] = relative_defect(
            lambda g: g5b.apply(C.apply(g)) + C.apply(g5b.apply(g)), G4,
            2 * a * g5b.apply(S.apply(G4)), C)
        if a != 0.0:
            Cm = assemble_cauchy(q, SpectralParam(-a, m))
            rec["conjugation"] = relative_defect(
                lambda g: g5b.apply(C.apply(-g5b.apply(g))), G4, -Cm.apply(G4), C)
        anti = lambda g: aN.apply(C.apply(g)) + C.apply(aN.apply(g))  # noqa: E731
        rec["anticommutator_commutation"] = relative_defect(
            lambda g: C.apply(aN.apply(anti(g))), G4, anti(aN.apply(C.apply(G4))), C)
        out["a"][float(a)] = rec
    out["adjoint_relation"] = adjoint_relation_defect(q, SpectralParam(z_complex, m))
    return out


def jump_relation_check(q: SurfaceQuadrature, p: SpectralParam, *, n_densities: int = 8,
                        seed: int = 42, levels=TRACE_LEVELS) -> dict:
    """Nontangential traces against ``(-+ i/2 (alpha.N) + C^z)[g]``."""
    G = smooth_densities(q, n_densities, seed=seed)
    C = assemble_cauchy(q, p)
    aN = alpha_normal(q)
    CG, NG = C.apply(G), aN.apply(G)
    tl = np.asarray(levels) * q.h
    tp = nontangential_trace(q, G, p, "+", tl)
    tm = nontangential_trace(q, G, p, "-", tl)
    nG = C.norm_of(G)

    def rel(x):
        return float(np.max(C.norm_of(x) / nG))

    return {
        "interior": rel(tp - (-0.5j * NG + CG)),
        "exterior": rel(tm - (0.5j * NG + CG)),
        "jump": rel(tp - tm + 1j * NG),
        "average": rel(0.5 * (tp + tm) - CG),
        "levels_h": list(levels),
    }


# ---------------------------------------------------------------- compactness


@dataclass
class DecayProfile:
    label: str
    sigma: np.ndarray
    resolution: int
    n: int
    geometry: dict = field(default_factory=dict)

    @property
    def tail_ratios(self) -> dict:
        s = self.sigma
        return {k: float(s[k - 1] / s[0]) if len(s) >= k and s[0] > 0 else math.nan
                for k in (10, 25, 50)}

    def to_dict(self) -> dict:
        return {"label": self.label, "resolution": self.resolution, "N": self.n,
                "geometry": self.geometry, "sigma": self.sigma.tolist(),
                "tail_ratios": {str(k): v for k, v in self.tail_ratios.items()}}

    def to_csv(self) -> str:
        return "k,sigma\n" + "".join(f"{i + 1},{s:.12g}\n" for i, s in enumerate(self.sigma))


def _profile_operator(q: SurfaceQuadrature, which: str, m: float, a: float, j: int, k: int):
    if which == "anticommutator_C":
        C = assemble_cauchy(q, SpectralParam(a, m))
        aN = alpha_normal(q)
        return aN @ C + C @ aN
    if which == "K":
        return double_layer(q)
    if which == "K_star":
        return adjoint_double_layer(q)
    if which == "commutator_N_R":
        Nj = assemble_multiplication(q, q.normals[:, j, None, None], label=f"N{j + 1}")
        Rk = riesz(q, k)
        return Nj @ Rk - Rk @ Nj
    if which == "anticommutator_W":
        W = assemble_W(q)
        sN = _mult(q, sigma_dot(q.normals), "sN")
        return sN @ W + W @ sN
    raise ValueError(f"unknown operator {which!r}")


def compactness_profile(q: SurfaceQuadrature, which: str = "anticommutator_C", *, m: float = 1.0,
                        a: float = 0.0, j: int = 0, k: int = 1, n_sv: int = 60,
                        fraction: float | None = 1.0 / 6.0) -> DecayProfile:
    """Leading singular values (weighted metric) of a compactness witness.

    With ``fraction`` set, the operator is compressed onto the resolved
    densities (see :func:`resolved_basis`) before the SVD; under-resolved
    modes otherwise contribute singular values at the quadrature-error level
    that mask the tail.  ``fraction=None`` uses the full discretization.
    """
    op = _profile_operator(q, which, m, a, j, k)
    sw = np.sqrt(op.weights)
    if fraction is None:
        M = op.symmetric_form()
    else:
        B = resolved_basis(q, fraction, op.d)
        M = B.T @ (sw[:, None] * op.apply(B / sw[:, None]))
    s = linalg.svdvals(M)[:n_sv]
    label = which if which != "commutator_N_R" else f"[N{j + 1},R{k + 1}]"
    return DecayProfile(label, np.asarray(s, float), q.descriptor.resolution, q.n,
                        q.descriptor.to_dict())


# ---------------------------------------------------------------- confinement


def confinement_check(q: SurfaceQuadrature, c: Coupling, *, n_densities: int = 16,
                      seed: int = 42) -> dict:
    """(P3)/(P4) checks at every node and the transmission-condition residual.

    For ``sgn = -4`` in the combined family the traces of a domain element
    are ``(1/4 ~A -+ i/2 (alpha.N)) g``; multiplying by
    ``1/2 A +- i (alpha.N)`` leaves ``-+ i eta/2 g``, which vanishes for every
    ``g`` exactly when ``eta = 0`` (no coupling between the two sides).
    ``dc2_residual`` compares with ``-+ i eta/2 g``; ``dc2_residual_unhalved``
    compares with ``-+ i eta g``.
    """
    info = classify(c)
    conj, sgn = conjugate_and_sgn(c)
    N = q.normals
    A = coupling_matrix(c, N)
    At = conj(N)
    an = alpha_dot(N)
    report = {
        "coupling": c.to_dict(),
        "sgn": sgn,
        "critical": info["critical"],
        "p3_defect": projector_defect(c, N),
        "p4": p4_holds(c, N),
        "confining": info["confining"],
    }
    kap = c.as_kappa()
    if kap is not None and abs(sgn + 4.0) <= 1e-12:
        eta = kap[2]
        rng = np.random.default_rng(seed)
        g = rng.normal(size=(q.n, 4, n_densities)) + 1j * rng.normal(size=(q.n, 4, n_densities))
        worst_res, worst_full, worst_lhs = 0.0, 0.0, 0.0
        gn = np.linalg.norm(g)
        for s in (1.0, -1.0):
            trace = np.einsum("nab,nbk->nak", 0.25 * At - s * 0.5j * an, g)
            left = np.einsum("nab,nbk->nak", 0.5 * A + s * 1j * an, trace)
            worst_res = max(worst_res, float(np.linalg.norm(left + s * 0.5j * eta * g) / gn))
            worst_full = max(worst_full, float(np.linalg.norm(left + s * 1j * eta * g) / gn))
            worst_lhs = max(worst_lhs, float(np.linalg.norm(left) / gn))
        report["dc2_residual"] = worst_res
        report["dc2_residual_unhalved"] = worst_full
        report["dc2_left_norm"] = worst_lhs
        report["penetrable"] = bool(worst_lhs > 1e-12)
    return report


# ---------------------------------------------------------------- Cauchy-operator couplings


def _dense_sigma_min(op: BoundaryOperator) -> float:
    return float(linalg.svdvals(op.symmetric_form())[-1])


def cauchy_coupling_identities(q: SurfaceQuadrature, a: float, m: float = 1.0, *,
                               n_densities: int = 6, seed: int = 42,
                               sigma_limit: int = 3500) -> dict:
    """Identities of the Cauchy-operator couplings at ``z = a``."""
    p = SpectralParam(a, m)
    G = smooth_densities(q, n_densities, seed=seed)
    C = assemble_cauchy(q, p)
    aN = alpha_normal(q)
    lam, _ = lambda_operators(q, Coupling("cauchy", (a, 4.0), mass=m), p)
    sandwich = (aN @ C @ aN) * -4.0
    quarter = C @ C + 0.25
    rep = {"a": a, "mass": m, "N": q.n}
    rep["factorization"] = relative_defect(lam.apply, G, sandwich.apply(quarter.apply(G)), C)
    if 4 * q.n <= sigma_limit:
        s_lam = _dense_sigma_min(lam)
        s1, s2 = _dense_sigma_min(sandwich), _dense_sigma_min(quarter)
        rep["sigma_min_lambda"] = s_lam
        rep["sigma_min_factor_product"] = s1 * s2
        rep["invertible"] = bool(s_lam > 0.5 * s1 * s2)
    p0 = SpectralParam(0.0, m)
    lp, _ = lambda_operators(q, Coupling("sandwiched_cauchy", (0.0, 4.0), mass=m), p0)
    rep["lambda_prime_zero_max"] = float(np.max(np.abs(lp.apply(G))))
    for side in ("+", "-"):
        for tr in (False, True):
            P = calderon_projector(q, p, side, transposed=tr, cauchy=C)
            PG = P.apply(G)
            rep[f"calderon{side}{'T' if tr else ''}"] = relative_defect(P.apply, PG, PG, C)
    return rep


def eta_exact_inverse_check(q: SurfaceQuadrature, eta: float, p: SpectralParam, *,
                            n_densities: int = 6, seed: int = 42) -> dict:
    """Product identity and inverse normalization for the ``eta(alpha.N)`` coupling."""
    if eta == 0:
        raise ValueError("eta must be nonzero")
    c = Coupling.kappa(0.0, 0.0, eta)
    plus, minus = lambda_operators(q, c, p)
    aN = alpha_normal(q)
    G = smooth_densities(q, n_densities, seed=seed)
    prod = lambda g: eta * eta * aN.apply(minus.apply(aN.apply(plus.apply(g))))  # noqa: E731
    PG = prod(G)
    scalar = complex(np.sum(plus.inner(G, PG)) / np.sum(plus.inner(G, G)))
    expected = 1.0 + eta * eta / 4.0
    rep = {"eta": eta, "z": str(p.z), "scalar": scalar.real, "scalar_imag": scalar.imag,
           "expected": expected,
           "scalar_defect": abs(scalar - expected) / expected,
           "product_defect": relative_defect(prod, G, expected * G, plus)}
    # direct inverse by LU of the weighted symmetric form
    sw = np.sqrt(plus.weights)
    lu = linalg.lu_factor(plus.symmetric_form())
    X = linalg.lu_solve(lu, sw[:, None] * G) / sw[:, None]
    Y = aN.apply(minus.apply(aN.apply(G)))
    candidates = {
        "eta^2/(1+eta^2/4)": eta * eta / expected,
        "4eta^2/(eta+4)": 4 * eta * eta / (eta + 4) if eta != -4 else math.inf,
    }
    errs = {k: float(np.max(plus.norm_of(v * Y - X) / plus.norm_of(X))) for k, v in candidates.items()}
    rep["inverse_errors"] = errs
    rep["inverse_match"] = min(errs, key=errs.get)
    rep["sigma_min"] = _smallest_singular(lu, plus.symmetric_form().shape[0])
    return rep


# ---------------------------------------------------------------- convergence


def observed_order(h, defects) -> float:
    """Least-squares slope of ``log defect`` against ``log h``."""
    h, d = np.asarray(h, float), np.asarray(defects, float)
    ok = d > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(h[ok]), np.log(d[ok]), 1)[0])


def convergence_study(spec: GeometrySpec, resolutions, m: float = 1.0, a_values=(0.0, 0.5),
                      *, seed: int = 42, log=None) -> dict:
    """Identity defects over several resolutions with observed orders."""
    rows = []
    for k in resolutions:
        t0 = time.perf_counter()
        q = build_quadrature(replace(spec, resolution=int(k)))
        res = identity_suite(q, m, a_values, seed=seed)
        res["seconds"] = time.perf_counter() - t0
        rows.append(res)
        if log is not None:
            log(f"resolution {k}: N={q.n} square_W={res['square_W']:.3e} ({res['seconds']:.1f}s)")
        del q
    h = [r["h"] for r in rows]
    orders = {"square_W": observed_order(h, [r["square_W"] for r in rows])}
    for a in a_values:
        for key in ("square_C", "calderon+", "calderon+T"):
            orders[f"{key}(a={a})"] = observed_order(h, [r["a"][float(a)][key] for r in rows])
    return {"rows": rows, "orders": orders}


# ---------------------------------------------------------------- reporting


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, DecayProfile):
        return x.to_dict()
    return x


def to_json(report, path=None) -> str:
    text = json.dumps(_jsonable(report), indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def to_markdown(report: dict, title: str = "Report") -> str:
    """Flatten a nested report into a Markdown key/value table; profiles become CSV blocks."""
    lines = [f"# {title}", "", "| key | value |", "|---|---|"]
    blocks = []

    def walk(prefix, v):
        if isinstance(v, DecayProfile):
            blocks.append((prefix, v))
            lines.append(f"| {prefix}.tail_ratios | {v.tail_ratios} |")
        elif isinstance(v, dict):
            for k, w in v.items():
                walk(f"{prefix}.{k}" if prefix else str(k), w)
        elif isinstance(v, (list, tuple, np.ndarray)) and len(v) > 12:
            lines.append(f"| {prefix} | [{len(v)} values] |")
        elif isinstance(v, float):
            lines.append(f"| {prefix} | {v:.6g} |")
        else:
            lines.append(f"| {prefix} | {v} |")

    walk("", report)
    for name, prof in blocks:
        lines += ["", f"## {name}", "", "```csv", prof.to_csv().rstrip(), "```"]
    return "\n".join(lines) + "\n"
