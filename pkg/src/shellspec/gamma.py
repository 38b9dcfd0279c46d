"""Dirac matrix algebra, delta-shell coupling matrices and their classification.

All matrices use the standard (Dirac) representation built from Pauli
blocks.  Functions accept a single unit normal of shape ``(3,)`` or a stack of
normals of shape ``(n, 3)``; the result then carries the same leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SIGMA", "ALPHA", "BETA", "GAMMA5", "I2", "I4",
    "dirac_matrices", "alpha_dot", "sigma_dot",
    "Coupling", "DegenerateCouplingError", "LOCAL_FAMILIES",
    "coupling_matrix", "conjugate_and_sgn", "conjugate_matrix",
    "beta_transform", "gamma_transform", "classify",
    "projector_defect", "p4_holds",
]

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_Z2 = np.zeros((2, 2), dtype=complex)
ALPHA = np.array([np.block([[_Z2, s], [s, _Z2]]) for s in SIGMA])
BETA = np.block([[I2, _Z2], [_Z2, -I2]])
GAMMA5 = -1j * ALPHA[0] @ ALPHA[1] @ ALPHA[2]

for _m in (ALPHA, BETA, GAMMA5):
    _m.setflags(write=False)


def dirac_matrices():
    """Return copies of ``(alpha1, alpha2, alpha3, beta, gamma5)``."""
    return ALPHA[0].copy(), ALPHA[1].copy(), ALPHA[2].copy(), BETA.copy(), GAMMA5.copy()


def alpha_dot(v) -> np.ndarray:
    """``sum_k v_k alpha_k`` for a vector or a stack of vectors."""
    v = np.asarray(v, dtype=float)
    return np.tensordot(v, ALPHA, axes=([-1], [0]))


def sigma_dot(v) -> np.ndarray:
    """``sum_k v_k sigma_k`` (2x2) for a vector or a stack of vectors."""
    v = np.asarray(v, dtype=float)
    return np.tensordot(v, SIGMA, axes=([-1], [0]))


class DegenerateCouplingError(ValueError):
    """Raised for couplings with ``sgn == 0``, where ``A`` is not invertible."""


# family -> number of strengths
_ARITY = {
    "electrostatic": 1,
    "lorentz": 1,
    "magnetic": 1,
    "combined": 3,
    "modified_electrostatic": 1,
    "modified_lorentz": 1,
    "modified_magnetic": 1,
    "anomalous_magnetic": 1,
    "modified_anomalous_magnetic": 1,
    "cauchy": 2,
    "sandwiched_cauchy": 2,
}

LOCAL_FAMILIES = tuple(f for f in _ARITY if f not in ("cauchy", "sandwiched_cauchy"))

_ALIASES = {
    "epsilon": "electrostatic",
    "mu": "lorentz",
    "eta": "magnetic",
    "kappa": "combined",
    "epsilon_tilde": "modified_electrostatic",
    "mu_tilde": "modified_lorentz",
    "eta_tilde": "modified_magnetic",
    "upsilon": "anomalous_magnetic",
    "upsilon_tilde": "modified_anomalous_magnetic",
    "cauchy_lambda": "cauchy",
    "cauchy_lambda_prime": "sandwiched_cauchy",
}


@dataclass(frozen=True)
class Coupling:
    """A delta-shell potential family with its real strengths.

    ``combined`` takes ``(epsilon, mu, eta)``.  The two Cauchy families take
    ``(a, lam)`` where ``a`` is a gap energy, and need ``mass``.
    """

    family: str
    strengths: tuple = field(default=())
    mass: float | None = None

    def __post_init__(self):
        family = _ALIASES.get(self.family, self.family)
        if family not in _ARITY:
            raise ValueError(f"unknown coupling family {self.family!r}")
        strengths = tuple(float(s) for s in np.atleast_1d(self.strengths))
        if len(strengths) != _ARITY[family]:
            raise ValueError(
                f"{family} takes {_ARITY[family]} strength(s), got {len(strengths)}"
            )
        if not all(np.isfinite(strengths)):
            raise ValueError("coupling strengths must be finite")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "strengths", strengths)
        if family in ("cauchy", "sandwiched_cauchy"):
            if self.mass is None or self.mass <= 0:
                raise ValueError("Cauchy-operator couplings need a positive mass")
            a = strengths[0]
            if not -self.mass < a < self.mass:
                raise ValueError(f"energy a={a} must lie in the gap (-m, m)")

    @classmethod
    def kappa(cls, epsilon: float, mu: float = 0.0, eta: float = 0.0) -> "Coupling":
        return cls("combined", (epsilon, mu, eta))

    @property
    def is_local(self) -> bool:
        return self.family in LOCAL_FAMILIES

    @property
    def sgn(self) -> float:
        return conjugate_and_sgn(self)[1]

    def as_kappa(self) -> tuple[float, float, float] | None:
        """``(epsilon, mu, eta)`` when the coupling lies in the combined family."""
        s = self.strengths
        if self.family == "combined":
            return s
        if self.family == "electrostatic":
            return (s[0], 0.0, 0.0)
        if self.family == "lorentz":
            return (0.0, s[0], 0.0)
        if self.family == "magnetic":
            return (0.0, 0.0, s[0])
        return None

    def to_dict(self) -> dict:
        out = {"family": self.family, "strengths": list(self.strengths)}
        if self.mass is not None:
            out["mass"] = self.mass
        return out


def _normals(N, tol=1e-12):
    N = np.asarray(N, dtype=float)
    if N.shape[-1] != 3:
        raise ValueError("normals must have a trailing axis of length 3")
    norms = np.linalg.norm(N, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("normal vectors must have unit length")
    return N


def _require_local(c: Coupling):
    if not c.is_local:
        raise ValueError(
            f"{c.family} coupling is nonlocal; build it with boundary_operators.lambda_operators"
        )


def _terms(c: Coupling, N):
    """Hermitian matrix terms of ``A`` with a flag telling whether ``~A`` flips them.

    A term is flipped when its matrix anticommutes with the principal part of
    the Cauchy operator (odd in ``beta`` and ``alpha.N`` jointly); this is what
    makes ``A C - C ~A`` compact and reproduces the combined-family rule.
    """
    an = alpha_dot(N)
    shape = an.shape[:-2]
    one = np.broadcast_to(I4, shape + (4, 4))
    s = c.strengths
    f = c.family
    if f == "electrostatic":
        return [(s[0], one, False)]
    if f == "lorentz":
        return [(s[0], np.broadcast_to(BETA, an.shape), True)]
    if f == "magnetic":
        return [(s[0], an, True)]
    if f == "combined":
        return [
            (s[0], one, False),
            (s[1], np.broadcast_to(BETA, an.shape), True),
            (s[2], an, True),
        ]
    if f == "modified_electrostatic":
        return [(s[0], np.broadcast_to(GAMMA5, an.shape), False)]
    if f == "modified_lorentz":
        return [(s[0], np.broadcast_to(1j * GAMMA5 @ BETA, an.shape), True)]
    if f == "modified_magnetic":
        return [(s[0], GAMMA5 @ an, True)]
    if f == "anomalous_magnetic":
        return [(s[0], 1j * BETA @ an, False)]
    if f == "modified_anomalous_magnetic":
        # gamma5 beta (alpha.N) is already Hermitian; an extra i would make it skew
        return [(s[0], GAMMA5 @ BETA @ an, False)]
    raise AssertionError(f)


def coupling_matrix(c: Coupling, N) -> np.ndarray:
    """The Hermitian 4x4 matrix multiplying the surface delta for a local family."""
    _require_local(c)
    N = _normals(N)
    out = np.zeros(N.shape[:-1] + (4, 4), dtype=complex)
    for s, m, _ in _terms(c, N):
        out = out + s * m
    return out


def conjugate_matrix(c: Coupling, N) -> np.ndarray:
    """The conjugate ``~A`` with ``A ~A = ~A A = sgn * I4``."""
    _require_local(c)
    N = _normals(N)
    out = np.zeros(N.shape[:-1] + (4, 4), dtype=complex)
    for s, m, flip in _terms(c, N):
        out = out + (-s if flip else s) * m
    return out


def _closed_form_sgn(c: Coupling) -> float:
    s = np.asarray(c.strengths)
    if c.family == "combined":
        return float(s[0] ** 2 - s[1] ** 2 - s[2] ** 2)
    flipped = _terms(c, np.array([0.0, 0.0, 1.0]))[0][2]
    return float(-s[0] ** 2 if flipped else s[0] ** 2)


def conjugate_and_sgn(c: Coupling, *, check: bool = True, atol: float = 1e-12):
    """Return ``(conj, sgn)`` where ``conj(N)`` evaluates ``~A`` at normals ``N``.

    With ``check`` the product ``A ~A`` is verified to be ``sgn * I4`` at the
    north pole and a fixed random sample of normals.

    Raises
    ------
    DegenerateCouplingError
        If ``sgn == 0``.
    """
    _require_local(c)
    sgn = _closed_form_sgn(c)
    if check:
        N = _sample_normals()
        prod = coupling_matrix(c, N) @ conjugate_matrix(c, N)
        prod_rev = conjugate_matrix(c, N) @ coupling_matrix(c, N)
        scale = max(1.0, float(np.max(np.abs(c.strengths))) ** 2)
        for p in (prod, prod_rev):
            if np.max(np.abs(p - sgn * I4)) > atol * scale:
                raise AssertionError(f"A ~A is not scalar for {c}")
    if sgn == 0.0:
        raise DegenerateCouplingError(f"sgn = 0 for {c}; A is not invertible")

    def conj(N):
        return conjugate_matrix(c, N)

    return conj, sgn


def _sample_normals(n_random: int = 8, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n_random, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.vstack([[0.0, 0.0, 1.0], v])


# beta / gamma transformation tables
_BETA_MAP = {
    "electrostatic": "lorentz",
    "lorentz": "electrostatic",
    "magnetic": "anomalous_magnetic",
    "anomalous_magnetic": "magnetic",
    "modified_electrostatic": "modified_lorentz",
    "modified_lorentz": "modified_electrostatic",
    "modified_magnetic": "modified_anomalous_magnetic",
    "modified_anomalous_magnetic": "modified_magnetic",
}
_GAMMA_MAP = {
    "electrostatic": "modified_electrostatic",
    "modified_electrostatic": "electrostatic",
    "lorentz": "modified_lorentz",
    "modified_lorentz": "lorentz",
    "magnetic": "modified_magnetic",
    "modified_magnetic": "magnetic",
    "anomalous_magnetic": "modified_anomalous_magnetic",
    "modified_anomalous_magnetic": "anomalous_magnetic",
}


def beta_transform(c: Coupling) -> Coupling:
    """Multiply the potential by ``beta``, restoring Hermiticity by a phase."""
    if c.family not in _BETA_MAP:
        raise ValueError(f"beta transformation is not defined for {c.family}")
    return Coupling(_BETA_MAP[c.family], c.strengths)


def gamma_transform(c: Coupling) -> Coupling:
    """Multiply the potential by ``gamma5``, restoring Hermiticity by a phase."""
    if c.family not in _GAMMA_MAP:
        raise ValueError(f"gamma transformation is not defined for {c.family}")
    return Coupling(_GAMMA_MAP[c.family], c.strengths)


def projector_defect(c: Coupling, N) -> float:
    """Largest entrywise defect of ``P^2 = P`` for ``P = 1/2 +- i A^{-1}(alpha.N)``."""
    conj, sgn = conjugate_and_sgn(c)
    N = _normals(N)
    M = 1j * conj(N) @ alpha_dot(N) / sgn
    worst = 0.0
    for sign in (1.0, -1.0):
        P = 0.5 * np.broadcast_to(I4, M.shape) + sign * M
        worst = max(worst, float(np.max(np.abs(P @ P - P))))
    return worst


def p4_holds(c: Coupling, N, atol: float = 1e-12) -> bool:
    """``sgn == -4`` and ``~A (alpha.N) == (alpha.N) A`` at the given normals."""
    conj, sgn = conjugate_and_sgn(c)
    if abs(sgn + 4.0) > atol * 4:
        return False
    N = _normals(N)
    an = alpha_dot(N)
    lhs = conj(N) @ an
    rhs = an @ coupling_matrix(c, N)
    return bool(np.max(np.abs(lhs - rhs)) <= atol * max(1.0, np.max(np.abs(c.strengths))))


def classify(c: Coupling, atol: float = 1e-12) -> dict:
    """Critical / confining flags of a local coupling.

    ``critical`` means ``sgn == 4``: then ``1/sgn - 1/4`` vanishes and the
    product ``Lambda_- Lambda_+`` is compact on smooth surfaces.  ``confining``
    means (P3) or (P4) holds at the north pole and eight random normals.
    """
    _require_local(c)
    try:
        _, sgn = conjugate_and_sgn(c)
    except DegenerateCouplingError:
        return {"critical": False, "confining": False, "degenerate": True}
    N = _sample_normals()
    p3 = projector_defect(c, N) <= atol * 10
    p4 = p4_holds(c, N, atol=atol)
    return {
        "critical": bool(abs(sgn - 4.0) <= atol * 4),
        "confining": bool(p3 or p4),
        "degenerate": False,
        "p3": bool(p3),
        "p4": bool(p4),
        "sgn": sgn,
    }
