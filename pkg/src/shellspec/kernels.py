"""Pointwise kernels of the massive Dirac operator and its harmonic relatives.

Every function is vectorized over leading axes: ``x`` may have shape
``(3,)`` or ``(..., 3)``.  Matrix-valued kernels gain two trailing axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gamma import ALPHA, BETA, I4, SIGMA

__all__ = [
    "SpectralParam",
    "sqrt_branch",
    "phi_z",
    "psi_z",
    "phi_massless",
    "double_layer_kernel",
    "riesz_kernel",
    "dirac_apply_fd",
]

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class SpectralParam:
    """Spectral parameter ``z`` and mass ``m`` of the free Dirac operator."""

    z: complex
    m: float

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "m", float(self.m))
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if self.z.imag == 0.0 and abs(self.z.real) >= self.m:
            raise ValueError(
                f"z={self.z.real} lies on the spectrum (-inf,-m]U[m,inf) of the free operator"
            )

    @property
    def in_gap(self) -> bool:
        return self.z.imag == 0.0 and abs(self.z.real) < self.m

    @property
    def w(self) -> complex:
        return sqrt_branch(self)

    def conj(self) -> "SpectralParam":
        return SpectralParam(self.z.conjugate(), self.m)


def sqrt_branch(p: SpectralParam) -> complex:
    """Root ``w`` of ``w**2 = z**2 - m**2`` with ``Im w > 0``."""
    z, m = p.z, p.m
    if z.imag == 0.0:
        # exact form in the gap; SpectralParam already excludes the cut
        return 1j * np.sqrt(m * m - z.real * z.real)
    w = np.sqrt(z * z - m * m + 0j)
    if w.imag < 0:
        w = -w
    return complex(w)


def _r(x, allow_zero=False):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if not allow_zero and np.any(r == 0):
        raise ValueError("kernel evaluated at the origin")
    return x, r


def psi_z(x, p: SpectralParam):
    """Scalar kernel ``exp(i w |x|) / (4 pi |x|)``."""
    x, r = _r(x)
    return np.exp(1j * p.w * r) / (FOUR_PI * r)


def phi_z(x, p: SpectralParam):
    """Fundamental solution of ``H - z`` with ``H = -i alpha.grad + m beta``."""
    x, r = _r(x)
    w = p.w
    e = np.exp(1j * w * r) / (FOUR_PI * r)
    coef = (1.0 - 1j * w * r) / (r * r)
    ax = np.tensordot(x, ALPHA, axes=([-1], [0]))
    scal = (p.z * I4 + p.m * BETA)
    out = scal * e[..., None, None] + 1j * ax * (e * coef)[..., None, None]
    return out


def phi_massless(x):
    """Strongly singular 2x2 kernel ``i sigma.x / (4 pi |x|^3)``.

    The ``4 pi`` normalization makes this the leading part of ``phi_z``.
    """
    x, r = _r(x)
    sx = np.tensordot(x, SIGMA, axes=([-1], [0]))
    return 1j * sx / (FOUR_PI * r**3)[..., None, None]


def double_layer_kernel(x, y, ny):
    """``N(y).(x - y) / (4 pi |x - y|^3)``."""
    d, r = _r(np.asarray(x, float) - np.asarray(y, float))
    return np.sum(np.asarray(ny, float) * d, axis=-1) / (FOUR_PI * r**3)


def riesz_kernel(x, y, k: int):
    """``(x_k - y_k) / (4 pi |x - y|^3)``."""
    d, r = _r(np.asarray(x, float) - np.asarray(y, float))
    return d[..., k] / (FOUR_PI * r**3)


def dirac_apply_fd(field, x0, z: complex, m: float, step: float = 1e-3):
    """Apply ``H - z`` to a spinor field at ``x0`` by 4th-order central differences.

    ``field`` maps points of shape ``(n, 3)`` to values of shape ``(n, 4, ...)``.
    """
    x0 = np.atleast_2d(np.asarray(x0, float))
    offs = np.array([-2, -1, 1, 2], float)
    coef = np.array([1, -8, 8, -1], float) / (12.0 * step)
    val = field(x0)
    out = (m * np.tensordot(BETA, val, axes=([1], [1])).swapaxes(0, 1)) - z * val
    for k in range(3):
        pts = np.repeat(x0[None], 4, axis=0)
        pts[:, :, k] += offs[:, None] * step
        vals = np.stack([field(pt) for pt in pts])
        deriv = np.tensordot(coef, vals, axes=(0, 0))
        out = out - 1j * np.tensordot(ALPHA[k], deriv, axes=([1], [1])).swapaxes(0, 1)
    return out
