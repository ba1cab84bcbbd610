"""Surface measure on V = null(P) and the approximate-identity limit that fixes
the normalising constant of the Fourier-side multilinear form.

For a full-rank p x d matrix P, complete an orthonormal basis a_1..a_v of V by
a_{v+1}..a_d.  The p x p matrix Q = P (a_{v+1} ... a_d) satisfies

    lim_{eps -> 0} integral F(xi) eps^-p Phi^(P xi / eps) dxi
        = Phi(0) / |det Q| * integral_V F dsigma,

which follows from the substitution u = Q x'' / eps in the complement coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linsys import RankDeficiencyError, fix_signs, null_space_basis, _orthonormalize

MAX_POINTS = 5 * 10**7
_CHUNK = 1 << 18


@dataclass(frozen=True, eq=False)
class SurfaceChart:
    P: np.ndarray  # p x d
    V_basis: np.ndarray  # v x d, orthonormal rows spanning null(P)
    complement_basis: np.ndarray  # p x d, orthonormal rows spanning V's orthogonal complement

    @property
    def p(self) -> int:
        return self.P.shape[0]

    @property
    def d(self) -> int:
        return self.P.shape[1]

    @property
    def v(self) -> int:
        return self.V_basis.shape[0]

    def Q(self) -> np.ndarray:
        return self.P @ self.complement_basis.T

    def rotated(self, rng: np.random.Generator) -> "SurfaceChart":
        """Same subspace, bases replaced by random orthonormal recombinations."""
        return SurfaceChart(self.P, _random_orthogonal(self.v, rng) @ self.V_basis,
                            _random_orthogonal(self.p, rng) @ self.complement_basis)


def _random_orthogonal(size: int, rng: np.random.Generator) -> np.ndarray:
    if size == 0:
        return np.zeros((0, 0))
    q, r = np.linalg.qr(rng.standard_normal((size, size)))
    return q * np.sign(np.diag(r))


def surface_chart(P, tol: float = 1e-9) -> SurfaceChart:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    p, d = P.shape
    if p > d:
        raise ValueError(f"P must have at most as many rows as columns, got {P.shape}")
    V, rank = null_space_basis(P, tol)
    if rank < p:
        raise RankDeficiencyError(f"P has rank {rank} < p={p}")
    _, _, vt = np.linalg.svd(P)
    comp = _orthonormalize(vt[:p])
    return SurfaceChart(P, V, fix_signs(comp))


def _midpoints(R: float, Q: int) -> np.ndarray:
    return -R + (np.arange(Q) + 0.5) * (2 * R / Q)


def _tensor_points(axes: Sequence[np.ndarray]) -> np.ndarray:
    if not axes:
        return np.zeros((1, 0))
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def surface_integral(chart: SurfaceChart, F: Callable, R: float = 6.0, Q: int = 256) -> float:
    """Midpoint rule for the integral of F over V, in the orthonormal chart coordinates."""
    v = chart.v
    if Q ** v > MAX_POINTS:
        raise ValueError(f"{Q}^{v} quadrature points exceed the budget of {MAX_POINTS}")
    coords = _tensor_points([_midpoints(R, Q)] * v)
    total = 0.0
    for start in range(0, coords.shape[0], _CHUNK):
        xi = coords[start:start + _CHUNK] @ chart.V_basis
        total += float(np.sum(F(xi)))
    return total * (2 * R / Q) ** v


def constant_CP(chart: SurfaceChart, tol: float = 1e-12) -> float:
    """|det Q| with Q = P times the complement basis."""
    Q = chart.Q()
    det = abs(float(np.linalg.det(Q)))
    scale = np.linalg.norm(chart.P, 2) ** chart.p
    if det <= tol * max(scale, 1e-300):
        raise RankDeficiencyError("|det Q| is negligible: P is not of full rank")
    return det


def gaussian(xi) -> np.ndarray:
    """exp(-pi |xi|^2): its own Fourier transform, equal to 1 at the origin."""
    xi = np.atleast_2d(xi)
    return np.exp(-np.pi * np.sum(xi * xi, axis=1))


def default_test_function(xi, radius: float = 2.0) -> np.ndarray:
    """Radial bump exp(-1/(1 - |xi|^2/radius^2)), smooth with compact support."""
    xi = np.atleast_2d(xi)
    s = np.sum(xi * xi, axis=1) / radius ** 2
    out = np.zeros(xi.shape[0])
    inside = s < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


@dataclass(frozen=True)
class LimitCheck:
    eps: float
    value: float
    target: float
    rel_err: float


def mollified_limit_check(chart: SurfaceChart, F: Callable = default_test_function,
                          eps_list: Sequence[float] = (2.0 ** -2, 2.0 ** -4, 2.0 ** -6), *,
                          Phi_hat: Callable = gaussian, R: float = 2.5, Q: int = 200,
                          Q_normal: int = 64, width: float = 6.0) -> list[LimitCheck]:
    """Compare integral F(xi) eps^-p Phi^(P xi / eps) dxi with integral_V F dsigma / |det Q|.

    The d-dimensional quadrature runs in chart coordinates (x', x''): x' over
    [-R, R]^v with Q points per axis, x'' over a box of half-width
    width * eps / sigma_min(Q) with Q_normal points per axis, which holds all but
    a negligible part of the kernel's mass for a Gaussian kernel.
    """
    d, p, v = chart.d, chart.p, chart.v
    if d > 4:
        raise ValueError(f"d={d} > 4: quadrature budget exceeded")
    if Q ** v * Q_normal ** p > MAX_POINTS:
        raise ValueError("quadrature budget exceeded")
    Qmat = chart.Q()
    smin = np.linalg.svd(Qmat, compute_uv=False)[-1]
    target = surface_integral(chart, F, R, Q) / constant_CP(chart)
    tangential = _tensor_points([_midpoints(R, Q)] * v)
    out = []
    for eps in eps_list:
        half = width * eps / smin
        normal = _tensor_points([_midpoints(half, Q_normal)] * p)
        cell = (2 * R / Q) ** v * (2 * half / Q_normal) ** p
        kernel = Phi_hat((normal @ Qmat.T) / eps) * eps ** (-p)
        total = 0.0
        step = max(1, _CHUNK // normal.shape[0])
        for start in range(0, tangential.shape[0], step):
            tan = tangential[start:start + step] @ chart.V_basis
            xi = (tan[:, None, :] + (normal @ chart.complement_basis)[None, :, :]).reshape(-1, d)
            vals = F(xi).reshape(tan.shape[0], normal.shape[0])
            total += float(np.sum(vals * kernel[None, :]))
        value = float(total * cell)
        rel = float(abs(value - target) / abs(target)) if target != 0 else abs(value)
        out.append(LimitCheck(float(eps), value, target, rel))
    return out


def multiform_constant(P) -> float:
    """Normalising constant 1/|det Q| for the limit measure on null(P)."""
    return 1.0 / constant_CP(surface_chart(P))


__all__ = [
    "SurfaceChart", "surface_chart", "surface_integral", "constant_CP", "mollified_limit_check",
    "LimitCheck", "gaussian", "default_test_function", "multiform_constant",
]
