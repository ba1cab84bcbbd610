"""Test functions on R^n with exact Fourier transforms.

Every object here exposes

* ``__call__(points)`` for points of shape (P, n), returning real values;
* ``support_box()`` returning (lo, hi) arrays that contain the support;
* ``transform(freqs)`` returning the complex values of
  f^(xi) = integral of exp(-2 pi i x.xi) f(x) dx at freqs of shape (P, n).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage, special

_CHUNK = 1 << 22


def _points(points, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if n == 1 else pts.reshape(1, -1)
    if pts.shape[1] != n:
        raise ValueError(f"expected points with {n} coordinates, got shape {pts.shape}")
    return pts


def separable_dft(values: np.ndarray, coords: list[np.ndarray], freqs: np.ndarray) -> np.ndarray:
    """Sum_c values[c] exp(-2 pi i x_c . xi) for a tensor grid of nodes x_c.

    ``coords[a]`` holds the node coordinates along axis a.  The sum is contracted
    one axis at a time, so the cost is P * prod(shape) rather than anything larger.
    """
    freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
    n = len(coords)
    shape = values.shape
    size = int(np.prod(shape))
    step = max(1, _CHUNK // max(size, 1))
    out = np.empty(freqs.shape[0], dtype=complex)
    for start in range(0, freqs.shape[0], step):
        xi = freqs[start:start + step]
        e0 = np.exp(-2j * np.pi * np.outer(xi[:, 0], coords[0]))
        acc = e0 @ values.reshape(shape[0], -1)
        for a in range(1, n):
            acc = acc.reshape(xi.shape[0], shape[a], -1)
            ea = np.exp(-2j * np.pi * np.outer(xi[:, a], coords[a]))
            acc = np.einsum("pjr,pj->pr", acc, ea)
        out[start:start + step] = acc.reshape(xi.shape[0])
    return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples at the cell centres lo + (i + 1/2) h, extended by multilinear (hat) interpolation.

    Outside the node hull the interpolant falls linearly to zero over one cell,
    as if the grid were padded with zeros.
    """

    values: np.ndarray
    lo: np.ndarray
    h: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite samples")
        vals.setflags(write=False)
        lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (vals.ndim,)).copy()
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def on_unit_cube(cls, values) -> "GridFunction":
        vals = np.asarray(values, dtype=float)
        return cls(vals, np.zeros(vals.ndim), 1.0 / vals.shape[0])

    @classmethod
    def sample(cls, func, n: int, N: int) -> "GridFunction":
        """Tabulate ``func`` at the N^n cell centres of [0,1]^n."""
        axes = [(np.arange(N) + 0.5) / N] * n
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        return cls.on_unit_cube(np.asarray(func(mesh), dtype=float).reshape((N,) * n))

    @property
    def n(self) -> int:
        return self.values.ndim

    def node_coords(self) -> list[np.ndarray]:
        return [self.lo[a] + (np.arange(s) + 0.5) * self.h for a, s in enumerate(self.values.shape)]

    def support_box(self):
        upper = self.lo + np.array(self.values.shape) * self.h
        return self.lo - 0.5 * self.h, upper + 0.5 * self.h

    def integral(self) -> float:
        return float(self.values.sum() * self.h ** self.n)

    def __call__(self, points) -> np.ndarray:
        pts = _points(points, self.n)
        padded = np.pad(self.values, 1)
        idx = (pts - self.lo) / self.h - 0.5 + 1.0
        return ndimage.map_coordinates(padded, idx.T, order=1, mode="constant", cval=0.0)

    def transform(self, freqs) -> np.ndarray:
        xi = _points(freqs, self.n)
        hat = np.prod(self.h * np.sinc(self.h * xi) ** 2, axis=1)
        return hat * separable_dft(self.values, self.node_coords(), xi)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if self.values.shape != other.values.shape or self.h != other.h or np.any(self.lo != other.lo):
            raise ValueError("grid functions live on different grids")
        return GridFunction(self.values + other.values, self.lo, self.h)

    def scaled(self, c: float) -> "GridFunction":
        return GridFunction(self.values * c, self.lo, self.h)


@dataclass(frozen=True, eq=False)
class BoxIndicator:
    """Indicator of the closed box [lo, hi]."""

    lo: tuple
    hi: tuple

    @property
    def n(self) -> int:
        return len(self.lo)

    def support_box(self):
        return np.array(self.lo, dtype=float), np.array(self.hi, dtype=float)

    def exact_support(self):
        return [(Fraction(a), Fraction(b)) for a, b in zip(self.lo, self.hi)]

    def __call__(self, points) -> np.ndarray:
        pts = _points(points, self.n)
        lo, hi = self.support_box()
        return np.all((pts >= lo) & (pts <= hi), axis=1).astype(float)

    def transform(self, freqs) -> np.ndarray:
        xi = _points(freqs, self.n)
        lo, hi = self.support_box()
        width = hi - lo
        mid = 0.5 * (hi + lo)
        return np.prod(width * np.sinc(width * xi) * np.exp(-2j * np.pi * mid * xi), axis=1)


@dataclass(frozen=True, eq=False)
class BallIndicator:
    """Indicator of the closed Euclidean ball B(center, radius)."""

    center: tuple
    radius: float

    @property
    def n(self) -> int:
        return len(self.center)

    def support_box(self):
        c = np.array(self.center, dtype=float)
        return c - float(self.radius), c + float(self.radius)

    def exact_support(self):
        rad = Fraction(self.radius)
        return [(Fraction(c) - rad, Fraction(c) + rad) for c in self.center]

    def __call__(self, points) -> np.ndarray:
        pts = _points(points, self.n)
        d2 = np.sum((pts - np.array(self.center, dtype=float)) ** 2, axis=1)
        return (d2 <= float(self.radius) ** 2).astype(float)

    def transform(self, freqs) -> np.ndarray:
        xi = _points(freqs, self.n)
        n, rho = self.n, float(self.radius)
        s = np.linalg.norm(xi, axis=1)
        vol = np.pi ** (n / 2) / special.gamma(n / 2 + 1) * rho ** n
        out = np.full(s.shape, vol, dtype=float)
        nz = s > 0
        arg = 2 * np.pi * rho * s[nz]
        out[nz] = rho ** n * special.jv(n / 2, arg) / (rho * s[nz]) ** (n / 2)
        phase = np.exp(-2j * np.pi * xi @ np.array(self.center, dtype=float))
        return out * phase


def bump_1d(t: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - t^2)) on |t| < 1, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def smooth_bump(n: int, N: int, lo: float = 0.1, hi: float = 0.9) -> GridFunction:
    """Tensor bump supported in [lo, hi]^n, tabulated on the N^n grid of [0,1]^n."""
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return GridFunction.sample(lambda x: np.prod(bump_1d((x - mid) / half), axis=1), n, N)
