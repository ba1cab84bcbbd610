"""Concrete configuration families, a brute-force search for non-trivial
configurations x + B_j y inside a discretised set, exact positive-root counting,
and the measure of near-integral translation parameters."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _exact
from .linsys import MatrixSystem, build_system, null_space_basis

DEFAULT_SEARCH_CAP = 10**8


class SearchCapError(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"search needs more than {cap} candidate evaluations (reached {count})")
        self.count = count
        self.cap = cap


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True, eq=False)
class ExceptionalSubspace:
    """V = {y : matrix @ y = 0}."""

    matrix: np.ndarray
    dim: int
    label: str = ""

    @classmethod
    def from_matrix(cls, matrix, label: str = "") -> "ExceptionalSubspace":
        mat = np.atleast_2d(np.asarray(matrix, dtype=float))
        basis, _ = null_space_basis(mat)
        return cls(mat, basis.shape[0], label)

    def row_space(self) -> np.ndarray:
        """Orthonormal rows spanning the orthogonal complement of V."""
        _, s, vt = np.linalg.svd(self.matrix)
        rank = int(np.sum(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
        return vt[:rank]

    def distance(self, y: np.ndarray) -> np.ndarray:
        rs = self.row_space()
        return np.linalg.norm(np.atleast_2d(y) @ rs.T, axis=1)


def _exceptional(mats, m_minus_n: int, labels) -> list[ExceptionalSubspace]:
    out = []
    for mat, label in zip(mats, labels):
        ex = ExceptionalSubspace.from_matrix(mat, label)
        if ex.dim >= m_minus_n:
            raise ValueError(f"exceptional subspace {label} has dimension {ex.dim} >= {m_minus_n}")
        out.append(ex)
    return out


_RIGHT_ANGLES = {1: (0, 1), 2: (-1, 0)}


def make_triangle_system(theta: float, lam=1) -> MatrixSystem:
    """x, x + y, x + lam * rot(theta) y in the plane (n=2, k=3, m=4).

    theta = pi/2 and pi give exact integer rotations; other angles are floats.
    """
    if not 0 < float(theta) <= math.pi + 1e-15:
        raise ValueError("theta must lie in (0, pi]")
    lam_exact = _exact.as_fraction(lam)
    if float(lam) <= 0:
        raise ValueError("lam must be positive")
    quarter = float(theta) / (math.pi / 2)
    if abs(quarter - round(quarter)) < 1e-12 and round(quarter) in _RIGHT_ANGLES:
        c, s = _RIGHT_ANGLES[round(quarter)]
        if lam_exact is not None:
            rot = [[lam_exact * c, -lam_exact * s], [lam_exact * s, lam_exact * c]]
        else:
            rot = np.array([[c, -s], [s, c]], dtype=float) * float(lam)
    else:
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]]) * float(lam)
    return build_system(2, 3, 4, [[[0, 0], [0, 0]], [[1, 0], [0, 1]], rot])


def make_colinear_system(n: int, lam) -> MatrixSystem:
    """x, x + y, x + lam y in R^n (k=3, m=2n); lam must exceed 1."""
    lam_exact = _exact.as_fraction(lam)
    value = lam_exact if lam_exact is not None else float(lam)
    if not value > 1:
        raise ValueError("lam must be > 1 (lam = 1 repeats a point)")
    eye = [[int(i == j) for j in range(n)] for i in range(n)]
    zero = [[0] * n for _ in range(n)]
    scaled = [[value * e for e in row] for row in eye]
    return build_system(n, 3, 2 * n, [zero, eye, scaled])


def make_parallelogram_system(n: int) -> tuple[MatrixSystem, list[ExceptionalSubspace]]:
    """x, x + y', x + y'', x + y' + y'' with y = (y', y'') in R^{2n}, and the four
    degenerate subspaces {y' = 0}, {y'' = 0}, {y' + y'' = 0}, {y' = y''}."""
    eye = np.eye(n, dtype=int)
    zero = np.zeros((n, n), dtype=int)
    B = [np.hstack([zero, zero]), np.hstack([eye, zero]), np.hstack([zero, eye]), np.hstack([eye, eye])]
    system = build_system(n, 4, 3 * n, B)
    mats = [np.hstack([eye, zero]), np.hstack([zero, eye]), np.hstack([eye, eye]), np.hstack([eye, -eye])]
    return system, _exceptional(mats, 2 * n, ["V1", "V2", "V3", "V4"])


def make_vandermonde_system(a: Sequence, eta: int = 1, d: int = 1) -> tuple[MatrixSystem, list[ExceptionalSubspace]]:
    """B_1 = 0 and, for i = 2, 3, 4, (B_i)[row, col] = a_col ** (eta + ((i-2) n + row) d).

    ``a`` holds 2n distinct numbers > 1.  The exceptional subspaces are null(B_i).
    """
    if len(a) % 2 or not a:
        raise ValueError("a must contain 2n entries")
    if isinstance(eta, bool) or int(eta) != eta or eta < 0:
        raise ValueError("eta must be a non-negative integer")
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    exact = [_exact.as_fraction(v) for v in a]
    vals = exact if all(e is not None for e in exact) else [float(v) for v in a]
    if any(not v > 1 for v in vals):
        raise ValueError("entries of a must exceed 1")
    if len(set(vals)) != len(vals):
        raise ValueError("entries of a must be distinct")
    n = len(a) // 2
    B = [[[0] * (2 * n) for _ in range(n)]]
    for block in range(3):
        B.append([[v ** (int(eta) + (block * n + row) * int(d)) for v in vals] for row in range(n)])
    system = build_system(n, 4, 3 * n, B)
    mats = [system.B[i] for i in (1, 2, 3)]
    return system, _exceptional(mats, 2 * n, ["null(B2)", "null(B3)", "null(B4)"])


# ---------------------------------------------------------------------------
# search


@dataclass(frozen=True, eq=False)
class PointSet:
    n: int
    points: np.ndarray
    tol: float
    N: int | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, self.n)
        if pts.size and (pts.min() < 0 or pts.max() > 1):
            raise ValueError("points must lie in [0,1]^n")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_occupancy(cls, occupancy, tol: float | None = None) -> "PointSet":
        occ = np.asarray(occupancy, dtype=bool)
        n, N = occ.ndim, occ.shape[0]
        pts = (np.argwhere(occ) + 0.5) / N
        return cls(n, pts, tol if tol is not None else 1.5 * math.sqrt(n) / N, N)

    @classmethod
    def from_points(cls, points, tol: float, N: int | None = None) -> "PointSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts.shape[1], pts, tol, N)


@dataclass(frozen=True, eq=False)
class ConfigurationHit:
    x: np.ndarray
    y: np.ndarray
    realized: np.ndarray  # (k, n)
    distances: np.ndarray  # (k,)
    max_dist: float
    margins: tuple[float, ...]  # distance of y to {0}, then to each exceptional subspace
    excluded_margin: float

    def key(self):
        return (self.max_dist, tuple(self.x), tuple(self.y))


def y_grid_values(y_grid: int) -> np.ndarray:
    """The grid i / y_grid, i = -y_grid..y_grid, covering [-1, 1]."""
    if y_grid < 1:
        raise ValueError("y_grid must be >= 1")
    return np.arange(-y_grid, y_grid + 1) / y_grid


def _last_column(b: np.ndarray) -> int:
    nz = np.flatnonzero(np.any(b != 0, axis=0))
    return int(nz[-1]) if nz.size else -1


def _search_chunk(system, E, tree, x_idx, yv, stages, row_spaces, threshold, cap_left):
    k, n = system.k, system.n
    dim = system.m - system.n
    cand_x = np.asarray(x_idx)
    cand_y = np.zeros((cand_x.size, 0))
    dists = np.zeros((cand_x.size, k))
    evals = 0
    for j in stages.get(-1, []):
        d, _ = tree.query(E.points[cand_x], distance_upper_bound=E.tol)
        keep = np.isfinite(d)
        cand_x, cand_y, dists = cand_x[keep], cand_y[keep], dists[keep]
        dists[:, j] = d[keep]
    for c in range(dim):
        reps = yv.size
        cand_x = np.repeat(cand_x, reps)
        dists = np.repeat(dists, reps, axis=0)
        cand_y = np.hstack([np.repeat(cand_y, reps, axis=0), np.tile(yv, cand_y.shape[0])[:, None]])
        evals += cand_x.size
        if evals > cap_left:
            raise SearchCapError(evals, cap_left)
        for j in stages.get(c, []):
            b = system.B[j][:, :c + 1]
            realized = E.points[cand_x] + cand_y @ b.T
            d, _ = tree.query(realized, distance_upper_bound=E.tol)
            keep = np.isfinite(d)
            cand_x, cand_y, dists = cand_x[keep], cand_y[keep], dists[keep]
            dists[:, j] = d[keep]
    margins = np.stack([np.linalg.norm(cand_y @ rs.T, axis=1) for rs in row_spaces], axis=1)
    ok = np.all(margins > threshold * (1 + 1e-9), axis=1)
    return cand_x[ok], cand_y[ok], dists[ok], margins[ok], evals


def search_configurations(system: MatrixSystem, E: PointSet, exclusions: Sequence[ExceptionalSubspace] = (),
                          y_grid: int = 16, exclusion_threshold: float | None = None, *,
                          cap: int = DEFAULT_SEARCH_CAP, threads: int = 1) -> list[ConfigurationHit]:
    """All (x, y) with x a point of E, y on the grid of [-1,1]^{m-n}, every x + B_j y
    within E.tol of E, and y farther than the threshold from {0} and from each
    exceptional subspace.  The default threshold is the y-grid spacing.

    y is built one coordinate at a time; a constraint j is tested as soon as the
    remaining columns of B_j vanish, so sparse families prune early.
    """
    if system.B is None:
        raise ValueError("search needs a system of the form A_j = (I B_j)")
    if E.n != system.n:
        raise ValueError(f"E has dimension {E.n}, system has n={system.n}")
    if E.points.shape[0] == 0:
        return []
    threshold = 1.0 / y_grid if exclusion_threshold is None else float(exclusion_threshold)
    yv = y_grid_values(y_grid)
    tree = cKDTree(E.points)
    stages: dict[int, list[int]] = {}
    for j, b in enumerate(system.B):
        stages.setdefault(_last_column(b), []).append(j)
    row_spaces = [np.eye(system.m - system.n)] + [ex.row_space() for ex in exclusions]
    chunks = np.array_split(np.arange(E.points.shape[0]), max(1, min(E.points.shape[0], 8 * max(1, threads))))
    run = lambda idx: _search_chunk(system, E, tree, idx, yv, stages, row_spaces, threshold, cap)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(idx) for idx in chunks]
    total_evals = sum(p[4] for p in parts)
    if total_evals > cap:
        raise SearchCapError(total_evals, cap)
    hits = []
    for cx, cy, dist, marg, _ in parts:
        for xi, y, dd, mm in zip(cx, cy, dist, marg):
            x = E.points[xi]
            realized = np.array([x + b @ y for b in system.B])
            hits.append(ConfigurationHit(x.copy(), y.copy(), realized, dd.copy(), float(dd.max()),
                                         tuple(float(v) for v in mm), float(mm.min())))
    hits.sort(key=ConfigurationHit.key)
    return hits


def validate_hit(hit: ConfigurationHit, system: MatrixSystem, E: PointSet,
                 exclusions: Sequence[ExceptionalSubspace], threshold: float) -> bool:
    """Re-check a hit from scratch: brute-force distances and least-squares projections."""
    if not np.any(hit.y):
        return False
    for b, p in zip(system.B, hit.realized):
        if not np.allclose(hit.x + b @ hit.y, p, atol=1e-12):
            return False
        if np.min(np.linalg.norm(E.points - p, axis=1)) > E.tol:
            return False
    if hit.max_dist > E.tol:
        return False
    for ex in exclusions:
        basis, _ = null_space_basis(ex.matrix)
        if basis.shape[0]:
            coef, *_ = np.linalg.lstsq(basis.T, hit.y, rcond=None)
            dist = np.linalg.norm(hit.y - basis.T @ coef)
        else:
            dist = np.linalg.norm(hit.y)
        if not dist > threshold * (1 + 1e-9):
            return False
    return bool(np.linalg.norm(hit.y) > threshold * (1 + 1e-9))


# ---------------------------------------------------------------------------
# positive roots


def _poly_rem(num: list[Fraction], den: list[Fraction]) -> list[Fraction]:
    """Remainder of num / den; coefficient lists are highest degree first."""
    num = list(num)
    while len(num) >= len(den) and any(num):
        if num[0] == 0:
            num.pop(0)
            continue
        factor = num[0] / den[0]
        for i in range(len(den)):
            num[i] -= factor * den[i]
        num.pop(0)
    while num and num[0] == 0:
        num.pop(0)
    return num


def _sign_changes(signs: list[int]) -> int:
    s = [v for v in signs if v != 0]
    return sum(1 for a, b in zip(s, s[1:]) if a != b)


def _sgn(x: Fraction) -> int:
    return (x > 0) - (x < 0)


def count_positive_roots(exponents: Sequence[int], coeffs: Sequence) -> int:
    """Number of distinct positive roots of sum c_i x^{eta_i}, by a Sturm sequence over Q."""
    if len(exponents) != len(coeffs):
        raise ValueError("exponents and coeffs differ in length")
    exps = [int(e) for e in exponents]
    if any(e < 0 for e in exps) or any(b <= a for a, b in zip(exps, exps[1:])):
        raise ValueError("exponents must be strictly increasing non-negative integers")
    cs = []
    for c in coeffs:
        f = _exact.as_fraction(c)
        cs.append(f if f is not None else Fraction(float(c)))
    terms = [(e, c) for e, c in zip(exps, cs) if c != 0]
    if not terms:
        raise ValueError("all coefficients are zero")
    low = terms[0][0]
    degree = terms[-1][0] - low
    if degree == 0:
        return 0
    poly = [Fraction(0)] * (degree + 1)
    for e, c in terms:
        poly[degree - (e - low)] = c
    deriv = [c * (degree - i) for i, c in enumerate(poly[:-1])]
    seq = [poly, deriv]
    while True:
        rem = _poly_rem(seq[-2], seq[-1])
        if not rem:
            break
        seq.append([-c for c in rem])
    at_zero = [_sgn(p[-1]) for p in seq]
    at_inf = [_sgn(p[0]) for p in seq]
    return _sign_changes(at_zero) - _sign_changes(at_inf)


# ---------------------------------------------------------------------------
# near-integral translation parameters


@dataclass(frozen=True)
class CEpsilonResult:
    estimate: float
    analytic_lower_bound: float
    std_error: float
    samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "analytic_lower_bound": self.analytic_lower_bound,
                "std_error": self.std_error, "samples": self.samples, "seed": self.seed}

    def __iter__(self):
        return iter((self.estimate, self.analytic_lower_bound))


def c_epsilon_lower_bound(system: MatrixSystem, K: int, eps: float) -> float:
    """(c'(eps/(m-n), K))^{k(m-n)} with c'(e, K) = (1/2)(e/2)^K."""
    dim = system.m - system.n
    inner = 0.5 * (eps / dim / 2) ** K
    return inner ** (system.k * dim)


def c_epsilon_measure(system: MatrixSystem, v: Sequence, eps: float, samples: int = 10**6,
                      seed: int = 0, block: int = 1 << 16) -> CEpsilonResult:
    """Monte Carlo volume of {y in [0,1]^{m-n} : dist(B_j^t v_l . y, Z) <= eps for all j, l}."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if system.B is None:
        raise ValueError("needs a system of the form A_j = (I B_j)")
    vecs = np.atleast_2d(np.asarray(v, dtype=float))
    if vecs.shape[1] != system.n or vecs.shape[0] < 1:
        raise ValueError(f"v must be a non-empty list of vectors in Z^{system.n}")
    if not np.all(vecs == np.round(vecs)):
        raise ValueError("v must have integer entries")
    dim = system.m - system.n
    freqs = np.vstack([vecs @ b for b in system.B])  # rows are B_j^t v_l
    rng = np.random.Generator(np.random.Philox(seed))
    hits = 0
    done = 0
    while done < samples:
        size = min(block, samples - done)
        y = rng.random((size, dim))
        t = y @ freqs.T
        dist = np.abs(t - np.round(t))
        hits += int(np.count_nonzero(np.all(dist <= eps, axis=1)))
        done += size
    p = hits / samples
    return CEpsilonResult(p, c_epsilon_lower_bound(system, vecs.shape[0], eps),
                          math.sqrt(p * (1 - p) / samples), samples, seed)


def atom_count_bound(eps: float) -> float:
    """4 sqrt(2) pi / eps."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    return 4 * math.sqrt(2) * math.pi / eps
