"""Matrix systems describing k-point configurations x + B_j y, and their rank tests.

A system is a list of k matrices ``A_j`` of shape ``n x m``.  Usually
``A_j = (I_n  B_j)``; a few hand-made systems only provide the ``A_j``.
Indices (J, j, rows) are 0-based throughout.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _exact

DEFAULT_TOL = 1e-9
DEFAULT_CAP = 10**6
EXACT_MAX_DIM = 12


class EnumerationCapError(RuntimeError):
    """Raised when a combinatorial enumeration would exceed its configured cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(f"enumeration needs {count} matrix tests, cap is {cap}")
        self.count = count
        self.cap = cap


class RankDeficiencyError(ValueError):
    pass


def derive_r_nprime(n: int, k: int, m: int) -> tuple[int, int]:
    """Return (r, n') with n(r-1) < nk-m <= nr and n' = nk-m-n(r-1)."""
    for name, v in (("n", n), ("k", k), ("m", m)):
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
            raise TypeError(f"{name} must be an integer")
    if n < 1:
        raise ValueError("n must be >= 1")
    if k < 3:
        raise ValueError("k must be >= 3")
    if m >= n * k:
        raise ValueError(f"m={m} must be < nk={n * k}: no positive r exists")
    if m < n:
        raise ValueError(f"m={m} must be >= n={n}")
    excess = n * k - m
    r = -(-excess // n)
    return int(r), int(excess - n * (r - 1))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MatrixSystem:
    n: int
    k: int
    m: int
    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...] | None
    r: int
    nprime: int
    A_exact: tuple[_exact.Matrix, ...] | None = field(default=None, repr=False)

    @property
    def is_exact(self) -> bool:
        return self.A_exact is not None

    @property
    def in_main_regime(self) -> bool:
        return self.n * math.ceil((self.k + 1) / 2) <= self.m < self.n * self.k

    def stacked_transpose(self) -> np.ndarray:
        """The m x nk matrix (A_1^t | ... | A_k^t), i.e. the map xi -> sum_j A_j^t xi_j."""
        return np.hstack([a.T for a in self.A])

    def stacked(self, indices: Sequence[int]) -> np.ndarray:
        """Rows of A_j for j in ``indices`` stacked vertically."""
        return np.vstack([self.A[j] for j in indices])

    def to_dict(self) -> dict:
        def enc(mats, exact):
            if exact is not None:
                return [[[_frac_str(v) for v in row] for row in mat] for mat in exact]
            return [mat.tolist() for mat in mats]

        out = {"n": self.n, "k": self.k, "m": self.m}
        if self.B is not None:
            exact_b = None if self.A_exact is None else tuple(
                [row[self.n:] for row in a] for a in self.A_exact)
            out["B"] = enc(self.B, exact_b)
        else:
            out["A"] = enc(self.A, self.A_exact)
        return out


def _frac_str(v: Fraction):
    return int(v) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _check_shape_and_finite(mats, rows, cols, label):
    for idx, mat in enumerate(mats):
        if mat.shape != (rows, cols):
            raise ValueError(f"{label}[{idx}] has shape {mat.shape}, expected {(rows, cols)}")
        if not np.all(np.isfinite(mat)):
            raise ValueError(f"{label}[{idx}] has non-finite entries")


def build_system(n: int, k: int, m: int, B: Sequence) -> MatrixSystem:
    """Validate k matrices B_j (n x (m-n)) and build A_j = (I_n  B_j)."""
    r, nprime = derive_r_nprime(n, k, m)
    if len(B) != k:
        raise ValueError(f"expected k={k} matrices B_j, got {len(B)}")
    floats = [_exact.to_float_matrix(b) for b in B]
    floats = [np.zeros((n, 0)) if f.size == 0 and m == n else f for f in floats]
    _check_shape_and_finite(floats, n, m - n, "B")
    exact_b = [_exact.exact_matrix(b) for b in B]
    a_exact = None
    if all(e is not None for e in exact_b):
        eye = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
        a_exact = tuple([eye[i] + list(e[i]) for i in range(n)] for e in exact_b)
    eye_f = np.eye(n)
    A = tuple(_freeze(np.hstack([eye_f, b])) for b in floats)
    return MatrixSystem(n, k, m, A, tuple(_freeze(b) for b in floats), r, nprime, a_exact)


def system_from_A(n: int, k: int, m: int, A: Sequence) -> MatrixSystem:
    """Build a system from arbitrary n x m matrices A_j (no (I B) structure assumed)."""
    r, nprime = derive_r_nprime(n, k, m)
    if len(A) != k:
        raise ValueError(f"expected k={k} matrices A_j, got {len(A)}")
    floats = [_exact.to_float_matrix(a) for a in A]
    _check_shape_and_finite(floats, n, m, "A")
    exact_a = [_exact.exact_matrix(a) for a in A]
    a_exact = tuple(exact_a) if all(e is not None for e in exact_a) else None
    return MatrixSystem(n, k, m, tuple(_freeze(a) for a in floats), None, r, nprime, a_exact)


# ---------------------------------------------------------------------------
# non-degeneracy


@dataclass(frozen=True)
class NondegeneracyReport:
    passed: bool
    worst_case: tuple[tuple[int, ...], int, tuple[int, ...]] | None
    min_abs_det: float
    tolerance: float
    metric: str
    exact: bool
    n_tested: int
    min_abs_det_exact: Fraction | None = None

    def to_dict(self) -> dict:
        J, j, rows = self.worst_case if self.worst_case else (None, None, None)
        out = {
            "passed": self.passed,
            "worst_case": None if J is None else {"J": list(J), "j": j, "rows": list(rows)},
            "min_abs_det": self.min_abs_det,
            "tolerance": self.tolerance,
            "metric": self.metric,
            "exact": self.exact,
            "n_tested": self.n_tested,
        }
        if self.min_abs_det_exact is not None:
            out["min_abs_det_exact"] = str(self.min_abs_det_exact)
        return out


def nondegeneracy_test_count(system: MatrixSystem) -> int:
    k, r, n, nprime = system.k, system.r, system.n, system.nprime
    return math.comb(k, k - r) * r * math.comb(n, n - nprime)


def _relative_smallest_sv(mat: np.ndarray) -> float:
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def _use_exact(system: MatrixSystem, exact: bool | None) -> bool:
    if exact is None:
        return system.is_exact and system.m <= EXACT_MAX_DIM
    if exact and not system.is_exact:
        raise ValueError("exact arithmetic requested but the system has non-rational entries")
    return exact


def _scan_J(system: MatrixSystem, J: tuple[int, ...], use_exact: bool):
    """Minimum over j not in J and row subsets for one index set J."""
    n, nprime = system.n, system.nprime
    row_sets = list(itertools.combinations(range(n), n - nprime))
    best = None
    count = 0
    for j in range(system.k):
        if j in J:
            continue
        for rows in row_sets:
            count += 1
            if use_exact:
                mat = [row for i in J for row in system.A_exact[i]]
                mat += [system.A_exact[j][q] for q in rows]
                val = abs(_exact.det(mat))
            else:
                mat = np.vstack([system.stacked(J), system.A[j][list(rows), :]])
                val = _relative_smallest_sv(mat)
            key = (val, J, j, rows)
            if best is None or key < best:
                best = key
    return best, count


def check_nondegenerate(system: MatrixSystem, tolerance: float = DEFAULT_TOL, *,
                        cap: int = DEFAULT_CAP, exact: bool | None = None,
                        threads: int = 1) -> NondegeneracyReport:
    """Test every m x m matrix (A_J ; rows of A_j) for singularity.

    J runs over (k-r)-subsets, j over indices outside J, and the extra rows over
    (n-n')-subsets of A_j's rows in lexicographic order.  In float mode a matrix is
    singular when its smallest singular value is at most ``tolerance`` times its
    largest.  In exact mode (rational entries, m <= 12) the determinant is computed
    with Fractions and the tolerance is not used.
    """
    total = nondegeneracy_test_count(system)
    if total > cap:
        raise EnumerationCapError(total, cap)
    use_exact = _use_exact(system, exact)
    subsets = list(itertools.combinations(range(system.k), system.k - system.r))
    if threads > 1 and len(subsets) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda J: _scan_J(system, J, use_exact), subsets))
    else:
        results = [_scan_J(system, J, use_exact) for J in subsets]
    best = min(res[0] for res in results)
    n_tested = sum(res[1] for res in results)
    val, J, j, rows = best
    if use_exact:
        return NondegeneracyReport(val > 0, (J, j, rows), float(val), 0.0, "abs-det-exact",
                                   True, n_tested, val)
    return NondegeneracyReport(val > tolerance, (J, j, rows), val, tolerance,
                               "relative-smallest-singular-value", False, n_tested)


def check_reduced_nondegenerate(system: MatrixSystem, tolerance: float = DEFAULT_TOL) -> bool:
    """Rank test on stacked differences (B_{i2}-B_{i1}; ...; B_{it}-B_{i1}), t = m/n.

    Only valid when m = n*ceil((k+1)/2); the stacked matrix is then square of
    size m-n and must be nonsingular for every t-subset of indices.
    """
    n, k, m = system.n, system.k, system.m
    if system.B is None:
        raise ValueError("the reduced test needs a system of the form A_j = (I B_j)")
    if m != n * math.ceil((k + 1) / 2):
        raise ValueError(f"reduced test requires m = n*ceil((k+1)/2) = {n * math.ceil((k + 1) / 2)}, got m={m}")
    t = m // n
    use_exact = system.is_exact and m - n <= EXACT_MAX_DIM
    for idx in itertools.combinations(range(k), t):
        first = idx[0]
        if use_exact:
            b = [[row[n:] for row in a] for a in system.A_exact]
            mat = [[x - y for x, y in zip(b[i][q], b[first][q])] for i in idx[1:] for q in range(n)]
            if _exact.det(mat) == 0:
                return False
        else:
            mat = np.vstack([system.B[i] - system.B[first] for i in idx[1:]])
            if _relative_smallest_sv(mat) <= tolerance:
                return False
    return True


# ---------------------------------------------------------------------------
# the constraint subspace S = {xi : sum_j A_j^t xi_j = 0}


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    ambient: int
    dim: int
    vectors: np.ndarray  # shape (dim, ambient), rows orthonormal

    def project(self, xi: np.ndarray) -> np.ndarray:
        """Orthogonal projection of the rows of ``xi`` onto the subspace."""
        return (np.atleast_2d(xi) @ self.vectors.T) @ self.vectors


def _orthonormalize(vectors: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalisation pass, then sign-normalise."""
    out = []
    for v in vectors:
        w = np.array(v, dtype=float)
        for _ in range(2):
            for q in out:
                w -= (q @ w) * q
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise RankDeficiencyError("dependent vectors during orthonormalisation")
        out.append(w / norm)
    res = np.array(out).reshape(len(out), vectors.shape[1] if vectors.ndim == 2 else 0)
    return fix_signs(res)


def fix_signs(vectors: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    """Flip each row so that its first non-negligible coordinate is positive."""
    out = vectors.copy()
    for row in out:
        scale = np.max(np.abs(row)) if row.size else 0.0
        nz = np.flatnonzero(np.abs(row) > rel * scale)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return out


def null_space_basis(P: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, int]:
    """Orthonormal rows spanning null(P), plus the numerical rank of P (relative tolerance)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    _, s, vt = np.linalg.svd(P)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return _orthonormalize(vt[rank:]), rank


def subspace_S_basis(system: MatrixSystem, tol: float = DEFAULT_TOL) -> SubspaceBasis:
    P = system.stacked_transpose()
    vecs, rank = null_space_basis(P, tol)
    if rank < system.m:
        raise RankDeficiencyError(
            f"the map xi -> sum A_j^t xi_j has rank {rank} < m={system.m}; "
            f"S would have dimension {system.n * system.k - rank} instead of {system.n * system.k - system.m}")
    vecs.setflags(write=False)
    return SubspaceBasis(system.n * system.k, vecs.shape[0], vecs)


def coordinate_chart_check(system: MatrixSystem, J: Sequence[int], Jprime: Sequence[int],
                           tolerance: float = DEFAULT_TOL) -> bool:
    """Do (xi_{J[0]}, ..., xi_{J[r-2]}, xi_{J[r-1]} restricted to Jprime) chart S?

    Equivalent to nonsingularity of the m x m matrix stacking A_i for i outside J
    and the rows of A_{J[-1]} whose indices are not in Jprime.
    """
    n, k, r, nprime = system.n, system.k, system.r, system.nprime
    J = [int(j) for j in J]
    Jprime = [int(q) for q in Jprime]
    if len(J) != r or len(set(J)) != r:
        raise ValueError(f"J must hold {r} distinct indices")
    if len(Jprime) != nprime or len(set(Jprime)) != nprime:
        raise ValueError(f"Jprime must hold {nprime} distinct indices")
    if any(not 0 <= j < k for j in J):
        raise IndexError(f"J indices must lie in 0..{k - 1}")
    if any(not 0 <= q < n for q in Jprime):
        raise IndexError(f"Jprime indices must lie in 0..{n - 1}")
    I = [i for i in range(k) if i not in J]
    last = J[-1]
    rows = [q for q in range(n) if q not in Jprime]
    if system.is_exact and system.m <= EXACT_MAX_DIM:
        mat = [row for i in I for row in system.A_exact[i]] + [system.A_exact[last][q] for q in rows]
        return _exact.det(mat) != 0
    mat = np.vstack([system.stacked(I), system.A[last][rows, :]])
    return _relative_smallest_sv(mat) > tolerance


def admissible_charts(system: MatrixSystem):
    """Yield every (J, Jprime): J an ordered-by-last-element choice of r indices, Jprime an n'-subset."""
    for base in itertools.combinations(range(system.k), system.r):
        for last_pos in range(system.r):
            J = [j for p, j in enumerate(base) if p != last_pos] + [base[last_pos]]
            for Jp in itertools.combinations(range(system.n), system.nprime):
                yield tuple(J), Jp
