"""The configuration-counting form Lambda(f_1..f_k) = integral prod_j f_j(A_j x) dx,
evaluated directly, on the Fourier side over S = {xi : sum_j A_j^t xi_j = 0},
and over translates S + tau, together with the weighted form Theta and the
2^k splitting of Lambda* used for mollified measures.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .approxident import constant_CP, surface_chart
from .fractal import FourierSample
from .linsys import MatrixSystem, SubspaceBasis, subspace_S_basis

DIVERGENCE_REL_CHANGE = 0.25
TRUNCATION_WARN = 0.10
MAX_POINTS = 5 * 10**7
_CHUNK = 1 << 18


@dataclass(frozen=True)
class LambdaResult:
    value: float
    imag: float
    method: str
    R: float | None
    Q: int | None
    est_error: float
    flags: tuple[str, ...] = ()
    details: dict = field(default_factory=dict, compare=False)

    @property
    def diverged(self) -> bool:
        return "divergent" in self.flags

    def to_dict(self) -> dict:
        err = self.est_error if math.isfinite(self.est_error) else "inf"
        out = {"value": self.value, "imag": self.imag, "method": self.method, "R": self.R,
               "Q": self.Q, "est_error": err, "flags": list(self.flags)}
        for key, val in self.details.items():
            out[key] = val
        return out


# ---------------------------------------------------------------------------
# direct side


def _support_intervals(f) -> list[tuple[Fraction, Fraction]]:
    if hasattr(f, "exact_support"):
        return f.exact_support()
    lo, hi = f.support_box()
    return [(Fraction(float(a)), Fraction(float(b))) for a, b in zip(lo, hi)]


def _system_rows_exact(system: MatrixSystem):
    if system.A_exact is not None:
        return system.A_exact
    return tuple([[Fraction(float(v)) for v in row] for row in a] for a in system.A)


def support_is_empty(system: MatrixSystem, f: Sequence, rounds: int = 64) -> bool:
    """Exact interval propagation over {x : A_j x in supp-box(f_j) for all j}.

    Returns True only when the constraints are provably inconsistent; False means
    "not shown empty".  All arithmetic is in Fractions, starting from the exact
    support boxes (floats are converted exactly).
    """
    cons = []
    for a, fj in zip(_system_rows_exact(system), f):
        for row, (L, U) in zip(a, _support_intervals(fj)):
            cons.append((row, L, U))
    m = system.m
    lo: list[Fraction | None] = [None] * m
    hi: list[Fraction | None] = [None] * m

    def term_range(c, i):
        if c == 0:
            return Fraction(0), Fraction(0)
        if lo[i] is None or hi[i] is None:
            return None
        a, b = c * lo[i], c * hi[i]
        return (a, b) if a <= b else (b, a)

    for _ in range(rounds):
        changed = False
        for row, L, U in cons:
            ranges = [term_range(c, i) for i, c in enumerate(row)]
            known = [r for r in ranges if r is not None]
            if len(known) == m:
                smin = sum(r[0] for r in known)
                smax = sum(r[1] for r in known)
                if smin > U or smax < L:
                    return True
            for i, c in enumerate(row):
                if c == 0:
                    continue
                others = [ranges[l] for l in range(m) if l != i]
                if any(r is None for r in others):
                    continue
                rmin = sum(r[0] for r in others)
                rmax = sum(r[1] for r in others)
                a, b = (L - rmax) / c, (U - rmin) / c
                new_lo, new_hi = (a, b) if a <= b else (b, a)
                if lo[i] is None or new_lo > lo[i]:
                    lo[i], changed = new_lo, True
                if hi[i] is None or new_hi < hi[i]:
                    hi[i], changed = new_hi, True
                if lo[i] > hi[i]:
                    return True
                ranges[i] = term_range(c, i)
        if not changed:
            break
    return False


def integration_box(system: MatrixSystem, f: Sequence):
    """Bounding box of {x : A_j x in supp-box(f_j)} by linear programming, or None if empty."""
    rows, b_ub = [], []
    for a, fj in zip(system.A, f):
        lo, hi = fj.support_box()
        rows.extend(a)
        b_ub.extend(hi)
        rows.extend(-a)
        b_ub.extend(-np.asarray(lo))
    A_ub, b_ub = np.array(rows), np.array(b_ub, dtype=float)
    m = system.m
    lo_box, hi_box = np.empty(m), np.empty(m)
    for i in range(m):
        for sign, target in ((1.0, lo_box), (-1.0, hi_box)):
            c = np.zeros(m)
            c[i] = sign
            res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * m, method="highs")
            if res.status == 2:
                return None
            if res.status != 0:
                raise ValueError(f"could not bound the integration region: {res.message}")
            target[i] = sign * res.fun
    return lo_box, hi_box


def _integrand(system: MatrixSystem, f: Sequence, pts: np.ndarray) -> np.ndarray:
    out = np.ones(pts.shape[0])
    for a, fj in zip(system.A, f):
        vals = np.asarray(fj(pts @ a.T), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite function samples")
        out *= vals
    return out


def _midpoint_sum(func: Callable, lo: np.ndarray, hi: np.ndarray, G: int) -> float:
    dim = lo.size
    step = (hi - lo) / G
    total = 0.0
    count = G ** dim
    for start in range(0, count, _CHUNK):
        idx = np.array(np.unravel_index(np.arange(start, min(count, start + _CHUNK)), (G,) * dim)).T
        total += float(np.sum(func(lo + (idx + 0.5) * step)))
    return total * float(np.prod(step))


def philox_uniform(seed: int, count: int, dim: int) -> np.ndarray:
    """Uniform points in [0,1)^dim from a counter-based stream (same for any thread count)."""
    return np.random.Generator(np.random.Philox(seed)).random((count, dim))


def lambda_direct(system: MatrixSystem, f: Sequence, grid: int = 256, *, method: str = "grid",
                  samples: int = 10**6, seed: int = 0) -> LambdaResult:
    """Quadrature of prod_j f_j(A_j x) over x in R^m.

    ``method='grid'`` is the midpoint rule with ``grid`` points per axis on the
    bounding box of the support (m <= 4); ``'mc'`` is seeded Monte Carlo.
    Provable emptiness of the support returns exactly 0 before any quadrature.
    """
    if len(f) != system.k:
        raise ValueError(f"need k={system.k} functions, got {len(f)}")
    if method not in ("grid", "mc"):
        raise ValueError("method must be 'grid' or 'mc'")
    if method == "grid" and system.m > 4:
        raise ValueError(f"grid quadrature supports m <= 4, got m={system.m}; use method='mc'")
    if support_is_empty(system, f):
        return LambdaResult(0.0, 0.0, "direct", None, grid, 0.0, ("empty-support-exact",))
    box = integration_box(system, f)
    if box is None:
        return LambdaResult(0.0, 0.0, "direct", None, grid, 0.0, ("empty-support-lp",))
    lo, hi = box
    integrand = lambda pts: _integrand(system, f, pts)
    if method == "grid":
        if grid ** system.m > MAX_POINTS:
            raise ValueError(f"{grid}^{system.m} points exceed the quadrature budget")
        value = _midpoint_sum(integrand, lo, hi, grid)
        coarse = _midpoint_sum(integrand, lo, hi, max(1, grid // 2))
        return LambdaResult(value, 0.0, "direct", None, grid, abs(value - coarse), ())
    vol = float(np.prod(hi - lo))
    total, total_sq = 0.0, 0.0
    u = philox_uniform(seed, samples, system.m)
    for start in range(0, samples, _CHUNK):
        vals = integrand(lo + u[start:start + _CHUNK] * (hi - lo))
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return LambdaResult(vol * mean, 0.0, "direct-mc", None, samples,
                        vol * math.sqrt(var / samples), ("monte-carlo",), {"seed": seed})


# ---------------------------------------------------------------------------
# Fourier side


def as_transform(obj) -> Callable:
    """Turn a FourierSample, a function object with ``transform``, or a callable into xi -> f^(xi)."""
    if isinstance(obj, FourierSample):
        return obj.interpolate
    if hasattr(obj, "transform"):
        return obj.transform
    if callable(obj):
        return obj
    raise TypeError(f"cannot evaluate a Fourier transform from {type(obj).__name__}")


def system_constant(system: MatrixSystem) -> float:
    """C(A) = 1/|det Q| for P = (A_1^t | ... | A_k^t)."""
    return 1.0 / constant_CP(surface_chart(system.stacked_transpose()))


@dataclass
class _Nodes:
    t: np.ndarray  # (P, s) chart coordinates
    radius: np.ndarray
    weight: float
    R: float
    Q: int
    mc: bool


def _chart_nodes(dim: int, R: float, Q: int, seed: int, samples: int) -> _Nodes:
    if dim <= 3:
        if Q ** dim > MAX_POINTS:
            raise ValueError(f"{Q}^{dim} chart points exceed the quadrature budget")
        axis = -R + (np.arange(Q) + 0.5) * (2 * R / Q)
        t = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        rad = np.linalg.norm(t, axis=1)
        keep = rad <= R
        return _Nodes(t[keep], rad[keep], (2 * R / Q) ** dim, R, Q, False)
    rng = np.random.Generator(np.random.Philox(seed))
    d = rng.standard_normal((samples, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = R * rng.random(samples) ** (1.0 / dim)
    vol = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * R ** dim
    return _Nodes(d * rad[:, None], rad, vol / samples, R, samples, True)


def _factor_values(system: MatrixSystem, basis: SubspaceBasis, transform: Callable, j: int,
                   nodes: _Nodes, tau: np.ndarray | None) -> np.ndarray:
    n = system.n
    block = basis.vectors[:, j * n:(j + 1) * n]
    out = np.empty(nodes.t.shape[0], dtype=complex)
    for start in range(0, nodes.t.shape[0], _CHUNK):
        xi = nodes.t[start:start + _CHUNK] @ block
        if tau is not None:
            xi = xi + tau[j * n:(j + 1) * n]
        out[start:start + _CHUNK] = transform(xi)
    return out


def _range_flags(objs, system, basis, nodes, tau) -> list[str]:
    flags = []
    n = system.n
    for j, obj in enumerate(objs):
        if isinstance(obj, FourierSample):
            block = basis.vectors[:, j * n:(j + 1) * n]
            reach = nodes.R * np.linalg.norm(block, 2)
            if tau is not None:
                reach += np.max(np.abs(tau[j * n:(j + 1) * n]))
            if reach > obj.Xi * obj.step:
                flags.append(f"sample-range-exceeded:{j}")
            flags.append("lattice-interpolation")
    return sorted(set(flags))


def _assess(product: np.ndarray, nodes: _Nodes, method: str, extra_flags=(), details=None,
            scale: float = 1.0) -> LambdaResult:
    """Sum the integrand and judge convergence from the R/4, R/2, R partial integrals."""
    w = nodes.weight
    R = nodes.R
    rad = nodes.radius
    inner = rad <= R / 2
    core = rad <= R / 4
    total = complex(product.sum()) * w
    half = complex(product[inner].sum()) * w
    absval = np.abs(product)
    shell_outer = float(absval[~inner].sum()) * w
    shell_inner = float(absval[inner & ~core].sum()) * w
    abs_total = float(absval.sum()) * w
    flags = list(extra_flags)
    rel_change = abs(total - half) / abs(total) if total != 0 else (0.0 if half == 0 else math.inf)
    grows = shell_outer >= shell_inner and shell_outer > 1e-3 * abs_total
    if rel_change > DIVERGENCE_REL_CHANGE or grows:
        flags.append("divergent")
        est = math.inf
    else:
        ratio = shell_outer / shell_inner if shell_inner > 0 else 0.0
        est = shell_outer * ratio / (1 - ratio) if ratio < 1 else shell_outer
        if nodes.mc:
            var = float(np.var(product.real)) * (w * product.size) ** 2 / product.size
            est += math.sqrt(var)
        est *= scale
        if est > TRUNCATION_WARN * abs(total.real * scale):
            flags.append("truncation-warning")
    info = {"half_R_value": half.real * scale, "shell_ratio": (shell_outer / shell_inner) if shell_inner else None,
            "rel_change": rel_change if math.isfinite(rel_change) else "inf"}
    if details:
        info.update(details)
    return LambdaResult(total.real * scale, total.imag * scale, method, R, nodes.Q, est,
                        tuple(sorted(set(flags))), info)


def _prepare(system, basis, R, Q, seed, samples):
    basis = basis if basis is not None else subspace_S_basis(system)
    if basis.dim == 0:
        raise ValueError("S is trivial; nothing to integrate")
    nodes = _chart_nodes(basis.dim, R, Q, seed, samples)
    return basis, nodes


def _check_tau(basis: SubspaceBasis, tau, tol: float = 1e-9) -> np.ndarray:
    tau = np.asarray(tau, dtype=float).reshape(-1)
    if tau.size != basis.ambient:
        raise ValueError(f"tau must have {basis.ambient} coordinates")
    leak = np.abs(basis.vectors @ tau)
    if leak.size and leak.max() > tol * max(1.0, float(np.linalg.norm(tau))):
        raise ValueError(f"tau is not orthogonal to S (max inner product {leak.max():.3g})")
    return tau


def lambda_star_tau(system: MatrixSystem, g: Sequence, tau=None, R: float = 64.0, Q: int = 4096, *,
                    basis: SubspaceBasis | None = None, seed: int = 0,
                    samples: int = 10**6) -> LambdaResult:
    """Integral of prod_j g_j(eta_j) over S + tau (Lebesgue measure on S, no constant)."""
    if len(g) != system.k:
        raise ValueError(f"need k={system.k} functions, got {len(g)}")
    basis, nodes = _prepare(system, basis, R, Q, seed, samples)
    tau_v = None if tau is None else _check_tau(basis, tau)
    if tau_v is not None and not np.any(tau_v):
        tau_v = None
    product = np.ones(nodes.t.shape[0], dtype=complex)
    for j, gj in enumerate(g):
        product *= _factor_values(system, basis, as_transform(gj), j, nodes, tau_v)
    flags = _range_flags(g, system, basis, nodes, tau_v) + (["monte-carlo"] if nodes.mc else [])
    return _assess(product, nodes, "star_tau", flags)


def lambda_fourier(system: MatrixSystem, fhat: Sequence, R: float = 64.0, Q: int = 4096, *,
                   basis: SubspaceBasis | None = None, seed: int = 0,
                   samples: int = 10**6) -> LambdaResult:
    """C(A) times the integral of prod_j f^_j(xi_j) over S."""
    star = lambda_star_tau(system, fhat, None, R, Q, basis=basis, seed=seed, samples=samples)
    C = system_constant(system)
    details = dict(star.details)
    details["constant"] = C
    details["half_R_value"] = star.details["half_R_value"] * C
    err = star.est_error * C if math.isfinite(star.est_error) else math.inf
    return LambdaResult(star.value * C, star.imag * C, "fourier", R, star.Q, err, star.flags, details)


def decomposition_terms(system: MatrixSystem, mu1_hat, mu2_hat, R: float = 64.0, Q: int = 4096, *,
                        basis: SubspaceBasis | None = None, tau=None, seed: int = 0,
                        samples: int = 10**6) -> list[LambdaResult]:
    """Lambda*_tau for every pattern in {mu1^, mu2^}^k, on one shared set of nodes.

    Each result's ``details['pattern']`` lists, per slot, 1 for mu1^ and 2 for mu2^.
    The first term is the all-mu1^ pattern.
    """
    basis, nodes = _prepare(system, basis, R, Q, seed, samples)
    tau_v = None if tau is None else _check_tau(basis, tau)
    t1, t2 = as_transform(mu1_hat), as_transform(mu2_hat)
    vals = [(_factor_values(system, basis, t1, j, nodes, tau_v),
             _factor_values(system, basis, t2, j, nodes, tau_v)) for j in range(system.k)]
    flags = sorted(set(_range_flags([mu1_hat] * system.k, system, basis, nodes, tau_v)
                       + _range_flags([mu2_hat] * system.k, system, basis, nodes, tau_v)))
    out = []
    for pattern in itertools.product((1, 2), repeat=system.k):
        product = np.ones(nodes.t.shape[0], dtype=complex)
        for j, which in enumerate(pattern):
            product *= vals[j][which - 1]
        out.append(_assess(product, nodes, "star_tau", flags, {"pattern": list(pattern)}))
    return out


def decomposition_total(terms: Sequence[LambdaResult]) -> float:
    return float(sum(t.value for t in terms))


def error_term_magnitude(terms: Sequence[LambdaResult]) -> float:
    """Sum of |value| over the terms that contain at least one mu2^ factor."""
    return float(sum(abs(t.value) for t in terms if 2 in t.details["pattern"]))


# ---------------------------------------------------------------------------
# weighted form


@dataclass(frozen=True)
class ThetaResult:
    direct: float
    fourier: float
    fourier_imag: float
    grid: int
    R: float
    Q: int

    def __iter__(self):
        return iter((self.direct, self.fourier))


def theta_eval(system: MatrixSystem, g, f: Sequence, grid: int = 256, R: float = 8.0, Q: int = 128) -> ThetaResult:
    """Integral of g(x) prod_j f_j(A_j x), directly and as
    integral over R^{nk} of g^(-(sum_j A_j^t xi_j)) prod_j f^_j(xi_j)."""
    if len(f) != system.k:
        raise ValueError(f"need k={system.k} functions, got {len(f)}")
    m, n, k = system.m, system.n, system.k
    if system.m > 4:
        raise ValueError("direct side supports m <= 4")
    direct = 0.0
    if not support_is_empty(system, f):
        box = integration_box(system, f)
        if box is not None:
            glo, ghi = g.support_box()
            lo, hi = np.maximum(box[0], glo), np.minimum(box[1], ghi)
            if np.all(hi > lo):
                direct = _midpoint_sum(lambda x: g(x) * _integrand(system, f, x), lo, hi, grid)
    dim = n * k
    if Q ** dim > MAX_POINTS:
        raise ValueError(f"{Q}^{dim} frequency points exceed the budget")
    axis = -R + (np.arange(Q) + 0.5) * (2 * R / Q)
    block_pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    factors = [as_transform(fj)(block_pts) for fj in f]
    prod = factors[0]
    for fac in factors[1:]:
        prod = np.multiply.outer(prod, fac).reshape(-1)
    if not np.any(prod):
        return ThetaResult(direct, 0.0, 0.0, grid, R, Q)
    P = system.stacked_transpose()
    g_t = as_transform(g)
    total = 0.0 + 0.0j
    count = prod.size
    per_block = block_pts.shape[0]
    for start in range(0, count, _CHUNK):
        idx = np.arange(start, min(count, start + _CHUNK))
        digits = np.array(np.unravel_index(idx, (per_block,) * k)).T
        xi = block_pts[digits].reshape(idx.size, dim)
        total += complex(np.sum(g_t(-(xi @ P.T)) * prod[idx]))
    total *= (2 * R / Q) ** dim
    return ThetaResult(direct, total.real, total.imag, grid, R, Q)
