"""Random Cantor-type measures on grids, their Fourier transforms, and the
ball / decay constants that quantify how fractal they are."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .functions import GridFunction, bump_1d, separable_dft

MODES = ("independent-uniform", "radial-product")


def _is_power_of_two(N: int) -> bool:
    return N >= 1 and (N & (N - 1)) == 0


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Probability masses on the N^n cells of [0,1]^n (cell c centred at (c + 1/2)/N)."""

    n: int
    N: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.N,) * self.n:
            raise ValueError(f"weights have shape {w.shape}, expected {(self.N,) * self.n}")
        if not _is_power_of_two(self.N):
            raise ValueError(f"N={self.N} is not a power of two")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def support_mask(self) -> np.ndarray:
        return self.weights > 0

    def centers(self) -> list[np.ndarray]:
        return [(np.arange(self.N) + 0.5) / self.N] * self.n

    def transform(self, freqs) -> np.ndarray:
        """Exact mu^(xi) at arbitrary real frequencies (direct sum over cells)."""
        xi = np.atleast_2d(np.asarray(freqs, dtype=float))
        if xi.shape[1] != self.n and xi.shape[0] == 1 and self.n == 1:
            xi = xi.T
        return separable_dft(self.weights, self.centers(), xi)


@dataclass(frozen=True)
class CantorParams:
    n: int
    M: int
    T: int
    stages: int
    seed: int
    mode: str = "independent-uniform"

    def __post_init__(self):
        if self.n < 1 or self.M < 2 or self.stages < 1:
            raise ValueError("need n >= 1, M >= 2, stages >= 1")
        if not 1 <= self.T <= self.M ** self.n:
            raise ValueError(f"T={self.T} must lie in [1, M^n={self.M ** self.n}]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def resolution(self) -> int:
        return self.M ** self.stages

    @property
    def target_dimension(self) -> float:
        """log T / log M: the expected ball and Fourier exponent."""
        return math.log(self.T) / math.log(self.M)


def _retained_cells(params: CantorParams) -> np.ndarray:
    """Boolean occupancy at resolution M^stages.

    Parents are visited in row-major order; each one draws its T children by a
    partial Fisher-Yates shuffle of its M^n child indices (row-major too).
    """
    n, M, T = params.n, params.M, params.T
    rng = np.random.Generator(np.random.PCG64(params.seed))
    children = np.array(np.unravel_index(np.arange(M ** n), (M,) * n)).T
    occ = np.ones((1,) * n, dtype=bool)
    for _ in range(params.stages):
        side = occ.shape[0] * M
        nxt = np.zeros((side,) * n, dtype=bool)
        for parent in np.argwhere(occ):
            order = list(range(M ** n))
            for i in range(T):
                j = int(rng.integers(i, len(order)))
                order[i], order[j] = order[j], order[i]
            for c in order[:T]:
                nxt[tuple(parent * M + children[c])] = True
        occ = nxt
    return occ


def _refine(coarse: np.ndarray, factor: int) -> np.ndarray:
    out = coarse
    for axis in range(coarse.ndim):
        out = np.repeat(out, factor, axis=axis)
    return out


def gen_random_cantor(params: CantorParams, N: int) -> GridMeasure:
    if params.mode != "independent-uniform":
        raise ValueError("use gen_radial_product for the radial-product mode")
    res = params.resolution
    if N % res != 0:
        raise ValueError(f"M^stages={res} must divide N={N}")
    occ = _retained_cells(params)
    fine = _refine(occ, N // res).astype(float)
    return GridMeasure(params.n, N, fine / fine.sum())


def _orthant_directions(n: int, count: int, seed: int) -> np.ndarray:
    if n == 2:
        ang = (np.arange(count) + 0.5) * (0.5 * np.pi / count)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = np.random.Generator(np.random.Philox(seed))
    d = np.abs(rng.standard_normal((count, n)))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def gen_radial_product(params: CantorParams, n: int, N: int, *, radial_samples: int | None = None,
                       directions: int | None = None) -> GridMeasure:
    """Radial Cantor measure times the uniform measure on the sphere, binned to the grid.

    The 1-D Cantor measure ``params`` (n=1) lives on t in [0,1] and is placed at
    radii 1/4 + t/4 about the cube centre, i.e. on [1/2, 1] after scaling the
    cube to side 2.  The positive orthant is tabulated and mirrored, so
    reflections through the centre planes are exact symmetries of the weights.
    """
    if n < 2:
        raise ValueError("radial product needs n >= 2")
    if params.n != 1:
        raise ValueError("radial product takes 1-D Cantor parameters")
    if N % 2:
        raise ValueError("N must be even")
    occ = _retained_cells(CantorParams(1, params.M, params.T, params.stages, params.seed))
    res = occ.shape[0]
    half = N // 2
    q = radial_samples or max(2, int(math.ceil(2 * half / res)))
    count = directions or (4 * half ** (n - 1) if n == 2 else min(200_000, 8 * half ** (n - 1)))
    dirs = _orthant_directions(n, count, params.seed)
    kept = np.flatnonzero(occ)
    t = ((kept[:, None] + (np.arange(q)[None, :] + 0.5) / q) / res).ravel()
    rho = 0.25 + 0.25 * t
    quarter = np.zeros((half,) * n)
    for r in rho:
        idx = np.minimum((r * dirs * N).astype(np.int64), half - 1)
        np.add.at(quarter, tuple(idx.T), 1.0)
    full = quarter
    for axis in range(n):
        full = np.concatenate([np.flip(full, axis=axis), full], axis=axis)
    return GridMeasure(n, N, full / full.sum())


# ---------------------------------------------------------------------------
# Fourier side


@dataclass(frozen=True, eq=False)
class FourierSample:
    """mu^ on the lattice step * k, k integer with |k|_inf <= Xi.

    Convention: mu^(xi) = sum_c w_c exp(-2 pi i x_c . xi).  ``grid[k + Xi]`` holds
    the value at xi = step * k (one index per axis).  The default step is 1.
    """

    n: int
    Xi: int
    grid: np.ndarray
    step: float = 1.0

    @property
    def freqs(self) -> np.ndarray:
        axes = [np.arange(-self.Xi, self.Xi + 1) * self.step] * self.n
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)

    @property
    def values(self) -> np.ndarray:
        return self.grid.reshape(-1)

    def at(self, xi) -> complex:
        k = np.rint(np.asarray(xi, dtype=float) / self.step).astype(int)
        return complex(self.grid[tuple(k + self.Xi)])

    def interpolate(self, freqs) -> np.ndarray:
        """Multilinear interpolation between lattice values; zero beyond the sampled box."""
        xi = np.atleast_2d(np.asarray(freqs, dtype=float))
        idx = (xi / self.step + self.Xi).T
        re = ndimage.map_coordinates(self.grid.real, idx, order=1, mode="constant", cval=0.0)
        im = ndimage.map_coordinates(self.grid.imag, idx, order=1, mode="constant", cval=0.0)
        return re + 1j * im

    transform = interpolate


def _symmetrize(grid: np.ndarray) -> np.ndarray:
    """Enforce F(-xi) = conj F(xi) bit-exactly on a lattice centred at the origin."""
    mirrored = np.conj(grid[(slice(None, None, -1),) * grid.ndim])
    return (grid + mirrored) / 2


def fourier_transform(measure: GridMeasure, Xi: int, step: float = 1.0) -> FourierSample:
    """mu^ at xi = step * k for all integer |k|_inf <= Xi.

    With the default integer lattice the sum is done by an FFT plus the half-cell
    phase; other steps use the direct separable sum.
    """
    N, n = measure.N, measure.n
    if Xi < 0 or step <= 0:
        raise ValueError("Xi must be non-negative and step positive")
    if Xi * step > N / 2:
        raise ValueError(f"largest frequency {Xi * step} exceeds N/2={N // 2}")
    k = np.arange(-Xi, Xi + 1)
    if step == 1.0:
        F = np.fft.fftn(measure.weights)
        block = F[np.ix_(*([k % N] * n))]
        phase = np.exp(-1j * np.pi * k / N)
        for axis in range(n):
            shape = [1] * n
            shape[axis] = -1
            block = block * phase.reshape(shape)
    else:
        axes = [k * step] * n
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        block = measure.transform(pts).reshape((2 * Xi + 1,) * n)
    block = _symmetrize(block)
    block[(Xi,) * n] = measure.weights.sum()
    return FourierSample(n, Xi, block, float(step))


# ---------------------------------------------------------------------------
# ball condition


def _ball_kernel(radius_cells: int, n: int) -> np.ndarray:
    """Cells whose centre offset d has |d| < R weigh 1; |d| = R exactly weighs 1/2."""
    ax = np.arange(-radius_cells, radius_cells + 1)
    d2 = sum(np.meshgrid(*([ax ** 2] * n), indexing="ij"))
    r2 = radius_cells ** 2
    return np.where(d2 < r2, 1.0, np.where(d2 == r2, 0.5, 0.0))


def ball_profile(measure: GridMeasure, alpha: float) -> list[tuple[float, float]]:
    """For r = 2^-1, ..., 1/N: max over support cells x of mu(B(x, r)) / r^alpha."""
    if not 0 < alpha <= measure.n:
        raise ValueError(f"alpha must lie in (0, {measure.n}]")
    N, n = measure.N, measure.n
    w = measure.weights
    mask = measure.support_mask
    out = []
    for j in range(1, int(math.log2(N)) + 1):
        R = N >> j
        kernel = _ball_kernel(R, n)
        mass = signal.fftconvolve(w, kernel, mode="same")
        best = float(np.max(mass[mask]))
        out.append((2.0 ** -j, max(best, 0.0) / 2.0 ** (-j * alpha)))
    return out


def ball_condition_constant(measure: GridMeasure, alpha: float) -> float:
    """max over support cells and dyadic radii of mu(B(x,r)) / r^alpha.

    Balls are decided by cell centres; a cell centre lying exactly on the sphere
    counts with weight 1/2.
    """
    return max(v for _, v in ball_profile(measure, alpha))


# ---------------------------------------------------------------------------
# decay fit


@dataclass(frozen=True)
class DecayFit:
    beta_hat: float
    C_hat: float
    window: tuple[float, float]
    slope: float
    annuli: tuple[tuple[float, float, float], ...]  # (lo, hi, max |mu^|)

    def envelope(self, radius):
        return self.C_hat * np.asarray(radius, dtype=float) ** (-self.beta_hat / 2)


def decay_exponent_fit(sample: FourierSample, window=(8, 256)) -> DecayFit:
    """Fit |mu^(xi)| <~ C |xi|^(-beta/2) from dyadic-annulus maxima."""
    lo, hi = float(window[0]), float(window[1])
    if lo < 1 or hi <= lo:
        raise ValueError("window must satisfy 1 <= lo < hi")
    if hi > sample.Xi * sample.step * math.sqrt(sample.n) + 1e-9:
        raise ValueError(f"window upper end {hi} exceeds the sampled range")
    radius = np.linalg.norm(sample.freqs, axis=1)
    mag = np.abs(sample.values)
    in_window = (radius >= lo) & (radius <= hi)
    annuli = []
    a = lo
    while a < hi:
        b = min(2 * a, hi)
        sel = (radius >= a) & ((radius < b) if b < hi else (radius <= b))
        if np.any(sel):
            annuli.append((a, b, float(mag[sel].max())))
        a = b
    if len(annuli) < 3:
        raise ValueError(f"only {len(annuli)} dyadic annuli in window; need at least 3")
    centres = np.log([math.sqrt(a * b) for a, b, _ in annuli])
    logmax = np.log([max(v, 1e-300) for _, _, v in annuli])
    slope, _ = np.polyfit(centres, logmax, 1)
    beta = max(0.0, -2.0 * float(slope))
    scaled = mag[in_window] * radius[in_window] ** (beta / 2)
    C = float(np.quantile(scaled, 0.99, method="higher"))
    return DecayFit(beta, C, (lo, hi), float(slope), tuple(annuli))


# ---------------------------------------------------------------------------
# mollification


def mollifier_kernel_1d(N: int, N_moll: int) -> np.ndarray:
    """Bump exp(-1/(1 - (2 N_moll x)^2)) tabulated at offsets x = i/N, normalised to sum 1."""
    if N_moll < 2:
        raise ValueError("N_moll must be >= 2")
    L = math.ceil(N / (2 * N_moll)) - 1
    if L < 1:
        raise ValueError(f"mollifier support 1/N_moll={1 / N_moll} is below one cell of the "
                         f"N={N} grid; use a finer grid (N > 2*N_moll)")
    offsets = np.arange(-L, L + 1) / N
    k = bump_1d(2 * N_moll * offsets)
    return k / k.sum()


def kernel_transform(kernel: np.ndarray, h: float, freqs) -> np.ndarray:
    """Tensor transform of the discrete symmetric kernel; real-valued."""
    xi = np.atleast_2d(np.asarray(freqs, dtype=float))
    L = (kernel.size - 1) // 2
    d = np.arange(1, L + 1) * h
    per_axis = kernel[L] + 2 * np.cos(2 * np.pi * xi[..., None] * d) @ kernel[L + 1:]
    return np.prod(per_axis, axis=-1)


@dataclass(frozen=True, eq=False)
class MollifiedSplit:
    mu1: GridFunction
    mu2_hat: FourierSample
    kernel: np.ndarray
    N_moll: int
    measure: GridMeasure

    @property
    def phi_sup(self) -> float:
        """sup of the unscaled bump implied by the tabulated kernel, tensorised over n axes."""
        per_axis = self.kernel.max() / (self.measure.h * self.N_moll)
        return float(per_axis ** self.measure.n)

    def mass(self) -> float:
        return self.mu1.integral()

    def mu1_transform(self, freqs) -> np.ndarray:
        """Transform of mu * phi with mu1's mass placed at cell centres."""
        return self.measure.transform(freqs) * kernel_transform(self.kernel, self.measure.h, freqs)

    def mu2_transform(self, freqs) -> np.ndarray:
        return self.measure.transform(freqs) * (1.0 - kernel_transform(self.kernel, self.measure.h, freqs))

    def __iter__(self):
        return iter((self.mu1, self.mu2_hat))


def mollify_split(measure: GridMeasure, N_moll: int, Xi: int | None = None) -> MollifiedSplit:
    """Split mu into the bounded density mu * phi_{N_moll} and the remainder's transform."""
    kernel = mollifier_kernel_1d(measure.N, N_moll)
    L = (kernel.size - 1) // 2
    mass = np.pad(measure.weights, L)
    for axis in range(measure.n):
        mass = ndimage.convolve1d(mass, kernel, axis=axis, mode="constant", cval=0.0)
    h = measure.h
    mu1 = GridFunction(mass / h ** measure.n, np.full(measure.n, -L * h), h)
    Xi = measure.N // 2 if Xi is None else Xi
    sample = fourier_transform(measure, Xi)
    factor = 1.0 - kernel_transform(kernel, h, sample.freqs).reshape(sample.grid.shape)
    factor[(Xi,) * measure.n] = 0.0  # the kernel has unit mass, so its transform is 1 at the origin
    mu2 = FourierSample(measure.n, Xi, sample.grid * factor)
    return MollifiedSplit(mu1, mu2, kernel, N_moll, measure)
