import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from configcount.configsearch import make_parallelogram_system
from configcount.fractal import CantorParams, gen_random_cantor, mollify_split
from configcount.functions import BallIndicator, BoxIndicator, GridFunction, smooth_bump
from configcount.linsys import build_system, subspace_S_basis, system_from_A
from configcount.multiform import (
    decomposition_terms,
    decomposition_total,
    error_term_magnitude,
    lambda_direct,
    lambda_fourier,
    lambda_star_tau,
    support_is_empty,
    system_constant,
    theta_eval,
)

AP = build_system(1, 3, 2, [[[0]], [[1]], [[2]]])
PARA, _ = make_parallelogram_system(1)
UNIT = BoxIndicator((0,), (1,))
COUNTER_A = [[[1, 0, 0, 0], [0, 1, 0, 0]], [[0, 0, 1, 0], [0, 0, 0, 1]], [[0, 1, 1, 0], [1, 0, 0, 1]]]


def envelope(beta):
    return lambda kappa: (1 + np.linalg.norm(np.atleast_2d(kappa), axis=1)) ** (-beta / 2)


def zero_transform(xi):
    return np.zeros(np.atleast_2d(xi).shape[0], dtype=complex)


class TestDirect:
    def test_ap_unit_interval(self):
        res = lambda_direct(AP, [UNIT] * 3, grid=1024)
        assert abs(res.value - 0.5) <= 0.02

    def test_counterexample_exact_zero(self):
        system = system_from_A(2, 3, 4, COUNTER_A)
        f = BallIndicator((0, 1), 0.25)
        res = lambda_direct(system, [f] * 3)
        assert res.value == 0.0
        assert "empty-support-exact" in res.flags
        assert support_is_empty(system, [f] * 3)

    def test_zero_function(self):
        zero = GridFunction.on_unit_cube(np.zeros(32))
        assert lambda_direct(AP, [zero, UNIT, UNIT]).value == 0

    def test_mc_route(self):
        res = lambda_direct(AP, [UNIT] * 3, method="mc", samples=200_000, seed=3)
        assert abs(res.value - 0.5) <= 4 * res.est_error + 1e-3
        again = lambda_direct(AP, [UNIT] * 3, method="mc", samples=200_000, seed=3)
        assert again.value == res.value

    def test_grid_limit(self):
        s = build_system(1, 6, 5, [[[0, 0, 0, 0]]] + [np.eye(4)[i:i + 1].tolist() for i in range(4)] + [[[1, 1, 1, 1]]])
        with pytest.raises(ValueError):
            lambda_direct(s, [UNIT] * 6)

    def test_multilinearity(self):
        rng = np.random.default_rng(0)
        a = GridFunction.on_unit_cube(rng.random(32))
        b = GridFunction.on_unit_cube(rng.random(32))
        c = GridFunction.on_unit_cube(rng.random(32))
        lhs = lambda_direct(AP, [a + b, c, c], grid=256).value
        rhs = lambda_direct(AP, [a, c, c], grid=256).value + lambda_direct(AP, [b, c, c], grid=256).value
        assert abs(lhs - rhs) <= 1e-8 * abs(lhs)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["ap", "para"]))
    def test_positivity(self, seed, which):
        # random densities with 0 <= f <= 2 and integral >= 0.3
        rng = np.random.default_rng(seed)
        N = 16
        cells = rng.random(N) < rng.uniform(0.2, 0.9)
        vals = np.where(cells, rng.uniform(0.5, 2.0, N), 0.0)
        if vals.mean() < 0.3:
            vals[np.argsort(vals)[: N // 2]] = 1.0
        f = GridFunction.on_unit_cube(vals)
        assert f.integral() >= 0.3 and vals.max() <= 2
        system = AP if which == "ap" else PARA
        res = lambda_direct(system, [f] * system.k, grid=96 if which == "ap" else 48)
        assert res.value > 0


class TestFourier:
    def test_ap_box_matches_direct(self):
        direct = lambda_direct(AP, [UNIT] * 3, grid=1024).value
        fourier = lambda_fourier(AP, [UNIT] * 3, R=64, Q=4096)
        assert abs(fourier.value - direct) <= 0.05 * abs(direct)
        assert abs(fourier.imag) <= 1e-6 * (abs(fourier.value) + 1)

    def test_bump_equivalence_parallelogram(self):
        f = smooth_bump(1, 256)
        direct = lambda_direct(PARA, [f] * 4, grid=128).value
        fourier = lambda_fourier(PARA, [f] * 4, R=32, Q=2048).value
        assert abs(fourier - direct) <= 0.05 * abs(direct) + 1e-4

    def test_point_mass_diverges(self):
        one = lambda xi: np.ones(np.atleast_2d(xi).shape[0], dtype=complex)
        res = lambda_fourier(AP, [one] * 3, R=64, Q=1024)
        assert res.diverged
        assert math.isinf(res.est_error)
        small = lambda_fourier(AP, [one] * 3, R=16, Q=256)
        assert res.value > small.value

    def test_zero_factor(self):
        res = lambda_fourier(AP, [zero_transform, UNIT, UNIT], R=16, Q=256)
        assert res.value == 0

    def test_constant_matches_basis_jacobian(self):
        # S = span (1,-2,1)/sqrt 6 and xi_1 = s/sqrt 6, so the constant is 1/sqrt 6
        assert system_constant(AP) == pytest.approx(1 / math.sqrt(6), rel=1e-12)

    def test_json(self):
        res = lambda_fourier(AP, [UNIT] * 3, R=8, Q=256)
        json.dumps(res.to_dict())


class TestStarTau:
    def test_tau_zero_times_constant(self):
        star = lambda_star_tau(AP, [UNIT] * 3, None, R=32, Q=2048)
        fourier = lambda_fourier(AP, [UNIT] * 3, R=32, Q=2048)
        assert fourier.value == pytest.approx(star.value * system_constant(AP), rel=1e-12)

    def test_tau_must_be_orthogonal(self):
        basis = subspace_S_basis(AP)
        with pytest.raises(ValueError):
            lambda_star_tau(AP, [UNIT] * 3, basis.vectors[0], R=8, Q=64)

    @pytest.mark.parametrize("system", [AP, PARA], ids=["ap", "parallelogram"])
    def test_uniform_in_tau(self, system):
        beta = 2 * (system.n * system.k - system.m) / system.k + 0.4
        basis = subspace_S_basis(system)
        P = system.stacked_transpose()
        rng = np.random.default_rng(1)
        vals = []
        for _ in range(10):
            tau = P.T @ rng.normal(size=system.m)
            tau *= rng.uniform(0, 1) / np.linalg.norm(tau)
            res = lambda_star_tau(system, [envelope(beta)] * system.k, tau, R=2048, Q=40960, basis=basis)
            assert not res.diverged
            vals.append(res.value)
        assert max(vals) <= 1.1 * min(vals)

    @pytest.mark.parametrize("system", [AP, PARA], ids=["ap", "parallelogram"])
    def test_threshold(self, system):
        crit = 2 * (system.n * system.k - system.m) / system.k
        above = lambda_star_tau(system, [envelope(crit + 0.2)] * system.k, R=4096, Q=81920)
        below = lambda_star_tau(system, [envelope(crit - 0.2)] * system.k, R=4096, Q=81920)
        assert not above.diverged
        assert below.diverged


class TestTheta:
    def test_bump_equivalence(self):
        g = BoxIndicator((0, 0), (1, 1))
        f = smooth_bump(1, 128)
        res = theta_eval(AP, g, [f] * 3, grid=256, R=8, Q=128)
        assert abs(res.fourier - res.direct) <= 0.05 * abs(res.direct)

    def test_g_one_on_support_is_lambda(self):
        f = smooth_bump(1, 128)
        g = BoxIndicator((-1, -1), (2, 2))
        res = theta_eval(AP, g, [f] * 3, grid=256, R=2, Q=8)
        assert res.direct == pytest.approx(lambda_direct(AP, [f] * 3, grid=256).value, rel=1e-12)

    def test_zero(self):
        zero = GridFunction.on_unit_cube(np.zeros(16))
        res = theta_eval(AP, BoxIndicator((0, 0), (1, 1)), [zero, UNIT, UNIT], grid=64, R=4, Q=32)
        assert res.direct == 0 and res.fourier == 0


@pytest.fixture(scope="module")
def cantor():
    return gen_random_cantor(CantorParams(1, 4, 3, 5, seed=0), 1024)


class TestDecomposition:
    def test_identity(self, cantor):
        split = mollify_split(cantor, 8)
        terms = decomposition_terms(AP, split.mu1_transform, split.mu2_transform, R=64, Q=4096)
        assert len(terms) == 8
        full = lambda_star_tau(AP, [cantor] * 3, R=64, Q=4096).value
        assert abs(decomposition_total(terms) - full) <= 0.01 * abs(full)

    def test_mu2_zero(self, cantor):
        split = mollify_split(cantor, 8)
        terms = decomposition_terms(AP, split.mu1_transform, zero_transform, R=16, Q=512)
        assert terms[0].value != 0
        assert all(t.value == 0 for t in terms[1:])

    def test_error_terms_shrink(self, cantor):
        mags = []
        for N_moll in (4, 8, 16):
            split = mollify_split(cantor, N_moll)
            terms = decomposition_terms(AP, split.mu1_transform, split.mu2_transform, R=64, Q=4096)
            mags.append(error_term_magnitude(terms))
        assert mags[0] >= mags[1] >= mags[2]

    def test_mollified_convergence(self, cantor):
        full = lambda_star_tau(AP, [cantor] * 3, R=64, Q=4096).value
        gaps = []
        for N_moll in (4, 8, 16):
            split = mollify_split(cantor, N_moll)
            gaps.append(abs(lambda_star_tau(AP, [split.mu1_transform] * 3, R=64, Q=4096).value - full))
        assert gaps[0] > gaps[1] > gaps[2]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_holder_type_bound(seed):
    # |Lambda| <= M ||f3^||_inf ||f1||_1^(1/2) ||f2||_1^(1/2) for AP (r = 1, k - 1 = 2r)
    rng = np.random.default_rng(seed)
    fs = []
    for _ in range(3):
        vals = rng.random(32) * (rng.random(32) < 0.6)
        vals *= rng.uniform(0.2, 1.0) / max(vals.mean(), 1e-12)
        fs.append(GridFunction.on_unit_cube(vals))
    M = max(float(f.values.max()) for f in fs)
    absval = [lambda xi, f=f: np.abs(f.transform(xi)) for f in fs]
    R, Q = 256, 16384
    lhs = system_constant(AP) * lambda_star_tau(AP, absval, R=R, Q=Q).value
    grid = np.linspace(-R, R, 2 * R + 1)[:, None]
    sup3 = float(np.max(np.abs(fs[2].transform(grid))))
    rhs = M * sup3 * math.sqrt(fs[0].integral() * fs[1].integral())
    assert lhs <= 1.05 * rhs
