import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from configcount.fractal import (
    CantorParams,
    FourierSample,
    GridMeasure,
    ball_condition_constant,
    ball_profile,
    decay_exponent_fit,
    fourier_transform,
    gen_radial_product,
    gen_random_cantor,
    mollify_split,
)


def point_mass(n=1, N=64, cell=0):
    w = np.zeros((N,) * n)
    w[(cell,) * n] = 1.0
    return GridMeasure(n, N, w)


def uniform(n=1, N=1024):
    return GridMeasure(n, N, np.full((N,) * n, 1.0 / N ** n))


class TestGridMeasure:
    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            GridMeasure(1, 4, np.array([0.5, 0.5, 0.5, 0.0]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            GridMeasure(1, 4, np.array([1.5, -0.5, 0.0, 0.0]))

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            GridMeasure(1, 6, np.full(6, 1 / 6))

    def test_support_mask(self):
        m = point_mass(N=8, cell=3)
        assert m.support_mask.tolist() == [i == 3 for i in range(8)]


class TestCantor:
    def test_keep_everything_is_lebesgue(self):
        m = gen_random_cantor(CantorParams(1, 2, 2, 5, seed=1), 32)
        assert np.all(m.weights == 1 / 32)

    def test_mass_bookkeeping(self):
        m = gen_random_cantor(CantorParams(1, 4, 2, 4, seed=7), 256)
        assert m.support_mask.sum() == 16
        assert np.allclose(m.weights[m.support_mask], 1 / 16, rtol=0, atol=1e-15)

    def test_refined_grid(self):
        m = gen_random_cantor(CantorParams(1, 4, 2, 3, seed=2), 256)
        assert m.support_mask.sum() == 8 * 4
        assert abs(m.weights.sum() - 1) < 1e-12

    def test_divisibility(self):
        with pytest.raises(ValueError):
            gen_random_cantor(CantorParams(1, 4, 2, 4, seed=0), 128)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            CantorParams(1, 4, 5, 2, seed=0)
        with pytest.raises(ValueError):
            CantorParams(1, 4, 2, 0, seed=0)

    def test_deterministic(self):
        p = CantorParams(2, 4, 5, 3, seed=11)
        a, b = gen_random_cantor(p, 64), gen_random_cantor(p, 64)
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_each_parent_keeps_T_children(self):
        p = CantorParams(2, 4, 3, 3, seed=5)
        occ = gen_random_cantor(p, 64).support_mask
        for stage in range(1, 4):
            side = 4 ** stage
            block = 64 // side
            coarse = occ.reshape(side, block, side, block).any(axis=(1, 3))
            parents = coarse.reshape(side // 4, 4, side // 4, 4).sum(axis=(1, 3))
            assert set(parents[parents > 0].ravel().tolist()) == {3}

    @pytest.mark.parametrize("seed", range(4))
    def test_ball_exponent_near_half(self, seed):
        # independent tabulation: cell masses within R cells of each support cell, R = N / 2^j
        m = gen_random_cantor(CantorParams(1, 4, 2, 6, seed=seed), 4096)
        w = m.weights
        csum = np.concatenate([[0.0], np.cumsum(w)])
        centres = np.flatnonzero(w)
        radii, mass = [], []
        for j in range(1, 13):
            R = m.N >> j
            lo = np.clip(centres - R, 0, m.N)
            hi = np.clip(centres + R + 1, 0, m.N)
            inner = csum[hi] - csum[lo]
            edge = 0.5 * (w[np.clip(centres - R, 0, m.N - 1)] * (centres - R >= 0)
                          + w[np.clip(centres + R, 0, m.N - 1)] * (centres + R < m.N))
            radii.append(2.0 ** -j)
            mass.append(float(np.max(inner - edge)))
        slope = np.polyfit(np.log(radii), np.log(mass), 1)[0]
        assert abs(slope - 0.5) <= 0.1
        prof = ball_profile(m, 0.5)
        assert np.allclose([v * r ** 0.5 for r, v in prof], mass, rtol=1e-9)


class TestRadial:
    def test_normalised_and_symmetric(self):
        m = gen_radial_product(CantorParams(1, 4, 2, 3, seed=0), 2, 128)
        assert abs(m.weights.sum() - 1) < 1e-12
        w = m.weights
        assert np.allclose(w, w[::-1, :], rtol=0, atol=1e-12)
        assert np.allclose(w, w[:, ::-1], rtol=0, atol=1e-12)

    def test_lebesgue_radial_is_annulus(self):
        m = gen_radial_product(CantorParams(1, 2, 2, 4, seed=0), 2, 64)
        c = (np.arange(64) + 0.5) / 64 - 0.5
        rr = np.hypot(*np.meshgrid(c, c, indexing="ij"))
        assert np.all(m.weights[rr < 0.24] == 0)
        assert np.all(m.weights[rr > 0.51] == 0)
        assert abs(fourier_transform(m, 0).values[0] - 1) < 1e-12

    def test_positive_decay(self):
        m = gen_radial_product(CantorParams(1, 4, 2, 3, seed=0), 2, 128)
        fit = decay_exponent_fit(fourier_transform(m, 64), (8, 64))
        assert fit.beta_hat > 0

    def test_rejects_dimension_one(self):
        with pytest.raises(ValueError):
            gen_radial_product(CantorParams(1, 4, 2, 3, seed=0), 1, 64)


class TestFourier:
    def test_point_mass_unit_modulus(self):
        s = fourier_transform(point_mass(N=64, cell=5), 32)
        assert np.allclose(np.abs(s.values), 1, atol=1e-12)

    def test_uniform_matches_sinc(self):
        # the lattice step 1/2 avoids the zeros of the sinc at the nonzero integers
        s = fourier_transform(uniform(N=1024), 32, step=0.5)
        xi = s.freqs[:, 0]
        expected = np.abs(np.sinc(xi))
        mask = expected > 1e-3
        assert np.all(np.abs(np.abs(s.values[mask]) - expected[mask]) <= 0.01 * expected[mask])

    def test_fft_and_direct_routes_agree(self):
        m = gen_random_cantor(CantorParams(1, 4, 2, 4, seed=1), 256)
        fast = fourier_transform(m, 64)
        slow = m.transform(fast.freqs)
        assert np.allclose(fast.values, slow, atol=1e-12)

    def test_conjugate_symmetry_exact(self):
        s = fourier_transform(gen_random_cantor(CantorParams(2, 4, 5, 3, seed=2), 64), 16)
        g = s.grid
        assert np.array_equal(g[::-1, ::-1], np.conj(g))

    def test_invariants(self):
        m = gen_random_cantor(CantorParams(1, 4, 3, 5, seed=9), 1024)
        s = fourier_transform(m, 512)
        assert abs(s.at([0]) - 1) <= 1e-12 * m.N
        assert np.all(np.abs(s.values) <= 1 + 1e-12 * m.N)

    def test_anti_aliasing_guard(self):
        with pytest.raises(ValueError):
            fourier_transform(uniform(N=64), 33)

    def test_interpolate_on_lattice(self):
        s = fourier_transform(gen_random_cantor(CantorParams(1, 4, 2, 3, seed=0), 64), 16)
        assert np.allclose(s.interpolate(s.freqs), s.values)


class TestBallConstant:
    def test_lebesgue_1d(self):
        C = ball_condition_constant(uniform(1, 256), 1.0)
        assert 1 <= C <= 2 * (1 + 1e-12)

    def test_lebesgue_2d(self):
        C = ball_condition_constant(uniform(2, 64), 2.0)
        assert 1 <= C <= 4 * (1 + 1e-12)

    def test_point_mass_grows(self):
        prof = ball_profile(point_mass(N=256, cell=100), 0.5)
        ratios = [v for _, v in prof]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))
        assert ball_condition_constant(point_mass(N=256, cell=100), 0.5) == pytest.approx((1 / 256) ** -0.5)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            ball_condition_constant(uniform(1, 64), 1.5)


class TestDecayFit:
    def test_uniform_beta_two(self):
        s = fourier_transform(uniform(N=1024), 128, step=0.5)
        fit = decay_exponent_fit(s, (4, 64))
        assert abs(fit.beta_hat - 2) <= 0.2

    def test_point_mass_beta_zero(self):
        fit = decay_exponent_fit(fourier_transform(point_mass(N=1024, cell=0), 512), (8, 256))
        assert fit.beta_hat == pytest.approx(0, abs=1e-9)

    def test_envelope_dominates(self):
        s = fourier_transform(gen_random_cantor(CantorParams(1, 4, 2, 6, seed=4), 4096), 256)
        fit = decay_exponent_fit(s, (8, 256))
        r = np.linalg.norm(s.freqs, axis=1)
        sel = (r >= 8) & (r <= 256)
        covered = np.abs(s.values[sel]) <= fit.envelope(r[sel]) * (1 + 1e-12)
        assert covered.mean() >= 0.99
        assert fit.beta_hat >= 0

    def test_too_few_annuli(self):
        s = fourier_transform(uniform(N=64), 32)
        with pytest.raises(ValueError):
            decay_exponent_fit(s, (8, 20))


class TestMollify:
    def test_point_mass_gives_kernel(self):
        m = point_mass(N=64, cell=32)
        split = mollify_split(m, 4)
        L = (split.kernel.size - 1) // 2
        profile = split.mu1.values
        nz = np.flatnonzero(profile)
        assert np.allclose(profile[nz] * m.h, split.kernel[split.kernel > 0])
        assert nz.size == np.count_nonzero(split.kernel)
        assert L >= 1

    def test_mass_and_zero_frequency(self):
        m = gen_random_cantor(CantorParams(1, 4, 3, 5, seed=0), 1024)
        for N_moll in (4, 8, 16):
            split = mollify_split(m, N_moll)
            assert abs(split.mass() - 1) < 1e-10
            assert split.mu2_hat.at([0]) == 0

    def test_decomposition_of_transform(self):
        m = gen_random_cantor(CantorParams(1, 4, 3, 4, seed=0), 256)
        split = mollify_split(m, 8)
        xi = np.linspace(-40, 40, 81)[:, None]
        assert np.allclose(split.mu1_transform(xi) + split.mu2_transform(xi), m.transform(xi), atol=1e-14)

    def test_density_bound(self):
        m = gen_random_cantor(CantorParams(1, 4, 2, 6, seed=1), 4096)
        C = ball_condition_constant(m, 0.5)
        for N_moll in (4, 8, 16):
            split = mollify_split(m, N_moll)
            assert split.mu1.values.max() <= 2 * C * split.phi_sup * N_moll ** 0.5

    def test_too_coarse(self):
        with pytest.raises(ValueError, match="finer grid"):
            mollify_split(uniform(N=16), 8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([(1, 4, 2, 4), (1, 4, 3, 4), (2, 4, 6, 2), (2, 2, 3, 4)]))
def test_mass_conservation(seed, shape):
    n, M, T, stages = shape
    m = gen_random_cantor(CantorParams(n, M, T, stages, seed=seed), M ** stages)
    assert abs(m.weights.sum() - 1) <= 1e-10
    assert abs(mollify_split(m, 2).mass() - 1) <= 1e-10 if m.N > 4 else True


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mu2_envelope(seed):
    m = gen_random_cantor(CantorParams(1, 4, 2, 5, seed=seed), 1024)
    fit = decay_exponent_fit(fourier_transform(m, 512), (8, 256))
    eps = 0.25
    for N_moll in (4, 8, 16):
        split = mollify_split(m, N_moll)
        r = np.abs(split.mu2_hat.freqs[:, 0])
        bound = 10 * fit.C_hat * N_moll ** (-eps * fit.beta_hat / 2) * (1 + r) ** (-(fit.beta_hat / 2) * (1 - eps))
        assert np.all(np.abs(split.mu2_hat.values) <= bound)


def test_fourier_sample_lookup():
    g = np.arange(9, dtype=complex).reshape(3, 3)
    s = FourierSample(2, 1, g)
    assert s.at([-1, 1]) == 2
    assert s.freqs.shape == (9, 2)
