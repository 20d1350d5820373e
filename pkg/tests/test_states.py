import math

import numpy as np
import pytest

from eprlab.bell import SiteSettings, cv_bell_eval
from eprlab.hilbert import (ModeLayout, StateVector, annihilation, creation, expect, expectation,
                            joint_distribution, number, quadrature, quadrature_density,
                            schwinger_spin, site_number, variance)
from eprlab.states import (SITE_A, SITE_B, SqueezeParams, cat, coherent, cv_bell_state,
                           ghz_polarization, parametric_amp, polarizing_split, recommended_cutoff,
                           spin_singlet, squeezed, two_mode_squeezed, werner)

P = math.pi / 2


def x_p(psi, mode=0):
    lay = psi.layout
    return quadrature(lay, mode, 0.0), quadrature(lay, mode, P)


class TestCoherent:
    def test_zero_is_vacuum(self):
        assert np.allclose(coherent(0, 5).amplitudes, StateVector.vacuum(ModeLayout((5,))).amplitudes)

    def test_alpha_one(self):
        psi = coherent(1.0, 30)
        x, _ = x_p(psi)
        assert abs(expectation(psi, x) - 2) < 1e-8
        assert abs(variance(psi, x) - 1) < 1e-8

    def test_poisson_mean(self):
        psi = coherent(0.7, 25)
        assert abs(expectation(psi, number(psi.layout, 0)) - 0.49) < 1e-8

    def test_tail_check(self):
        with pytest.raises(ValueError):
            coherent(3.0, 8)


class TestSqueezed:
    def test_r_zero_is_vacuum(self):
        assert np.allclose(squeezed(0.0, 6).amplitudes, StateVector.vacuum(ModeLayout((6,))).amplitudes)
        assert np.allclose(two_mode_squeezed(0.0, (3, 3)).amplitudes,
                           StateVector.vacuum(ModeLayout((3, 3))).amplitudes)

    def test_minimum_uncertainty(self):
        psi = squeezed(0.8, 2 * recommended_cutoff(0.8, kind="single"))
        x, p = x_p(psi)
        assert abs(variance(psi, x) - math.exp(1.6)) < 1e-6
        assert abs(variance(psi, x) * variance(psi, p) - 1) < 1e-6

    def test_two_mode_marginal_variance(self):
        r = 0.6
        c = recommended_cutoff(r)
        psi = two_mode_squeezed(r, (c, c))
        assert abs(variance(psi, quadrature(psi.layout, 0, 0)) - math.cosh(2 * r)) < 1e-6

    def test_two_mode_generator_sign(self):
        # exp(r(ab - a^dag b^dag))|0,0> has <ab> = -sinh(r) cosh(r)
        r = 0.4
        psi = two_mode_squeezed(r, (30, 30))
        lay = psi.layout
        ab = expect(psi, annihilation(lay, 0) @ annihilation(lay, 1))
        assert abs(ab + math.sinh(r) * math.cosh(r)) < 1e-8

    def test_negative_r_rejected(self):
        with pytest.raises(ValueError):
            SqueezeParams(-0.1)

    def test_tail_check(self):
        with pytest.raises(ValueError):
            two_mode_squeezed(1.5, (5, 5))

    def test_recommended_cutoff(self):
        c = recommended_cutoff(1.0)
        t2 = math.tanh(1.0) ** 2
        assert t2 ** (c + 1) < 1e-8 <= t2 ** c


class TestCat:
    def test_p_variance_formula(self):
        for alpha in (0.3, 0.5, 1.0, 2.0):
            psi = cat(alpha, 40)
            _, p = x_p(psi)
            assert abs(variance(psi, p) - (1 - 4 * alpha ** 2 * math.exp(-4 * alpha ** 2))) < 1e-8
        psi = cat(0.5, 30)
        assert abs(variance(psi, x_p(psi)[1]) - 0.632) < 1e-3

    def test_normalization_is_exact(self):
        # the two branches overlap, but the pi/2 relative phase removes the cross term
        for alpha in (0.1, 0.5, 1.5):
            n = np.arange(41)
            c = np.exp(-alpha ** 2 / 2) * alpha ** n / np.sqrt([float(math.factorial(k)) for k in n])
            raw = (np.exp(1j * np.pi / 4) * c * (-1.0) ** n + np.exp(-1j * np.pi / 4) * c) / math.sqrt(2)
            assert abs(np.vdot(raw, raw).real - 1) < 1e-12
            assert abs(abs(np.vdot(raw, cat(alpha, 40).amplitudes)) - 1) < 1e-12

    def test_fringes_at_p_zero(self):
        alpha = 0.5
        psi = cat(alpha, 30)
        grid = np.linspace(-8, 8, 16001)
        d = quadrature_density(psi, 0, P, grid)
        step = grid[1] - grid[0]
        density = d.probs / step
        # |alpha> carries e^{-i alpha p} in the p picture, so |psi(p)|^2 has 1 - sin(2 alpha p)
        ref = np.exp(-grid ** 2 / 2) * (1 - np.sin(2 * alpha * grid)) / math.sqrt(2 * math.pi)
        i0 = int(np.argmin(np.abs(grid)))
        assert abs(density[i0] - ref[i0]) < 1e-4
        assert np.max(np.abs(density - ref)) < 1e-6

    def test_small_alpha_limit(self):
        psi = cat(1e-3, 10)
        _, p = x_p(psi)
        assert abs(variance(psi, p) - 1) < 1e-5
        assert abs(abs(psi.amplitudes[0]) - 1) < 1e-5

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            cat(0.0, 10)


class TestSpinSinglet:
    def test_bell_state_anticorrelated(self):
        psi = spin_singlet(0.5)
        lay = psi.layout
        d = joint_distribution(psi, schwinger_spin(lay, SITE_A, "z"), schwinger_spin(lay, SITE_B, "z"))
        assert abs(d.expect(lambda a, b: (np.abs(a + b) < 1e-9).astype(float)) - 1) < 1e-12
        assert abs(expectation(psi, schwinger_spin(lay, SITE_B, "z"))) < 1e-12

    @pytest.mark.parametrize("j", [0.5, 1.0, 1.5, 2.0])
    def test_normalized_and_total_jz_zero(self, j):
        psi = spin_singlet(j)
        lay = psi.layout
        assert abs(psi.norm - 1) < 1e-10
        jz = schwinger_spin(lay, SITE_A, "z") + schwinger_spin(lay, SITE_B, "z")
        out = jz.matrix @ psi.amplitudes
        assert np.linalg.norm(out) < 1e-10

    def test_j_one_site_numbers(self):
        psi = spin_singlet(1.0)
        lay = psi.layout
        d = joint_distribution(psi, site_number(lay, SITE_A), site_number(lay, SITE_B))
        assert abs(d.probs[d.index_of(0, 2), d.index_of(1, 2)] - 1) < 1e-12

    def test_binomial_expansion_for_n_two(self):
        # (a+^dag b-^dag - a-^dag b+^dag)^2 |0> / (2! sqrt 3) expanded by hand:
        # (2|2,0,0,2> - 2|1,1,1,1> + 2|0,2,2,0>) / (2 sqrt 3)
        psi = spin_singlet(1.0)
        lay = psi.layout
        ref = np.zeros(lay.dim)
        ref[lay.flat_index((2, 0, 0, 2))] = 1 / math.sqrt(3)
        ref[lay.flat_index((1, 1, 1, 1))] = -1 / math.sqrt(3)
        ref[lay.flat_index((0, 2, 2, 0))] = 1 / math.sqrt(3)
        assert np.allclose(psi.amplitudes, ref, atol=1e-12)

    def test_cutoff_too_small(self):
        with pytest.raises(ValueError):
            spin_singlet(1.0, 1)


class TestParametricAmp:
    def test_mean_number(self):
        r = 0.4
        psi = parametric_amp(r, 12)
        assert abs(expectation(psi, site_number(psi.layout, SITE_B)) - 2 * math.sinh(r) ** 2) < 1e-6

    def test_vacuum_at_zero(self):
        psi = parametric_amp(0.0, 2)
        assert abs(abs(psi.amplitudes[0]) - 1) < 1e-14

    def test_one_photon_sector_is_the_singlet(self):
        psi = parametric_amp(0.3, 6)
        lay = psi.layout
        single = spin_singlet(0.5, 6)
        nb = site_number(lay, SITE_B).matrix.diagonal().real
        proj = np.where(np.abs(nb - 1) < 1e-9, psi.amplitudes, 0)
        proj = proj / np.linalg.norm(proj)
        assert abs(abs(np.vdot(single.amplitudes, proj)) - 1) < 1e-12
        assert abs(np.vdot(single.amplitudes, proj) - 1) < 1e-12

    def test_closed_form_matches_matrix_exponential(self):
        a = parametric_amp(0.25, 4, method="closed")
        b = parametric_amp(0.25, 4, method="expm")
        # the expm path sees truncation only through the pair sectors above the cutoff
        assert abs(abs(np.vdot(a.amplitudes, b.amplitudes)) - 1) < 1e-5


class TestCvBellState:
    def test_n_two_overlap(self):
        psi = cv_bell_state(2, 1 / math.sqrt(2), 1 / math.sqrt(2))
        lay = psi.layout
        assert abs(expect(psi, annihilation(lay, 0) @ creation(lay, 1)) - 0.5) < 1e-12

    def test_every_ket_has_half_the_photons(self):
        n = 8
        psi = cv_bell_state(n, 0.6, 0.8)
        lay = psi.layout
        for i in np.nonzero(np.abs(psi.amplitudes) > 0)[0]:
            assert sum(lay.occupations(i)) == n // 2

    def test_ratio_at_n_ten(self):
        psi = cv_bell_state(10, 1 / math.sqrt(2), 1 / math.sqrt(2))
        rep = cv_bell_eval(psi, SiteSettings.half_split(10))
        assert abs(rep.params["ratio"] - 0.25 * (4 / 3) ** 5) < 1e-10
        assert rep.violated

    def test_polarizing_split_of_ghz(self):
        split = polarizing_split(ghz_polarization(5))
        ref = cv_bell_state(10, 1 / math.sqrt(2), 1 / math.sqrt(2))
        assert np.allclose(split.amplitudes, ref.amplitudes, atol=1e-12)

    def test_odd_n_rejected(self):
        with pytest.raises(ValueError):
            cv_bell_state(3, 1, 0)


class TestWerner:
    def test_endpoints(self):
        pure = werner(1.0)
        bell = spin_singlet(0.5, 1)
        assert np.allclose(pure.matrix, np.outer(bell.amplitudes, bell.amplitudes.conj()))
        mixed = werner(0.0)
        assert abs(np.trace(mixed.matrix) - 1) < 1e-12
        assert abs(mixed.purity - 0.25) < 1e-12

    def test_range(self):
        with pytest.raises(ValueError):
            werner(1.2)


@pytest.mark.parametrize("make", [
    lambda: coherent(0.3 + 0.4j, 20), lambda: squeezed(0.4, 40), lambda: two_mode_squeezed(0.5, (20, 20)),
    lambda: cat(0.8, 25), lambda: spin_singlet(1.5), lambda: parametric_amp(0.2, 5),
    lambda: cv_bell_state(4, 0.6, 0.8), lambda: ghz_polarization(3),
])
def test_constructors_normalized(make):
    assert abs(make().norm - 1) < 1e-10
