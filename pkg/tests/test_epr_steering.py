import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eprlab.channels import apply_loss_all
from eprlab.epr_steering import (ABOVE, CriterionReport, bohm_product_criterion, bohm_sum_criterion,
                                 efficiency_threshold_scan, inference_variance, lossy_bell,
                                 parametric_estimate_variance, parametric_mean_nb,
                                 parametric_sum_report, reid_criterion, superposition_size_from_epr,
                                 z_correlation_sum, zero_crossing)
from eprlab.hilbert import (DensityOperator, JointDistribution, ModeLayout, quadrature,
                            schwinger_spin, tensor)
from eprlab.states import SITE_A, SITE_B, parametric_amp, two_mode_squeezed, werner

GOLDEN = (math.sqrt(5) - 1) / 2


def random_table(rng, na, nb):
    p = rng.random((na, nb)) ** 3
    return JointDistribution([np.sort(rng.normal(size=na)), np.sort(rng.normal(size=nb))], p / p.sum())


def sum_threshold(nb):
    """Positive root of 3 eta^2 + 3 n eta - (1 + 2 n) for the lossy amplifier."""
    return (-3 * nb + math.sqrt(9 * nb ** 2 + 12 * (1 + 2 * nb))) / 6


class TestReport:
    def test_directions(self):
        below = CriterionReport("x", 0.5, 1.0)
        above = CriterionReport("y", 3.0, 2.0, direction=ABOVE)
        assert below.violated and above.violated
        assert below.margin == pytest.approx(0.5) and above.margin == pytest.approx(1.0)
        assert not CriterionReport("z", 0.5, 1.0, defined=False).violated
        assert below.as_row()["violated"] is True


class TestInferenceVariance:
    def test_perfect_correlation(self):
        d = JointDistribution([np.array([-1.0, 1.0]), np.array([-1.0, 1.0])], np.eye(2) / 2)
        assert inference_variance(d).value == 0
        lin = inference_variance(d, kind="linear")
        assert lin.value == pytest.approx(0) and lin.g == pytest.approx(1)

    def test_hand_table(self):
        # pointer 0 -> target {0, 2} evenly; pointer 1 -> target 2
        p = np.array([[0.25, 0.25], [0.0, 0.5]])
        d = JointDistribution([np.array([0.0, 1.0]), np.array([0.0, 2.0])], p)
        assert inference_variance(d).value == pytest.approx(0.5 * 1.0)
        # <A^2> = 0.5, <AB> = 1, <B^2> = 3: 3 - 1 / 0.5 = 1
        assert inference_variance(d, kind="linear").value == pytest.approx(1.0)

    @given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 6))
    @settings(max_examples=80, deadline=None)
    def test_conditional_le_linear_le_marginal(self, seed, na, nb):
        rng = np.random.default_rng(seed)
        d = random_table(rng, na, nb)
        cond = inference_variance(d).value
        lin = inference_variance(d, kind="linear").value
        marginal_second_moment = d.moment(1, 2)
        assert cond <= lin + 1e-12
        assert cond <= d.variance(1) + 1e-12
        assert lin <= marginal_second_moment + 1e-12

    def test_axes_and_kinds(self):
        d = random_table(np.random.default_rng(3), 3, 4)
        with pytest.raises(ValueError):
            inference_variance(d, 0, 0)
        with pytest.raises(ValueError):
            inference_variance(d, kind="median")


class TestReid:
    @pytest.mark.parametrize("r", [0.0, 0.3, 0.8])
    def test_two_mode_squeezed_linear(self, r):
        cut = 40 if r > 0.5 else 25
        psi = two_mode_squeezed(r, (cut, cut))
        lay = psi.layout
        xs = (quadrature(lay, 0, 0), quadrature(lay, 1, 0))
        ps = (quadrature(lay, 0, math.pi / 2), quadrature(lay, 1, math.pi / 2))
        rep = reid_criterion(psi, xs, ps, kind="linear")
        assert rep.params["var_inf_x"] == pytest.approx(1 / math.cosh(2 * r), abs=1e-7)
        assert rep.params["var_inf_p"] == pytest.approx(1 / math.cosh(2 * r), abs=1e-7)
        assert rep.violated == (r > 0)


class TestBohm:
    @pytest.mark.parametrize("eta", [0.3, 0.5, 0.618, 0.62, 0.9, 1.0])
    def test_lossy_bell_closed_form(self, eta):
        rep = bohm_product_criterion(lossy_bell(eta))
        assert rep.params["var_inf_x"] == pytest.approx(eta * (1 - eta ** 2) / 4, abs=1e-12)
        assert rep.params["var_inf_y"] == pytest.approx(eta * (1 - eta ** 2) / 4, abs=1e-12)
        assert rep.params["zz_sum"] == pytest.approx(eta ** 2 / 2, abs=1e-12)
        assert rep.rhs == pytest.approx(eta ** 2 / 4, abs=1e-12)
        assert rep.violated == (eta > GOLDEN)

    def test_half_efficiency_value(self):
        assert bohm_product_criterion(lossy_bell(0.5)).lhs == pytest.approx(0.09375)

    def test_threshold_scan(self):
        res = efficiency_threshold_scan(lambda e: bohm_product_criterion(lossy_bell(e)),
                                        np.linspace(0.4, 1.0, 13), tol=1e-5)
        assert res.monotone and not res.upper_bound_only
        assert res.threshold == pytest.approx(GOLDEN, abs=1e-4)

    @pytest.mark.parametrize("p", [0.0, 0.4, 0.6, 0.65, 1.0])
    def test_werner_threshold_matches_loss(self, p):
        rep = bohm_product_criterion(werner(p))
        assert rep.lhs == pytest.approx((1 - p ** 2) / 4, abs=1e-12)
        assert rep.rhs == pytest.approx(p / 4, abs=1e-12)
        assert rep.violated == (p > GOLDEN)

    def test_sum_form_on_lossy_bell(self):
        # 3 eta (1 - eta^2) / 4 < eta / 2 exactly when eta > 1/sqrt(3)
        for eta in (0.5, 0.57, 0.58, 0.8):
            rep = bohm_sum_criterion(lossy_bell(eta))
            assert rep.lhs == pytest.approx(3 * eta * (1 - eta ** 2) / 4, abs=1e-12)
            assert rep.params["mean_NB"] == pytest.approx(eta, abs=1e-12)
            assert rep.violated == (eta > 1 / math.sqrt(3))

    def test_pointer_must_live_on_site_a(self):
        rho = lossy_bell(0.9)
        with pytest.raises(ValueError):
            bohm_product_criterion(rho, axes={"x": schwinger_spin(rho.layout, SITE_B, "x")})
        with pytest.raises(ValueError):
            bohm_product_criterion(rho, axes={"q": "x"})

    def test_custom_axes(self):
        # inferring j_x^B from J_y^A of the singlet gives no information
        rep = bohm_product_criterion(lossy_bell(1.0), axes={"x": "y"})
        assert rep.params["var_inf_x"] == pytest.approx(0.25)

    def test_z_correlation_sum(self):
        rho = lossy_bell(1.0)
        lay = rho.layout
        zz = z_correlation_sum(rho, schwinger_spin(lay, SITE_A, "z"), schwinger_spin(lay, SITE_B, "z"))
        assert zz == pytest.approx(0.5)


def _site_state(rng, mixed):
    """Random one-photon polarization state of a two-mode site (cutoff 1)."""
    lay = ModeLayout((1, 1))
    kets = []
    for _ in range(2 if mixed else 1):
        v = np.zeros(4, dtype=complex)
        c = rng.normal(size=2) + 1j * rng.normal(size=2)
        v[lay.flat_index((1, 0))], v[lay.flat_index((0, 1))] = c / np.linalg.norm(c)
        kets.append(v)
    w = rng.dirichlet(np.ones(len(kets)))
    return DensityOperator(lay, sum(wi * np.outer(k, k.conj()) for wi, k in zip(w, kets)))


@given(st.integers(0, 10_000), st.integers(1, 3), st.floats(0.2, 1.0))
@settings(max_examples=40, deadline=None)
def test_separable_mixtures_satisfy_both_forms(seed, n_terms, eta):
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(n_terms))
    mats = [tensor(_site_state(rng, True), _site_state(rng, True)).matrix for _ in range(n_terms)]
    rho = DensityOperator(ModeLayout((1, 1, 1, 1)), sum(w * m for w, m in zip(weights, mats)))
    rho = apply_loss_all(rho, eta)
    assert not bohm_product_criterion(rho).violated
    assert bohm_product_criterion(rho).margin <= 1e-10
    assert bohm_sum_criterion(rho).margin <= 1e-10


class TestParametric:
    def test_closed_form_matches_state(self):
        r, eta = 0.2, 0.7
        rho = apply_loss_all(parametric_amp(r, 4), eta)
        rep = bohm_sum_criterion(rho, kind="linear")
        var = parametric_estimate_variance(eta, r)
        for c in "xyz":
            assert rep.params[f"var_inf_{c}"] == pytest.approx(var, abs=1e-5)
        assert rep.params["mean_NB"] == pytest.approx(parametric_mean_nb(eta, r), abs=1e-5)

    @pytest.mark.parametrize("nb", [0.01, 2.0, 10.0, 100.0])
    def test_sum_threshold(self, nb):
        res = efficiency_threshold_scan(lambda e: parametric_sum_report(e, mean_nb=nb),
                                        np.linspace(0.3, 1.0, 29), tol=1e-7)
        assert res.threshold == pytest.approx(sum_threshold(nb), abs=1e-6)

    def test_large_signal_limit(self):
        assert sum_threshold(1e6) == pytest.approx(2 / 3, abs=1e-5)

    def test_size(self):
        rep = parametric_sum_report(0.9, mean_nb=20)
        assert rep.params["size_S"] == pytest.approx(
            math.sqrt(rep.params["mean_NB"] - 2 * rep.params["var_est"]))
        assert superposition_size_from_epr(1.0, 0.7) == 0.0

    def test_arguments(self):
        with pytest.raises(ValueError):
            parametric_sum_report(0.9)
        with pytest.raises(ValueError):
            parametric_sum_report(0.9, mean_nb=1, r=0.5)
        assert parametric_sum_report(0.8, r=0.4).params["r"] == 0.4


class TestScan:
    def test_non_monotone(self):
        res = efficiency_threshold_scan(lambda e: math.sin(10 * e), np.linspace(0, 1, 11))
        assert res.threshold is None and not res.monotone

    def test_always_and_never(self):
        assert efficiency_threshold_scan(lambda e: 1.0, [0.1, 0.2]).upper_bound_only
        assert efficiency_threshold_scan(lambda e: -1.0, [0.1, 0.2]).threshold is None

    def test_threads_agree(self):
        f = lambda e: bohm_product_criterion(lossy_bell(e))
        a = efficiency_threshold_scan(f, np.linspace(0.4, 1, 8), threads=1)
        b = efficiency_threshold_scan(f, np.linspace(0.4, 1, 8), threads=4)
        assert a.threshold == b.threshold

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            efficiency_threshold_scan(lambda e: 0.0, [0.5, 0.4])

    def test_zero_crossing(self):
        assert zero_crossing([0, 1, 2], [-1, -0.5, 0.5]) == pytest.approx(1.5)
        assert zero_crossing([0, 1], [-1, -0.5]) is None
