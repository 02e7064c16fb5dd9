import math

import numpy as np
import pytest

from illiquid_hjb.errors import DomainError, ParameterError
from illiquid_hjb.model import (Exponential, ModelParams, SuperExponential, hara_utility, log_utility,
                                survival_eval, survival_from_dict, validate_params)


def test_hara_base_point_and_hand_value():
    for g in (0.1, 0.5, 0.9):
        assert hara_utility(1 - g, g) == pytest.approx(0.0, abs=1e-15)
    assert hara_utility(2.0, 0.5) == pytest.approx(1.0, rel=1e-15)


def test_hara_tends_to_log():
    gaps = [abs(hara_utility(3.0, g) - math.log(3.0)) for g in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_hara_increasing_and_concave():
    rng = np.random.default_rng(0)
    c1 = rng.uniform(0.01, 5, 1000)
    c2 = c1 + rng.uniform(0.01, 5, 1000)
    for g in (0.2, 0.5, 0.8):
        assert np.all(hara_utility(c1, g) < hara_utility(c2, g))
        mid = hara_utility(0.5 * (c1 + c2), g)
        assert np.all(mid >= 0.5 * (hara_utility(c1, g) + hara_utility(c2, g)) - 1e-12)


def test_utility_errors():
    with pytest.raises(DomainError):
        hara_utility(0.0, 0.5)
    with pytest.raises(ParameterError):
        hara_utility(1.0, 1.0)
    with pytest.raises(DomainError):
        log_utility(-1.0)


def test_exponential_closed_form():
    phi, dphi, F = survival_eval(Exponential(1.0, 0.1), 0.0)
    assert (phi, dphi, F) == pytest.approx((1.0, -0.1, -10.0), rel=1e-15)
    s = Exponential(2.0, 0.4)
    t = np.linspace(0, 10, 11)
    assert np.allclose(s.deriv(t) / s.value(t), -0.4, rtol=1e-15)
    assert np.allclose(s.deriv(t) + 0.4 * s.value(t), 0.0, atol=1e-15)


def test_superexponential_antiderivative_quadrature():
    s = SuperExponential(0.1, 0.01)
    assert s.antideriv(2.0) == pytest.approx(s.antideriv_quad(2.0), rel=1e-12)
    t = np.array([0.5, 1.0, 4.0])
    assert np.all(np.abs(s.deriv(t) + s.kappa * s.value(t)) > 0)


@pytest.mark.parametrize("surv", [Exponential(1.0, 0.3), SuperExponential(0.1, 0.01), SuperExponential(0.3, 0.5)])
def test_survival_consistency(surv):
    t = np.linspace(0.2, 6.0, 12)
    e = 1e-5
    fd_phi = (surv.value(t + e) - surv.value(t - e)) / (2 * e)
    fd_F = (surv.antideriv(t + e) - surv.antideriv(t - e)) / (2 * e)
    assert np.allclose(fd_phi, surv.deriv(t), rtol=1e-8)
    assert np.allclose(fd_F, surv.value(t), rtol=1e-8)
    assert np.all(np.diff(surv.value(t)) < 0) and surv.value(0.0) <= 1.0
    assert np.all(np.abs(surv.antideriv(t)) <= 2 * surv.value(t) / surv.kappa)


def test_survival_negative_time():
    with pytest.raises(DomainError):
        survival_eval(Exponential(), -1.0)


def test_validate_params():
    assert validate_params(ModelParams()) == []
    assert validate_params(ModelParams(rho=1.0)) == ["rho out of (−1,1)"]
    assert validate_params(ModelParams(r=0.02, mu=0.05, delta=0.01)) == ["r − mu + delta ≤ 0"]


def test_round_trip_dicts():
    p = ModelParams(kappa=0.7)
    assert ModelParams.from_dict(p.to_dict()) == p
    s = SuperExponential(0.2, 0.03)
    assert survival_from_dict(s.to_dict()) == s
    with pytest.raises(ParameterError):
        ModelParams.from_dict({"kapa": 1.0})


def test_income_shift_and_merton_ratio():
    p = ModelParams()
    assert p.income_shift == pytest.approx(2.0)
    assert p.merton_ratio == pytest.approx(1.5)
