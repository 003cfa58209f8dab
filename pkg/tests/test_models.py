import math

import numpy as np
import pytest

from bellsim.core import DegenerateDistributionError, DomainError, JointDistribution
from bellsim.models import (
    MALUS_PROBABILITY,
    MODELS,
    SIGN_RESPONSE,
    amplitude_joint,
    correlation_for_model,
    correlation_from_joint,
    get_model,
    lhv_correlation,
    lhv_joint,
    malus_model,
    qm_joint,
    sign_model,
)
from bellsim.quadrature import QuadratureRule, rule_with

RNG = np.random.default_rng(20240611)
RANDOM_PAIRS = RNG.uniform(-10, 10, size=(1000, 2))


# -- independent oracles: plain loops over a left-endpoint grid ------------------


def brute_sign_correlation(delta, n=200_003):
    h = 2 * math.pi / n
    s = 0
    for k in range(n):
        lam = k * h
        a = 1 if math.cos(0.0 - lam) >= 0 else -1
        b = 1 if math.cos(delta - lam) >= 0 else -1
        s += a * b
    return s / n


def brute_malus_correlation(delta, n=4001):
    h = 2 * math.pi / n
    s = 0.0
    for k in range(n):
        lam = k * h
        s += (2 * math.cos(-lam) ** 2 - 1) * (2 * math.cos(delta - lam) ** 2 - 1)
    return s / n


def sawtooth(delta):
    return 1 - 2 * abs(delta) / math.pi


@pytest.mark.parametrize("delta", [0.0, math.pi / 8, 3 * math.pi / 8, math.pi / 2, 2.0, math.pi])
def test_sawtooth_closed_form_matches_brute_force(delta):
    assert brute_sign_correlation(delta) == pytest.approx(sawtooth(delta), abs=1e-4)


@pytest.mark.parametrize("delta", [0.0, math.pi / 8, 1.0])
def test_malus_closed_form_matches_brute_force(delta):
    assert brute_malus_correlation(delta) == pytest.approx(math.cos(2 * delta) / 2, abs=1e-12)


# -- closed forms ----------------------------------------------------------------


@pytest.mark.parametrize(
    "alpha,beta,expected",
    [
        (0.3, 0.3, (0.25, 0.25, 0.0, 0.0)),
        (math.pi / 2, 0.0, (0.0, 0.0, 0.25, 0.25)),
        (0.0, math.pi / 4, (0.125, 0.125, 0.125, 0.125)),
    ],
)
def test_qm_joint_examples(alpha, beta, expected):
    jd = qm_joint(alpha, beta)
    assert jd.as_tuple() == pytest.approx(expected, abs=1e-15)
    assert jd.total == pytest.approx(0.5, abs=1e-12)


def test_amplitude_joint_examples():
    r = QuadratureRule(64)
    assert amplitude_joint(0, 0, r).ppp == pytest.approx(0.25, abs=1e-15)
    assert amplitude_joint(0, math.pi / 2, r).ppp == pytest.approx(0.0, abs=1e-15)
    expected = math.cos(math.pi / 8) ** 2 / 4
    assert expected == pytest.approx(0.213388, abs=5e-7)
    assert amplitude_joint(0, math.pi / 8, r).ppp == pytest.approx(expected, abs=1e-15)


def test_amplitude_needs_four_nodes():
    with pytest.raises(DomainError):
        amplitude_joint(0, 1, QuadratureRule(3))


@pytest.mark.parametrize("nodes", [4, 5, 64])
def test_amplitude_matches_closed_form(nodes):
    r = QuadratureRule(nodes)
    for a, b in RANDOM_PAIRS[:200]:
        got = np.array(amplitude_joint(a, b, r).as_tuple())
        assert np.max(np.abs(got - np.array(qm_joint(a, b).as_tuple()))) <= 1e-12


def test_amplitude_total_is_one_half():
    r = QuadratureRule(64)
    for a, b in RANDOM_PAIRS[:100]:
        assert abs(amplitude_joint(a, b, r).total - 0.5) <= 1e-12


@pytest.mark.parametrize(
    "delta,expected", [(0.0, 1.0), (math.pi / 4, 0.0), (math.pi / 8, math.sqrt(2) / 2)]
)
def test_correlation_from_joint_examples(delta, expected):
    assert correlation_from_joint(qm_joint(0.4 + delta, 0.4)) == pytest.approx(expected, abs=1e-15)


def test_correlation_from_joint_is_cos_2delta():
    for a, b in RANDOM_PAIRS:
        assert abs(correlation_from_joint(qm_joint(a, b)) - math.cos(2 * (a - b))) <= 1e-12


def test_correlation_degenerate():
    with pytest.raises(DegenerateDistributionError):
        correlation_from_joint(JointDistribution(0, 0, 0, 0))


def test_polarizer_symmetry():
    r = QuadratureRule(64)
    for a, b in RANDOM_PAIRS[:200]:
        for f in (qm_joint, lambda x, y: amplitude_joint(x, y, r)):
            w0 = np.array(f(a, b).as_tuple())
            assert np.max(np.abs(np.array(f(a + math.pi, b).as_tuple()) - w0)) <= 1e-12
            assert np.max(np.abs(np.array(f(a, b + math.pi).as_tuple()) - w0)) <= 1e-12


# -- local models ------------------------------------------------------------------


def test_sign_model_examples():
    r = rule_with(2**16)
    assert lhv_correlation(sign_model(), 0.7, 0.7, r) == 1.0
    assert lhv_correlation(sign_model(), 0.0, math.pi / 2, r) == pytest.approx(0.0, abs=1e-3)


def test_sign_model_sawtooth():
    r = rule_with(2**16)
    for delta in np.linspace(0, math.pi, 50):
        got = lhv_correlation(sign_model(), 0.0, delta, r)
        assert abs(got - sawtooth(delta)) <= 1e-3


def test_malus_model():
    r = QuadratureRule(1024)
    assert lhv_correlation(malus_model(), 0.0, 0.0, r) == pytest.approx(0.5, abs=1e-12)
    for a, b in RANDOM_PAIRS[:50]:
        assert abs(lhv_correlation(malus_model(), a, b, r) - math.cos(2 * (a - b)) / 2) <= 1e-10


def test_response_functions_periodic_and_bounded():
    s = np.linspace(-7, 7, 101)[:, None]
    lam = np.linspace(-7, 7, 103)[None, :]
    v = SIGN_RESPONSE(s, lam)
    assert set(np.unique(v)) <= {-1.0, 1.0}
    assert np.array_equal(v, SIGN_RESPONSE(s, lam + 2 * math.pi))
    p = MALUS_PROBABILITY(s, lam)
    assert p.min() >= 0.0 and p.max() <= 1.0


def test_sign_grid_evaluation_agrees_with_direct():
    r = rule_with(2**12)
    settings = RNG.uniform(-10, 10, size=40)
    fast = SIGN_RESPONSE.on_grid(settings, r)
    slow = SIGN_RESPONSE(settings[:, None], r.points)
    assert np.array_equal(fast, slow)


def test_lhv_joint_is_normalized_and_consistent():
    r = rule_with(2**16)
    for model in (sign_model(), malus_model()):
        jd = lhv_joint(model, 0.2, 1.1, r)
        assert jd.total == pytest.approx(1.0, abs=1e-12)
        assert correlation_from_joint(jd) == pytest.approx(lhv_correlation(model, 0.2, 1.1, r), abs=1e-12)


def test_all_correlations_in_range():
    for model in MODELS.values():
        for a, b in RANDOM_PAIRS[:20]:
            e = correlation_for_model(model, a, b)
            assert -1.0 <= e <= 1.0


def test_registry():
    assert set(MODELS) == {"qm", "amplitude", "sign", "malus"}
    assert get_model("amplitude", nodes=8).nodes == 8
    with pytest.raises(DomainError):
        get_model("nope")
    with pytest.raises(DomainError):
        lhv_correlation(MODELS["qm"], 0, 0, QuadratureRule(8))
