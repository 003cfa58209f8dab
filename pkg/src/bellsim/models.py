"""Outcome-generating models and their joint statistics.

Two families live here:

* joint-law models: the closed-form quantum joint probabilities and the
  amplitude-averaging model, which squares a lambda-averaged product of
  amplitudes. Neither factorizes into per-arm responses, so Monte Carlo
  sampling of these draws both outcomes together from the four-way law.
* local hidden-variable models: a deterministic response per arm
  (``sign``) or a per-arm Malus-law click probability (``malus``),
  averaged over a uniformly distributed roll angle lambda.

Both arms see the same lambda; the partner's opposite roll sign is dropped.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    Angle,
    DegenerateDistributionError,
    DomainError,
    JointDistribution,
    Model,
    ModelKind,
    ProbabilityFn,
    ResponseFn,
)
from .quadrature import (
    DISCONTINUOUS_NODES,
    SMOOTH_NODES,
    QuadratureRule,
    mean_over_period,
    rule_with,
)

DEFAULT_AMPLITUDE_NODES = 64


def qm_joint(alpha: Angle, beta: Angle) -> JointDistribution:
    """Closed forms: (cos^2 d / 4, cos^2 d / 4, sin^2 d / 4, sin^2 d / 4), d = alpha - beta."""
    d = alpha - beta
    c2 = math.cos(d) ** 2 / 4.0
    s2 = math.sin(d) ** 2 / 4.0
    return JointDistribution(c2, c2, s2, s2)


def amplitude_joint(alpha: Angle, beta: Angle, rule: QuadratureRule) -> JointDistribution:
    """Squared lambda-means of the four amplitude products.

    Each amplitude product has frequency at most 2 in lambda, so any rule with
    at least four nodes reproduces :func:`qm_joint` to roundoff.
    """
    if rule.nodes < 4:
        raise DomainError(f"amplitude model needs at least 4 nodes, got {rule.nodes}")
    m_cc = mean_over_period(lambda lam: np.cos(alpha - lam) * np.cos(beta - lam), rule)
    m_ss = mean_over_period(lambda lam: np.sin(alpha - lam) * np.sin(beta - lam), rule)
    m_cs = mean_over_period(lambda lam: np.cos(alpha - lam) * np.sin(beta - lam), rule)
    m_sc = mean_over_period(lambda lam: np.sin(alpha - lam) * np.cos(beta - lam), rule)
    return JointDistribution(m_cc * m_cc, m_ss * m_ss, m_cs * m_cs, m_sc * m_sc)


def correlation_from_joint(d: JointDistribution) -> float:
    """E = (P++ + P-- - P+- - P-+) / (P++ + P-- + P+- + P-+)."""
    total = d.total
    if total <= 0.0:
        raise DegenerateDistributionError("correlation of a zero-weight distribution")
    return (d.ppp + d.pmm - d.ppm - d.pmp) / total


# ---------------------------------------------------------------------------
# Local hidden-variable responses
# ---------------------------------------------------------------------------


def _sign_cos(setting, lam):
    return np.where(np.cos(setting - lam) >= 0.0, 1.0, -1.0)


def _sign_cos_grid(settings, rule: QuadratureRule):
    # cos(s - l) = cos s cos l + sin s sin l, with cos l / sin l cached on the rule
    c = np.cos(settings) * rule.cos_points + np.sin(settings) * rule.sin_points
    return np.where(c >= 0.0, 1.0, -1.0)


def _malus(setting, lam):
    return np.cos(setting - lam) ** 2


SIGN_RESPONSE = ResponseFn("sign_cos", _sign_cos, _sign_cos_grid)
MALUS_PROBABILITY = ProbabilityFn("malus_cos2", _malus)


def default_rule_for(model: Model) -> QuadratureRule:
    """Node count suited to a model's integrand (O(1/N) jumps vs smooth)."""
    if model.kind is ModelKind.PAPER_AMPLITUDE:
        return rule_with(model.nodes)  # type: ignore[arg-type]
    if model.kind is ModelKind.LOCAL_DETERMINISTIC:
        return rule_with(DISCONTINUOUS_NODES)
    return rule_with(SMOOTH_NODES)


def _signed_responses(model: Model, settings, rule: QuadratureRule) -> np.ndarray:
    """Per-node +-1 expectation of each arm: A itself, or 2p - 1 for stochastic arms."""
    if model.kind is ModelKind.LOCAL_DETERMINISTIC:
        return model.response.on_grid(settings, rule)  # type: ignore[union-attr]
    if model.kind is ModelKind.LOCAL_STOCHASTIC:
        return 2.0 * model.response.on_grid(settings, rule) - 1.0  # type: ignore[union-attr]
    raise DomainError(f"model {model.name!r} is not a local hidden-variable model")


def lhv_correlation(model: Model, alpha: Angle, beta: Angle, rule: QuadratureRule) -> float:
    """lambda-mean of A(alpha) B(beta), or of (2p_a - 1)(2p_b - 1) for stochastic arms."""
    r = _signed_responses(model, [alpha, beta], rule)
    return mean_over_period(lambda _: r[0] * r[1], rule)


def lhv_joint(model: Model, alpha: Angle, beta: Angle, rule: QuadratureRule) -> JointDistribution:
    """Four-way coincidence law of a local model (normalized: total 1)."""
    if model.kind is ModelKind.LOCAL_DETERMINISTIC:
        r = model.response.on_grid([alpha, beta], rule)  # type: ignore[union-attr]
        pa = (r[0] > 0).astype(float)
        pb = (r[1] > 0).astype(float)
    elif model.kind is ModelKind.LOCAL_STOCHASTIC:
        p = model.response.on_grid([alpha, beta], rule)  # type: ignore[union-attr]
        pa, pb = p[0], p[1]
    else:
        raise DomainError(f"model {model.name!r} is not a local hidden-variable model")
    return JointDistribution(
        mean_over_period(lambda _: pa * pb, rule),
        mean_over_period(lambda _: (1.0 - pa) * (1.0 - pb), rule),
        mean_over_period(lambda _: pa * (1.0 - pb), rule),
        mean_over_period(lambda _: (1.0 - pa) * pb, rule),
    )


def joint_for_model(
    model: Model, alpha: Angle, beta: Angle, rule: QuadratureRule | None = None
) -> JointDistribution:
    if model.kind is ModelKind.QM_CLOSED_FORM:
        return qm_joint(alpha, beta)
    if model.kind is ModelKind.PAPER_AMPLITUDE:
        return amplitude_joint(alpha, beta, rule_with(model.nodes))  # type: ignore[arg-type]
    return lhv_joint(model, alpha, beta, rule or default_rule_for(model))


def correlation_for_model(
    model: Model, alpha: Angle, beta: Angle, rule: QuadratureRule | None = None
) -> float:
    """E(alpha, beta) for any model kind.

    Joint-law models go through their joint distribution (the rule argument is
    ignored; the amplitude model uses its own node count). Local models are
    averaged over lambda with ``rule``, or a kind-appropriate default.
    """
    if model.kind.is_joint:
        return correlation_from_joint(joint_for_model(model, alpha, beta))
    return lhv_correlation(model, alpha, beta, rule or default_rule_for(model))


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def qm_model() -> Model:
    return Model("qm", ModelKind.QM_CLOSED_FORM)


def amplitude_model(nodes: int = DEFAULT_AMPLITUDE_NODES) -> Model:
    return Model("amplitude", ModelKind.PAPER_AMPLITUDE, nodes=nodes)


def sign_model() -> Model:
    return Model("sign", ModelKind.LOCAL_DETERMINISTIC, response=SIGN_RESPONSE)


def malus_model() -> Model:
    return Model("malus", ModelKind.LOCAL_STOCHASTIC, response=MALUS_PROBABILITY)


MODELS = {
    "qm": qm_model(),
    "amplitude": amplitude_model(),
    "sign": sign_model(),
    "malus": malus_model(),
}


def get_model(name: str, nodes: int | None = None) -> Model:
    """Look up a bundled model. ``nodes`` only applies to the amplitude model."""
    try:
        model = MODELS[name]
    except KeyError:
        raise DomainError(f"unknown model {name!r}; choose from {', '.join(MODELS)}") from None
    if nodes is not None and model.kind is ModelKind.PAPER_AMPLITUDE:
        model = amplitude_model(nodes)
    return model
