"""CHSH statistic, bound checks, same-lambda vs per-run averaging, and angle scans.

Sign pattern throughout: S = E(a,b) - E(a,b') + E(a',b) + E(a',b').
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    ANALYTIC_TOL,
    DISCONTINUOUS_TOL,
    Angle,
    ChshResult,
    DomainError,
    Model,
    ModelKind,
    ResponseFn,
    SettingsQuad,
)
from .models import correlation_for_model, default_rule_for, lhv_correlation
from .quadrature import QuadratureRule, mean_of_product_pairs, mean_over_period

_TERM_SLACK = 1e-9
# |S| gains smaller than this do not replace an earlier optimum
_TIE_TOL = 1e-12

Density = Callable[[np.ndarray, np.ndarray], np.ndarray]


def chsh_s(e_ab: float, e_abp: float, e_apb: float, e_apbp: float) -> float:
    for e in (e_ab, e_abp, e_apb, e_apbp):
        if not (-1.0 - _TERM_SLACK <= e <= 1.0 + _TERM_SLACK):
            raise DomainError(f"correlation {e!r} outside [-1, 1]")
    return e_ab - e_abp + e_apb + e_apbp


def _tol_for(model: Model) -> float:
    return DISCONTINUOUS_TOL if model.kind is ModelKind.LOCAL_DETERMINISTIC else ANALYTIC_TOL


def chsh_for_model(model: Model, q: SettingsQuad, rule: QuadratureRule | None = None) -> ChshResult:
    """S from each term's own correlation: closed form for joint-law models, lambda-mean otherwise."""
    terms = tuple(correlation_for_model(model, a, b, rule) for a, b in q.pairs())
    chsh_s(*terms)
    return ChshResult.from_terms(terms, tol=_tol_for(model))


# ---------------------------------------------------------------------------
# Same-lambda (counterfactual) averaging
# ---------------------------------------------------------------------------


def _response_of(response: ResponseFn | Model) -> ResponseFn:
    if isinstance(response, Model):
        if response.kind is not ModelKind.LOCAL_DETERMINISTIC:
            raise DomainError(
                f"counterfactual averaging needs a deterministic local model, got {response.name!r}"
            )
        return response.response  # type: ignore[return-value]
    if not isinstance(response, ResponseFn):
        raise DomainError("counterfactual averaging needs a deterministic ResponseFn")
    return response


def counterfactual_sample(response: ResponseFn | Model, lam: Angle, q: SettingsQuad) -> float:
    """All four terms at one lambda: A(a)[B(b) - B(b')] + A(a')[B(b) + B(b')].

    With +-1 responses one bracket vanishes and the other is +-2, so the
    result is exactly +2 or -2.
    """
    f = _response_of(response)
    a, b, ap, bp = (float(f(s, lam)) for s in q.as_tuple())
    return a * b - a * bp + ap * b + ap * bp


def _responses(f: ResponseFn, q: SettingsQuad, rule: QuadratureRule) -> np.ndarray:
    return f.on_grid(np.array(q.as_tuple()), rule)


def counterfactual_terms(
    response: ResponseFn | Model, q: SettingsQuad, rule: QuadratureRule
) -> tuple[float, float, float, float]:
    f = _response_of(response)
    a, b, ap, bp = _responses(f, q, rule)
    return tuple(  # type: ignore[return-value]
        mean_over_period(lambda _, x=x, y=y: x * y, rule) for x, y in ((a, b), (a, bp), (ap, b), (ap, bp))
    )


def counterfactual_chsh(response: ResponseFn | Model, q: SettingsQuad, rule: QuadratureRule) -> float:
    """lambda-mean of :func:`counterfactual_sample`; bounded by 2 up to quadrature error."""
    f = _response_of(response)
    a, b, ap, bp = _responses(f, q, rule)
    return mean_over_period(lambda _: a * (b - bp) + ap * (b + bp), rule)


# ---------------------------------------------------------------------------
# Per-run (sequential) averaging
# ---------------------------------------------------------------------------


def _signed(model: Model, setting: Angle, lam: np.ndarray) -> np.ndarray:
    v = np.asarray(model.response(setting, lam), dtype=float)  # type: ignore[misc]
    return 2.0 * v - 1.0 if model.kind is ModelKind.LOCAL_STOCHASTIC else v


def sequential_terms(
    model: Model,
    q: SettingsQuad,
    rule: QuadratureRule | None = None,
    density: Density | None = None,
) -> tuple[float, float, float, float]:
    """Four correlation terms, each averaged over its own run's hidden angle.

    E(a,b) and E(a',b') are plain lambda-means. The cross terms E(a,b') and
    E(a',b) come from a later run whose pair carries lambda'; ``density`` is the
    joint weight rho'(lambda, lambda') linking it to the first run's lambda.
    The default (independent uniforms) reduces each cross term to its own
    lambda'-mean. A custom density is evaluated on the full N x N grid, so keep
    the rule small in that case.

    Joint-law models have no lambda and return cos 2(a - b) style terms.
    """
    if model.kind.is_joint:
        return tuple(correlation_for_model(model, a, b) for a, b in q.pairs())  # type: ignore[return-value]
    rule = rule or default_rule_for(model)
    e_ab = lhv_correlation(model, q.alpha, q.beta, rule)
    e_apbp = lhv_correlation(model, q.alpha_prime, q.beta_prime, rule)
    if density is None:
        e_abp = lhv_correlation(model, q.alpha, q.beta_prime, rule)
        e_apb = lhv_correlation(model, q.alpha_prime, q.beta, rule)
    else:
        def cross(s1: Angle, s2: Angle) -> float:
            return mean_of_product_pairs(
                lambda lam, lamp: _signed(model, s1, lamp) * _signed(model, s2, lamp), rule, density
            )

        e_abp = cross(q.alpha, q.beta_prime)
        e_apb = cross(q.alpha_prime, q.beta)
    return (e_ab, e_abp, e_apb, e_apbp)


def sequential_chsh(
    model: Model,
    q: SettingsQuad,
    rule: QuadratureRule | None = None,
    density: Density | None = None,
) -> float:
    return chsh_s(*sequential_terms(model, q, rule, density))


# ---------------------------------------------------------------------------
# Angle scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanResult:
    """Best settings found; ``|best_s|`` dominates every evaluated |S| up to a 1e-12 tie slack."""

    best_settings: SettingsQuad
    best_s: float
    grid_step: float
    evaluations: int
    best_delta: float
    curve: tuple[tuple[float, float], ...]  # (delta, S) along the equal-gap family


def _steps_per_quarter(grid_step: float) -> int:
    if not (math.isfinite(grid_step) and grid_step > 0.0):
        raise DomainError(f"grid step must be a positive finite angle, got {grid_step!r}")
    ratio = (math.pi / 2.0) / grid_step
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise DomainError(f"grid step {grid_step!r} does not divide pi/2 into whole steps")
    return n


def scan_settings(
    model: Model,
    grid_step: float,
    rule: QuadratureRule | None = None,
    min_step: float | None = None,
) -> ScanResult:
    """Maximize |S| over equal-gap families, then refine all four angles locally.

    Families are (0, d, 2d, 3d) for d = k * grid_step in [0, pi). The best
    family seeds a compass search over the four angles, starting at half the
    grid step and halving on every sweep without improvement until the step
    drops below ``min_step`` (default grid_step / 64). Ties keep the earlier
    candidate, so among equal families the smallest d wins.
    """
    n = _steps_per_quarter(grid_step)
    rule = rule or default_rule_for(model)
    min_step = grid_step / 64.0 if min_step is None else min_step
    evaluations = 0

    def s_of(q: SettingsQuad) -> float:
        nonlocal evaluations
        evaluations += 1
        return chsh_for_model(model, q, rule).s

    curve = []
    best_q = None
    best_s = 0.0
    best_delta = 0.0
    for k in range(2 * n):
        delta = k * grid_step
        q = SettingsQuad.equal_gap(delta)
        s = s_of(q)
        curve.append((delta, s))
        if best_q is None or abs(s) > abs(best_s) + _TIE_TOL:
            best_q, best_s, best_delta = q, s, delta

    angles = list(best_q.as_tuple())  # type: ignore[union-attr]
    h = grid_step / 2.0
    while h >= min_step:
        improved = False
        for i in range(4):
            for sign in (1.0, -1.0):
                trial = list(angles)
                trial[i] += sign * h
                s = s_of(SettingsQuad(*trial))
                if abs(s) > abs(best_s) + _TIE_TOL:
                    angles, best_s, improved = trial, s, True
        if not improved:
            h /= 2.0

    return ScanResult(
        best_settings=SettingsQuad(*angles),
        best_s=best_s,
        grid_step=grid_step,
        evaluations=evaluations,
        best_delta=best_delta,
        curve=tuple(curve),
    )
