"""Shared vocabulary: angles, outcomes, joint distributions, settings and results.

Angles are plain floats in radians. They are stored unreduced; use
:func:`canonicalize` when a value in ``[0, 2*pi)`` is needed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2
BELL_BOUND = 2.0

#: Default classification slack for closed-form / smooth quadrature results.
ANALYTIC_TOL = 1e-9
#: Slack for quadrature of discontinuous (sign-response) integrands.
DISCONTINUOUS_TOL = 1e-3

Angle = float


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateDistributionError(ArithmeticError):
    """A joint distribution with zero total weight was used as a probability law."""


def canonicalize(angle: Angle) -> Angle:
    """Reduce an angle to ``[0, 2*pi)``."""
    if not math.isfinite(angle):
        raise DomainError(f"angle must be finite, got {angle!r}")
    r = math.fmod(angle, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    # fmod of a tiny negative value can round up to exactly 2*pi
    if r >= TWO_PI:
        r = 0.0
    return r


class Outcome(enum.IntEnum):
    """Detector channel behind a polarizing beamsplitter."""

    PLUS = 1
    MINUS = -1

    @property
    def symbol(self) -> str:
        return "+" if self is Outcome.PLUS else "-"

    @classmethod
    def from_symbol(cls, symbol: str) -> Outcome:
        if symbol == "+":
            return cls.PLUS
        if symbol == "-":
            return cls.MINUS
        raise DomainError(f"unknown channel symbol {symbol!r}")


@dataclass(frozen=True)
class OutcomePair:
    arm1: Outcome
    arm2: Outcome


def outcome_product(pair: OutcomePair) -> int:
    """+1 when both arms fired the same channel, -1 otherwise."""
    return int(pair.arm1) * int(pair.arm2)


@dataclass(frozen=True)
class JointDistribution:
    """Raw weights for the detector pairs (++, --, +-, -+).

    The weights need not sum to one. The amplitude model and its
    closed forms sum to 1/2; :meth:`normalized` gives the probability view.
    """

    ppp: float
    pmm: float
    ppm: float
    pmp: float

    def __post_init__(self) -> None:
        for name in ("ppp", "pmm", "ppm", "pmp"):
            w = getattr(self, name)
            if not math.isfinite(w) or w < 0.0:
                raise DomainError(f"joint weight {name} must be finite and >= 0, got {w!r}")

    @property
    def total(self) -> float:
        return self.ppp + self.pmm + self.ppm + self.pmp

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.ppp, self.pmm, self.ppm, self.pmp)

    def normalized(self) -> tuple[float, float, float, float]:
        total = self.total
        if total <= 0.0:
            raise DegenerateDistributionError("joint distribution has zero total weight")
        return (self.ppp / total, self.pmm / total, self.ppm / total, self.pmp / total)


@dataclass(frozen=True)
class SettingsQuad:
    """Polarizer orientations (alpha, beta, alpha', beta') in radians."""

    alpha: Angle
    beta: Angle
    alpha_prime: Angle
    beta_prime: Angle

    def __post_init__(self) -> None:
        for a in self.as_tuple():
            if not math.isfinite(a):
                raise DomainError(f"setting angles must be finite, got {a!r}")

    def as_tuple(self) -> tuple[Angle, Angle, Angle, Angle]:
        return (self.alpha, self.beta, self.alpha_prime, self.beta_prime)

    def pairs(self) -> tuple[tuple[Angle, Angle], ...]:
        """Setting pairs in CHSH term order: (a,b), (a,b'), (a',b), (a',b')."""
        return (
            (self.alpha, self.beta),
            (self.alpha, self.beta_prime),
            (self.alpha_prime, self.beta),
            (self.alpha_prime, self.beta_prime),
        )

    def shifted(self, delta: Angle) -> SettingsQuad:
        return SettingsQuad(*(a + delta for a in self.as_tuple()))

    @classmethod
    def from_degrees(cls, *angles: float) -> SettingsQuad:
        if len(angles) != 4:
            raise DomainError(f"need four angles, got {len(angles)}")
        return cls(*(math.radians(a) for a in angles))

    def degrees(self) -> tuple[float, float, float, float]:
        return tuple(math.degrees(a) for a in self.as_tuple())  # type: ignore[return-value]

    @classmethod
    def equal_gap(cls, delta: Angle, start: Angle = 0.0) -> SettingsQuad:
        """The family (s, s+d, s+2d, s+3d): every neighbouring gap equals ``delta``."""
        return cls(start, start + delta, start + 2 * delta, start + 3 * delta)


# ---------------------------------------------------------------------------
# Response functions and model descriptors
# ---------------------------------------------------------------------------

GridEval = Callable[[np.ndarray, "object"], np.ndarray]


@dataclass(frozen=True)
class ResponseFn:
    """Deterministic local response: (setting, lambda) -> +1 / -1.

    ``func`` must broadcast over numpy arrays. ``grid_func`` is an optional
    faster evaluation on a quadrature rule's nodes; it must agree with ``func``.
    """

    identifier: str
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grid_func: GridEval | None = None

    def __call__(self, setting, lam):
        return self.func(setting, lam)

    def on_grid(self, settings, rule) -> np.ndarray:
        """Responses at every rule node, shape ``settings.shape + (N,)``."""
        s = np.asarray(settings, dtype=float)[..., None]
        if self.grid_func is not None:
            return self.grid_func(s, rule)
        return np.asarray(self.func(s, rule.points), dtype=float)


@dataclass(frozen=True)
class ProbabilityFn:
    """Stochastic local response: (setting, lambda) -> P(Plus) in [0, 1]."""

    identifier: str
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, setting, lam):
        return self.func(setting, lam)

    def on_grid(self, settings, rule) -> np.ndarray:
        s = np.asarray(settings, dtype=float)[..., None]
        return np.asarray(self.func(s, rule.points), dtype=float)


class ModelKind(enum.Enum):
    QM_CLOSED_FORM = "qm_closed_form"
    PAPER_AMPLITUDE = "paper_amplitude"
    LOCAL_DETERMINISTIC = "local_deterministic"
    LOCAL_STOCHASTIC = "local_stochastic"

    @property
    def is_joint(self) -> bool:
        """Outcomes come from a joint law over both arms (not per-arm responses)."""
        return self in (ModelKind.QM_CLOSED_FORM, ModelKind.PAPER_AMPLITUDE)

    @property
    def is_local(self) -> bool:
        return not self.is_joint


@dataclass(frozen=True)
class Model:
    name: str
    kind: ModelKind
    nodes: int | None = None
    response: ResponseFn | ProbabilityFn | None = None

    def __post_init__(self) -> None:
        if self.kind is ModelKind.PAPER_AMPLITUDE:
            if self.nodes is None or self.nodes < 4:
                raise DomainError(f"amplitude model needs nodes >= 4, got {self.nodes!r}")
        elif self.kind is ModelKind.LOCAL_DETERMINISTIC:
            if not isinstance(self.response, ResponseFn):
                raise DomainError("local deterministic model needs a ResponseFn")
        elif self.kind is ModelKind.LOCAL_STOCHASTIC:
            if not isinstance(self.response, ProbabilityFn):
                raise DomainError("local stochastic model needs a ProbabilityFn")


# ---------------------------------------------------------------------------
# Estimates and CHSH results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    stderr: float
    n_pp: int
    n_mm: int
    n_pm: int
    n_mp: int

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.n_pp, self.n_mm, self.n_pm, self.n_mp)

    @property
    def n_total(self) -> int:
        return self.n_pp + self.n_mm + self.n_pm + self.n_mp

    @classmethod
    def from_counts(cls, n_pp: int, n_mm: int, n_pm: int, n_mp: int) -> CorrelationEstimate:
        n = n_pp + n_mm + n_pm + n_mp
        if n <= 0:
            raise DegenerateDistributionError("no coincidences to estimate a correlation from")
        value = (n_pp + n_mm - n_pm - n_mp) / n
        stderr = math.sqrt(max(0.0, 1.0 - value * value) / n)
        return cls(value, stderr, int(n_pp), int(n_mm), int(n_pm), int(n_mp))


class Classification(enum.Enum):
    CLASSICAL = "Classical"
    QUANTUM_VIOLATING = "QuantumViolating"
    SUPER_QUANTUM = "SuperQuantum"


def classify(s: float, tol: float) -> Classification:
    a = abs(s)
    if a <= BELL_BOUND + tol:
        return Classification.CLASSICAL
    if a <= TSIRELSON + tol:
        return Classification.QUANTUM_VIOLATING
    return Classification.SUPER_QUANTUM


@dataclass(frozen=True)
class ChshResult:
    s: float
    terms: tuple[float, float, float, float]
    stderr: float
    classification: Classification
    tol: float

    @classmethod
    def from_terms(
        cls,
        terms,
        stderr: float = 0.0,
        tol: float | None = None,
    ) -> ChshResult:
        """Assemble S with the sign pattern E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
        t = tuple(float(x) for x in terms)
        if len(t) != 4:
            raise DomainError(f"need four correlation terms, got {len(t)}")
        s = t[0] - t[1] + t[2] + t[3]
        if tol is None:
            tol = 3.0 * stderr if stderr > 0.0 else ANALYTIC_TOL
        return cls(s, t, stderr, classify(s, tol), tol)  # type: ignore[arg-type]
