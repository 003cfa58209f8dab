"""Seeded Monte Carlo of pair emission, detection and coincidence tallies.

Random streams
--------------
Every stream is a numpy ``Philox`` counter-based generator keyed by
``SeedSequence(entropy=seed, spawn_key=(stream, shard))``. ``stream`` is the
setting-pair index within a run (0..3 in CHSH term order; 0 for a single
pair) and ``shard`` the shard index. Shards split ``n_pairs`` into contiguous
blocks, the first ``n_pairs % shards`` blocks one pair longer, and their
outcomes are concatenated in shard order.

Variates per emitted pair, in order:

* joint-law models (``qm``, ``amplitude``): one uniform picks the outcome
  pair from the normalized four-way law. This step sees both settings at
  once; it is not a local mechanism.
* deterministic local models: one uniform, lambda = 2*pi*u.
* stochastic local models: three uniforms, lambda then one Bernoulli draw
  per arm.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    TWO_PI,
    Angle,
    ChshResult,
    CorrelationEstimate,
    DomainError,
    Model,
    ModelKind,
    Outcome,
    OutcomePair,
    SettingsQuad,
)
from .models import joint_for_model

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class RunConfig:
    model: Model
    n_pairs: int
    seed: int
    shards: int = 1

    def __post_init__(self) -> None:
        if self.n_pairs < 1:
            raise DomainError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if not 0 <= self.seed <= MAX_SEED:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 1 <= self.shards <= self.n_pairs:
            raise DomainError(f"shards must be in [1, n_pairs], got {self.shards}")


@dataclass(frozen=True)
class RunTally:
    n_pp: int = 0
    n_mm: int = 0
    n_pm: int = 0
    n_mp: int = 0

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.n_pp, self.n_mm, self.n_pm, self.n_mp)

    @property
    def n_total(self) -> int:
        return self.n_pp + self.n_mm + self.n_pm + self.n_mp

    def __add__(self, other: RunTally) -> RunTally:
        return RunTally(*(a + b for a, b in zip(self.counts, other.counts)))

    def estimate(self) -> CorrelationEstimate:
        return CorrelationEstimate.from_counts(*self.counts)

    @classmethod
    def from_outcomes(cls, arm1: np.ndarray, arm2: np.ndarray) -> RunTally:
        p1 = arm1 > 0
        p2 = arm2 > 0
        return cls(
            int(np.count_nonzero(p1 & p2)),
            int(np.count_nonzero(~p1 & ~p2)),
            int(np.count_nonzero(p1 & ~p2)),
            int(np.count_nonzero(~p1 & p2)),
        )


@dataclass(frozen=True)
class PairSample:
    """Outcomes (+1 / -1, int8) of consecutive pairs at one setting pair."""

    alpha: Angle
    beta: Angle
    arm1: np.ndarray
    arm2: np.ndarray

    def tally(self) -> RunTally:
        return RunTally.from_outcomes(self.arm1, self.arm2)


def make_rng(seed: int, stream: int = 0, shard: int = 0) -> np.random.Generator:
    if not 0 <= seed <= MAX_SEED:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, shard))
    return np.random.Generator(np.random.Philox(ss))


def draw_lambda(rng: np.random.Generator) -> Angle:
    """One hidden roll angle, uniform on [0, 2*pi)."""
    return TWO_PI * float(rng.random())


# outcome pairs indexed like the joint weights (++, --, +-, -+)
_JOINT_ARM1 = np.array([1, -1, 1, -1], dtype=np.int8)
_JOINT_ARM2 = np.array([1, -1, -1, 1], dtype=np.int8)


def _pm(plus: np.ndarray) -> np.ndarray:
    return np.where(plus, 1, -1).astype(np.int8)


def sample_outcomes(
    model: Model, alpha: Angle, beta: Angle, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """``n`` outcome pairs as two int8 arrays of +1 / -1."""
    if model.kind.is_joint:
        cum = np.cumsum(joint_for_model(model, alpha, beta).normalized())
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(n), side="right")
        return _JOINT_ARM1[idx], _JOINT_ARM2[idx]
    if model.kind is ModelKind.LOCAL_DETERMINISTIC:
        lam = TWO_PI * rng.random(n)
        f = model.response
        return _pm(f(alpha, lam) > 0), _pm(f(beta, lam) > 0)  # type: ignore[misc]
    u = rng.random((n, 3))
    lam = TWO_PI * u[:, 0]
    p = model.response
    return _pm(u[:, 1] < p(alpha, lam)), _pm(u[:, 2] < p(beta, lam))  # type: ignore[misc]


def sample_outcome(model: Model, alpha: Angle, beta: Angle, rng: np.random.Generator) -> OutcomePair:
    a, b = sample_outcomes(model, alpha, beta, 1, rng)
    return OutcomePair(Outcome(int(a[0])), Outcome(int(b[0])))


def shard_sizes(n_pairs: int, shards: int) -> list[int]:
    base, extra = divmod(n_pairs, shards)
    return [base + (1 if i < extra else 0) for i in range(shards)]


def simulate_pairs(cfg: RunConfig, alpha: Angle, beta: Angle, stream: int = 0, workers: int = 1) -> PairSample:
    """All ``cfg.n_pairs`` outcomes for one setting pair, shards merged in order."""
    sizes = shard_sizes(cfg.n_pairs, cfg.shards)

    def one(shard: int) -> tuple[np.ndarray, np.ndarray]:
        rng = make_rng(cfg.seed, stream, shard)
        return sample_outcomes(cfg.model, alpha, beta, sizes[shard], rng)

    if workers > 1 and cfg.shards > 1:
        with ThreadPoolExecutor(max_workers=min(workers, cfg.shards)) as pool:
            parts = list(pool.map(one, range(cfg.shards)))
    else:
        parts = [one(i) for i in range(cfg.shards)]
    return PairSample(
        alpha,
        beta,
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
    )


def run_pair_experiment(cfg: RunConfig, alpha: Angle, beta: Angle, stream: int = 0) -> CorrelationEstimate:
    return simulate_pairs(cfg, alpha, beta, stream).tally().estimate()


def simulate_chsh(cfg: RunConfig, q: SettingsQuad, workers: int = 1) -> list[PairSample]:
    """Four independent sub-experiments, a fresh lambda for every pair in each."""
    return [simulate_pairs(cfg, a, b, stream=i, workers=workers) for i, (a, b) in enumerate(q.pairs())]


def chsh_from_estimates(estimates) -> ChshResult:
    stderr = math.sqrt(sum(e.stderr**2 for e in estimates))
    return ChshResult.from_terms([e.value for e in estimates], stderr=stderr)


def run_chsh_experiment(cfg: RunConfig, q: SettingsQuad) -> ChshResult:
    """S estimated from four runs of ``cfg.n_pairs`` each; classified with 3 * stderr slack."""
    return chsh_from_estimates([s.tally().estimate() for s in simulate_chsh(cfg, q)])
