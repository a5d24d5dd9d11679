"""Error-mitigated expectation values from a quasi-probability distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import GateAssignment, LayeredCircuit
from .noise import NoiseModel
from .quasi import QuasiDistribution, overhead_cost
from .simulate import pattern_expectations

__all__ = [
    "MitigationPlan",
    "mitigated_expectation_exact",
    "mitigated_expectation_sampled",
    "overhead_cost",
    "sampled_from_values",
]

SAMPLE_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class MitigationPlan:
    quasi: QuasiDistribution
    q0: float = 0.0
    mode: str = "exact"
    M: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"unknown mitigation mode {self.mode!r}")
        if self.mode == "sampled":
            if self.M is None or self.M < 1:
                raise ValueError("sampled mitigation needs M >= 1")
            if not np.isfinite(self.quasi.C):
                raise ValueError("overhead cost must be finite")

    @property
    def C(self) -> float:
        return self.quasi.C

    def to_json(self) -> dict:
        return {"quasi": self.quasi.to_json(), "q0": self.q0, "mode": self.mode, "M": self.M, "seed": self.seed}


def mitigated_expectation_exact(plan: MitigationPlan, c: LayeredCircuit, a: GateAssignment, noise: NoiseModel, engine: str = "auto") -> float:
    com = pattern_expectations(c, a, noise, plan.quasi.patterns, engine)
    return float(plan.quasi.q @ com + plan.q0)


def sampled_from_values(q, com, M: int, seed, q0: float = 0.0) -> tuple[float, float]:
    """Sign-weighted single-shot estimator given exact com(R, sigma) per pattern.

    Pattern sigma_k is drawn with probability |q_k| / C and one +-1 shot is
    taken with mean com(R, sigma_k).  Chunks use spawned seeds so the result
    does not depend on how the work is split.
    """
    q = np.asarray(q, dtype=float)
    com = np.asarray(com, dtype=float)
    if np.any(np.abs(com) > 1 + 1e-12):
        raise ValueError("single-shot sampling needs a +-1 observable")
    cost = overhead_cost(q)
    if cost == 0:
        return q0, 0.0
    prob = np.abs(q) / cost
    sign = np.sign(q)
    total = 0.0
    total_sq = 0.0
    sizes = [SAMPLE_CHUNK] * (M // SAMPLE_CHUNK) + ([M % SAMPLE_CHUNK] if M % SAMPLE_CHUNK else [])
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for size, ss in zip(sizes, root.spawn(len(sizes))):
        rng = np.random.default_rng(ss)
        k = rng.choice(len(q), size=size, p=prob)
        f = np.where(rng.random(size) < (1 + com[k]) / 2, 1.0, -1.0)
        x = cost * sign[k] * f
        total += x.sum()
        total_sq += (x * x).sum()
    mean = total / M
    # jackknife standard error of a sample mean
    var = (total_sq - M * mean**2) / (M - 1) if M > 1 else 0.0
    return float(mean + q0), float(np.sqrt(max(var, 0.0) / M))


def mitigated_expectation_sampled(
    plan: MitigationPlan,
    c: LayeredCircuit,
    a: GateAssignment,
    noise: NoiseModel,
    M: int | None = None,
    seed=None,
    engine: str = "auto",
) -> tuple[float, float]:
    M = M if M is not None else plan.M
    seed = seed if seed is not None else plan.seed
    if M is None or M < 1:
        raise ValueError("M must be at least 1")
    com = pattern_expectations(c, a, noise, plan.quasi.patterns, engine)
    return sampled_from_values(plan.quasi.q, com, M, seed, plan.q0)
