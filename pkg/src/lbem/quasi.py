from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class QuasiDistribution:
    """Real weights over an ordered set of error patterns."""

    support: "object"  # SigESet
    q: np.ndarray
    method: str = ""
    loss_min: float | None = None
    seed: int | None = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if len(q) != len(self.support):
            raise ValueError(f"{len(q)} weights for {len(self.support)} patterns")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def C(self) -> float:
        return overhead_cost(self.q)

    @property
    def patterns(self):
        return self.support.patterns

    def to_json(self) -> dict:
        return {
            "sige_hash": self.support.hash(),
            "q": [float(x) for x in self.q],
            "C": self.C,
            "loss_min": None if self.loss_min is None else float(self.loss_min),
            "method": self.method,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d, support) -> "QuasiDistribution":
        if d["sige_hash"] != support.hash():
            raise ValueError("quasi-distribution was learned on a different pattern set")
        return cls(support, d["q"], d.get("method", ""), d.get("loss_min"), d.get("seed"))


def overhead_cost(q) -> float:
    return float(np.sum(np.abs(np.asarray(q, dtype=float))))
