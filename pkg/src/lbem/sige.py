"""Significant-error sets and tomography-derived quasi-probabilities.

A SigE pattern decorates up to ``k`` frame gates with one non-identity Pauli
each, drawn from the support of the gate's assumed local channel.  The
tomography baseline assigns each pattern the product of local inverse
weights.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import ErrorPattern, LayeredCircuit
from .noise import _DEPHASING_SUPPORT, local_channel
from .pauli import PauliChannel, mul_codes
from .quasi import QuasiDistribution

KIND_SUPPORT = {
    "dephasing": _DEPHASING_SUPPORT,
    "depolarizing": tuple(range(1, 16)),
    "biased": tuple(range(1, 16)),
}


@dataclass(frozen=True, eq=False)
class LocalInverse:
    """Quasi-probabilities of the inverse of a two-qubit local channel."""

    kind: str
    epsilon: float
    eta: float
    quasi: np.ndarray

    @property
    def support(self) -> tuple[int, ...]:
        return KIND_SUPPORT[self.kind]

    @property
    def eta1(self) -> float:
        return float(self.quasi[0])

    def channel(self) -> PauliChannel:
        return local_channel(self.kind, self.epsilon, self.eta)

    def as_channel(self) -> PauliChannel:
        return PauliChannel(self.quasi, quasi=True)


def invert_local_channel(kind: str, epsilon: float, eta: float = 10.0) -> LocalInverse:
    if kind not in KIND_SUPPORT:
        raise ValueError(f"unknown local channel kind {kind!r}")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    q = np.zeros(16)
    if kind == "depolarizing":
        if abs(15 - 16 * epsilon) < 1e-12 or epsilon > 1:
            raise ValueError("depolarizing channel is not invertible at this epsilon")
        q[0] = 1 + 15 * epsilon / (15 - 16 * epsilon)
        q[1:] = -epsilon / (15 - 16 * epsilon)
    elif kind == "dephasing":
        if abs(3 - 4 * epsilon) < 1e-12 or epsilon > 1:
            raise ValueError("dephasing channel is not invertible at this epsilon")
        q[0] = 1 + 3 * epsilon / (3 - 4 * epsilon)
        q[list(_DEPHASING_SUPPORT)] = -epsilon / (3 - 4 * epsilon)
    else:
        try:
            q = local_channel(kind, epsilon, eta).inverse().probs.copy()
        except ValueError:
            raise ValueError("biased channel is not invertible at this epsilon") from None
    q.setflags(write=False)
    return LocalInverse(kind, float(epsilon), float(eta), q)


@dataclass(frozen=True, eq=False)
class SigESet:
    circuit: LayeredCircuit
    patterns: tuple[ErrorPattern, ...]
    k: int
    model: str

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def __getitem__(self, i):
        return self.patterns[i]

    def decorations(self) -> list[tuple[tuple[int, int], ...]]:
        return [p.decorations for p in self.patterns]

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "model": self.model,
            "layout_hash": self.circuit.layout_hash(),
            "patterns": [p.to_json() for p in self.patterns],
        }

    @classmethod
    def from_json(cls, d, c: LayeredCircuit) -> "SigESet":
        if d["layout_hash"] != c.layout_hash():
            raise ValueError("pattern set belongs to a different layout")
        return cls(c, tuple(ErrorPattern.from_json(p) for p in d["patterns"]), int(d["k"]), d["model"])

    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:16]


def pattern_from_decorations(c: LayeredCircuit, decorations: Sequence[tuple[int, int]]) -> ErrorPattern:
    """Boundary layers for Paulis attached right after the given gates.

    Gates inside one frame layer act on disjoint qubits, so a Pauli placed
    after a gate reaches the end of its layer unchanged.
    """
    gates = c.gates()
    layers = np.zeros((c.N + 2, c.n), dtype=np.int8)
    for g, mu in decorations:
        layer, _, gate = gates[g]
        codes = divmod(mu, 4)
        row = layers[layer].copy()
        for q, code in zip(gate.qubits, codes):
            row[q] = mul_codes(row[q], code)
        layers[layer] = row
    return ErrorPattern(layers, tuple(decorations))


def _per_gate(c: LayeredCircuit, local) -> list[LocalInverse]:
    if isinstance(local, LocalInverse):
        return [local] * c.num_gates
    local = list(local)
    if len(local) != c.num_gates:
        raise ValueError("one local inverse per frame gate is required")
    return local


def generate_sige(c: LayeredCircuit, local, k: int) -> SigESet:
    """All patterns with at most ``k`` decorated gates, in deterministic order."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    invs = _per_gate(c, local)
    patterns = []
    for w in range(k + 1):
        for gset in itertools.combinations(range(c.num_gates), w):
            for paulis in itertools.product(*(invs[g].support for g in gset)):
                patterns.append(pattern_from_decorations(c, tuple(zip(gset, paulis))))
    model = "+".join(sorted({inv.kind for inv in invs})) or "none"
    return SigESet(c, tuple(patterns), k, model)


def sige_size_k1(c: LayeredCircuit, local) -> int:
    return 1 + sum(len(inv.support) for inv in _per_gate(c, local))


def tomography_quasiprob(s: SigESet, local, k: int | None = None) -> QuasiDistribution:
    """Product of local inverse weights, truncated to patterns of weight <= k."""
    invs = _per_gate(s.circuit, local)
    k = s.k if k is None else k
    if k > 2:
        raise ValueError("tomography quasi-probabilities are limited to k <= 2")
    eta1 = np.array([inv.quasi[0] for inv in invs])
    base = float(np.prod(eta1))
    q = np.zeros(len(s))
    for i, p in enumerate(s.patterns):
        if p.weight > k:
            continue
        val = base
        for g, mu in p.decorations:
            val = val / eta1[g] * invs[g].quasi[mu] if eta1[g] != 0 else 0.0
        q[i] = val
    return QuasiDistribution(s, q, method=f"tomography-k{k}")
