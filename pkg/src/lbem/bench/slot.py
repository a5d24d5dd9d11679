"""Learning with one Pauli slot in front of one computing gate.

The 24 single-qubit Cliffords replace the gate R.  Because P sits directly
before R, com(C_i, P) = com(C_i P, I), so the 24 runs determine the whole
(C_i, P) table.  The fit includes a constant offset q0 for asymmetric
measurement errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..circuit import ErrorPattern, GateAssignment, LayeredCircuit
from ..mitigate import sampled_from_values
from ..noise import NOISELESS, NoiseModel
from ..pauli import clifford_pauli_product_table, single_qubit_cliffords
from ..simulate import pattern_expectations
from .common import shot_means


def slot_patterns(c: LayeredCircuit, layer: int, qubit: int) -> list[ErrorPattern]:
    """I, X, Y, Z on ``qubit`` immediately before computing layer ``layer``."""
    out = []
    for code in range(4):
        layers = np.zeros((c.N + 2, c.n), dtype=np.int8)
        layers[layer, qubit] = code
        out.append(ErrorPattern(layers))
    return out


@dataclass(frozen=True)
class SlotFit:
    q: np.ndarray  # weights for I, X, Y, Z
    q0: float
    com: np.ndarray  # (24,) noisy values with the Clifford in the slot
    ef: np.ndarray  # (24,) error-free values
    loss: float

    @property
    def C(self) -> float:
        return float(np.sum(np.abs(self.q)))


def _value(c, a, noise):
    return float(pattern_expectations(c, a, noise, [ErrorPattern.trivial(c)])[0])


def learn_slot(
    c: LayeredCircuit,
    template: GateAssignment,
    layer: int,
    qubit: int,
    noise: NoiseModel,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> SlotFit:
    cl = single_qubit_cliffords()
    runs = [template.with_computing(layer, qubit, g.matrix, i) for i, g in enumerate(cl)]
    com = np.array([_value(c, a, noise) for a in runs])
    if shots is not None:
        com = shot_means(com, shots, rng)
    ef = np.array([_value(c, a, NOISELESS) for a in runs])
    table = com[clifford_pauli_product_table()]  # (24, 4)
    design = np.hstack([table, np.ones((24, 1))])
    sol, *_ = np.linalg.lstsq(design, ef, rcond=1e-10)
    loss = float(np.mean((design @ sol - ef) ** 2))
    return SlotFit(sol[:4], float(sol[4]), com, ef, loss)


def evaluate_slot(fit: SlotFit, c, a, layer, qubit, noise, M: int, seed, exact: bool):
    """(raw, raw stderr, mitigated, mitigated stderr) for one circuit."""
    com = pattern_expectations(c, a, noise, slot_patterns(c, layer, qubit))
    if exact:
        return float(com[0]), 0.0, float(fit.q @ com + fit.q0), 0.0
    ss = np.random.SeedSequence(seed)
    raw_seed, mit_seed = ss.spawn(2)
    raw, raw_se = sampled_from_values(np.array([1.0, 0, 0, 0]), com, M, raw_seed)
    mit, mit_se = sampled_from_values(fit.q, com, M, mit_seed, fit.q0)
    return raw, raw_se, mit, mit_se
