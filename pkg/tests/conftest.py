import numpy as np
import pytest
from scipy.stats import unitary_group

from lbem.circuit import FrameGate, GateAssignment, LayeredCircuit, Observable


def random_frame_circuit(rng, n, N, observable=None) -> LayeredCircuit:
    """Random disjoint CNOT/CZ gates in every layer, placed on arbitrary qubit pairs."""
    frame = []
    for _ in range(N):
        perm = rng.permutation(n)
        gates = []
        for k in range(0, n - 1, 2):
            if rng.random() < 0.8:
                gates.append(FrameGate(str(rng.choice(["CNOT", "CZ"])), int(perm[k]), int(perm[k + 1])))
        frame.append(tuple(gates))
    if observable is None:
        size = int(rng.integers(1, n + 1))
        observable = Observable(tuple(sorted(rng.choice(n, size=size, replace=False).tolist())))
    return LayeredCircuit(n, N, tuple(frame), observable)


def random_clifford_assignment(rng, c: LayeredCircuit, paulis: bool = True) -> GateAssignment:
    ids = rng.integers(0, 24, size=(c.N + 1, c.n))
    mit = rng.integers(0, 4, size=(2 * c.N + 2, c.n)) if paulis else None
    return GateAssignment.from_cliffords(ids, mit)


def haar_assignment(rng, c: LayeredCircuit) -> GateAssignment:
    comp = unitary_group.rvs(2, size=c.computing_slots, random_state=rng).reshape(c.N + 1, c.n, 2, 2)
    return GateAssignment(comp, np.zeros((2 * c.N + 2, c.n), dtype=np.int8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
