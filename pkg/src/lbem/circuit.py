"""Layered circuits: frame layers of two-qubit Cliffords separated by layers
of single-qubit computing gates, each flanked by Pauli mitigation slots.

Layout of a circuit with ``n`` qubits and ``N`` frame layers::

    |0> -- [P_0] R_0 [P_1] -- G_1 -- [P_2] R_1 [P_3] -- G_2 ... R_N [P_2N+1] -- measure

Computing layer ``j`` holds ``R_j`` (slot ``j*n + q``); mitigation layer
``2j`` sits before it and ``2j+1`` after it.  An error pattern has one Pauli
layer per *boundary*: boundary 0 is before ``R_0`` (initialisation errors),
boundary ``j`` in ``1..N`` is right after frame layer ``j`` and boundary
``N+1`` is right before measurement.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .pauli import (
    LETTERS,
    PAULI_MATRICES,
    PauliString,
    clifford_index,
    mul_codes,
    named_two_qubit,
    single_qubit_cliffords,
)

LAYOUTS = ("cnot-ladder", "cz-cycle", "dqcp", "qva-ansatz", "uccsd-h2")


@dataclass(frozen=True)
class FrameGate:
    name: str
    control: int
    target: int

    @property
    def qubits(self) -> tuple[int, int]:
        return (self.control, self.target)

    @property
    def clifford(self):
        return named_two_qubit(self.name)


@dataclass(frozen=True)
class Observable:
    """Signed product of Z on ``qubits``: f(mu) = sign * prod(1 - 2 mu_q)."""

    qubits: tuple[int, ...] = (0,)
    sign: int = 1

    f_max = 1.0

    def values(self, outcomes: np.ndarray) -> np.ndarray:
        outcomes = np.atleast_2d(outcomes).astype(np.int64)
        parity = np.sum(outcomes[:, list(self.qubits)], axis=1) & 1
        return self.sign * (1 - 2 * parity).astype(float)

    def pauli(self, n: int) -> PauliString:
        ops = [0] * n
        for q in self.qubits:
            ops[q] = 3
        return PauliString(tuple(ops))

    def to_json(self):
        return {"z_on": list(self.qubits), "sign": self.sign}

    @classmethod
    def from_json(cls, d) -> "Observable":
        return cls(tuple(int(q) for q in d["z_on"]), int(d.get("sign", 1)))


@dataclass(frozen=True)
class LayeredCircuit:
    n: int
    N: int
    frame: tuple[tuple[FrameGate, ...], ...]
    observable: Observable = Observable()
    kind: str = "custom"

    def __post_init__(self):
        if len(self.frame) != self.N:
            raise ValueError(f"expected {self.N} frame layers, got {len(self.frame)}")
        for layer in self.frame:
            used = set()
            for g in layer:
                named_two_qubit(g.name)
                for q in g.qubits:
                    if not 0 <= q < self.n:
                        raise ValueError(f"qubit {q} out of range")
                    if q in used:
                        raise ValueError("overlapping gates in one frame layer")
                    used.add(q)
                if g.control == g.target:
                    raise ValueError("two-qubit gate on a single qubit")
        if any(not 0 <= q < self.n for q in self.observable.qubits):
            raise ValueError("observable qubit out of range")

    @property
    def computing_slots(self) -> int:
        return self.n * (self.N + 1)

    @property
    def mitigation_slots(self) -> int:
        return 2 * self.n * (self.N + 1)

    def gates(self) -> list[tuple[int, int, FrameGate]]:
        """(frame layer 1..N, order within layer, gate) in placement order."""
        return [(j + 1, k, g) for j, layer in enumerate(self.frame) for k, g in enumerate(layer)]

    @property
    def num_gates(self) -> int:
        return sum(len(layer) for layer in self.frame)

    def with_observable(self, obs: Observable) -> "LayeredCircuit":
        return replace(self, observable=obs)

    def frame_json(self) -> list[dict]:
        return [
            {"layer": j, "gate": g.name, "control": g.control, "target": g.target, "order": k}
            for j, k, g in self.gates()
        ]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "N": self.N,
            "frame": self.frame_json(),
            "observable": self.observable.to_json(),
        }

    @classmethod
    def from_json(cls, d) -> "LayeredCircuit":
        n, N = int(d["n"]), int(d["N"])
        layers: list[list[tuple[int, FrameGate]]] = [[] for _ in range(N)]
        for g in d["frame"]:
            layers[int(g["layer"]) - 1].append(
                (int(g["order"]), FrameGate(g["gate"], int(g["control"]), int(g["target"])))
            )
        frame = tuple(tuple(g for _, g in sorted(layer, key=lambda t: t[0])) for layer in layers)
        return cls(n, N, frame, Observable.from_json(d["observable"]), d.get("kind", "custom"))

    def layout_hash(self) -> str:
        blob = json.dumps({k: v for k, v in self.to_json().items() if k != "observable"}, sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- assignments


@dataclass(frozen=True, eq=False)
class GateAssignment:
    """Computing unitaries (N+1, n, 2, 2) and mitigation Paulis (2N+2, n).

    ``clifford`` optionally tags each computing slot with its index in the
    24-element catalog (-1 for non-Clifford gates).
    """

    computing: np.ndarray = field(repr=False)
    mitigation: np.ndarray = field(repr=False)
    clifford: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        comp = np.array(self.computing, dtype=complex)
        mit = np.array(self.mitigation, dtype=np.int8)
        if comp.ndim != 4 or comp.shape[2:] != (2, 2):
            raise ValueError("computing gates must have shape (N+1, n, 2, 2)")
        if mit.shape != (2 * comp.shape[0], comp.shape[1]):
            raise ValueError("mitigation layer shape mismatch")
        if np.any((mit < 0) | (mit > 3)):
            raise ValueError("invalid Pauli code in mitigation slots")
        comp.setflags(write=False)
        mit.setflags(write=False)
        object.__setattr__(self, "computing", comp)
        object.__setattr__(self, "mitigation", mit)
        if self.clifford is not None:
            cl = np.array(self.clifford, dtype=np.int16)
            if cl.shape != comp.shape[:2]:
                raise ValueError("clifford tag shape mismatch")
            cl.setflags(write=False)
            object.__setattr__(self, "clifford", cl)

    @property
    def n(self) -> int:
        return self.computing.shape[1]

    @property
    def N(self) -> int:
        return self.computing.shape[0] - 1

    @classmethod
    def identity(cls, c: LayeredCircuit) -> "GateAssignment":
        comp = np.broadcast_to(np.eye(2, dtype=complex), (c.N + 1, c.n, 2, 2))
        return cls(comp, np.zeros((2 * c.N + 2, c.n), dtype=np.int8), np.zeros((c.N + 1, c.n)))

    @classmethod
    def from_cliffords(cls, ids, mitigation=None) -> "GateAssignment":
        ids = np.asarray(ids, dtype=np.int16)
        cl = single_qubit_cliffords()
        comp = np.array([[cl[i].matrix for i in row] for row in ids])
        if mitigation is None:
            mitigation = np.zeros((2 * ids.shape[0], ids.shape[1]), dtype=np.int8)
        return cls(comp, mitigation, ids)

    def is_clifford(self) -> bool:
        return self.clifford is not None and bool(np.all(self.clifford >= 0))

    def clifford_ids(self) -> np.ndarray:
        """Catalog indices for every computing slot; raises for non-Cliffords."""
        if self.is_clifford():
            return self.clifford
        try:
            return np.array([[clifford_index(u) for u in row] for row in self.computing])
        except (KeyError, ValueError):
            raise ValueError("assignment contains non-Clifford computing gates") from None

    def with_computing(self, layer: int, qubit: int, u, clifford_id: int | None = None) -> "GateAssignment":
        comp = self.computing.copy()
        comp[layer, qubit] = u
        cl = None
        if self.clifford is not None:
            cl = self.clifford.copy()
            cl[layer, qubit] = -1 if clifford_id is None else clifford_id
        return GateAssignment(comp, self.mitigation, cl)

    def with_mitigation(self, mitigation) -> "GateAssignment":
        return GateAssignment(self.computing, mitigation, self.clifford)

    def to_json(self) -> dict:
        d = {
            "computing": [
                [[[float(x.real), float(x.imag)] for x in u.ravel()] for u in row]
                for row in self.computing
            ],
            "mitigation": ["".join(LETTERS[c] for c in row) for row in self.mitigation],
        }
        if self.clifford is not None:
            d["clifford"] = self.clifford.tolist()
        return d

    @classmethod
    def from_json(cls, d) -> "GateAssignment":
        comp = np.array(
            [[[complex(re, im) for re, im in u] for u in row] for row in d["computing"]]
        ).reshape(len(d["computing"]), -1, 2, 2)
        mit = np.array([[LETTERS.index(ch) for ch in row] for row in d["mitigation"]], dtype=np.int8)
        return cls(comp, mit, d.get("clifford"))

    def equals(self, other: "GateAssignment") -> bool:
        return (
            np.array_equal(self.computing, other.computing)
            and np.array_equal(self.mitigation, other.mitigation)
        )


def circuit_document(c: LayeredCircuit, a: GateAssignment) -> dict:
    d = c.to_json()
    d["assignments"] = a.to_json()
    return d


def circuit_from_document(d) -> tuple[LayeredCircuit, GateAssignment]:
    return LayeredCircuit.from_json(d), GateAssignment.from_json(d["assignments"])


# ---------------------------------------------------------------- error patterns


@dataclass(frozen=True, eq=False)
class ErrorPattern:
    """Pauli layer per boundary, shape (N+2, n).

    ``decorations`` records the (gate index, two-qubit Pauli index) pairs the
    pattern was built from; ``weight`` counts them.  Patterns built from raw
    layers have no gate attribution and count non-identity sites instead.
    """

    layers: np.ndarray = field(repr=False)
    decorations: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        lay = np.array(self.layers, dtype=np.int8)
        if lay.ndim != 2 or lay.shape[0] < 2:
            raise ValueError("pattern layers must have shape (N+2, n)")
        for row in (lay[0], lay[-1]):
            if np.any((row != 0) & (row != 1)):
                raise ValueError("initialisation/measurement layers may only hold I and X")
        lay.setflags(write=False)
        object.__setattr__(self, "layers", lay)
        object.__setattr__(self, "decorations", tuple((int(g), int(p)) for g, p in self.decorations))

    @classmethod
    def trivial(cls, c: LayeredCircuit) -> "ErrorPattern":
        return cls(np.zeros((c.N + 2, c.n), dtype=np.int8))

    @property
    def weight(self) -> int:
        if self.decorations:
            return len(self.decorations)
        return int(np.count_nonzero(self.layers))

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.layers)

    def boundary_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-boundary x and z bitmasks (bit q = qubit q)."""
        from .pauli import XBIT, ZBIT

        w = (1 << np.arange(self.layers.shape[1], dtype=np.int64))
        return (XBIT[self.layers] * w).sum(axis=1), (ZBIT[self.layers] * w).sum(axis=1)

    def key(self) -> bytes:
        return self.layers.tobytes()

    def to_json(self) -> dict:
        d = {"layers": ["".join(LETTERS[c] for c in row) for row in self.layers]}
        if self.decorations:
            d["decorations"] = [[g, p] for g, p in self.decorations]
        return d

    @classmethod
    def from_json(cls, d) -> "ErrorPattern":
        layers = [[LETTERS.index(ch) for ch in row] for row in d["layers"]]
        return cls(np.array(layers, dtype=np.int8), tuple(tuple(x) for x in d.get("decorations", ())))


def apply_error_pattern(a: GateAssignment, sigma: ErrorPattern) -> GateAssignment:
    """Multiply boundary Paulis into mitigation layers 0, 2, ..., 2N and 2N+1."""
    N = a.N
    if sigma.layers.shape != (N + 2, a.n):
        raise ValueError(f"pattern shape {sigma.layers.shape} does not fit circuit ({N + 2}, {a.n})")
    mit = a.mitigation.copy()
    rows = [2 * j for j in range(N + 1)] + [2 * N + 1]
    mit[rows] = mul_codes(mit[rows], sigma.layers)
    return a.with_mitigation(mit)


def compose_adjacent_singles(a: GateAssignment) -> GateAssignment:
    """Fold each ``P_after . R . P_before`` triple into one computing unitary."""
    pm = np.array(PAULI_MATRICES)
    before = pm[a.mitigation[0::2]]
    after = pm[a.mitigation[1::2]]
    folded = np.einsum("jqab,jqbc,jqcd->jqad", after, a.computing, before)
    return GateAssignment(folded, np.zeros_like(a.mitigation), None)


# ---------------------------------------------------------------- layouts


def _ladder_layer(n: int, j: int) -> tuple[FrameGate, ...]:
    start = 0 if j % 2 == 1 else 1
    return tuple(FrameGate("CNOT", i, i + 1) for i in range(start, n - 1, 2))


def _cycle_layer(n: int, j: int) -> tuple[FrameGate, ...]:
    start = 0 if j % 2 == 1 else 1
    gates = []
    used: set[int] = set()
    for i in range(start, n, 2):
        a, b = i, (i + 1) % n
        if a == b or a in used or b in used:
            continue
        used.update((a, b))
        gates.append(FrameGate("CZ", a, b))
    return tuple(gates)


def build_layout(kind: str, n: int | None = None, N: int | None = None, **options) -> LayeredCircuit:
    """Named circuit layouts.

    ``cnot-ladder`` and ``cz-cycle`` are brick patterns of nearest-neighbour
    gates (open line and closed cycle); the other kinds have fixed sizes.
    ``uccsd-h2`` accepts ``measure_block=True`` to append the Clifford block
    that maps the XY-type Hamiltonian terms onto Z strings.
    """
    obs = options.get("observable", Observable((0,)))
    if kind == "cnot-ladder":
        _check_size(kind, n, N)
        frame = tuple(_ladder_layer(n, j) for j in range(1, N + 1))
        return LayeredCircuit(n, N, frame, obs, kind)
    if kind == "cz-cycle":
        _check_size(kind, n, N)
        frame = tuple(_cycle_layer(n, j) for j in range(1, N + 1))
        return LayeredCircuit(n, N, frame, obs, kind)
    if kind == "dqcp":
        _check_fixed(kind, n, N, 2, 2)
        frame = ((FrameGate("CNOT", 0, 1),), (FrameGate("CNOT", 0, 1),))
        return LayeredCircuit(2, 2, frame, obs, kind)
    if kind == "qva-ansatz":
        _check_fixed(kind, n, N, 4, 4)
        a = (FrameGate("CZ", 0, 1), FrameGate("CZ", 2, 3))
        b = (FrameGate("CZ", 1, 2), FrameGate("CZ", 3, 0))
        return LayeredCircuit(4, 4, (a, b, a, b), obs, kind)
    if kind == "uccsd-h2":
        block = bool(options.get("measure_block", False))
        frame = list(UCCSD_LADDER)
        if block:
            frame += H2_BLOCK_FRAME
        frame_t = tuple((FrameGate("CNOT", c, t),) for c, t in frame)
        _check_fixed(kind, n, N, 4, len(frame_t))
        return LayeredCircuit(4, len(frame_t), frame_t, obs, kind)
    raise ValueError(f"unknown layout kind {kind!r}")


def _check_size(kind, n, N):
    if n is None or N is None or n < 2 or N < 1:
        raise ValueError(f"{kind} needs n >= 2 and N >= 1")


def _check_fixed(kind, n, N, n0, N0):
    if (n is not None and n != n0) or (N is not None and N != N0):
        raise ValueError(f"{kind} has fixed size n={n0}, N={N0}")


# DQCp: H on q0, CNOT, [P] R, CNOT, H; the P slot sits at boundary 1 on q0.


def dqcp_assignment(rotation) -> GateAssignment:
    c = build_layout("dqcp")
    from .pauli import H_MATRIX

    a = GateAssignment.identity(c)
    a = a.with_computing(0, 0, H_MATRIX, clifford_index(H_MATRIX))
    a = a.with_computing(2, 0, H_MATRIX, clifford_index(H_MATRIX))
    try:
        cid = clifford_index(rotation)
    except (KeyError, ValueError):
        cid = None
    return a.with_computing(1, 0, rotation, cid)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


# UCCSD-style H2 ansatz: exp(-i theta/2 X3 X2 X1 Y0) on |q0 q1 = 1 1>, built
# from basis changes, a CNOT parity ladder and Rz(theta) on q3.

UCCSD_LADDER = [(0, 1), (1, 2), (2, 3), (2, 3), (1, 2), (0, 1)]
UCCSD_ROTATION_LAYER = 3
# Measurement block: CNOT fan-out from q0, H on q0, then a CNOT network that
# permutes Z strings so that the XY terms land on -Z3Z1, -Z2Z0, -Z3Z0, -Z2Z1.
H2_BLOCK_FAN = [(0, 1), (0, 2), (0, 3)]
H2_BLOCK_NETWORK = [(2, 3), (1, 2), (3, 0), (0, 1), (2, 0)]
H2_BLOCK_FRAME = H2_BLOCK_FAN + H2_BLOCK_NETWORK
# XY term (qubit 3 written first) -> Z support measured after the block, with sign -1
H2_BLOCK_IMAGES = {"X3X2Y1Y0": (1, 3), "Y3Y2X1X0": (0, 2), "X3Y2Y1X0": (0, 3), "Y3X2X1Y0": (1, 2)}


def uccsd_h2_assignment(theta: float, measure_block: bool = False) -> GateAssignment:
    from .pauli import H_MATRIX

    c = build_layout("uccsd-h2", measure_block=measure_block)
    x = PAULI_MATRICES[1]
    a = GateAssignment.identity(c)
    comp = a.computing.copy()
    to_z = [rx(np.pi / 2), H_MATRIX, H_MATRIX, H_MATRIX]  # Y on q0, X elsewhere
    comp[0] = [to_z[0] @ x, to_z[1] @ x, to_z[2], to_z[3]]
    comp[UCCSD_ROTATION_LAYER, 3] = rz(theta)
    comp[6] = [u.conj().T for u in to_z]
    if measure_block:
        comp[6 + len(H2_BLOCK_FAN), 0] = H_MATRIX @ comp[6 + len(H2_BLOCK_FAN), 0]
    return GateAssignment(comp, a.mitigation, None)


def pauli_label(ops: Sequence[int]) -> str:
    return "".join(LETTERS[o] for o in ops)
