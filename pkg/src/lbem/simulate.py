"""Engine dispatch for exact pattern expectations com(R, sigma)."""

from __future__ import annotations

from . import dense, stabilizer
from .circuit import GateAssignment, LayeredCircuit
from .noise import NoiseModel


def is_clifford_assignment(a: GateAssignment) -> bool:
    if a.is_clifford():
        return True
    try:
        a.clifford_ids()
        return True
    except ValueError:
        return False


def choose_engine(a: GateAssignment, noise: NoiseModel) -> str:
    return "pauli" if noise.is_pauli and is_clifford_assignment(a) else "dense"


def pattern_expectations(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel, patterns, engine: str = "auto"):
    if engine == "auto":
        engine = choose_engine(a, noise)
    if engine == "pauli":
        if not a.is_clifford():
            a = GateAssignment(a.computing, a.mitigation, a.clifford_ids())
        return stabilizer.pattern_expectations(c, a, noise, patterns)
    if engine == "dense":
        return dense.pattern_expectations(c, a, noise, patterns)
    raise ValueError(f"unknown engine {engine!r}")
