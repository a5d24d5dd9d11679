"""Noise models for layered circuits and the flat operation timeline that
both simulators consume."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .circuit import FrameGate, GateAssignment, LayeredCircuit
from .pauli import PauliChannel

LOCAL_KINDS = ("dephasing", "depolarizing", "biased")
CROSSTALK_SCALE = {"model-a": 1.0, "cycle": 0.1}

_DEPHASING_SUPPORT = (3, 12, 15)  # IZ, ZI, ZZ


def local_channel(kind: str, epsilon: float, eta: float = 10.0) -> PauliChannel:
    """Two-qubit Pauli channel: dephasing, depolarizing or the biased mix."""
    p = np.zeros(16)
    p[0] = 1.0 - epsilon
    if kind == "dephasing":
        p[list(_DEPHASING_SUPPORT)] += epsilon / 3
    elif kind == "depolarizing":
        p[1:] += epsilon / 15
    elif kind == "biased":
        p[list(_DEPHASING_SUPPORT)] += epsilon * eta / (eta + 1) / 3
        p[1:] += epsilon / (eta + 1) / 15
    else:
        raise ValueError(f"unknown local channel kind {kind!r}")
    return PauliChannel(p)


def damping_kraus(gamma: float) -> list[np.ndarray]:
    return [
        np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


@dataclass(frozen=True)
class NoiseModel:
    local_kind: str | None = None
    epsilon: float = 0.01
    eta: float = 10.0
    crosstalk: str | None = None
    crosstalk_scale: float = 1.0
    temporal_g: float | None = None
    temporal_prob: tuple[float, ...] | None = None
    damping_gamma: float = 0.0
    meas_flip: tuple[float, float] = (0.0, 0.0)
    boost: float = 1.0
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def is_noiseless(self) -> bool:
        return (
            (self.local_kind is None or self.epsilon == 0)
            and self.damping_gamma == 0
            and self.meas_flip == (0.0, 0.0)
        )

    @property
    def is_pauli(self) -> bool:
        """True when every quantum channel is a Pauli channel."""
        return self.damping_gamma == 0

    def boosted(self, factor: float) -> "NoiseModel":
        return _replace(self, boost=self.boost * factor)

    def gate_channels(self, c: LayeredCircuit, gate: FrameGate, bad: int | None = None):
        """Channels following ``gate``, in application order, as (qubits, PauliChannel)."""
        if self.local_kind is None or self.epsilon == 0:
            return []
        eps = self.epsilon * self.boost
        out = [(gate.qubits, self._channel(eps, gate.qubits, bad))]
        if self.crosstalk is not None and c.n >= 3:
            pair = _cyclic_pair(gate.qubits, c.n)
            if pair is not None:
                lo, hi = pair
                # the boost models a controllable local channel; cross-talk stays fixed
                ex = self.epsilon * self.crosstalk_scale
                for qs in (((hi), (hi + 1) % c.n), ((lo - 1) % c.n, lo)):
                    out.append((qs, self._channel(ex, qs, bad)))
        return out

    def _channel(self, eps, qubits, bad):
        if bad is not None and bad in qubits:
            eps = eps * self.temporal_g
        return local_channel(self.local_kind, eps, self.eta)

    def variants(self, n: int) -> list[tuple[float, int | None]]:
        """(weight, bad qubit) mixture components of the temporal model."""
        if self.temporal_g is None:
            return [(1.0, None)]
        prob = self.bad_qubit_prob(n)
        return [(float(p), i) for i, p in enumerate(prob) if p > 0]

    def bad_qubit_prob(self, n: int) -> np.ndarray:
        if self.temporal_prob is None:
            return np.full(n, 1.0 / n)
        prob = np.asarray(self.temporal_prob, dtype=float)
        if len(prob) != n:
            raise ValueError("temporal probability vector length differs from qubit count")
        return prob

    def to_json(self) -> dict:
        d: dict[str, Any] = {}
        if self.local_kind is not None:
            d["local"] = {"kind": self.local_kind, "epsilon": self.epsilon, "eta": self.eta}
        if self.crosstalk is not None:
            d["crosstalk"] = {"kind": self.crosstalk, "scale": self.crosstalk_scale}
        if self.temporal_g is not None:
            d["temporal"] = {
                "g": self.temporal_g,
                "prob": None if self.temporal_prob is None else list(self.temporal_prob),
            }
        d["damping_gamma"] = self.damping_gamma
        d["meas_flip"] = list(self.meas_flip)
        if self.boost != 1.0:
            d["boost"] = self.boost
        return d


def _replace(m: NoiseModel, **kw) -> NoiseModel:
    d = asdict(m)
    d.update(kw)
    return NoiseModel(**d)


def _cyclic_pair(qubits, n):
    a, b = qubits
    if (b - a) % n == 1:
        return a, b
    if (a - b) % n == 1:
        return b, a
    return None


NOISELESS = NoiseModel()


def build_noise_model(spec: dict | None) -> NoiseModel:
    """NoiseModel from its JSON form; validates parameter ranges."""
    if not spec:
        return NoiseModel()
    local = spec.get("local") or {}
    kind = local.get("kind")
    eps = float(local.get("epsilon", 0.01))
    eta = float(local.get("eta", 10.0))
    if kind is not None and kind not in LOCAL_KINDS:
        raise ValueError(f"unknown local channel kind {kind!r}")
    if not 0 <= eps <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    if kind == "depolarizing" and eps >= 15 / 16:
        raise ValueError("depolarizing epsilon must stay below 15/16")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    xt = spec.get("crosstalk") or {}
    xkind = xt.get("kind")
    scale = 1.0
    if xkind is not None:
        if xkind in CROSSTALK_SCALE:
            scale = float(xt.get("scale", CROSSTALK_SCALE[xkind]))
        elif xkind == "flanking":
            scale = float(xt["scale"])
        else:
            raise ValueError(f"unknown crosstalk kind {xkind!r}")
        if kind is None:
            raise ValueError("crosstalk needs a local channel")
    temporal = spec.get("temporal") or {}
    g = temporal.get("g")
    prob = temporal.get("prob")
    if g is not None:
        g = float(g)
        if g < 0 or eps * g > 1:
            raise ValueError("temporal multiplier pushes epsilon outside [0, 1]")
        if prob is not None:
            prob = tuple(float(p) for p in prob)
            if any(p < 0 for p in prob) or abs(sum(prob) - 1) > 1e-9:
                raise ValueError("temporal probabilities must form a distribution")
    gamma = float(spec.get("damping_gamma", 0.0))
    if not 0 <= gamma <= 1:
        raise ValueError("damping_gamma must lie in [0, 1]")
    flips = tuple(float(p) for p in spec.get("meas_flip", (0.0, 0.0)))
    if len(flips) != 2 or any(not 0 <= p <= 1 for p in flips) or sum(flips) >= 1:
        raise ValueError("meas_flip must be two probabilities with p0 + p1 < 1")
    boost = float(spec.get("boost", 1.0))
    return NoiseModel(kind, eps, eta, xkind, scale, g, prob, gamma, flips, boost)


def noise_strength_constant(size: int) -> float:
    """Noise-strength constant for the product-form scaling study."""
    for hi, val in ((8, 1.0), (12, 1.1), (16, 1.2), (20, 1.3)):
        if size <= hi:
            return val
    raise ValueError(f"no tabulated constant for size {size}")


def product_form_learning_rate(size: int) -> float:
    for hi, val in ((6, 1e-4), (8, 9e-5), (10, 8e-5), (12, 7e-5), (16, 5e-5), (20, 3e-5)):
        if size <= hi:
            return val
    raise ValueError(f"no tabulated learning rate for size {size}")


def scaled_product_form_noise(n: int, N: int, crosstalk_scale: float = 0.1) -> NoiseModel:
    """Depolarizing local noise with epsilon = 2 eps' / (N n) plus weak cross-talk."""
    eps = 2 * noise_strength_constant(max(n, N)) / (N * n)
    return NoiseModel("depolarizing", eps, crosstalk="flanking", crosstalk_scale=crosstalk_scale)


# ---------------------------------------------------------------- timeline


def timeline(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel, bad: int | None = None):
    """Operations in execution order.

    Entries: ("boundary", b), ("pauli", q, code), ("u1", q, U, clifford_id),
    ("u2", FrameGate), ("pchan", qubits, PauliChannel), ("kraus", q, [K...]).
    Pattern Paulis for boundary b are applied where the marker sits.
    """
    if a.computing.shape[:2] != (c.N + 1, c.n):
        raise ValueError("assignment does not fit the circuit")
    ops: list[tuple] = []
    damp = damping_kraus(noise.damping_gamma) if noise.damping_gamma > 0 else None
    cl = a.clifford
    for j in range(c.N + 1):
        ops.append(("boundary", j))
        for q in range(c.n):
            if a.mitigation[2 * j, q]:
                ops.append(("pauli", q, int(a.mitigation[2 * j, q])))
        for q in range(c.n):
            cid = int(cl[j, q]) if cl is not None else -1
            ops.append(("u1", q, a.computing[j, q], cid))
        for q in range(c.n):
            if a.mitigation[2 * j + 1, q]:
                ops.append(("pauli", q, int(a.mitigation[2 * j + 1, q])))
        if j == c.N:
            ops.append(("boundary", c.N + 1))
        if damp is not None:
            for q in range(c.n):
                ops.append(("kraus", q, damp))
        if j < c.N:
            for g in c.frame[j]:
                ops.append(("u2", g))
                for qs, ch in noise.gate_channels(c, g, bad):
                    ops.append(("pchan", tuple(qs), ch))
    return ops
