"""Variational ground-state search on a four-spin ring with three energy estimators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .. import dense
from ..circuit import GateAssignment, Observable, build_layout, ry
from ..errors import DivergenceError
from ..noise import NOISELESS, NoiseModel
from ..pauli import H_MATRIX, S_MATRIX, PauliString
from .common import INIT, derived_seed, learn_for, noise_from, pmap, rng_for
from .result import Result, Table

BASIS_CHANGE = {"X": H_MATRIX, "Y": H_MATRIX @ S_MATRIX.conj().T, "Z": np.eye(2, dtype=complex)}


@dataclass(frozen=True)
class SpinHamiltonian:
    """Weighted Pauli strings (qubit 0 leftmost), each measured in one basis."""

    terms: tuple[tuple[float, str], ...]

    @property
    def n(self) -> int:
        return len(self.terms[0][1])

    @staticmethod
    def basis_of(label: str) -> str:
        letters = set(label) - {"I"}
        if len(letters) != 1:
            raise ValueError(f"term {label} mixes bases")
        return letters.pop()

    @staticmethod
    def support(label: str) -> tuple[int, ...]:
        return tuple(i for i, ch in enumerate(label) if ch != "I")

    @cached_property
    def groups(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for i, (_, label) in enumerate(self.terms):
            out.setdefault(self.basis_of(label), []).append(i)
        return out

    def matrix(self) -> np.ndarray:
        return sum(w * PauliString.from_label(label).matrix() for w, label in self.terms)

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix())


def ring_hamiltonian(fields, coupling: float = 1.0) -> SpinHamiltonian:
    """sum_i A_i X_i + J sum_i sum_p p_i p_{i+1} on a closed four-spin chain."""
    n = len(fields)
    terms = []
    for i, a in enumerate(fields):
        terms.append((float(a), "".join("X" if q == i else "I" for q in range(n))))
    for p in "XYZ":
        for i in range(n):
            j = (i + 1) % n
            terms.append((float(coupling), "".join(p if q in (i, j) else "I" for q in range(n))))
    return SpinHamiltonian(tuple(terms))


def ansatz_assignment(params: np.ndarray, basis: str) -> GateAssignment:
    """Ry rotations on every computing slot, with the basis change folded into the last layer."""
    comp = np.array([[ry(t) for t in layer] for layer in params])
    comp[-1] = np.array([BASIS_CHANGE[basis] @ u for u in comp[-1]])
    return GateAssignment(comp, np.zeros((2 * (len(params) - 1) + 2, params.shape[1]), dtype=np.int8))


class EnergyModel:
    """Energy estimators for one Hamiltonian, layout and device noise."""

    def __init__(self, ham: SpinHamiltonian, noise: NoiseModel):
        self.ham = ham
        self.noise = noise
        self.circuit = build_layout("qva-ansatz")
        self.lbem = None

    def _raw(self, params, noise) -> float:
        e = 0.0
        for basis, idx in self.ham.groups.items():
            p = dense.outcome_distribution(self.circuit, ansatz_assignment(params, basis), noise)
            for i in idx:
                c = self.circuit.with_observable(Observable(self.ham.support(self.ham.terms[i][1])))
                e += self.ham.terms[i][0] * float(p @ dense.outcome_values(c, noise).ravel())
        return e

    def ideal(self, params) -> float:
        return self._raw(params, NOISELESS)

    def raw(self, params) -> float:
        return self._raw(params, self.noise)

    def extrapolated(self, params, boosts, fit: str) -> float:
        vals = [self._raw(params, self.noise.boosted(b)) for b in boosts]
        deg = 1 if fit == "linear" else len(boosts) - 1
        return float(np.polyval(np.polyfit(boosts, vals, deg), 0.0))

    def learn(self, cfg, seed, threads):
        """One learned distribution per distinct measured support."""
        supports = sorted({self.ham.support(l) for _, l in self.ham.terms})
        self.lbem = {}
        for k, sup in enumerate(supports):
            c = self.circuit.with_observable(Observable(sup))
            self.lbem[sup] = learn_for(c, self.noise, cfg, derived_seed(seed, k), threads, True, "lbem-lsq")
        return self.lbem

    def mitigated(self, params) -> float:
        patterns = next(iter(self.lbem.values())).sige.patterns
        e = 0.0
        for basis, idx in self.ham.groups.items():
            sups = [self.ham.support(self.ham.terms[i][1]) for i in idx]
            table = dense.pattern_expectations_multi(
                self.circuit, ansatz_assignment(params, basis), self.noise, patterns, [Observable(s) for s in sups]
            )
            e += sum(self.ham.terms[i][0] * float(self.lbem[s].quasi.q @ row) for i, s, row in zip(idx, sups, table))
        return e


def parameter_shift_gradient(energy, params: np.ndarray, threads: int = 1) -> np.ndarray:
    """dE/dtheta = [E(theta + pi/2) - E(theta - pi/2)] / 2 for every Ry angle."""
    flat = params.ravel()

    def shifted(job):
        k, sgn = job
        p = flat.copy()
        p[k] += sgn * np.pi / 2
        return energy(p.reshape(params.shape))

    jobs = [(k, s) for k in range(flat.size) for s in (1, -1)]
    vals = np.array(pmap(shifted, jobs, threads)).reshape(flat.size, 2)
    return ((vals[:, 0] - vals[:, 1]) / 2).reshape(params.shape)


def descend(energy, params, iterations: int, rate: float, threads: int):
    """Plain gradient descent; yields (iteration, energy, params) including the start."""
    e0 = energy(params)
    yield 0, e0, params
    scale = max(abs(e0), 1.0)
    for it in range(1, iterations + 1):
        params = params - rate * parameter_shift_gradient(energy, params, threads)
        e = energy(params)
        if not np.isfinite(e) or abs(e) > 100 * scale:
            raise DivergenceError(f"energy {e} ran away at iteration {it}")
        yield it, e, params


def cmd_vqa(cfg: dict, seed: int, threads: int, exact: bool) -> Result:
    ham = ring_hamiltonian(cfg["fields"], cfg["coupling"])
    spec = ham.spectrum()
    ground, width = float(spec[0]), float(spec[-1] - spec[0])
    model = EnergyModel(ham, noise_from(cfg))
    if "lbem" in cfg["modes"]:
        model.learn(cfg, seed, threads)
    init = cfg["init_scale"] * rng_for(seed, INIT).standard_normal((model.circuit.N + 1, ham.n))
    estimators = {
        "raw": model.raw,
        "extrapolation": lambda p: model.extrapolated(p, cfg["boosts"], cfg["fit"]),
        "lbem": model.mitigated,
    }
    rows = []
    final = {}
    for mode in cfg["modes"]:
        for it, e, p in descend(estimators[mode], init, cfg["iterations"], cfg["learning_rate"], threads):
            rows.append([mode, it, e, model.ideal(p), *p.ravel()])
        final[mode] = {"energy": e, "ideal_energy": rows[-1][3], "defect_pct": 100 * abs(e - ground) / width}
    header = ["mode", "iteration", "energy", "ideal_energy"] + [f"theta_{j}_{q}" for j in range(model.circuit.N + 1) for q in range(ham.n)]
    summary = {"ground_energy": ground, "spectral_width": width, "final": final}
    if model.lbem:
        summary["lbem"] = {str(list(k)): {"C": v.quasi.C, "loss_min": v.quasi.loss_min} for k, v in model.lbem.items()}
    return Result([Table("vqa.csv", header, rows)], {}, summary)
