"""Least-squares learning of quasi-probabilities from training circuits.

The loss over a training set T is quadratic in the weights q:

    Loss(q) = q^T a q - 2 b^T q + c,

with a = <com com^T>, b = <com com_ef>, c = <com_ef^2> averaged over T.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from scipy.optimize import minimize_scalar

from .circuit import Observable
from .pauli import H_MATRIX, S_MATRIX, PauliString, clifford_index
from .quasi import QuasiDistribution, overhead_cost
from .simulate import pattern_expectations
from .stabilizer import TrainingSet, group_element, stabilizer_group_observables
from .sige import SigESet, invert_local_channel, tomography_quasiprob

log = logging.getLogger(__name__)

# single-qubit U with U^dag Z U equal to X and Y
BASIS_ROTATION = {1: H_MATRIX, 2: H_MATRIX @ S_MATRIX.conj().T}

__all__ = [
    "DesignData",
    "QuasiDistribution",
    "ShotSource",
    "TableShotSource",
    "design_from_tables",
    "estimate_design_mc",
    "evaluate_loss",
    "fidelity_loss",
    "fit_least_squares",
    "learn_quasiprob",
    "overhead_cost",
    "single_parameter_fit",
]


@dataclass(frozen=True, eq=False)
class DesignData:
    a: np.ndarray
    b: np.ndarray
    c: float
    n_samples: int | None = None  # None for exact tables

    def loss(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(q @ self.a @ q - 2 * self.b @ q + self.c)


def design_from_tables(com: np.ndarray, com_ef: np.ndarray) -> DesignData:
    """Exact design from a (T, K) table of com(R, sigma) and the (T,) error-free values."""
    com = np.asarray(com, dtype=float)
    ef = np.asarray(com_ef, dtype=float)
    t = len(ef)
    if com.shape[0] != t:
        raise ValueError("table and error-free values disagree on the training-set size")
    return DesignData(com.T @ com / t, com.T @ ef / t, float(ef @ ef / t))


def evaluate_loss(q, com: np.ndarray, com_ef: np.ndarray) -> float:
    r = np.asarray(com) @ np.asarray(q, dtype=float) - np.asarray(com_ef)
    return float(np.mean(r * r))


def fit_least_squares(d: DesignData, rtol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Minimum-norm minimiser of the quadratic loss and its minimum value."""
    w, v = np.linalg.eigh(d.a)
    cut = rtol * max(float(np.max(np.abs(w))), 1e-300)
    keep = w > cut
    if not np.all(keep):
        log.warning("design matrix is rank deficient (%d of %d); using the pseudo-inverse", keep.sum(), len(w))
    vk = v[:, keep]
    q = vk @ ((vk.T @ d.b) / w[keep])
    return q, float(d.c - d.b @ q)


def learn_quasiprob(s: SigESet, com: np.ndarray, com_ef: np.ndarray, seed: int | None = None, rtol: float = 1e-10):
    d = design_from_tables(com, com_ef)
    q, loss = fit_least_squares(d, rtol)
    return QuasiDistribution(s, q, method="lbem-lsq", loss_min=loss, seed=seed)


class ShotSource(Protocol):
    """Draws +-1 shots for training circuit indices under a pattern (or error-free)."""

    def noisy(self, r: np.ndarray, pattern: int, rng: np.random.Generator) -> np.ndarray: ...

    def ideal(self, r: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class TableShotSource:
    """Single-shot +-1 outcomes whose means are given by exact tables."""

    com: np.ndarray  # (T, K)
    com_ef: np.ndarray  # (T,)

    def _draw(self, mean, rng):
        return np.where(rng.random(mean.shape) < (1 + mean) / 2, 1.0, -1.0)

    def noisy(self, r, pattern, rng):
        return self._draw(self.com[r, pattern], rng)

    def ideal(self, r, rng):
        return self._draw(self.com_ef[r], rng)


def estimate_design_mc(source: ShotSource, t: int, k: int, n_samples: int, seed) -> DesignData:
    """Unbiased single-shot estimates of a, b and c.

    Each entry averages n_samples products of two independent shots taken on
    the same uniformly drawn training circuit, so every entry has variance at
    most 1 / n_samples.
    """
    rng = np.random.default_rng(seed)
    a = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            r = rng.integers(t, size=n_samples)
            a[i, j] = a[j, i] = np.mean(source.noisy(r, i, rng) * source.noisy(r, j, rng))
    b = np.zeros(k)
    for i in range(k):
        r = rng.integers(t, size=n_samples)
        b[i] = np.mean(source.noisy(r, i, rng) * source.ideal(r, rng))
    r = rng.integers(t, size=n_samples)
    c = float(np.mean(source.ideal(r, rng) * source.ideal(r, rng)))
    return DesignData(a, b, c, n_samples)


def measurement_rotation(c, a, g: PauliString):
    """Circuit and assignment whose final Z readout estimates Tr[g rho]."""
    last = a.computing.shape[0] - 1
    qubits = []
    for q, code in enumerate(g.ops):
        if code == 0:
            continue
        qubits.append(q)
        if code != 3:
            u = BASIS_ROTATION[code] @ a.computing[last, q]
            try:
                cid = clifford_index(u)
            except (KeyError, ValueError):
                cid = None
            a = a.with_computing(last, q, u, cid)
    return c.with_observable(Observable(tuple(qubits))), a


def fidelity_loss(q, s: SigESet, ts: TrainingSet, noise, group_samples: int = 32, seed=0, shots: int | None = None) -> float:
    """(1/|T|) sum_R (1 - F(R))^2 with F estimated from sampled stabilizer-group elements.

    F(R) = 2^-n sum_g Tr[g rho_R] is averaged over ``group_samples`` uniform
    draws of g.  Each Tr[g rho] is read out by rotating g to Z on its support;
    the identity element contributes sum_sigma q_sigma, so F may exceed 1.
    """
    q = np.asarray(q, dtype=float)
    rng = np.random.default_rng(seed)
    losses = []
    for a, _ in ts.entries:
        gens = stabilizer_group_observables(s.circuit, a)
        total = 0.0
        for mask in rng.integers(0, 2**len(gens), size=group_samples):
            sign, g = group_element(gens, int(mask))
            if g.is_identity():
                total += float(q.sum())
                continue
            cg, ag = measurement_rotation(s.circuit, a, g)
            com = pattern_expectations(cg, ag, noise, s.patterns)
            if shots is not None:
                com = np.clip(com, -1.0, 1.0)
                com = 2 * rng.binomial(shots, (1 + com) / 2) / shots - 1
            total += sign * float(q @ com)
        losses.append((1 - total / group_samples) ** 2)
    return float(np.mean(losses))


def single_parameter_fit(
    s: SigESet,
    kind: str,
    com: np.ndarray,
    com_ef: np.ndarray,
    eta: float = 10.0,
    eps_max: float = 0.2,
    grid: int = 41,
    loss: Callable | None = None,
) -> tuple[QuasiDistribution, float, float]:
    """Fit one noise strength so the tomography weights minimise the loss.

    Returns the quasi-distribution, the fitted epsilon and the loss there.
    """
    loss = loss or evaluate_loss

    def at(eps):
        q = tomography_quasiprob(s, invert_local_channel(kind, eps, eta), k=min(s.k, 2)).q
        return loss(q, com, com_ef)

    eps = np.linspace(0.0, eps_max, grid)
    vals = np.array([at(e) for e in eps])
    i = int(np.argmin(vals))
    lo, hi = eps[max(i - 1, 0)], eps[min(i + 1, grid - 1)]
    best_eps, best = float(eps[i]), float(vals[i])
    if hi > lo:
        res = minimize_scalar(at, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        if res.fun < best:
            best_eps, best = float(res.x), float(res.fun)
    q = tomography_quasiprob(s, invert_local_channel(kind, best_eps, eta), k=min(s.k, 2))
    return QuasiDistribution(s, q.q, method="single-parameter", loss_min=best), best_eps, best
