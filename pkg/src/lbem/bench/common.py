"""Shared experiment plumbing: seed streams, random circuits and the learning pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .. import dense
from ..circuit import GateAssignment, LayeredCircuit, build_layout
from ..errors import CapExceeded
from ..learn import learn_quasiprob, single_parameter_fit
from ..noise import NOISELESS, NoiseModel, build_noise_model
from ..quasi import QuasiDistribution
from ..sige import LocalInverse, SigESet, generate_sige, invert_local_channel, tomography_quasiprob
from ..simulate import pattern_expectations
from ..stabilizer import TrainingSet, sample_training_set

# seed stream tags; every random draw is keyed by (tag, index) under the master seed
HAAR = 101
SHOTS = 102
TEST = 103
TABLE = 104
DESCENT = 105
INIT = 106
LEARN = 107


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def pmap(fn, items, threads: int):
    """Order-preserving map; results do not depend on ``threads``."""
    return dense._pmap(fn, list(items), threads)


def layout_from(cfg: dict) -> LayeredCircuit:
    spec = dict(cfg)
    kind = spec.pop("kind")
    try:
        return build_layout(kind, spec.pop("n", None), spec.pop("N", None), **spec)
    except ValueError as exc:
        from ..errors import ConfigError

        raise ConfigError(f"layout: {exc}") from None


def local_inverse(sige_cfg: dict) -> LocalInverse:
    return invert_local_channel(sige_cfg["kind"], sige_cfg["epsilon"], sige_cfg.get("eta", 10.0))


def haar_assignment(c: LayeredCircuit, rng: np.random.Generator) -> GateAssignment:
    u = unitary_group.rvs(2, size=(c.N + 1) * c.n, random_state=rng).reshape(c.N + 1, c.n, 2, 2)
    return GateAssignment(u, np.zeros((2 * c.N + 2, c.n), dtype=np.int8))


def filtered_haar(c: LayeredCircuit, count: int, threshold: float, seed: int, retry_cap: int):
    """Haar-random assignments with |error-free value| > threshold, in candidate order."""
    out = []
    for j in range(retry_cap):
        a = haar_assignment(c, rng_for(seed, HAAR, j))
        ef = dense.exact_expectation(c, a, NOISELESS)
        if abs(ef) > threshold:
            out.append((j, a, ef))
            if len(out) == count:
                return out
    raise CapExceeded(f"only {len(out)} of {count} circuits passed the filter after {retry_cap} candidates")


def shot_means(com: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical means of ``shots`` +-1 outcomes per entry."""
    plus = rng.binomial(shots, np.clip((1 + com) / 2, 0.0, 1.0))
    return (2.0 * plus - shots) / shots


def com_table(c, s: SigESet, ts: TrainingSet, noise: NoiseModel, threads: int, shots: int | None = None, seed: int = 0):
    def row(i):
        vals = pattern_expectations(c, ts.assignment(i), noise, s.patterns)
        if shots is not None:
            vals = shot_means(vals, shots, rng_for(seed, TABLE, i))
        return vals

    return np.array(pmap(row, range(len(ts)), threads))


@dataclass
class Learned:
    sige: SigESet
    quasi: QuasiDistribution
    training: TrainingSet | None = None
    com: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def trivial_quasi(s: SigESet) -> QuasiDistribution:
    q = np.array([1.0 if p.is_trivial else 0.0 for p in s.patterns])
    return QuasiDistribution(s, q, method="none")


def learn_for(c: LayeredCircuit, noise: NoiseModel, cfg: dict, seed: int, threads: int, exact: bool, method: str, k: int | None = None) -> Learned:
    """Run one learning method on layout ``c`` under device noise ``noise``."""
    inv = local_inverse(cfg["sige"])
    k = cfg["sige"]["k"] if k is None else k
    s = generate_sige(c, inv, k)
    if method == "none":
        return Learned(s, trivial_quasi(s))
    if method == "tem":
        return Learned(s, tomography_quasiprob(s, inv))
    ts = sample_training_set(c, cfg["training_factor"] * len(s), derived_seed(seed, LEARN))
    shots = None if exact or cfg.get("tables", "exact") == "exact" else cfg["shots_per_entry"]
    com = com_table(c, s, ts, noise, threads, shots, seed)
    if method == "lbem-lsq":
        qd = learn_quasiprob(s, com, ts.com_ef, seed=seed)
        return Learned(s, qd, ts, com, {"loss_min": qd.loss_min, "training_size": len(ts)})
    if method == "single-param":
        qd, eps, loss = single_parameter_fit(s, inv.kind, com, ts.com_ef, inv.eta)
        return Learned(s, qd, ts, com, {"epsilon": eps, "loss_min": loss, "training_size": len(ts)})
    raise ValueError(f"unsupported method {method!r}")


def noise_from(cfg: dict) -> NoiseModel:
    return build_noise_model(cfg.get("noise"))
