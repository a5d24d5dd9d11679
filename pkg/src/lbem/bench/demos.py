"""Two-qubit DQCp demonstration and the H2 variational energy evaluation."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .. import dense
from ..circuit import (
    H2_BLOCK_IMAGES,
    UCCSD_ROTATION_LAYER,
    Observable,
    build_layout,
    dqcp_assignment,
    rz,
    uccsd_h2_assignment,
)
from ..errors import ConfigError
from ..noise import NOISELESS
from ..pauli import PauliString
from .common import LEARN, SHOTS, derived_seed, noise_from, pmap, rng_for
from .result import Result, Table
from .slot import evaluate_slot, learn_slot

DQCP_SLOT = (1, 0)


def dqcp_thetas(count: int) -> np.ndarray:
    return 2 * np.pi * np.arange(count) / count


def cmd_dqcp(cfg: dict, seed: int, threads: int, exact: bool) -> Result:
    c = build_layout("dqcp")
    noise = noise_from(cfg)
    shots = None if exact else cfg["learn_shots"]
    fit = learn_slot(c, dqcp_assignment(np.eye(2)), *DQCP_SLOT, noise, shots, rng_for(seed, LEARN))

    def run(m):
        theta = dqcp_thetas(cfg["theta_count"])[m]
        a = dqcp_assignment(rz(theta))
        raw, raw_se, mit, mit_se = evaluate_slot(fit, c, a, *DQCP_SLOT, noise, cfg["shots"], derived_seed(seed, SHOTS, m), exact)
        return [m, theta, np.cos(theta), raw, raw_se, mit, mit_se]

    rows = pmap(run, range(cfg["theta_count"]), threads)
    header = ["m", "theta", "ideal", "raw", "raw_stderr", "mitigated", "mitigated_stderr"]
    summary = {"q": fit.q.tolist(), "q0": fit.q0, "C": fit.C, "learning_loss": fit.loss}
    return Result([Table("dqcp.csv", header, rows)], {}, summary)


# ---------------------------------------------------------------- H2


def load_h2_data(path: str | None) -> tuple[dict, bytes]:
    try:
        if path is None:
            raw = resources.files("lbem").joinpath("data/h2_sto3g.json").read_bytes()
        else:
            raw = Path(path).read_bytes()
        data = json.loads(raw)
        for g in data["geometries"]:
            float(g["bond_length"])
            for label, v in g["terms"].items():
                _parse_term(label)
                float(v)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed coefficient file: {exc}") from None
    return data, raw


def _parse_term(label: str) -> dict[int, str]:
    """'X3Y2' -> {3: 'X', 2: 'Y'}; 'I' -> {}."""
    if label == "I":
        return {}
    if len(label) % 2:
        raise ValueError(f"bad Pauli term {label!r}")
    ops = {}
    for i in range(0, len(label), 2):
        p, q = label[i], int(label[i + 1])
        if p not in "XYZ" or not 0 <= q < 4 or q in ops:
            raise ValueError(f"bad Pauli term {label!r}")
        ops[q] = p
    return ops


def term_matrix(label: str) -> np.ndarray:
    ops = _parse_term(label)
    return PauliString.from_label("".join(ops.get(q, "I") for q in range(4))).matrix()


def measurement_setup(label: str):
    """(measure_block, observable) used to estimate one Hamiltonian term."""
    ops = _parse_term(label)
    if all(p == "Z" for p in ops.values()):
        return False, Observable(tuple(sorted(ops)))
    if label in H2_BLOCK_IMAGES:
        return True, Observable(H2_BLOCK_IMAGES[label], -1)
    raise ConfigError(f"term {label} is not measurable with the provided circuits")


def ideal_energy(terms: dict, theta: float) -> float:
    c = build_layout("uccsd-h2")
    rho = dense.as_matrix(dense.final_state(c, uccsd_h2_assignment(theta), NOISELESS))
    return float(sum(v * np.trace(term_matrix(k) @ rho).real for k, v in terms.items()))


def optimal_theta(terms: dict) -> float:
    res = minimize_scalar(lambda t: ideal_energy(terms, t), bounds=(-np.pi, np.pi), method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def cmd_vqe_h2(cfg: dict, seed: int, threads: int, exact: bool) -> Result:
    data, raw = load_h2_data(cfg["coeff_file"])
    noise = noise_from(cfg)
    shots = None if exact else cfg["learn_shots"]
    slot = (UCCSD_ROTATION_LAYER, 3)
    labels = sorted({k for g in data["geometries"] for k in g["terms"] if k != "I"})
    setups = {k: measurement_setup(k) for k in labels}
    layouts = {b: build_layout("uccsd-h2", measure_block=b) for b in (False, True)}

    def learn(i):
        block, obs = setups[labels[i]]
        c = layouts[block].with_observable(obs)
        return learn_slot(c, uccsd_h2_assignment(0.0, block), *slot, noise, shots, rng_for(seed, LEARN, i))

    fits = dict(zip(labels, pmap(learn, range(len(labels)), threads)))

    def run(gi):
        g = data["geometries"][gi]
        terms = g["terms"]
        theta = float(g["theta"]) if "theta" in g else optimal_theta(terms)
        e_raw = e_mit = terms.get("I", 0.0)
        v_raw = v_mit = 0.0
        for ti, label in enumerate(labels):
            if label not in terms:
                continue
            block, obs = setups[label]
            c = layouts[block].with_observable(obs)
            a = uccsd_h2_assignment(theta, block)
            r, rse, m, mse = evaluate_slot(fits[label], c, a, *slot, noise, cfg["shots"], derived_seed(seed, SHOTS, gi, ti), exact)
            h = terms[label]
            e_raw += h * r
            e_mit += h * m
            v_raw += (h * rse) ** 2
            v_mit += (h * mse) ** 2
        return [g["bond_length"], theta, g.get("fci_energy", float("nan")), ideal_energy(terms, theta),
                e_raw, np.sqrt(v_raw), e_mit, np.sqrt(v_mit)]

    rows = pmap(run, range(len(data["geometries"])), threads)
    header = ["bond_length", "theta", "fci_energy", "ideal_energy", "raw_energy", "raw_stderr", "mitigated_energy", "mitigated_stderr"]
    summary = {"terms": {k: {"q": f.q.tolist(), "q0": f.q0, "C": f.C} for k, f in fits.items()},
               "provenance": data.get("provenance", "")}
    return Result([Table("vqe_h2.csv", header, rows)], {}, summary, {"coefficients": raw})
