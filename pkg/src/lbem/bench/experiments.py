"""learn, ecdf and rescaling commands."""

from __future__ import annotations

import json

import numpy as np

from .. import dense
from ..circuit import ErrorPattern, GateAssignment, build_layout
from ..mitigate import sampled_from_values
from ..noise import NoiseModel, scaled_product_form_noise, product_form_learning_rate
from ..pauli import all_paulis, clifford_basis_b1, decompose_unitary_map, single_qubit_cliffords
from ..product_form import (
    ProductFormParams,
    exact_loss,
    exact_loss_and_gradient,
    exact_mitigated,
    initial_params,
    mc_loss_and_gradient,
    product_form_descend,
    sample_bits,
    sign_tables,
)
from ..sige import generate_sige, invert_local_channel, tomography_quasiprob
from ..simulate import pattern_expectations
from ..stabilizer import Tableau, propagate, sample_training_set
from .common import (
    DESCENT,
    LEARN,
    SHOTS,
    TEST,
    derived_seed,
    filtered_haar,
    layout_from,
    learn_for,
    local_inverse,
    noise_from,
    pmap,
    rng_for,
)
from .result import Result, Table

TWO_QUBIT_LABELS = [p.label for p in all_paulis(2)]


def _decoration_label(p) -> str:
    if not p.decorations:
        return "I"
    return " ".join(f"g{g}:{TWO_QUBIT_LABELS[mu]}" for g, mu in p.decorations)


def cmd_learn(cfg: dict, seed: int, threads: int, exact: bool) -> Result:
    c = layout_from(cfg["layout"])
    noise = noise_from(cfg)
    method = cfg["method"]
    if method == "lbem-product":
        return _learn_product(c, noise, cfg, seed, exact)
    learned = learn_for(c, noise, cfg, seed, threads, exact, method)
    rows = [[i, _decoration_label(p), learned.quasi.q[i]] for i, p in enumerate(learned.sige.patterns)]
    doc = {"sige": learned.sige.to_json(), "quasi": learned.quasi.to_json()}
    if learned.training is not None:
        doc["training"] = learned.training.to_json()
    summary = {"sige_size": len(learned.sige), "C": learned.quasi.C, **learned.info}
    return Result([Table("learn.csv", ["pattern", "decorations", "q"], rows)], {"quasi.json": json.dumps(doc)}, summary)


def _learn_product(c, noise, cfg, seed, exact):
    inv = local_inverse(cfg["sige"])
    s = generate_sige(c, inv, 1)
    ts = sample_training_set(c, cfg["training_factor"] * len(s), derived_seed(seed, LEARN))
    tab = sign_tables(s, ts, noise)
    q0 = initial_params(tomography_quasiprob(s, inv))
    params = ProductFormParams(q0, product_form_learning_rate(max(c.n, c.N)))
    if exact:
        fitted = product_form_descend(params, lambda q: exact_loss_and_gradient(q, tab))
    else:
        rng = rng_for(seed, DESCENT)
        fitted = product_form_descend(params, lambda q: mc_loss_and_gradient(q, tab, 64, 1000, rng))
    pats = [p for p in s.patterns if not p.is_trivial]
    rows = [[i + 1, _decoration_label(p), fitted.q[i]] for i, p in enumerate(pats)]
    summary = {
        "sige_size": len(s),
        "C": fitted.C,
        "initial_loss": exact_loss(q0, tab),
        "final_loss": exact_loss(fitted.q, tab),
        "iterations": len(fitted.trajectory) - 1,
    }
    traj = Table("trajectory.csv", ["iteration", "loss"], [[i, x] for i, x in enumerate(fitted.trajectory)])
    return Result([Table("learn.csv", ["pattern", "decorations", "q"], rows), traj], {}, summary)


# ---------------------------------------------------------------- ecdf

METHOD_KEYS = {"none": ("none", None), "TEM_k1": ("tem", 1), "TEM_k2": ("tem", 2), "LBEM": ("lbem-lsq", None), "single_param": ("single-param", None)}


def cmd_ecdf(cfg: dict, seed: int, threads: int, exact: bool) -> Result:
    c = layout_from(cfg["layout"])
    noise = noise_from(cfg)
    methods = list(cfg["methods"])
    learned = {}
    for m in methods:
        kind, k = METHOD_KEYS[m]
        learned[m] = learn_for(c, noise, cfg, seed, threads, exact, kind, k)
    # evaluate each distinct pattern once per circuit
    keys: dict[bytes, int] = {}
    pats = []
    for m in methods:
        for p in learned[m].sige.patterns:
            if p.key() not in keys:
                keys[p.key()] = len(pats)
                pats.append(p)
    index = {m: np.array([keys[p.key()] for p in learned[m].sige.patterns]) for m in methods}
    circuits = filtered_haar(c, cfg["count"], cfg["threshold"], seed, cfg["retry_cap"])

    def evaluate(item):
        j, a, ef = item
        vals = pattern_expectations(c, a, noise, pats)
        row = [j, ef]
        for mi, m in enumerate(methods):
            q = learned[m].quasi.q
            com = vals[index[m]]
            exact_val = float(q @ com)
            if exact:
                sampled = exact_val
            else:
                sampled, _ = sampled_from_values(q, com, cfg["M"], derived_seed(seed, SHOTS, j, mi))
            row += [abs(sampled - ef), abs(exact_val - ef)]
        return row

    rows = pmap(evaluate, circuits, threads)
    header = ["circuit_id", "ef"]
    for m in methods:
        header += [m, f"{m}_exact"]
    summary = {
        "count": len(rows),
        "median": {h: float(np.median([r[i] for r in rows])) for i, h in enumerate(header) if i >= 2},
        "C": {m: learned[m].quasi.C for m in methods},
        "sige_size": {m: len(learned[m].sige) for m in methods},
        "loss_min": {m: learned[m].info.get("loss_min") for m in methods},
    }
    return Result([Table("ecdf.csv", header, rows)], {}, summary)


# ---------------------------------------------------------------- rescaling


def _product_sampled(q, tab, r, M, rng) -> float:
    """(C / M) sum_k sign(V(b_k)) f_k with b_k ~ W and one shot per draw."""
    q = np.asarray(q)
    cost = float(np.prod(np.abs(q) + np.abs(1 - q)))
    bits = sample_bits(q, M, rng)
    sgn = np.prod(np.sign(np.where(bits, q, 1 - q)), axis=1)
    mean = tab.com(r, bits)
    f = np.where(rng.random(M) < (1 + mean) / 2, 1.0, -1.0)
    return cost * float(np.mean(sgn * f))


def rescaling_at(size: int, cfg: dict, seed: int, exact: bool) -> dict:
    c = build_layout("cnot-ladder", size, size)
    noise = scaled_product_form_noise(size, size, cfg["crosstalk_scale"])
    inv = invert_local_channel("depolarizing", noise.epsilon)
    s = generate_sige(c, inv, 1)
    ts = sample_training_set(c, cfg["training_factor"] * len(s), derived_seed(seed, LEARN, size))
    tab = sign_tables(s, ts, noise)
    q0 = initial_params(tomography_quasiprob(s, inv))
    params = ProductFormParams(q0, product_form_learning_rate(size))
    if exact or cfg["descent"] == "exact":
        fitted = product_form_descend(params, lambda q: exact_loss_and_gradient(q, tab), iterations=cfg["iterations"])
    else:
        rng = rng_for(seed, DESCENT, size)
        fitted = product_form_descend(
            params,
            lambda q: mc_loss_and_gradient(q, tab, cfg["descent_circuits"], cfg["descent_shots"], rng),
            iterations=cfg["iterations"],
        )
    test = sample_training_set(c, cfg["test_count"], derived_seed(seed, TEST, size))
    ttab = sign_tables(s, test, noise)
    ratios, skipped = [], 0
    for r in range(len(test)):
        ef = test.com_ef[r]
        raw = float(ttab.weights[r].sum())
        if abs(raw - ef) < 1e-12:
            skipped += 1
            continue
        if exact:
            em = float(exact_mitigated(fitted.q, ttab)[r])
        else:
            em = _product_sampled(fitted.q, ttab, r, cfg["M"], rng_for(seed, SHOTS, size, r))
        ratios.append(abs(em - ef) / abs(raw - ef))
    ratios = np.array(ratios)
    n_ok = len(ratios)
    return {
        "size": size,
        "epsilon": noise.epsilon,
        "sige_size": len(s),
        "r": float(ratios.mean()) if n_ok else float("nan"),
        "stderr": float(ratios.std(ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else float("nan"),
        "C": fitted.C,
        "initial_loss": exact_loss(q0, tab),
        "final_loss": exact_loss(fitted.q, tab),
        "iterations": len(fitted.trajectory) - 1,
        "used": n_ok,
        "skipped": skipped,
    }


def cmd_rescaling(cfg: dict, seed: int, threads: int, exact: bool) -> Result:
    out = pmap(lambda s: rescaling_at(s, cfg, seed, exact), cfg["sizes"], threads)
    header = ["size", "epsilon", "sige_size", "r", "stderr", "C", "initial_loss", "final_loss", "iterations", "used", "skipped"]
    rows = [[d[h] for h in header] for d in out]
    return Result([Table("rescaling.csv", header, rows)], {}, {"r": {d["size"]: d["r"] for d in out}})


# ---------------------------------------------------------------- selftest


def cmd_selftest(cfg: dict, seed: int, threads: int, exact: bool) -> Result:
    rows = []

    def check(name, value, ok):
        rows.append([name, float(value), bool(ok)])

    check("clifford_catalog_size", len(single_qubit_cliffords()), len(single_qubit_cliffords()) == 24)
    check("b1_basis_size", len(clifford_basis_b1()), len(clifford_basis_b1()) == 10)
    coef = decompose_unitary_map(np.array([[1, 0], [0, np.exp(0.3j)]]))
    check("b1_decomposition_sum", float(np.sum(coef)), abs(np.sum(coef) - 1) < 1e-9)
    worst = 0.0
    for i in range(cfg["circuits"]):
        rng = rng_for(seed, TEST, i)
        n = int(rng.integers(2, cfg["max_qubits"] + 1))
        N = int(rng.integers(1, 4))
        c = build_layout("cnot-ladder", n, N)
        ids = rng.integers(0, 24, size=(N + 1, n))
        mit = rng.integers(0, 4, size=(2 * N + 2, n)).astype(np.int8)
        a = GateAssignment.from_cliffords(ids, mit)
        noise = NoiseModel("depolarizing", float(rng.uniform(0, 0.1)), crosstalk="model-a", meas_flip=(0.01, 0.03))
        pats = [ErrorPattern.trivial(c)]
        worst = max(worst, abs(dense.exact_expectation(c, a, noise) - propagate(c, a, noise).values(pats)[0]))
    check("dense_vs_stabilizer_max_gap", worst, worst < 1e-10)
    t = Tableau(3)
    t.check_invariants()
    check("tableau_invariants", 1.0, True)
    # normalised inner product of learned q at two training-set sizes
    c = build_layout("cnot-ladder", 3, 3)
    noise = NoiseModel("dephasing", 0.02, crosstalk="model-a")
    base = {"sige": {"kind": "dephasing", "epsilon": 0.02, "eta": 10.0, "k": 1}, "tables": "exact"}
    qs = []
    for f in cfg["inner_product_factors"]:
        qs.append(learn_for(c, noise, {**base, "training_factor": f}, seed, threads, True, "lbem-lsq").quasi.q)
    ip = float(qs[0] @ qs[1] / (np.linalg.norm(qs[0]) * np.linalg.norm(qs[1])))
    check("learned_q_inner_product", ip, ip > 0.9)
    ok = all(r[2] for r in rows)
    return Result([Table("selftest.csv", ["check", "value", "passed"], rows)], {}, {"passed": ok})

