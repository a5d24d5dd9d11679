"""Stabilizer-formalism simulation of Clifford-assigned layered circuits.

Two routes are provided:

* :class:`Tableau`, an Aaronson-Gottesman style tableau with destabilizers,
  used for ideal expectations, stabilizer groups, training-set sampling and
  brute-force enumeration of Pauli fault configurations;
* :func:`propagate`, a Heisenberg-picture walk of the observable backwards
  through the circuit.  Under Pauli noise the observable stays a single
  Pauli (per measurement-flip branch) and each channel only rescales it, so
  the whole table ``com(R, sigma)`` over many error patterns follows from
  one walk.  This is the workhorse for building learning tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import GateAssignment, LayeredCircuit
from .errors import CapExceeded
from .noise import NOISELESS, NoiseModel, timeline
from .pauli import XBIT, ZBIT, PauliString, code_from_xz, single_qubit_cliffords

ENUMERATION_CAP = 2**20


def _g(x1, z1, x2, z2):
    """Exponent of i picked up when multiplying single-qubit Paulis."""
    return np.where(
        (x1 == 0) & (z1 == 0),
        0,
        np.where(
            (x1 == 1) & (z1 == 1),
            z2.astype(int) - x2,
            np.where(x1 == 1, z2 * (2 * x2.astype(int) - 1), x2 * (1 - 2 * z2.astype(int))),
        ),
    )


class Tableau:
    """Stabilizer state on n qubits; rows 0..n-1 destabilizers, n..2n-1 stabilizers."""

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        self.x[np.arange(n), np.arange(n)] = 1
        self.z[n + np.arange(n), np.arange(n)] = 1

    def copy(self) -> "Tableau":
        t = Tableau.__new__(Tableau)
        t.n = self.n
        t.x, t.z, t.r = self.x.copy(), self.z.copy(), self.r.copy()
        return t

    def apply_1q(self, table, signs, q: int):
        code = code_from_xz(self.x[:, q], self.z[:, q])
        new = table[code]
        self.r ^= (signs[code] < 0).astype(np.uint8)
        self.x[:, q] = XBIT[new]
        self.z[:, q] = ZBIT[new]

    def apply_2q(self, table, signs, a: int, b: int):
        code = 4 * code_from_xz(self.x[:, a], self.z[:, a]).astype(np.int64) + code_from_xz(
            self.x[:, b], self.z[:, b]
        )
        new = table[code]
        self.r ^= (signs[code] < 0).astype(np.uint8)
        self.x[:, a], self.z[:, a] = XBIT[new // 4], ZBIT[new // 4]
        self.x[:, b], self.z[:, b] = XBIT[new % 4], ZBIT[new % 4]

    def apply_pauli(self, code: int, q: int):
        self.r ^= (self.x[:, q] & ZBIT[code]) ^ (self.z[:, q] & XBIT[code])

    def expectation(self, ops) -> int:
        """<P> in {-1, 0, +1} for a Hermitian Pauli given as per-qubit codes."""
        ops = np.asarray(ops)
        ox, oz = XBIT[ops], ZBIT[ops]
        n = self.n
        stab_anti = ((self.x[n:] & oz) ^ (self.z[n:] & ox)).sum(axis=1) & 1
        if np.any(stab_anti):
            return 0
        destab_anti = ((self.x[:n] & oz) ^ (self.z[:n] & ox)).sum(axis=1) & 1
        ax = np.zeros(n, dtype=np.uint8)
        az = np.zeros(n, dtype=np.uint8)
        e = 0
        for i in np.nonzero(destab_anti)[0]:
            row = n + i
            e += 2 * int(self.r[row]) + int(np.sum(_g(ax, az, self.x[row], self.z[row])))
            ax ^= self.x[row]
            az ^= self.z[row]
        assert np.array_equal(ax, ox) and np.array_equal(az, oz)
        return 1 if e % 4 == 0 else -1

    def generators(self) -> list[tuple[int, PauliString]]:
        n = self.n
        return [
            (1 - 2 * int(self.r[n + i]), PauliString(tuple(code_from_xz(self.x[n + i], self.z[n + i]))))
            for i in range(n)
        ]

    def check_invariants(self):
        n = self.n

        def sym(i, j):
            return int(((self.x[i] & self.z[j]) ^ (self.z[i] & self.x[j])).sum() & 1)

        for i in range(n):
            for j in range(n):
                assert sym(n + i, n + j) == 0, "stabilizers must commute"
                assert sym(i, n + j) == (1 if i == j else 0), "destabilizer pairing broken"


def _run_tableau(t: Tableau, ops, faults=None):
    """Apply timeline ops; ``faults`` maps channel position -> local Pauli index."""
    cl = single_qubit_cliffords()
    k = 0
    for op in ops:
        kind = op[0]
        if kind == "u1":
            g = cl[op[3]] if op[3] >= 0 else _clifford_of(op[2])
            t.apply_1q(g.table, g.signs, op[1])
        elif kind == "u2":
            g = op[1].clifford
            t.apply_2q(g.table, g.signs, *op[1].qubits)
        elif kind == "pauli":
            t.apply_pauli(op[2], op[1])
        elif kind == "pchan":
            if faults is not None and faults.get(k):
                codes = np.unravel_index(faults[k], (4,) * len(op[1]))
                for q, code in zip(op[1], codes):
                    t.apply_pauli(int(code), q)
            k += 1
        elif kind == "kraus":
            raise ValueError("stabilizer simulation supports Pauli channels only")
    return t


def _clifford_of(u):
    from .pauli import clifford_index

    try:
        return single_qubit_cliffords()[clifford_index(u)]
    except (KeyError, ValueError):
        raise ValueError("non-Clifford computing gate") from None


def _observable_codes(c: LayeredCircuit) -> np.ndarray:
    return np.array(c.observable.pauli(c.n).ops)


def clifford_expectation(c: LayeredCircuit, a: GateAssignment) -> int:
    """Ideal expectation of the observable; always -1, 0 or +1."""
    ops = [op for op in timeline(c, a, NOISELESS) if op[0] != "boundary"]
    t = _run_tableau(Tableau(c.n), ops)
    return c.observable.sign * t.expectation(_observable_codes(c))


def stabilizer_group_observables(c: LayeredCircuit, a: GateAssignment, full: bool = False):
    """Generators (or all 2^n elements) of the pre-measurement stabilizer group."""
    ops = [op for op in timeline(c, a, NOISELESS) if op[0] != "boundary"]
    gens = _run_tableau(Tableau(c.n), ops).generators()
    return expand_group(gens) if full else gens


def group_element(gens, mask: int) -> tuple[int, PauliString]:
    """Signed product of the generators selected by the bits of ``mask``."""
    n = gens[0][1].n
    sign, acc = 1, np.zeros(n, dtype=int)
    phase = 0
    for i, (s, p) in enumerate(gens):
        if (mask >> i) & 1:
            ops = np.array(p.ops)
            phase += int(np.sum(_g(XBIT[acc], ZBIT[acc], XBIT[ops], ZBIT[ops])))
            sign *= s
            acc = code_from_xz(XBIT[acc] ^ XBIT[ops], ZBIT[acc] ^ ZBIT[ops])
    assert phase % 2 == 0
    return sign * (1 if phase % 4 == 0 else -1), PauliString(tuple(int(o) for o in acc))


def expand_group(gens) -> list[tuple[int, PauliString]]:
    return [group_element(gens, mask) for mask in range(2 ** len(gens))]


def _noisy_channels(ops):
    return [op for op in ops if op[0] == "pchan"]


def clifford_expectation_with_pauli_noise(
    c: LayeredCircuit,
    a: GateAssignment,
    noise: NoiseModel,
    exact: bool = True,
    seed=None,
    shots: int = 100_000,
) -> float:
    """Noisy expectation of a Clifford circuit under Pauli channels.

    Exact mode enumerates every fault configuration (refused above
    ``ENUMERATION_CAP``); sampled mode draws faults per shot and tracks them
    as a Pauli frame.
    """
    if not noise.is_pauli:
        raise ValueError("only Pauli channels are supported")
    if exact:
        return sum(w * _enumerate_faults(c, a, noise, bad) for w, bad in noise.variants(c.n))
    return float(np.mean(sample_clifford_shots(c, a, noise, shots, seed)))


def _subset_expectations(t: Tableau, c: LayeredCircuit):
    """<Z_S> of the ideal final state for every subset S of observable qubits."""
    qs = c.observable.qubits
    vals = {}
    for mask in range(2 ** len(qs)):
        ops = np.zeros(c.n, dtype=int)
        for i, q in enumerate(qs):
            if (mask >> i) & 1:
                ops[q] = 3
        vals[mask] = t.expectation(ops)
    return vals


def _observed_value(c, noise, subset_vals) -> float:
    """E[f] given the <Z_S> values of the final state, including classical flips."""
    p0, p1 = noise.meas_flip
    k = len(c.observable.qubits)
    # Per observed qubit: E[1 - 2 mu'] = (p1 - p0) + (1 - p0 - p1) <Z>.
    total = 0.0
    for mask in range(2**k):
        coeff = 1.0
        for i in range(k):
            coeff *= (1 - p0 - p1) if (mask >> i) & 1 else (p1 - p0)
        total += coeff * subset_vals[mask]
    return c.observable.sign * total


def _enumerate_faults(c, a, noise, bad) -> float:
    ops = [op for op in timeline(c, a, noise, bad) if op[0] != "boundary"]
    chans = _noisy_channels(ops)
    options = []
    size = 1
    for _, _, ch in chans:
        opts = [(i, float(p)) for i, p in enumerate(ch.probs) if p > 0]
        options.append(opts)
        size *= len(opts)
    if size > ENUMERATION_CAP:
        raise CapExceeded(f"{size} fault configurations exceed the enumeration cap; use sampling")
    # Depth-first over channels so tableau prefixes are shared.
    cut = [i for i, op in enumerate(ops) if op[0] == "pchan"]
    bounds = [0] + [i + 1 for i in cut] + [len(ops)]

    def rec(level, t, weight):
        seg = [op for op in ops[bounds[level]:bounds[level + 1]] if op[0] != "pchan"]
        t = _run_tableau(t, seg)
        if level == len(chans):
            return weight * _observed_value(c, noise, _subset_expectations(t, c))
        total = 0.0
        qs = chans[level][1]
        for idx, p in options[level]:
            t2 = t.copy()
            codes = np.unravel_index(idx, (4,) * len(qs))
            for q, code in zip(qs, codes):
                if code:
                    t2.apply_pauli(int(code), q)
            total += rec(level + 1, t2, weight * p)
        return total

    return rec(0, Tableau(c.n), 1.0)


def _forward_frame(ops, x: int, z: int) -> tuple[int, int]:
    """Propagate a Pauli frame (bitmasks) forward through Clifford ops; signs dropped."""
    cl = single_qubit_cliffords()
    for op in ops:
        kind = op[0]
        if kind == "u1":
            q = op[1]
            g = cl[op[3]] if op[3] >= 0 else _clifford_of(op[2])
            code = int(g.table[_code_at(x, z, q)])
            x, z = _set_code(x, z, q, code)
        elif kind == "u2":
            g = op[1].clifford
            qa, qb = op[1].qubits
            code = int(g.table[4 * _code_at(x, z, qa) + _code_at(x, z, qb)])
            x, z = _set_code(x, z, qa, code // 4)
            x, z = _set_code(x, z, qb, code % 4)
    return x, z


def sample_clifford_shots(c, a, noise, shots: int, seed) -> np.ndarray:
    """Per-shot observable values from Pauli-frame trajectories."""
    rng = np.random.default_rng(seed)
    qs = c.observable.qubits
    k = len(qs)
    variants = noise.variants(c.n)
    bad_draw = rng.choice(len(variants), p=[w for w, _ in variants], size=shots)
    out = np.empty(shots)
    for v, (_, bad) in enumerate(variants):
        idx = np.nonzero(bad_draw == v)[0]
        if len(idx) == 0:
            continue
        ops = [op for op in timeline(c, a, noise, bad) if op[0] != "boundary"]
        t = _run_tableau(Tableau(c.n), [op for op in ops if op[0] != "pchan"])
        subset = _subset_expectations(t, c)
        # Ideal distribution of the observed bits from the Z-subset expectations.
        probs = np.zeros(2**k)
        for bits in range(2**k):
            probs[bits] = sum(
                subset[m] * (-1) ** bin(bits & m).count("1") for m in range(2**k)
            ) / 2**k
        probs = np.clip(probs, 0, None)
        ideal = rng.choice(2**k, p=probs / probs.sum(), size=len(idx))
        frame = np.zeros(len(idx), dtype=np.int64)
        pos = [i for i, op in enumerate(ops) if op[0] == "pchan"]
        for i in pos:
            qs_ch, ch = ops[i][1], ops[i][2]
            draws = rng.choice(len(ch.probs), p=ch.probs / ch.probs.sum(), size=len(idx))
            for pidx in np.unique(draws):
                if pidx == 0:
                    continue
                fx, fz = 0, 0
                for q, code in zip(qs_ch, np.unravel_index(int(pidx), (4,) * len(qs_ch))):
                    fx, fz = _set_code(fx, fz, q, int(code))
                fx, _ = _forward_frame(ops[i + 1:], fx, fz)
                flips = sum(((fx >> q) & 1) << j for j, q in enumerate(qs))
                frame[draws == pidx] ^= flips
        bits = ideal ^ frame
        p0, p1 = noise.meas_flip
        vals = np.ones(len(idx))
        for j in range(k):
            b = (bits >> j) & 1
            r = rng.random(len(idx))
            b = b ^ np.where(b == 0, r < p0, r < p1)
            vals *= 1 - 2 * b
        out[idx] = c.observable.sign * vals
    return out


def _code_at(x: int, z: int, q: int) -> int:
    return int(code_from_xz((x >> q) & 1, (z >> q) & 1))


def _set_code(x: int, z: int, q: int, code: int) -> tuple[int, int]:
    bit = 1 << q
    x = (x | bit) if XBIT[code] else (x & ~bit)
    z = (z | bit) if ZBIT[code] else (z & ~bit)
    return x, z


# ---------------------------------------------------------------- Heisenberg route


@dataclass
class Propagation:
    """Back-propagated observable branches of one Clifford circuit.

    ``xs[t, b]``/``zs[t, b]`` hold the Pauli of branch ``t`` at boundary ``b``;
    ``weights[t]`` already includes channel attenuation, measurement flips
    and the temporal mixture.  com(R, sigma) = sum_t weights[t] * sign_t(sigma).
    """

    xs: np.ndarray
    zs: np.ndarray
    weights: np.ndarray

    def values(self, patterns) -> np.ndarray:
        px, pz = pattern_masks(patterns)
        return self.values_from_masks(px, pz)

    def values_from_masks(self, px: np.ndarray, pz: np.ndarray) -> np.ndarray:
        out = np.zeros(px.shape[0])
        for t in range(len(self.weights)):
            if self.weights[t] == 0:
                continue
            anti = np.bitwise_count((px & self.zs[t]) ^ (pz & self.xs[t])).sum(axis=1) & 1
            out += self.weights[t] * (1 - 2 * anti.astype(float))
        return out


def pattern_masks(patterns) -> tuple[np.ndarray, np.ndarray]:
    masks = [p.boundary_masks() for p in patterns]
    return np.array([m[0] for m in masks]), np.array([m[1] for m in masks])


def propagate(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel = NOISELESS) -> Propagation:
    """Heisenberg walk of the observable for a Clifford assignment under Pauli noise."""
    if not noise.is_pauli:
        raise ValueError("Heisenberg route needs Pauli channels only")
    variants = noise.variants(c.n)
    lines = [timeline(c, a, noise, bad) for _, bad in variants]
    ops = lines[0]
    eig = [
        [op[2].eigenvalues() for op in line if op[0] == "pchan"] for line in lines
    ]
    weights_v = np.array([w for w, _ in variants])
    p0, p1 = noise.meas_flip
    cl = single_qubit_cliffords()
    inv1 = [g.inverse_table() for g in cl]
    qs = c.observable.qubits
    nb = c.N + 2
    xs_all, zs_all, w_all = [], [], []
    for mask in range(2 ** len(qs)):
        coeff = float(c.observable.sign)
        z0 = 0
        for i, q in enumerate(qs):
            if (mask >> i) & 1:
                coeff *= 1 - p0 - p1
                z0 |= 1 << q
            else:
                coeff *= p1 - p0
        if coeff == 0:
            continue
        x, z, sign = 0, z0, 1
        bx = np.zeros(nb, dtype=np.int64)
        bz = np.zeros(nb, dtype=np.int64)
        visits = []
        k = sum(1 for op in ops if op[0] == "pchan")
        for op in reversed(ops):
            kind = op[0]
            if kind == "boundary":
                bx[op[1]], bz[op[1]] = x, z
            elif kind == "u1":
                q = op[1]
                cid = op[3] if op[3] >= 0 else _catalog_index(op[2])
                table, sg = inv1[cid]
                code = _code_at(x, z, q)
                sign *= int(sg[code])
                x, z = _set_code(x, z, q, int(table[code]))
            elif kind == "u2":
                table, sg = op[1].clifford.inverse_table()
                qa, qb = op[1].qubits
                code = 4 * _code_at(x, z, qa) + _code_at(x, z, qb)
                sign *= int(sg[code])
                new = int(table[code])
                x, z = _set_code(x, z, qa, new // 4)
                x, z = _set_code(x, z, qb, new % 4)
            elif kind == "pauli":
                q, code = op[1], op[2]
                if ((x >> q) & 1 and ZBIT[code]) ^ ((z >> q) & 1 and XBIT[code]):
                    sign = -sign
            elif kind == "pchan":
                k -= 1
                idx = 0
                for q in op[1]:
                    idx = 4 * idx + _code_at(x, z, q)
                if idx:
                    visits.append((k, idx))
        if x != 0:
            continue
        atten = np.array([np.prod([e[kk][idx] for kk, idx in visits]) for e in eig])
        w = coeff * sign * float(weights_v @ atten)
        xs_all.append(bx)
        zs_all.append(bz)
        w_all.append(w)
    if not w_all:
        return Propagation(np.zeros((0, nb), np.int64), np.zeros((0, nb), np.int64), np.zeros(0))
    return Propagation(np.array(xs_all), np.array(zs_all), np.array(w_all))


def _catalog_index(u) -> int:
    from .pauli import clifford_index

    try:
        return clifford_index(u)
    except (KeyError, ValueError):
        raise ValueError("non-Clifford computing gate") from None


def pattern_expectations(c, a, noise, patterns) -> np.ndarray:
    """com(R, sigma) for each pattern via the Heisenberg route."""
    return propagate(c, a, noise).values(patterns)


# ---------------------------------------------------------------- training sets


@dataclass(frozen=True, eq=False)
class TrainingSet:
    layout_hash: str
    seed: int
    ids: np.ndarray  # (T, N+1, n) catalog indices
    com_ef: np.ndarray  # (T,) values in {-1, +1}

    def __len__(self):
        return len(self.com_ef)

    def assignment(self, i: int) -> GateAssignment:
        return GateAssignment.from_cliffords(self.ids[i])

    @property
    def entries(self) -> list[tuple[GateAssignment, int]]:
        return [(self.assignment(i), int(self.com_ef[i])) for i in range(len(self))]

    def to_json(self) -> dict:
        return {
            "layout_hash": self.layout_hash,
            "seed": self.seed,
            "entries": [
                {"cliffords": self.ids[i].tolist(), "com_ef": int(self.com_ef[i])}
                for i in range(len(self))
            ],
        }

    @classmethod
    def from_json(cls, d) -> "TrainingSet":
        ids = np.array([e["cliffords"] for e in d["entries"]], dtype=np.int16)
        ef = np.array([e["com_ef"] for e in d["entries"]], dtype=float)
        return cls(d["layout_hash"], int(d["seed"]), ids, ef)


def candidate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def sample_training_set(c: LayeredCircuit, size: int, seed: int, max_candidates: int | None = None) -> TrainingSet:
    """Uniform Clifford assignments filtered to |com_ef| = 1.

    Candidate ``i`` draws from its own seed stream, so the result depends
    only on ``seed``.
    """
    if size < 1:
        raise ValueError("training set size must be positive")
    cap = max_candidates if max_candidates is not None else 1000 * size
    ids, ef = [], []
    for i in range(cap):
        cand = candidate_rng(seed, i).integers(0, 24, size=(c.N + 1, c.n)).astype(np.int16)
        val = clifford_expectation(c, GateAssignment.from_cliffords(cand))
        if val != 0:
            ids.append(cand)
            ef.append(float(val))
            if len(ids) == size:
                return TrainingSet(c.layout_hash(), int(seed), np.array(ids), np.array(ef))
    raise CapExceeded(f"rejection budget of {cap} candidates exhausted with {len(ids)} accepted")
