"""Exact density-matrix simulation and shot-level trajectory sampling.

Density matrices are stored as tensors of shape ``(2,) * 2n`` (row axes
first); qubit 0 is the most significant bit of a basis index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .circuit import ErrorPattern, GateAssignment, LayeredCircuit
from .errors import CapExceeded
from .noise import NoiseModel, timeline
from .pauli import XBIT, ZBIT, PauliChannel, pauli_basis, ptm_of_channel

MAX_QUBITS = 12
SHOT_CHUNK = 4096


def _check_size(n: int):
    if n > MAX_QUBITS:
        raise CapExceeded(f"dense simulation is capped at {MAX_QUBITS} qubits (got {n})")


def zero_state(n: int) -> np.ndarray:
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    return rho


def as_matrix(rho: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(rho.size)))
    return np.asarray(rho).reshape(d, d)


def apply_unitary(rho: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    """rho -> u rho u^dag with u acting on ``qubits`` (any 2^k x 2^k matrix)."""
    k = len(qubits)
    ut = np.asarray(u).reshape((2,) * (2 * k))
    rows = list(qubits)
    cols = [n + q for q in qubits]
    out = np.tensordot(ut, rho, axes=(list(range(k, 2 * k)), rows))
    out = np.moveaxis(out, list(range(k)), rows)
    out = np.tensordot(out, ut.conj(), axes=(cols, list(range(k, 2 * k))))
    return np.moveaxis(out, list(range(2 * n - k, 2 * n)), cols)


_SIGN2 = np.array([[1.0, -1.0], [-1.0, 1.0]])


def conj_pauli_layer(rho: np.ndarray, codes, n: int) -> np.ndarray:
    """rho -> L rho L for a Pauli layer given as per-qubit codes."""
    codes = np.asarray(codes)
    flips = [q for q in range(n) if XBIT[codes[q]]]
    if flips:
        rho = np.flip(rho, axis=flips + [n + q for q in flips])
    for q in range(n):
        if ZBIT[codes[q]]:
            shape = [1] * (2 * n)
            shape[q] = shape[n + q] = 2
            rho = rho * _SIGN2.reshape(shape)
    return rho


@lru_cache(maxsize=4096)
def _channel_terms(probs_bytes: bytes, k: int):
    """Split a Pauli channel into (x-part, W) with W over (row bits, col bits)."""
    probs = np.frombuffer(probs_bytes, dtype=float)
    terms: dict[tuple, np.ndarray] = {}
    bits = np.array(np.unravel_index(np.arange(2**k), (2,) * k)).T  # (2^k, k)
    for idx, p in enumerate(probs):
        if p == 0:
            continue
        codes = np.unravel_index(idx, (4,) * k)
        xa = tuple(int(XBIT[c]) for c in codes)
        zb = np.array([ZBIT[c] for c in codes])
        d = bits[:, None, :] ^ bits[None, :, :]
        w = p * (-1.0) ** (d @ zb)
        terms[xa] = terms.get(xa, 0) + w.reshape((2,) * (2 * k))
    return tuple(terms.items())


def apply_pauli_channel(rho: np.ndarray, ch: PauliChannel, qubits, n: int) -> np.ndarray:
    k = len(qubits)
    axes = list(qubits) + [n + q for q in qubits]
    t = np.moveaxis(rho, axes, list(range(2 * k)))
    pad = (1,) * (2 * n - 2 * k)
    out = None
    for xa, w in _channel_terms(ch.probs.tobytes(), k):
        flip = [i for i in range(k) if xa[i]]
        v = np.flip(t, axis=flip + [k + i for i in flip]) if flip else t
        term = w.reshape(w.shape + pad) * v
        out = term if out is None else out + term
    return np.ascontiguousarray(np.moveaxis(out, list(range(2 * k)), axes))


def apply_kraus(rho: np.ndarray, kraus, qubits, n: int) -> np.ndarray:
    return sum(apply_unitary(rho, k, qubits, n) for k in kraus)


def _forward(rho, ops, n):
    for op in ops:
        kind = op[0]
        if kind == "u1":
            rho = apply_unitary(rho, op[2], (op[1],), n)
        elif kind == "u2":
            rho = apply_unitary(rho, op[1].clifford.matrix, op[1].qubits, n)
        elif kind == "pauli":
            codes = np.zeros(n, dtype=int)
            codes[op[1]] = op[2]
            rho = conj_pauli_layer(rho, codes, n)
        elif kind == "pchan":
            rho = apply_pauli_channel(rho, op[2], op[1], n)
        elif kind == "kraus":
            rho = apply_kraus(rho, op[2], (op[1],), n)
    return rho


def _backward(eff, ops, n):
    for op in reversed(ops):
        kind = op[0]
        if kind == "u1":
            eff = apply_unitary(eff, op[2].conj().T, (op[1],), n)
        elif kind == "u2":
            eff = apply_unitary(eff, op[1].clifford.matrix.conj().T, op[1].qubits, n)
        elif kind == "pauli":
            codes = np.zeros(n, dtype=int)
            codes[op[1]] = op[2]
            eff = conj_pauli_layer(eff, codes, n)
        elif kind == "pchan":
            eff = apply_pauli_channel(eff, op[2], op[1], n)
        elif kind == "kraus":
            eff = apply_kraus(eff, [k.conj().T for k in op[2]], (op[1],), n)
    return eff


def _segments(ops, N):
    segs: list[list] = [[] for _ in range(N + 2)]
    cur = None
    for op in ops:
        if op[0] == "boundary":
            cur = op[1]
        else:
            segs[cur].append(op)
    return segs


def outcome_values(c: LayeredCircuit, noise: NoiseModel) -> np.ndarray:
    """Expected f per ideal outcome, including classical flips; shape (2,)*n."""
    p0, p1 = noise.meas_flip
    one = np.array([1.0, 1.0])
    z = np.array([1 - 2 * p0, -(1 - 2 * p1)])
    v = np.ones(())
    for q in range(c.n):
        v = np.multiply.outer(v, z if q in c.observable.qubits else one)
    return c.observable.sign * v


def measurement_effect(c: LayeredCircuit, noise: NoiseModel) -> np.ndarray:
    v = outcome_values(c, noise).ravel()
    return np.diag(v).astype(complex).reshape((2,) * (2 * c.n))


def final_state(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel, bad=None) -> np.ndarray:
    _check_size(c.n)
    ops = [op for op in timeline(c, a, noise, bad) if op[0] != "boundary"]
    return _forward(zero_state(c.n), ops, c.n)


def exact_expectation(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel) -> float:
    """Exact mean of f; the temporal model is a weighted mixture over bad qubits."""
    vals = outcome_values(c, noise).ravel()
    total = 0.0
    for w, bad in noise.variants(c.n):
        rho = as_matrix(final_state(c, a, noise, bad))
        total += w * float(np.dot(vals, np.real(np.diag(rho))))
    return total


def outcome_distribution(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel) -> np.ndarray:
    """Probabilities of the ideal (pre-flip) measurement outcomes."""
    p = np.zeros(2**c.n)
    for w, bad in noise.variants(c.n):
        p += w * np.real(np.diag(as_matrix(final_state(c, a, noise, bad))))
    return np.clip(p, 0, None)


def _pattern_boundaries(sigma: ErrorPattern):
    return tuple(
        (b, tuple(int(x) for x in row)) for b, row in enumerate(sigma.layers) if np.any(row)
    )


def pattern_expectations(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel, patterns) -> np.ndarray:
    """com(R, sigma) for every pattern, sharing forward/backward sweeps."""
    return pattern_expectations_multi(c, a, noise, patterns, [c.observable])[0]


def pattern_expectations_multi(c: LayeredCircuit, a: GateAssignment, noise: NoiseModel, patterns, observables) -> np.ndarray:
    """(observables, patterns) table of com values; forward sweeps are shared."""
    _check_size(c.n)
    n, N = c.n, c.N
    d = 2**n
    items = [(i, _pattern_boundaries(p)) for i, p in enumerate(patterns)]
    out = np.zeros((len(observables), len(patterns)))
    for w, bad in noise.variants(n):
        segs = _segments(timeline(c, a, noise, bad), N)
        rhos = [zero_state(n)]
        for b in range(N + 1):
            rhos.append(_forward(rhos[b], segs[b], n))
        effs = [np.zeros((len(observables), d, d), dtype=complex) for _ in range(N + 2)]
        for k, obs in enumerate(observables):
            eff = _backward(measurement_effect(c.with_observable(obs), noise), segs[N + 1], n)
            effs[N + 1][k] = as_matrix(eff)
            for b in range(N, -1, -1):
                eff = _backward(eff, segs[b], n)
                effs[b][k] = as_matrix(eff)
        # transposed effects turn each trace into an elementwise product
        effs = [e.transpose(0, 2, 1).copy() for e in effs]
        vals = np.zeros((len(observables), len(patterns)))
        _eval_top(items, rhos, effs, segs, n, vals)
        out += w * vals
    return out


def _traces(eff_t, rho):
    return np.real(np.sum(eff_t * as_matrix(rho)[None], axis=(1, 2)))


def _eval_top(items, rhos, effs, segs, n, vals):
    groups: dict = {}
    for i, decs in items:
        if not decs:
            vals[:, i] = _traces(effs[0], rhos[0])
        else:
            groups.setdefault(decs[0], []).append((i, decs[1:]))
    for (b, codes), sub in groups.items():
        state = conj_pauli_layer(rhos[b], codes, n)
        _eval_from(state, b, sub, effs, segs, n, vals)


def _eval_from(state, b, items, effs, segs, n, vals):
    """``state`` sits at marker b with all decorations up to b applied."""
    later: dict = {}
    for i, decs in items:
        if not decs:
            vals[:, i] = _traces(effs[b], state)
        else:
            later.setdefault(decs[0][0], []).append((i, decs))
    cur, cur_b = state, b
    for bb in sorted(later):
        for s in range(cur_b, bb):
            cur = _forward(cur, segs[s], n)
        cur_b = bb
        groups: dict = {}
        for i, decs in later[bb]:
            groups.setdefault(decs[0][1], []).append((i, decs[1:]))
        for codes, sub in groups.items():
            _eval_from(conj_pauli_layer(cur, codes, n), bb, sub, effs, segs, n, vals)


# ---------------------------------------------------------------- twirling and measurement


def twirl_channel(kraus, frame_gate=None) -> PauliChannel:
    """Pauli-twirled version of a channel on at most two qubits.

    With ``frame_gate`` the Kraus operators describe the noisy gate, and the
    ideal gate is divided out before twirling.
    """
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    if frame_gate is not None:
        g = np.asarray(getattr(frame_gate, "matrix", frame_gate), dtype=complex)
        kraus = [k @ g.conj().T for k in kraus]
    dim = kraus[0].shape[0]
    if not np.allclose(sum(k.conj().T @ k for k in kraus), np.eye(dim), atol=1e-10):
        raise ValueError("channel is not trace preserving")
    lam = np.diag(ptm_of_channel(kraus))
    ch = PauliChannel.from_eigenvalues(lam, quasi=True)
    return PauliChannel(np.clip(ch.probs, 0.0, None))


def balanced_flip_probabilities(p0: float, p1: float) -> tuple[float, float]:
    """Symmetric flip rates of the randomised measurement."""
    p = (p0 + p1) / 2
    return p, p


def balanced_povm(raw: list[np.ndarray]) -> list[np.ndarray]:
    """E_mu = 2^-n sum_b X_b E^raw_{mu xor b} X_b for a POVM indexed by bitstrings."""
    dim = raw[0].shape[0]
    n = int(round(np.log2(dim)))
    xs = []
    for b in range(dim):
        xb = np.ones((1, 1))
        for q in range(n):
            xb = np.kron(xb, pauli_basis(1)[1] if (b >> (n - 1 - q)) & 1 else np.eye(2))
        xs.append(xb)
    return [sum(xs[b] @ raw[mu ^ b] @ xs[b] for b in range(dim)) / dim for mu in range(dim)]


# ---------------------------------------------------------------- shots


@dataclass
class Shots:
    outcomes: np.ndarray  # (M, n) uint8 recorded bits
    f: np.ndarray  # (M,) observable values
    bad: np.ndarray  # (M,) bad qubit per shot, -1 if none
    sigma: np.ndarray | None = None  # (M,) index of the applied pattern

    def __len__(self):
        return len(self.f)

    @property
    def mean(self) -> float:
        return float(np.mean(self.f))


def _chunks(M: int, seed, chunk: int = SHOT_CHUNK):
    sizes = [chunk] * (M // chunk) + ([M % chunk] if M % chunk else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    return list(zip(sizes, seqs))


def _pmap(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def sample_shots(
    c: LayeredCircuit,
    a: GateAssignment,
    noise: NoiseModel,
    M: int,
    seed,
    *,
    method: str = "trajectory",
    balanced: bool = False,
    threads: int = 1,
) -> Shots:
    """M independent noisy shots.

    ``trajectory`` unravels every channel per shot on a batch of state
    vectors; ``born`` samples outcomes from the exact outcome distribution.
    Both are unbiased for :func:`exact_expectation`.  Chunk seeds do not
    depend on ``threads``.
    """
    if M < 1:
        raise ValueError("M must be positive")
    _check_size(c.n)
    if method not in ("trajectory", "born"):
        raise ValueError(f"unknown sampling method {method!r}")
    born_probs = None
    if method == "born":
        born_probs = {bad: np.real(np.diag(as_matrix(final_state(c, a, noise, bad))))
                      for _, bad in noise.variants(c.n)}

    def run(job):
        size, ss = job
        rng = np.random.default_rng(ss)
        bad = _draw_bad(noise, c.n, size, rng)
        bits = np.zeros((size, c.n), dtype=np.uint8)
        for v in np.unique(bad):
            mask = bad == v
            vb = None if v < 0 else int(v)
            if born_probs is None:
                bits[mask] = _trajectory_bits(c, a, noise, vb, int(mask.sum()), rng)
            else:
                bits[mask] = _born_bits(born_probs[vb], c.n, int(mask.sum()), rng)
        rec = _measure_noise(bits, noise, balanced, rng)
        return rec, bad

    parts = _pmap(run, _chunks(M, seed), threads)
    outcomes = np.concatenate([p[0] for p in parts])
    bad = np.concatenate([p[1] for p in parts])
    return Shots(outcomes, c.observable.values(outcomes), bad)


def _draw_bad(noise, n, size, rng):
    if noise.temporal_g is None:
        return np.full(size, -1, dtype=np.int64)
    return rng.choice(n, p=noise.bad_qubit_prob(n), size=size)


def _measure_noise(bits, noise, balanced, rng):
    size, n = bits.shape
    p0, p1 = noise.meas_flip
    b = rng.integers(0, 2, size=(size, n), dtype=np.uint8) if balanced else None
    state_bits = bits ^ b if balanced else bits
    if p0 or p1:
        r = rng.random((size, n))
        flip = np.where(state_bits == 0, r < p0, r < p1)
        state_bits = state_bits ^ flip.astype(np.uint8)
    return state_bits ^ b if balanced else state_bits


def _born_bits(probs, n, size, rng):
    cum = np.cumsum(np.clip(probs, 0, None))
    idx = np.searchsorted(cum, rng.random(size) * cum[-1], side="right")
    idx = np.minimum(idx, len(probs) - 1)
    return ((idx[:, None] >> (n - 1 - np.arange(n))) & 1).astype(np.uint8)


def _trajectory_bits(c, a, noise, bad, size, rng):
    n = c.n
    psi = np.zeros((size,) + (2,) * n, dtype=complex)
    psi[(slice(None),) + (0,) * n] = 1.0
    for op in timeline(c, a, noise, bad):
        kind = op[0]
        if kind == "u1":
            psi = _sv_apply(psi, op[2], (op[1],), n)
        elif kind == "u2":
            psi = _sv_apply(psi, op[1].clifford.matrix, op[1].qubits, n)
        elif kind == "pauli":
            psi = _sv_pauli(psi, {op[1]: op[2]}, n)
        elif kind == "pchan":
            qs, ch = op[1], op[2]
            draws = rng.choice(len(ch.probs), p=ch.probs / ch.probs.sum(), size=size)
            for k in np.unique(draws):
                if k == 0:
                    continue
                mask = draws == k
                codes = np.unravel_index(int(k), (4,) * len(qs))
                psi[mask] = _sv_pauli(psi[mask], dict(zip(qs, codes)), n)
        elif kind == "kraus":
            psi = _sv_kraus(psi, op[2], op[1], n, rng)
    probs = (np.abs(psi) ** 2).reshape(size, -1)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(size) * cum[:, -1]
    idx = np.minimum((cum < u[:, None]).sum(axis=1), probs.shape[1] - 1)
    return ((idx[:, None] >> (n - 1 - np.arange(n))) & 1).astype(np.uint8)


def _sv_apply(psi, u, qubits, n):
    k = len(qubits)
    ut = np.asarray(u).reshape((2,) * (2 * k))
    axes = [1 + q for q in qubits]
    out = np.tensordot(psi, ut, axes=(axes, list(range(k, 2 * k))))
    return np.moveaxis(out, list(range(n + 1 - k, n + 1)), axes)


def _sv_pauli(psi, codes: dict, n):
    for q, code in codes.items():
        if XBIT[code]:
            psi = np.flip(psi, axis=1 + q)
        if ZBIT[code]:
            shape = [1] * (n + 1)
            shape[1 + q] = 2
            psi = psi * np.array([1.0, -1.0]).reshape(shape)
    return np.array(psi)


def _sv_kraus(psi, kraus, q, n, rng):
    branches = [_sv_apply(psi, k, (q,), n) for k in kraus]
    weights = np.array([np.sum(np.abs(b.reshape(len(psi), -1)) ** 2, axis=1) for b in branches])
    cum = np.cumsum(weights, axis=0)
    u = rng.random(len(psi)) * cum[-1]
    choice = np.minimum((cum < u[None, :]).sum(axis=0), len(kraus) - 1)
    out = np.empty_like(psi)
    for k, b in enumerate(branches):
        mask = choice == k
        if np.any(mask):
            norm = np.sqrt(weights[k, mask]).reshape((-1,) + (1,) * n)
            out[mask] = b[mask] / norm
    return out
