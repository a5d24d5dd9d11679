"""Pauli strings, Clifford conjugation tables, Pauli transfer matrices and
the single-qubit Clifford catalogs.

Single-qubit Paulis are encoded as integers ``0..3`` for ``I, X, Y, Z``.
Multi-qubit dense operators use the Kronecker order with qubit 0 leftmost,
and a Pauli on ``m`` qubits is indexed by ``sum(code[i] * 4**(m-1-i))``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

LETTERS = "IXYZ"

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_MATRICES = (_I2, _X, _Y, _Z)

# Symplectic bits: code -> (x, z) and back.
XBIT = np.array([0, 1, 1, 0], dtype=np.uint8)
ZBIT = np.array([0, 0, 1, 1], dtype=np.uint8)
_FROM_XZ = np.array([[0, 3], [1, 2]], dtype=np.int8)  # [x][z]


def code_from_xz(x, z):
    return _FROM_XZ[np.asarray(x, dtype=np.int8), np.asarray(z, dtype=np.int8)]


def mul_codes(a, b):
    """Phase-free product of Pauli codes, elementwise."""
    a = np.asarray(a)
    b = np.asarray(b)
    return _FROM_XZ[XBIT[a] ^ XBIT[b], ZBIT[a] ^ ZBIT[b]]


def anticommutes(a, b) -> bool:
    """True when the Paulis given as code sequences anticommute."""
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.sum((XBIT[a] & ZBIT[b]) ^ (ZBIT[a] & XBIT[b])) & 1)


@dataclass(frozen=True)
class PauliString:
    ops: tuple[int, ...]

    def __post_init__(self):
        ops = tuple(int(o) for o in self.ops)
        if any(o < 0 or o > 3 for o in ops):
            raise ValueError(f"invalid Pauli codes {ops}")
        object.__setattr__(self, "ops", ops)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        try:
            return cls(tuple(LETTERS.index(ch) for ch in label.upper()))
        except ValueError:
            raise ValueError(f"invalid Pauli label {label!r}") from None

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls((0,) * n)

    @classmethod
    def from_index(cls, index: int, n: int) -> "PauliString":
        ops = []
        for _ in range(n):
            ops.append(index % 4)
            index //= 4
        return cls(tuple(reversed(ops)))

    @property
    def n(self) -> int:
        return len(self.ops)

    @property
    def index(self) -> int:
        idx = 0
        for o in self.ops:
            idx = 4 * idx + o
        return idx

    @property
    def label(self) -> str:
        return "".join(LETTERS[o] for o in self.ops)

    @property
    def weight(self) -> int:
        return sum(1 for o in self.ops if o)

    def is_identity(self) -> bool:
        return not any(self.ops)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_mul(self, other)

    def commutes_with(self, other: "PauliString") -> bool:
        if self.n != other.n:
            raise ValueError("length mismatch")
        return not anticommutes(self.ops, other.ops)

    def matrix(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for o in self.ops:
            out = np.kron(out, PAULI_MATRICES[o])
        return out

    def __str__(self) -> str:
        return self.label


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")
    return PauliString(tuple(int(c) for c in mul_codes(a.ops, b.ops)))


def all_paulis(m: int) -> list[PauliString]:
    return [PauliString.from_index(i, m) for i in range(4**m)]


@lru_cache(maxsize=None)
def pauli_basis(m: int) -> np.ndarray:
    """Stack of the 4^m Pauli matrices in index order, shape (4^m, 2^m, 2^m)."""
    return np.array([p.matrix() for p in all_paulis(m)])


@lru_cache(maxsize=None)
def commutation_signs(m: int) -> np.ndarray:
    """s[mu, tau] = +1 if the Paulis commute and -1 otherwise."""
    one = np.array([[1 if (a == 0 or b == 0 or a == b) else -1 for b in range(4)] for a in range(4)])
    out = np.ones((1, 1), dtype=int)
    for _ in range(m):
        out = np.kron(out, one)
    return out


# ---------------------------------------------------------------- Cliffords


def _conjugation_table(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = int(round(np.log2(u.shape[0])))
    basis = pauli_basis(m)
    dim = 2**m
    out = np.zeros(4**m, dtype=np.int64)
    sign = np.zeros(4**m, dtype=np.int8)
    for i, p in enumerate(basis):
        img = u @ p @ u.conj().T
        coeffs = np.einsum("kij,ji->k", basis, img) / dim
        j = int(np.argmax(np.abs(coeffs)))
        c = coeffs[j]
        if abs(abs(c) - 1) > 1e-9 or abs(c.imag) > 1e-9:
            raise ValueError("matrix is not a Clifford unitary")
        out[i] = j
        sign[i] = 1 if c.real > 0 else -1
    if len(set(out.tolist())) != 4**m:
        raise ValueError("conjugation is not a bijection")
    return out, sign


@dataclass(frozen=True, eq=False)
class CliffordGate:
    """Clifford unitary with its conjugation table ``P -> sign * Q``."""

    name: str
    matrix: np.ndarray = field(repr=False)
    table: np.ndarray = field(repr=False)
    signs: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, name: str, u) -> "CliffordGate":
        u = np.asarray(u, dtype=complex)
        if u.shape not in ((2, 2), (4, 4)):
            raise ValueError("only 1- and 2-qubit Cliffords are supported")
        if not np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=1e-10):
            raise ValueError("matrix is not unitary")
        table, signs = _conjugation_table(u)
        for arr in (u, table, signs):
            arr.setflags(write=False)
        return cls(name, u, table, signs)

    @property
    def arity(self) -> int:
        return 1 if self.matrix.shape[0] == 2 else 2

    def conjugate(self, p: PauliString) -> tuple[PauliString, int]:
        return clifford_conjugate(self, p)

    def inverse_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Table for ``U^dag P U``: the Heisenberg-picture action."""
        inv = np.empty_like(self.table)
        sg = np.empty_like(self.signs)
        inv[self.table] = np.arange(len(self.table))
        sg[self.table] = self.signs
        return inv, sg


def clifford_conjugate(g: CliffordGate, p: PauliString) -> tuple[PauliString, int]:
    if p.n != g.arity:
        raise ValueError(f"arity mismatch: gate acts on {g.arity}, Pauli has {p.n}")
    i = p.index
    return PauliString.from_index(int(g.table[i]), g.arity), int(g.signs[i])


H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_MATRIX = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CZ_MATRIX = np.diag([1, 1, 1, -1]).astype(complex)


@lru_cache(maxsize=None)
def named_two_qubit(name: str) -> CliffordGate:
    mats = {"CNOT": CNOT_MATRIX, "CZ": CZ_MATRIX}
    if name not in mats:
        raise ValueError(f"unknown two-qubit gate {name!r}")
    return CliffordGate.from_matrix(name, mats[name])


def _action_key(u: np.ndarray) -> tuple:
    t, s = _conjugation_table(u)
    return tuple(t.tolist()) + tuple(s.tolist())


def _strip_phase(u: np.ndarray) -> np.ndarray:
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-9))
    return u * (abs(flat[k]) / flat[k])


@lru_cache(maxsize=None)
def single_qubit_cliffords() -> tuple[CliffordGate, ...]:
    """The 24 single-qubit Cliffords modulo phase, generated from H and S.

    Breadth-first over words in H and S, so the order is deterministic and
    starts with the identity.
    """
    gens = (("H", H_MATRIX), ("S", S_MATRIX))
    seen = {_action_key(_I2): ("I", _I2)}
    frontier = [("I", _I2)]
    while frontier:
        nxt = []
        for word, u in frontier:
            for gname, g in gens:
                v = _strip_phase(g @ u)
                key = _action_key(v)
                if key not in seen:
                    w = gname if word == "I" else f"{gname}.{word}"
                    seen[key] = (w, v)
                    nxt.append((w, v))
        frontier = nxt
    gates = tuple(CliffordGate.from_matrix(w, u) for w, u in seen.values())
    assert len(gates) == 24
    return gates


@lru_cache(maxsize=None)
def clifford_index_of_action() -> dict:
    return {_key_of(g): i for i, g in enumerate(single_qubit_cliffords())}


def _key_of(g: CliffordGate) -> tuple:
    return tuple(g.table.tolist()) + tuple(g.signs.tolist())


def clifford_index(u) -> int:
    """Index into :func:`single_qubit_cliffords` of a 2x2 Clifford matrix."""
    return clifford_index_of_action()[_action_key(np.asarray(u, dtype=complex))]


@lru_cache(maxsize=None)
def clifford_pauli_product_table() -> np.ndarray:
    """prod[c, p] = index of the Clifford ``C_c . P_p`` (P applied first)."""
    cl = single_qubit_cliffords()
    return np.array(
        [[clifford_index(c.matrix @ PAULI_MATRICES[p]) for p in range(4)] for c in cl]
    )


@lru_cache(maxsize=None)
def clifford_basis_b1() -> tuple[CliffordGate, ...]:
    """Ten single-qubit Cliffords whose maps span the affine hull of unitary maps."""
    s = 1 / np.sqrt(2)
    mats = [
        ("I", _I2),
        ("X", _X),
        ("Y", _Y),
        ("Z", _Z),
        ("(I+iX)/sqrt2", s * (_I2 + 1j * _X)),
        ("(I+iY)/sqrt2", s * (_I2 + 1j * _Y)),
        ("(I+iZ)/sqrt2", s * (_I2 + 1j * _Z)),
        ("(Y+Z)/sqrt2", s * (_Y + _Z)),
        ("(Z+X)/sqrt2", s * (_Z + _X)),
        ("(X+Y)/sqrt2", s * (_X + _Y)),
    ]
    return tuple(CliffordGate.from_matrix(name, u) for name, u in mats)


# ---------------------------------------------------------------- channels


@dataclass(frozen=True, eq=False)
class PauliChannel:
    """rho -> sum_mu p[mu] mu rho mu over the 4^m Paulis on m qubits.

    ``quasi=True`` allows negative weights (channel inverses).
    """

    probs: np.ndarray
    quasi: bool = False

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        m = int(round(np.log(len(p)) / np.log(4)))
        if 4**m != len(p) or m < 1:
            raise ValueError("probability vector length must be 4^m")
        if not self.quasi and np.any(p < -1e-15):
            raise ValueError("negative probability in a probability channel")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def arity(self) -> int:
        return int(round(np.log(len(self.probs)) / np.log(4)))

    def eigenvalues(self) -> np.ndarray:
        """Diagonal of the PTM: lambda_tau = sum_mu p_mu s(mu, tau)."""
        return commutation_signs(self.arity) @ self.probs

    @classmethod
    def from_eigenvalues(cls, lam, quasi: bool = True) -> "PauliChannel":
        lam = np.asarray(lam, dtype=float)
        m = int(round(np.log(len(lam)) / np.log(4)))
        return cls(commutation_signs(m) @ lam / 4**m, quasi=quasi)

    def inverse(self) -> "PauliChannel":
        lam = self.eigenvalues()
        if np.any(np.abs(lam) < 1e-14):
            raise ValueError("channel is not invertible")
        return PauliChannel.from_eigenvalues(1.0 / lam)

    @property
    def support(self) -> tuple[int, ...]:
        """Non-identity Pauli indices with nonzero weight."""
        return tuple(int(i) for i in np.nonzero(self.probs)[0] if i != 0)

    def kraus(self) -> list[np.ndarray]:
        if self.quasi:
            raise ValueError("quasi-channels have no Kraus form")
        basis = pauli_basis(self.arity)
        return [np.sqrt(p) * basis[i] for i, p in enumerate(self.probs) if p > 0]


def ptm_of_channel(channel, m: int | None = None) -> np.ndarray:
    """Real PTM with entries 2^-m Tr[tau1 M(tau2)].

    ``channel`` is a :class:`PauliChannel`, a Kraus list, or a single unitary.
    """
    if isinstance(channel, PauliChannel):
        if m is not None and m != channel.arity:
            raise ValueError("arity mismatch")
        return np.diag(channel.eigenvalues()).astype(float)
    if isinstance(channel, np.ndarray) and channel.ndim == 2:
        kraus = [channel]
    else:
        kraus = [np.asarray(k, dtype=complex) for k in channel]
    dim = kraus[0].shape[0]
    mm = int(round(np.log2(dim)))
    if m is not None and m != mm:
        raise ValueError("arity mismatch")
    if mm > 2:
        raise ValueError("channels on more than two qubits are not supported")
    basis = pauli_basis(mm)
    images = sum(np.einsum("ab,kbc,dc->kad", k, basis, k.conj()) for k in kraus)
    ptm = np.einsum("iab,jba->ij", basis, images) / dim
    return ptm.real


def decompose_unitary_map(u) -> np.ndarray:
    """Coefficients alpha with PTM(u) = sum_i alpha_i PTM(B1_i)."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not np.allclose(u @ u.conj().T, _I2, atol=1e-10):
        raise ValueError("expected a 2x2 unitary")
    basis = _b1_vectors()
    alpha = _b1_pinv() @ ptm_of_channel(u).ravel()
    resid = np.max(np.abs(basis @ alpha - ptm_of_channel(u).ravel()))
    assert resid < 1e-9, resid
    return alpha


@lru_cache(maxsize=None)
def _b1_vectors() -> np.ndarray:
    vecs = np.array([ptm_of_channel(g.matrix).ravel() for g in clifford_basis_b1()]).T
    assert np.linalg.matrix_rank(vecs) == 10
    return vecs


@lru_cache(maxsize=None)
def _b1_pinv() -> np.ndarray:
    return np.linalg.pinv(_b1_vectors())


def pauli_strings(labels: Iterable[str]) -> list[PauliString]:
    return [PauliString.from_label(s) for s in labels]


def paulis_on(m: int, nontrivial: bool = False) -> Sequence[PauliString]:
    ps = all_paulis(m)
    return ps[1:] if nontrivial else ps


def product_codes(m: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(4), repeat=m))
