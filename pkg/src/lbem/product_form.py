"""Product-form quasi-probabilities and their gradient-descent learning.

Each non-trivial pattern i carries a parameter q_i.  A bit string b selects
the composite pattern prod_i sigma_i^{b_i}, weighted by

    V(q, b) = prod_i [b_i q_i + (1 - b_i)(1 - q_i)],

and sampled from the normalised absolute value W(q, b).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .noise import NoiseModel
from .quasi import QuasiDistribution
from .sige import SigESet
from .stabilizer import TrainingSet, pattern_masks, propagate

log = logging.getLogger(__name__)


@dataclass
class ProductFormParams:
    q: np.ndarray
    gamma_prime: float = 1e-4
    trajectory: list[float] = field(default_factory=list)

    @property
    def C(self) -> float:
        return float(np.prod(np.abs(self.q) + np.abs(1 - self.q)))


def product_form_value(q, b) -> float:
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=bool)
    return float(np.prod(np.where(b, q, 1 - q)))


def product_form_weight(q, b) -> float:
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=bool)
    return float(np.prod(np.where(b, np.abs(q), np.abs(1 - q)) / (np.abs(q) + np.abs(1 - q))))


def value_gradient(q, b) -> np.ndarray:
    """dV/dq_i = (2 b_i - 1) prod_{j != i} [b_j q_j + (1 - b_j)(1 - q_j)]."""
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=bool)
    return np.where(b, 1.0, -1.0) * _leave_one_out(np.where(b, q, 1 - q))


def exhaustive_sum(q) -> float:
    return sum(product_form_value(q, b) for b in itertools.product((0, 1), repeat=len(q)))


def _leave_one_out(f: np.ndarray) -> np.ndarray:
    """Products over all but one entry of the last axis, without division."""
    ones = np.ones(f.shape[:-1] + (1,))
    pre = np.cumprod(np.concatenate([ones, f[..., :-1]], axis=-1), axis=-1)
    suf = np.cumprod(np.concatenate([ones, f[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return pre * suf


def sample_bits(q, size: int, rng: np.random.Generator) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    p1 = np.abs(q) / (np.abs(q) + np.abs(1 - q))
    return rng.random((size, len(q))) < p1


# ---------------------------------------------------------------- training tables


@dataclass(frozen=True, eq=False)
class SignTables:
    """Per training circuit: branch weights and which patterns flip each branch.

    com(R, P_b) = sum_t weights[R, t] * (-1)^(anti[R, t] . b).
    """

    weights: np.ndarray  # (T, B)
    anti: np.ndarray  # (T, B, K) bool
    com_ef: np.ndarray  # (T,)

    def __len__(self):
        return len(self.com_ef)

    def com(self, r: int, bits: np.ndarray) -> np.ndarray:
        par = (bits.astype(np.int64) @ self.anti[r].T.astype(np.int64)) & 1
        return (1 - 2 * par) @ self.weights[r]


def sign_tables(s: SigESet, ts: TrainingSet, noise: NoiseModel) -> SignTables:
    """Sign tables for the non-trivial patterns of ``s`` over a Clifford training set."""
    pats = [p for p in s.patterns if not p.is_trivial]
    px, pz = pattern_masks(pats)
    props = [propagate(s.circuit, ts.assignment(i), noise) for i in range(len(ts))]
    b = max(1, max(len(p.weights) for p in props))
    w = np.zeros((len(ts), b))
    anti = np.zeros((len(ts), b, len(pats)), dtype=bool)
    for i, p in enumerate(props):
        for t in range(len(p.weights)):
            w[i, t] = p.weights[t]
            anti[i, t] = (np.bitwise_count((px & p.zs[t]) ^ (pz & p.xs[t])).sum(axis=1) & 1).astype(bool)
    return SignTables(w, anti, np.asarray(ts.com_ef, dtype=float))


def exact_mitigated(q, tab: SignTables) -> np.ndarray:
    f = 1 - 2 * np.asarray(q)[None, None, :] * tab.anti
    return np.einsum("tb,tb->t", tab.weights, np.prod(f, axis=-1))


def exact_loss_and_gradient(q, tab: SignTables) -> tuple[float, np.ndarray]:
    q = np.asarray(q, dtype=float)
    f = 1 - 2 * q[None, None, :] * tab.anti
    em = np.einsum("tb,tb->t", tab.weights, np.prod(f, axis=-1))
    resid = em - tab.com_ef
    dem = np.einsum("tb,tbk->tk", tab.weights, -2.0 * tab.anti * _leave_one_out(f))
    return float(np.mean(resid**2)), 2 * resid @ dem / len(resid)


def exact_loss(q, tab: SignTables) -> float:
    return float(np.mean((exact_mitigated(q, tab) - tab.com_ef) ** 2))


def mc_loss_and_gradient(q, tab: SignTables, n_circuits: int, shots: int, rng) -> tuple[float, np.ndarray]:
    """Single-shot Monte Carlo estimates of the loss and its gradient.

    For each sampled training circuit, bits b ~ W pick a composite pattern,
    one +-1 shot f is drawn from it, and com^em is estimated by the mean of
    (V / W)(b) f.  The gradient reuses the same shots with dV/dq_i in place of V.
    """
    q = np.asarray(q, dtype=float)
    norm = np.abs(q) + np.abs(1 - q)
    cost = float(np.prod(norm))
    rows = rng.integers(len(tab), size=n_circuits)
    loss = 0.0
    grad = np.zeros_like(q)
    for r in rows:
        bits = sample_bits(q, shots, rng)
        fac = np.where(bits, q, 1 - q)
        sgn = np.prod(np.sign(fac), axis=1)
        mean = tab.com(r, bits)
        f = np.where(rng.random(shots) < (1 + mean) / 2, 1.0, -1.0)
        est = cost * np.mean(sgn * f)
        # (dV/dq_i)/W = C * sign(V) * (2 b_i - 1) / fac_i
        dfac = np.where(bits, 1.0, -1.0) / fac
        dest = cost * np.mean((sgn * f)[:, None] * dfac, axis=0)
        resid = est - tab.com_ef[r]
        loss += resid**2
        grad += 2 * resid * dest
    return loss / n_circuits, grad / n_circuits


def initial_params(tomography: QuasiDistribution) -> np.ndarray:
    """|tomography weight / trivial weight| per non-trivial pattern, clipped to [0, 0.5].

    The ratio removes the product of identity weights of the other gates,
    which the product form already supplies through its (1 - q_j) factors.
    """
    trivial = [x for x, p in zip(tomography.q, tomography.patterns) if p.is_trivial]
    scale = trivial[0] if trivial and trivial[0] != 0 else 1.0
    q = [abs(x / scale) for x, p in zip(tomography.q, tomography.patterns) if not p.is_trivial]
    return np.clip(np.nan_to_num(np.array(q, dtype=float)), 0.0, 0.5)


def product_form_descend(
    params: ProductFormParams,
    objective,
    iterations: int = 500,
    tol: float = 1e-6,
    window: int = 20,
    smooth: int = 10,
) -> ProductFormParams:
    """Gradient descent with the step scaled by max|q - 1| / max|grad|.

    ``objective(q)`` returns (loss, gradient).  Stops early when the
    ``smooth``-point moving average of the loss improves by less than ``tol``
    over ``window`` iterations; raises DivergenceError when the loss exceeds
    ten times its initial value.
    """
    q = np.array(params.q, dtype=float)
    traj: list[float] = []
    for it in range(iterations):
        loss, grad = objective(q)
        traj.append(loss)
        if loss > 10 * max(traj[0], 1e-300):
            raise DivergenceError(f"loss {loss:.3g} exceeded ten times its initial value at iteration {it}")
        gmax = float(np.max(np.abs(grad)))
        if gmax == 0:
            break
        q = q - (float(np.max(np.abs(q - 1))) / gmax) * params.gamma_prime * grad
        if it + 1 >= window + smooth:
            sm = np.convolve(traj, np.ones(smooth) / smooth, mode="valid")
            if sm[-1 - window] - sm[-1] < tol:
                break
    traj.append(objective(q)[0])
    return ProductFormParams(q, params.gamma_prime, params.trajectory + traj)
