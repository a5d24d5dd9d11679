import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbem import dense
from lbem.circuit import ErrorPattern, FrameGate, LayeredCircuit, Observable, build_layout
from lbem.errors import DivergenceError
from lbem.learn import (
    DesignData,
    TableShotSource,
    design_from_tables,
    estimate_design_mc,
    evaluate_loss,
    fidelity_loss,
    fit_least_squares,
    learn_quasiprob,
    measurement_rotation,
    single_parameter_fit,
)
from lbem.noise import NOISELESS, build_noise_model
from lbem.pauli import PauliString, mul_codes
from lbem.product_form import (
    ProductFormParams,
    exact_loss,
    exact_loss_and_gradient,
    exact_mitigated,
    exhaustive_sum,
    initial_params,
    mc_loss_and_gradient,
    product_form_descend,
    product_form_value,
    product_form_weight,
    sign_tables,
    value_gradient,
)
from lbem.sige import generate_sige, invert_local_channel, tomography_quasiprob
from lbem.simulate import pattern_expectations
from lbem.stabilizer import expand_group, sample_training_set, stabilizer_group_observables

from conftest import haar_assignment


def one_gate_circuit():
    return LayeredCircuit(2, 1, ((FrameGate("CNOT", 0, 1),),), Observable((0, 1)))


def tables(c, s, ts, noise):
    com = np.array([pattern_expectations(c, a, noise, s.patterns) for a, _ in ts.entries])
    return com, ts.com_ef


@pytest.fixture(scope="module")
def ladder_problem():
    c = build_layout("cnot-ladder", 3, 3)
    inv = invert_local_channel("depolarizing", 0.02)
    s = generate_sige(c, inv, 1)
    ts = sample_training_set(c, 3 * len(s), seed=4)
    noise = build_noise_model({"local": {"kind": "depolarizing", "epsilon": 0.02}, "crosstalk": {"kind": "model-a"}})
    com, ef = tables(c, s, ts, noise)
    return c, inv, s, ts, noise, com, ef


class TestLoss:
    def test_noiseless_trivial_is_zero(self, ladder_problem):
        c, inv, s, ts, _, _, _ = ladder_problem
        com, ef = tables(c, s, ts, NOISELESS)
        q = np.eye(len(s))[0]
        assert evaluate_loss(q, com, ef) == 0

    def test_zero_weights_give_one(self, ladder_problem):
        _, _, s, _, _, com, ef = ladder_problem
        assert evaluate_loss(np.zeros(len(s)), com, ef) == pytest.approx(1.0)

    def test_single_gate_exact_inverse(self):
        c = one_gate_circuit()
        inv = invert_local_channel("dephasing", 0.01)
        s = generate_sige(c, inv, 1)
        ts = sample_training_set(c, 12, seed=1)
        com, ef = tables(c, s, ts, build_noise_model({"local": {"kind": "dephasing", "epsilon": 0.01}}))
        assert evaluate_loss(tomography_quasiprob(s, inv).q, com, ef) < 1e-10

    def test_quadratic_form_matches(self, ladder_problem, rng):
        _, _, s, _, _, com, ef = ladder_problem
        d = design_from_tables(com, ef)
        assert np.allclose(d.a, d.a.T) and d.c >= 0
        for _ in range(20):
            q = rng.normal(size=len(s))
            assert abs(d.loss(q) - evaluate_loss(q, com, ef)) < 1e-10

    def test_table_size_mismatch(self):
        with pytest.raises(ValueError):
            design_from_tables(np.zeros((3, 2)), np.zeros(4))


class TestLeastSquares:
    def test_trivial_only_noiseless(self):
        q, loss = fit_least_squares(design_from_tables(np.ones((5, 1)), np.ones(5)))
        assert q == pytest.approx([1.0]) and loss == pytest.approx(0.0, abs=1e-15)

    def test_plant_and_recover(self, rng):
        com = rng.uniform(-1, 1, (60, 12))
        q_true = rng.normal(size=12)
        q, loss = fit_least_squares(design_from_tables(com, com @ q_true))
        assert np.max(np.abs(q - q_true)) < 1e-8 and abs(loss) < 1e-10

    def test_optimality_and_stationarity(self, ladder_problem, rng):
        _, inv, s, _, _, com, ef = ladder_problem
        d = design_from_tables(com, ef)
        q, loss = fit_least_squares(d)
        assert np.linalg.norm(d.a @ q - d.b) < 1e-8
        assert loss == pytest.approx(d.loss(q), abs=1e-10) and loss >= -1e-12
        assert d.loss(q) <= d.loss(tomography_quasiprob(s, inv).q) + 1e-15
        for _ in range(20):
            assert d.loss(q) <= d.loss(q + 1e-3 * rng.normal(size=len(q))) + 1e-15

    def test_learned_beats_tomography_and_raw(self, ladder_problem):
        _, inv, s, _, _, com, ef = ladder_problem
        qd = learn_quasiprob(s, com, ef, seed=1)
        assert qd.method == "lbem-lsq"
        assert evaluate_loss(qd.q, com, ef) < evaluate_loss(tomography_quasiprob(s, inv).q, com, ef)

    def test_rank_deficient_minimum_norm(self, caplog):
        com = np.array([[1.0, 1.0], [0.5, 0.5], [-1.0, -1.0]])
        q, _ = fit_least_squares(design_from_tables(com, com[:, 0]))
        assert q == pytest.approx([0.5, 0.5])
        assert "rank deficient" in caplog.text


class TestMonteCarloDesign:
    def test_noiseless_concentrates(self, ladder_problem):
        c, _, s, ts, _, _, _ = ladder_problem
        com, ef = tables(c, s, ts, NOISELESS)
        n = 20_000
        d = estimate_design_mc(TableShotSource(com, ef), len(ts), 3, n, seed=3)
        assert abs(d.c - 1) < 5 / np.sqrt(n)
        assert abs(d.b[0] - 1) < 5 / np.sqrt(n)

    def test_matches_exact_design(self, ladder_problem):
        _, _, s, ts, _, com, ef = ladder_problem
        k = 6
        n = 20_000
        exact = design_from_tables(com[:, :k], ef)
        d = estimate_design_mc(TableShotSource(com[:, :k], ef), len(ts), k, n, seed=8)
        assert np.all(np.abs(d.a - exact.a) < 5 / np.sqrt(n))
        assert np.all(np.abs(d.b - exact.b) < 5 / np.sqrt(n))
        assert d.n_samples == n and np.allclose(d.a, d.a.T)


class TestSingleParameter:
    def test_noiseless_gives_zero(self, ladder_problem):
        c, _, s, ts, _, _, _ = ladder_problem
        com, ef = tables(c, s, ts, NOISELESS)
        _, eps, _ = single_parameter_fit(s, "depolarizing", com, ef)
        assert eps == pytest.approx(0.0, abs=1e-6)

    def test_recovers_planted_epsilon(self):
        c = one_gate_circuit()
        inv = invert_local_channel("depolarizing", 0.05)
        s = generate_sige(c, inv, 1)
        ts = sample_training_set(c, 48, seed=2)
        com, ef = tables(c, s, ts, build_noise_model({"local": {"kind": "depolarizing", "epsilon": 0.037}}))
        qd, eps, loss = single_parameter_fit(s, "depolarizing", com, ef)
        assert eps == pytest.approx(0.037, abs=1e-4)
        assert loss < 1e-10 and qd.method == "single-parameter"

    def test_not_worse_than_tomography(self, ladder_problem):
        _, inv, s, _, _, com, ef = ladder_problem
        _, _, loss = single_parameter_fit(s, "depolarizing", com, ef)
        assert loss <= evaluate_loss(tomography_quasiprob(s, inv).q, com, ef) + 1e-15


class TestProductForm:
    def test_zero_params(self):
        assert product_form_value(np.zeros(4), [0, 0, 0, 0]) == 1
        assert product_form_value(np.zeros(4), [0, 1, 0, 0]) == 0

    def test_positive_case_weight_equals_value(self, rng):
        q = rng.uniform(0, 1, 6)
        for b in itertools.product((0, 1), repeat=6):
            assert product_form_weight(q, b) == pytest.approx(product_form_value(q, b))

    @settings(max_examples=30)
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=12))
    def test_values_sum_to_one(self, q):
        assert exhaustive_sum(np.array(q)) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=30)
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=8))
    def test_weights_form_distribution(self, q):
        ws = [product_form_weight(q, b) for b in itertools.product((0, 1), repeat=len(q))]
        assert min(ws) >= 0 and sum(ws) == pytest.approx(1.0)

    def test_value_gradient_finite_difference(self, rng):
        q = rng.normal(size=7)
        b = rng.integers(0, 2, 7)
        h = 1e-6
        fd = [(product_form_value(q + h * e, b) - product_form_value(q - h * e, b)) / (2 * h) for e in np.eye(7)]
        assert np.allclose(value_gradient(q, b), fd, atol=1e-8)


@pytest.fixture(scope="module")
def product_problem():
    c = build_layout("cnot-ladder", 3, 2)
    inv = invert_local_channel("dephasing", 0.05)
    s = generate_sige(c, inv, 1)
    ts = sample_training_set(c, 3 * len(s), seed=6)
    noise = build_noise_model({"local": {"kind": "dephasing", "epsilon": 0.05}, "crosstalk": {"kind": "model-a"}})
    return c, inv, s, ts, noise, sign_tables(s, ts, noise)


def composite(c, s, bits):
    pats = [p for p in s.patterns if not p.is_trivial]
    layers = np.zeros((c.N + 2, c.n), dtype=np.int8)
    for p, b in zip(pats, bits):
        if b:
            layers = mul_codes(layers, p.layers)
    return ErrorPattern(layers)


class TestSignTables:
    def test_composite_values_match_dense(self, product_problem, rng):
        c, _, s, ts, noise, tab = product_problem
        k = len(s) - 1
        for r in range(4):
            a = ts.assignment(r)
            bits = rng.integers(0, 2, (6, k)).astype(bool)
            ref = dense.pattern_expectations(c, a, noise, [composite(c, s, b) for b in bits])
            assert np.allclose(tab.com(r, bits), ref, atol=1e-12)

    def test_exact_mitigated_is_exhaustive_sum(self, product_problem, rng):
        c, _, s, ts, noise, tab = product_problem
        k = len(s) - 1
        assert k <= 10
        q = rng.normal(scale=0.2, size=k)
        allbits = np.array(list(itertools.product((0, 1), repeat=k)), dtype=bool)
        vals = np.array([product_form_value(q, b) for b in allbits])
        for r in range(3):
            assert exact_mitigated(q, tab)[r] == pytest.approx(vals @ tab.com(r, allbits), abs=1e-12)

    def test_gradient_matches_finite_differences(self, product_problem, rng):
        tab = product_problem[-1]
        q = rng.normal(scale=0.3, size=tab.anti.shape[2])
        _, g = exact_loss_and_gradient(q, tab)
        h = 1e-6
        fd = np.array([(exact_loss(q + h * e, tab) - exact_loss(q - h * e, tab)) / (2 * h) for e in np.eye(len(q))])
        assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-5

    def test_noiseless_stationary_at_zero(self, product_problem):
        c, _, s, ts, _, _ = product_problem
        tab = sign_tables(s, ts, NOISELESS)
        q0 = np.zeros(len(s) - 1)
        loss, g = exact_loss_and_gradient(q0, tab)
        assert loss == 0 and np.allclose(g, 0)
        out = product_form_descend(ProductFormParams(q0), lambda q: exact_loss_and_gradient(q, tab), iterations=5)
        assert np.allclose(out.q, 0)

    def test_mc_estimates_are_unbiased(self, product_problem, rng):
        tab = product_problem[-1]
        q = rng.uniform(0, 0.2, tab.anti.shape[2])
        exact, _ = exact_loss_and_gradient(q, tab)
        runs = [mc_loss_and_gradient(q, tab, 32, 2000, np.random.default_rng(i))[0] for i in range(40)]
        # the squared single-shot residual carries a positive variance term of order C^2 / shots
        assert abs(np.mean(runs) - exact) < 5 * np.std(runs) / np.sqrt(len(runs)) + 2e-3

    def test_descent_reduces_loss(self, product_problem):
        _, inv, s, _, _, tab = product_problem
        q0 = initial_params(tomography_quasiprob(s, inv))
        out = product_form_descend(ProductFormParams(q0, 1e-3), lambda q: exact_loss_and_gradient(q, tab), iterations=300)
        assert out.trajectory[-1] < out.trajectory[0]
        sm = np.convolve(out.trajectory, np.ones(10) / 10, mode="valid")
        assert sm[-1] <= sm[0]

    def test_divergence_detected(self, product_problem):
        tab = product_problem[-1]
        q0 = np.full(tab.anti.shape[2], 0.01)
        with pytest.raises(DivergenceError):
            product_form_descend(ProductFormParams(q0, 10.0), lambda q: exact_loss_and_gradient(q, tab), iterations=50)

    def test_initial_params_range(self, product_problem):
        _, inv, s, _, _, _ = product_problem
        q0 = initial_params(tomography_quasiprob(s, inv))
        assert len(q0) == len(s) - 1
        assert np.all((q0 >= 0) & (q0 <= 0.5))


class TestFidelityLoss:
    def test_noiseless_trivial_is_zero(self, ladder_problem):
        c, _, s, ts, _, _, _ = ladder_problem
        assert fidelity_loss(np.eye(len(s))[0], s, ts, NOISELESS, group_samples=8) == 0

    def test_bell_state_full_group(self):
        c = LayeredCircuit(2, 1, ((FrameGate("CNOT", 0, 1),),))
        from lbem.circuit import GateAssignment
        from lbem.pauli import H_MATRIX, clifford_index

        a = GateAssignment.identity(c).with_computing(0, 0, H_MATRIX, clifford_index(H_MATRIX))
        group = expand_group(stabilizer_group_observables(c, a))
        vals = []
        for sign, g in group:
            if g.is_identity():
                vals.append(1.0)
                continue
            cg, ag = measurement_rotation(c, a, g)
            vals.append(sign * dense.exact_expectation(cg, ag, NOISELESS))
        assert np.mean(vals) == pytest.approx(1.0, abs=1e-12)

    def test_rotation_reads_pauli(self, rng):
        c = build_layout("cnot-ladder", 3, 2)
        a = haar_assignment(rng, c)
        rho = dense.as_matrix(dense.final_state(c, a, NOISELESS))
        for label in ("XIY", "YZX", "IXI", "ZZY"):
            g = PauliString.from_label(label)
            cg, ag = measurement_rotation(c, a, g)
            assert dense.exact_expectation(cg, ag, NOISELESS) == pytest.approx(np.trace(g.matrix() @ rho).real, abs=1e-12)

    def test_nonnegative_and_mitigation_helps(self, ladder_problem):
        c, inv, s, ts, noise, _, _ = ladder_problem
        small = type(ts)(ts.layout_hash, ts.seed, ts.ids[:6], ts.com_ef[:6])
        raw = fidelity_loss(np.eye(len(s))[0], s, small, noise, group_samples=16, seed=1)
        tem = fidelity_loss(tomography_quasiprob(s, inv).q, s, small, noise, group_samples=16, seed=1)
        assert raw > 0 and tem >= 0
        assert tem < raw


def test_design_data_loss_of_exact_minimiser():
    d = DesignData(np.eye(2), np.array([0.5, 0.25]), 1.0)
    q, loss = fit_least_squares(d)
    assert loss == pytest.approx(1 - 0.25 - 0.0625)
