import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbem import dense
from lbem.circuit import ErrorPattern, FrameGate, GateAssignment, LayeredCircuit, Observable, apply_error_pattern, build_layout
from lbem.errors import CapExceeded
from lbem.noise import NOISELESS, build_noise_model
from lbem.pauli import H_MATRIX, PAULI_MATRICES, PauliString, clifford_index
from lbem.stabilizer import (
    Tableau,
    TrainingSet,
    clifford_expectation,
    clifford_expectation_with_pauli_noise,
    expand_group,
    pattern_expectations,
    sample_training_set,
    stabilizer_group_observables,
)

from conftest import random_clifford_assignment, random_frame_circuit


def single_qubit(u):
    c = LayeredCircuit(1, 0, ())
    a = GateAssignment.identity(c).with_computing(0, 0, u, clifford_index(u))
    return c, a


def random_pattern(rng, c):
    inner = rng.integers(0, 4, (c.N, c.n))
    edge = rng.integers(0, 2, (2, c.n))
    return ErrorPattern(np.vstack([edge[:1], inner, edge[1:]]))


class TestCliffordExpectation:
    def test_identity_gives_plus_one(self):
        assert clifford_expectation(*single_qubit(np.eye(2))) == 1

    def test_hadamard_gives_zero(self):
        assert clifford_expectation(*single_qubit(H_MATRIX)) == 0

    def test_x_gives_minus_one(self):
        assert clifford_expectation(*single_qubit(PAULI_MATRICES[1])) == -1

    def test_rejects_non_clifford(self):
        u = np.diag([1, np.exp(0.3j)])
        c = LayeredCircuit(1, 0, ())
        with pytest.raises(ValueError):
            clifford_expectation(c, GateAssignment.identity(c).with_computing(0, 0, u))

    def test_measurement_flip(self):
        c, a = single_qubit(np.eye(2))
        noise = build_noise_model({"meas_flip": [0.1, 0.1]})
        assert clifford_expectation_with_pauli_noise(c, a, noise) == pytest.approx(0.8, abs=1e-14)

    def test_noiseless_matches_clean(self, rng):
        c = build_layout("cnot-ladder", 4, 3)
        for _ in range(10):
            a = random_clifford_assignment(rng, c)
            assert clifford_expectation_with_pauli_noise(c, a, NOISELESS) == clifford_expectation(c, a)

    def test_dephasing_matches_dense(self, rng):
        noise = build_noise_model({"local": {"kind": "dephasing", "epsilon": 0.07}})
        for _ in range(5):
            c = random_frame_circuit(rng, 3, 3)
            a = random_clifford_assignment(rng, c)
            x = clifford_expectation_with_pauli_noise(c, a, noise)
            assert abs(x - dense.exact_expectation(c, a, noise)) < 1e-10

    def test_rejects_non_pauli_noise(self, rng):
        c = build_layout("cnot-ladder", 2, 1)
        with pytest.raises(ValueError):
            clifford_expectation_with_pauli_noise(c, GateAssignment.identity(c), build_noise_model({"damping_gamma": 0.01}))

    def test_enumeration_cap(self):
        c = build_layout("cnot-ladder", 8, 8)
        noise = build_noise_model({"local": {"kind": "depolarizing", "epsilon": 0.01}})
        with pytest.raises(CapExceeded):
            clifford_expectation_with_pauli_noise(c, GateAssignment.identity(c), noise)


class TestAgreementWithDense:
    def test_random_circuits_with_paulis_and_noise(self, rng):
        noise = build_noise_model(
            {"local": {"kind": "depolarizing", "epsilon": 0.05}, "crosstalk": {"kind": "model-a"},
             "temporal": {"g": 3}, "meas_flip": [0.03, 0.01]}
        )
        for _ in range(25):
            n = int(rng.integers(2, 5))
            c = random_frame_circuit(rng, n, int(rng.integers(1, 4)))
            a = random_clifford_assignment(rng, c)
            ref = dense.exact_expectation(c, a, noise)
            patterns = [ErrorPattern.trivial(c), random_pattern(rng, c)]
            heis = pattern_expectations(c, a, noise, patterns)
            assert abs(heis[0] - ref) < 1e-10
            ref1 = dense.exact_expectation(c, apply_error_pattern(a, patterns[1]), noise)
            assert abs(heis[1] - ref1) < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_faults_never_change_magnitude(self, seed):
        rng = np.random.default_rng(seed)
        c = random_frame_circuit(rng, 4, 3)
        a = random_clifford_assignment(rng, c, paulis=False)
        clean = clifford_expectation(c, a)
        faulty = clifford_expectation(c, apply_error_pattern(a, random_pattern(rng, c)))
        assert abs(faulty) == abs(clean)

    def test_sampling_converges_to_exact(self, rng):
        noise = build_noise_model({"local": {"kind": "depolarizing", "epsilon": 0.08}, "meas_flip": [0.05, 0.02]})
        c = build_layout("cnot-ladder", 3, 3)
        a = random_clifford_assignment(rng, c)
        exact = clifford_expectation_with_pauli_noise(c, a, noise)
        shots = 100_000
        sampled = clifford_expectation_with_pauli_noise(c, a, noise, exact=False, seed=5, shots=shots)
        sigma = np.sqrt(max(1 - exact**2, 1e-12) / shots)
        assert abs(sampled - exact) < 5 * sigma + 1e-12


class TestTableau:
    def test_zero_state_generator(self):
        c = LayeredCircuit(1, 0, ())
        gens = stabilizer_group_observables(c, GateAssignment.identity(c))
        assert gens == [(1, PauliString.from_label("Z"))]

    def test_bell_state_group(self):
        c = LayeredCircuit(2, 1, ((FrameGate("CNOT", 0, 1),),), Observable((0,)))
        a = GateAssignment.identity(c).with_computing(0, 0, H_MATRIX, clifford_index(H_MATRIX))
        group = {(s, p.label) for s, p in expand_group(stabilizer_group_observables(c, a))}
        assert group == {(1, "II"), (1, "XX"), (1, "ZZ"), (-1, "YY")}
        rho = dense.as_matrix(dense.final_state(c, a, NOISELESS))
        for s, label in group:
            assert np.trace(PauliString.from_label(label).matrix() @ rho).real == pytest.approx(s)

    def test_group_average_is_projector(self, rng):
        c = random_frame_circuit(rng, 3, 3)
        a = random_clifford_assignment(rng, c, paulis=False)
        group = expand_group(stabilizer_group_observables(c, a))
        proj = sum(s * p.matrix() for s, p in group) / 8
        rho = dense.as_matrix(dense.final_state(c, a, NOISELESS))
        assert np.allclose(proj, rho, atol=1e-12)

    def test_invariants_hold_after_gates(self, rng):
        t = Tableau(4)
        from lbem.pauli import named_two_qubit, single_qubit_cliffords

        cl = single_qubit_cliffords()
        for _ in range(30):
            g = cl[int(rng.integers(24))]
            t.apply_1q(g.table, g.signs, int(rng.integers(4)))
            q1, q2 = rng.choice(4, 2, replace=False)
            g2 = named_two_qubit("CNOT")
            t.apply_2q(g2.table, g2.signs, int(q1), int(q2))
            t.check_invariants()


class TestTrainingSet:
    def test_entries_are_pm_one(self):
        c = build_layout("cnot-ladder", 4, 4)
        ts = sample_training_set(c, 40, seed=3)
        assert len(ts) == 40
        for a, ef in ts.entries:
            assert clifford_expectation(c, a) == ef and abs(ef) == 1

    def test_size_for_8x8_dephasing(self):
        c = build_layout("cnot-ladder", 8, 8)
        assert len(sample_training_set(c, 3 * 85, seed=0)) == 255

    def test_deterministic(self):
        c = build_layout("cz-cycle", 4, 4)
        a = sample_training_set(c, 20, seed=11)
        b = sample_training_set(c, 20, seed=11)
        assert np.array_equal(a.ids, b.ids) and np.array_equal(a.com_ef, b.com_ef)

    def test_json_round_trip(self):
        c = build_layout("cnot-ladder", 3, 3)
        ts = sample_training_set(c, 5, seed=1)
        back = TrainingSet.from_json(json.loads(json.dumps(ts.to_json())))
        assert np.array_equal(back.ids, ts.ids) and np.array_equal(back.com_ef, ts.com_ef)
        assert back.layout_hash == c.layout_hash()

    def test_rejection_cap(self):
        c = build_layout("cnot-ladder", 4, 4)
        with pytest.raises(CapExceeded):
            sample_training_set(c, 10, seed=0, max_candidates=5)

    def test_size_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_training_set(build_layout("cnot-ladder", 2, 2), 0, seed=0)
