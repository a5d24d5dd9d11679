import csv
import json

import numpy as np
import pytest

from lbem import dense
from lbem.bench.cli import EXIT_CAP, EXIT_CONFIG, EXIT_OK, main
from lbem.bench.config import DEFAULTS, QVA_FIELDS, load_config
from lbem.bench.demos import (
    _parse_term,
    ideal_energy,
    load_h2_data,
    measurement_setup,
    optimal_theta,
    term_matrix,
)
from lbem.bench.output import csv_text, format_value, git_blob_sha1
from lbem.bench.vqa import EnergyModel, SpinHamiltonian, ansatz_assignment, parameter_shift_gradient, ring_hamiltonian
from lbem.circuit import build_layout, uccsd_h2_assignment
from lbem.errors import ConfigError
from lbem.noise import NOISELESS, build_noise_model


def write_config(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


class TestConfig:
    def test_defaults_validate(self):
        for command in DEFAULTS:
            load_config(command, None)

    def test_override_merges(self, tmp_path):
        cfg, raw = load_config("ecdf", write_config(tmp_path, {"count": 7, "layout": {"n": 3}}))
        assert cfg["count"] == 7 and cfg["layout"] == {"kind": "cnot-ladder", "n": 3, "N": 4}
        assert json.loads(raw)["count"] == 7

    @pytest.mark.parametrize(
        "doc",
        [
            {"nonsense": 1},
            {"count": 0},
            {"count": 2.5},
            {"threshold": 1.0},
            {"methods": ["magic"]},
            {"sige": {"k": 3}},
            {"noise": {"local": {"kind": "depolarizing", "epsilon": 2.0}}},
            [1, 2],
        ],
    )
    def test_rejects(self, tmp_path, doc):
        with pytest.raises(ConfigError):
            load_config("ecdf", write_config(tmp_path, doc))

    def test_unreadable(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        with pytest.raises(ConfigError):
            load_config("learn", str(p))
        with pytest.raises(ConfigError):
            load_config("learn", str(tmp_path / "missing.json"))


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        assert main(["ecdf", "--config", write_config(tmp_path, {"count": -1}), "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_bad_threads(self, tmp_path):
        assert main(["selftest", "--threads", "0", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_bad_seed(self, tmp_path):
        assert main(["selftest", "--seed", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_cap_exceeded(self, tmp_path, capsys):
        cfg = {"layout": {"kind": "cnot-ladder", "n": 3, "N": 2}, "methods": ["none"], "count": 5, "threshold": 0.999, "retry_cap": 3}
        assert main(["ecdf", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_CAP
        assert "cap exceeded" in capsys.readouterr().err

    def test_malformed_h2_file(self, tmp_path):
        bad = tmp_path / "h2.json"
        bad.write_text(json.dumps({"geometries": [{"bond_length": 0.7, "terms": {"Q9": 1.0}}]}))
        cfg = write_config(tmp_path, {"coeff_file": str(bad)})
        assert main(["vqe-h2", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


class TestOutput:
    def test_format(self):
        assert format_value(-0.0) == "0"
        assert format_value(0.1) == "0.10000000000000001"
        assert float(format_value(np.float64(1 / 3))) == 1 / 3
        assert format_value(True) == "1" and format_value(7) == "7" and format_value("LBEM") == "LBEM"

    def test_csv_text(self):
        assert csv_text(["a", "b"], [[1, 0.5], [2, -0.0]]) == "a,b\n1,0.5\n2,0\n"
        with pytest.raises(ValueError):
            csv_text(["a"], [[1, 2]])

    def test_blob_hash_matches_git(self):
        assert git_blob_sha1(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
        assert git_blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


class TestEcdfCommand:
    def test_rows_sidecar_and_nonnegative(self, tmp_path):
        cfg = {"layout": {"kind": "cnot-ladder", "n": 3, "N": 2}, "count": 6, "M": 2000}
        assert main(["ecdf", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path), "--seed", "4"]) == EXIT_OK
        text = (tmp_path / "ecdf.csv").read_text()
        rows = list(csv.reader(text.splitlines()))
        assert rows[0] == ["circuit_id", "ef", "none", "none_exact", "TEM_k2", "TEM_k2_exact", "LBEM", "LBEM_exact"]
        assert len(rows) == 7
        for r in rows[1:]:
            assert abs(float(r[1])) > 0.3
            assert all(float(x) >= 0 for x in r[2:])
        side = json.loads((tmp_path / "ecdf.json").read_text())
        assert side["outputs"]["ecdf.csv"] == git_blob_sha1(text.encode())
        assert side["config"]["seed"] == 4 and side["results"]["count"] == 6


@pytest.fixture(scope="module")
def data():
    return load_h2_data(None)[0]


class TestH2:
    def test_term_parsing(self):
        assert _parse_term("X3Y2") == {3: "X", 2: "Y"}
        assert _parse_term("I") == {}
        for bad in ("X", "Q1", "X1X1", "Z7"):
            with pytest.raises(ValueError):
                _parse_term(bad)

    def test_terms_commute_with_particle_number(self, data):
        number = sum((np.eye(16) - term_matrix(f"Z{q}")) / 2 for q in range(4))
        for g in data["geometries"]:
            h = sum(v * term_matrix(k) if k != "I" else v * np.eye(16) for k, v in g["terms"].items())
            assert np.allclose(h, h.conj().T)
            assert np.max(np.abs(h @ number - number @ h)) < 1e-12

    def test_every_term_is_measurable(self, data):
        for g in data["geometries"]:
            for k in g["terms"]:
                if k != "I":
                    measurement_setup(k)

    def test_block_measurement_reproduces_term(self, data):
        theta = 0.37
        for label in data["geometries"][0]["terms"]:
            if label == "I":
                continue
            block, obs = measurement_setup(label)
            c = build_layout("uccsd-h2", measure_block=block).with_observable(obs)
            direct = np.trace(term_matrix(label) @ dense.as_matrix(
                dense.final_state(build_layout("uccsd-h2"), uccsd_h2_assignment(theta), NOISELESS))).real
            assert dense.exact_expectation(c, uccsd_h2_assignment(theta, block), NOISELESS) == pytest.approx(direct, abs=1e-12)

    def test_ansatz_reaches_fci(self, data):
        for g in data["geometries"][::3]:
            assert ideal_energy(g["terms"], optimal_theta(g["terms"])) == pytest.approx(g["fci_energy"], abs=1e-6)


class TestSpinRing:
    def test_structure(self):
        ham = ring_hamiltonian(QVA_FIELDS)
        assert len(ham.terms) == 16 and ham.n == 4
        assert sorted(i for idx in ham.groups.values() for i in idx) == list(range(16))
        with pytest.raises(ValueError):
            SpinHamiltonian.basis_of("XZII")

    def test_ground_energy(self):
        assert ring_hamiltonian(QVA_FIELDS).spectrum()[0] == pytest.approx(-8.002, abs=0.01)

    def test_ideal_energy_equals_trace(self, rng):
        ham = ring_hamiltonian(QVA_FIELDS)
        model = EnergyModel(ham, NOISELESS)
        params = rng.normal(size=(5, 4))
        rho = dense.as_matrix(dense.final_state(model.circuit, ansatz_assignment(params, "Z"), NOISELESS))
        assert model.ideal(params) == pytest.approx(np.trace(ham.matrix() @ rho).real, abs=1e-12)

    def test_parameter_shift_matches_finite_differences(self, rng):
        model = EnergyModel(ring_hamiltonian(QVA_FIELDS), NOISELESS)
        params = rng.normal(size=(5, 4))
        grad = parameter_shift_gradient(model.ideal, params)
        h = 1e-5
        for k in rng.choice(20, 5, replace=False):
            e = np.zeros(20)
            e[k] = h
            fd = (model.ideal(params + e.reshape(5, 4)) - model.ideal(params - e.reshape(5, 4))) / (2 * h)
            assert abs(grad.ravel()[k] - fd) < 1e-6

    def test_extrapolation(self, rng):
        ham = ring_hamiltonian(QVA_FIELDS)
        params = rng.normal(size=(5, 4))
        clean = EnergyModel(ham, NOISELESS)
        assert clean.extrapolated(params, [1.0, 2.0], "linear") == pytest.approx(clean.ideal(params), abs=1e-12)
        noise = build_noise_model({"local": {"kind": "depolarizing", "epsilon": 0.01}})
        model = EnergyModel(ham, noise)
        e1, e2 = model.raw(params), model._raw(params, noise.boosted(2.0))
        assert model.extrapolated(params, [1.0, 2.0], "linear") == pytest.approx(2 * e1 - e2, abs=1e-12)
        assert model.extrapolated(params, [1.0, 2.0], "richardson") == pytest.approx(2 * e1 - e2, abs=1e-12)
        ideal = model.ideal(params)
        assert abs(model.extrapolated(params, [1.0, 2.0], "linear") - ideal) < abs(e1 - ideal)

    def test_extrapolation_continuous_in_boost(self, rng):
        model = EnergyModel(ring_hamiltonian(QVA_FIELDS), build_noise_model({"local": {"kind": "depolarizing", "epsilon": 0.01}}))
        params = rng.normal(size=(5, 4))
        a = model.extrapolated(params, [1.0, 2.0], "linear")
        b = model.extrapolated(params, [1.0, 2.0 + 1e-7], "linear")
        assert abs(a - b) < 1e-5
