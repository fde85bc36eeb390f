import numpy as np
import pytest

from vqspectral import pauli as pl
from vqspectral import qsim
from vqspectral.errors import ConfigurationError, ContractViolation

from conftest import program_unitary, random_program


# ---------------------------------------------------------------------------
# Builders


def test_strongly_entangling_slot_count():
    assert qsim.build_strongly_entangling(4, 12).n_slots == 144


def test_strongly_entangling_two_qubit_ring():
    program = qsim.build_strongly_entangling(2, 1)
    assert program.n_slots == 6
    cnots = [(g.control, g.target) for g in program.gates if g.kind == "cnot"]
    assert cnots == [(0, 1), (1, 0)]


def test_strongly_entangling_offset_varies_by_layer():
    program = qsim.build_strongly_entangling(4, 3)
    cnots = [(g.control, g.target) for g in program.gates if g.kind == "cnot"]
    # layer offsets cycle 1, 2, 3 for n = 4
    assert cnots[0] == (0, 1)
    assert cnots[4] == (0, 2)
    assert cnots[8] == (0, 3)


def test_zero_angles_prepare_vacuum():
    program = qsim.build_strongly_entangling(3, 2)
    state = qsim.run(program, np.zeros(program.n_slots))
    assert abs(state[0] - 1.0) <= 1e-12
    assert np.abs(state[1:]).max() <= 1e-12


def test_hardware_efficient_slot_count():
    assert qsim.build_hardware_efficient_ry(3, 2).n_slots == 6


def test_hardware_efficient_uniform_at_zero_angles():
    program = qsim.build_hardware_efficient_ry(2, 1)
    state = qsim.run(program, np.zeros(2))
    assert np.abs(state - 0.5).max() <= 1e-12


def test_hardware_efficient_states_are_real(rng):
    program = qsim.build_hardware_efficient_ry(3, 3)
    for _ in range(20):
        state = qsim.run(program, rng.uniform(0, 2 * np.pi, program.n_slots))
        assert np.abs(state.imag).max() <= 1e-12


def test_builders_reject_single_qubit():
    with pytest.raises(ConfigurationError):
        qsim.build_strongly_entangling(1, 1)
    with pytest.raises(ConfigurationError):
        qsim.build_hardware_efficient_ry(1, 1)


def test_ry_embedding_examples():
    assert np.abs(qsim.build_ry_embedding([0.0, 0.0]) - [1, 0, 0, 0]).max() <= 1e-12
    assert np.abs(qsim.build_ry_embedding([np.pi]) - [0, 1]).max() <= 1e-12
    assert np.abs(qsim.build_ry_embedding([np.pi / 2, np.pi / 2]) - 0.5).max() <= 1e-12


# ---------------------------------------------------------------------------
# Simulation vs dense oracle


def test_empty_program_is_vacuum():
    program = qsim.GateProgram(2, (), 0)
    state = qsim.run(program, np.zeros(0))
    assert np.array_equal(state, [1, 0, 0, 0])


def test_random_programs_match_dense_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(1, 4))
        program = random_program(n, rng)
        angles = rng.uniform(0, 2 * np.pi, program.n_slots)
        fast = qsim.run(program, angles)
        dense = program_unitary(program, angles) @ qsim.zero_state(n)
        assert np.abs(fast - dense).max() <= 1e-12
        assert abs(np.linalg.norm(fast) - 1.0) <= 1e-12


def test_run_batch_matches_singles(rng):
    program = qsim.build_strongly_entangling(3, 2)
    angles = rng.uniform(0, 2 * np.pi, (5, program.n_slots))
    batch = qsim.run_batch(program, angles)
    for i in range(5):
        assert np.abs(batch[i] - qsim.run(program, angles[i])).max() <= 1e-14


def test_slot_mismatch_rejected():
    program = qsim.build_hardware_efficient_ry(2, 1)
    with pytest.raises(ContractViolation):
        qsim.run(program, np.zeros(3))


def test_multiuse_slot_rejected():
    gates = (qsim.Gate("ry", 0, slot=0), qsim.Gate("ry", 1, slot=0))
    with pytest.raises(ContractViolation):
        qsim.GateProgram(2, gates, 1)


# ---------------------------------------------------------------------------
# Observables


def test_expectation_examples():
    z = pl.PauliString.from_text("Z")
    x = pl.PauliString.from_text("X")
    vacuum = qsim.zero_state(1)
    assert qsim.expectation(vacuum, z) == pytest.approx(1.0, abs=1e-15)
    assert qsim.expectation(vacuum, x) == pytest.approx(0.0, abs=1e-15)
    state = qsim.build_ry_embedding([np.pi / 3])
    assert qsim.expectation(state, z) == pytest.approx(0.5, abs=1e-12)


def test_overlap_examples(rng):
    identity = pl.PauliString.from_text("II")
    vacuum = qsim.zero_state(2)
    assert qsim.overlap(vacuum, identity, vacuum) == pytest.approx(1.0)
    assert qsim.overlap(vacuum, identity, -vacuum) == pytest.approx(-1.0)
    zi = pl.PauliString.from_text("ZI")
    for _ in range(10):
        bra = rng.standard_normal(4)
        ket = rng.standard_normal(4)
        expected = bra @ zi.matrix().real @ ket
        assert qsim.overlap(bra.astype(complex), zi, ket.astype(complex)) == pytest.approx(
            expected, abs=1e-12
        )


# ---------------------------------------------------------------------------
# Parameter-shift gradients


def test_shift_rule_single_rotation():
    program = qsim.GateProgram(1, (qsim.Gate("ry", 0, slot=0),), 1)
    observable = pl.PauliExpansion(1, ((pl.PauliString.from_text("Z"), 1.0 + 0j),))
    grad = qsim.grad_parameter_shift(program, np.array([np.pi / 3]), observable)
    assert grad[0] == pytest.approx(-np.sin(np.pi / 3), abs=1e-12)


def test_shift_rule_identity_observable_is_flat(rng):
    program = qsim.build_hardware_efficient_ry(2, 2)
    observable = pl.PauliExpansion(2, ((pl.PauliString.from_text("II"), 1.0 + 0j),))
    grad = qsim.grad_parameter_shift(
        program, rng.uniform(0, 2 * np.pi, program.n_slots), observable
    )
    assert np.abs(grad).max() <= 1e-12


def _finite_difference(fn, angles, h=1e-5):
    out = np.zeros_like(angles)
    for j in range(len(angles)):
        plus = angles.copy()
        plus[j] += h
        minus = angles.copy()
        minus[j] -= h
        out[j] = (fn(plus) - fn(minus)) / (2 * h)
    return out


def test_shift_rule_matches_finite_difference_expectation(rng):
    program = qsim.build_hardware_efficient_ry(3, 2)
    matrix = rng.standard_normal((8, 8))
    observable = pl.decompose(matrix + matrix.T)
    angles = rng.uniform(0, 2 * np.pi, program.n_slots)
    grad = qsim.grad_parameter_shift(program, angles, observable)
    fd = _finite_difference(
        lambda a: qsim.expectation_of_expansion(qsim.run(program, a), observable), angles
    )
    scale = max(np.abs(fd).max(), 1e-12)
    assert np.abs(grad - fd).max() / scale <= 1e-5


def test_shift_rule_matches_finite_difference_overlap(rng):
    program = qsim.build_strongly_entangling(3, 1)
    matrix = rng.standard_normal((8, 8))
    expansion = pl.decompose(matrix)
    bra = rng.standard_normal(8).astype(complex)
    bra /= np.linalg.norm(bra)
    observable = qsim.OverlapObservable(bra=bra, expansion=expansion)
    angles = rng.uniform(0, 2 * np.pi, program.n_slots)
    grad = qsim.grad_parameter_shift(program, angles, observable)
    fd = _finite_difference(
        lambda a: qsim.overlap_of_expansion(bra, expansion, qsim.run(program, a)).real, angles
    )
    scale = max(np.abs(fd).max(), 1e-12)
    assert np.abs(grad - fd).max() / scale <= 1e-5


def test_gradient_property_many_random_programs(rng):
    z_on_0 = {1: "Z", 2: "ZI", 3: "ZII"}
    checked = 0
    while checked < 100:
        n = int(rng.integers(1, 4))
        program = random_program(n, rng)
        if program.n_slots == 0:
            continue
        observable = pl.PauliExpansion(
            n, ((pl.PauliString.from_text(z_on_0[n]), 1.0 + 0j),)
        )
        angles = rng.uniform(0, 2 * np.pi, program.n_slots)
        grad = qsim.grad_parameter_shift(program, angles, observable)
        fd = _finite_difference(
            lambda a: qsim.expectation_of_expansion(qsim.run(program, a), observable), angles
        )
        assert np.abs(grad - fd).max() <= 1e-5 * max(1.0, np.abs(fd).max())
        checked += 1


def test_adjoint_gradient_matches_shift(rng):
    program = qsim.build_strongly_entangling(3, 2)
    matrix = rng.standard_normal((8, 8))
    observable = pl.decompose(matrix + matrix.T)
    dense = observable.to_matrix()
    angles = rng.uniform(0, 2 * np.pi, (2, program.n_slots))
    states = qsim.run_batch(program, angles)
    cotangents = np.stack([dense @ states[i] for i in range(2)])  # dE/d(conj psi)
    adj = qsim.adjoint_gradient(program, angles, cotangents)
    for i in range(2):
        shift = qsim.grad_parameter_shift(program, angles[i], observable)
        assert np.abs(adj[i] - shift).max() <= 1e-8 * max(1.0, np.abs(shift).max())


# ---------------------------------------------------------------------------
# Shot estimation


def test_shots_deterministic_outcome():
    observable = pl.PauliExpansion(1, ((pl.PauliString.from_text("Z"), 1.0 + 0j),))
    grouping = pl.group_commuting(observable)
    out = qsim.estimate_shots(qsim.zero_state(1), grouping, observable, shots=64, rng_seed=0)
    assert out == {"estimate": 1.0, "circuits_used": 1}


def test_shots_converge_with_sample_size():
    observable = pl.PauliExpansion(1, ((pl.PauliString.from_text("Z"), 1.0 + 0j),))
    grouping = pl.group_commuting(observable)
    state = qsim.build_ry_embedding([np.pi / 3])
    errs = {}
    for shots in (1_000, 100_000):
        out = qsim.estimate_shots(state, grouping, observable, shots=shots, rng_seed=7)
        errs[shots] = abs(out["estimate"] - 0.5)
    # standard error ~ sqrt(0.75/shots): allow 4 sigma
    assert errs[1_000] <= 4 * np.sqrt(0.75 / 1_000)
    assert errs[100_000] <= 4 * np.sqrt(0.75 / 100_000)


def test_shots_grouped_diagonal_single_circuit():
    texts = ["II", "IZ", "ZI", "ZZ"]
    observable = pl.PauliExpansion(
        2, tuple((pl.PauliString.from_text(t), 0.25 + 0j) for t in texts)
    )
    grouping = pl.group_commuting(observable)
    out = qsim.estimate_shots(qsim.zero_state(2), grouping, observable, shots=10, rng_seed=3)
    assert out["circuits_used"] == 1
    assert out["estimate"] == pytest.approx(1.0)


def test_shot_estimator_unbiased(rng):
    program = qsim.build_hardware_efficient_ry(2, 2)
    angles = rng.uniform(0, 2 * np.pi, program.n_slots)
    state = qsim.run(program, angles)
    matrix = rng.standard_normal((4, 4))
    observable = pl.decompose(matrix + matrix.T)
    grouping = pl.group_commuting(observable)
    exact = qsim.expectation_of_expansion(state, observable)
    shots = 400
    estimates = [
        qsim.estimate_shots(state, grouping, observable, shots=shots, rng_seed=seed)["estimate"]
        for seed in range(200)
    ]
    mean = float(np.mean(estimates))
    stderr = float(np.std(estimates, ddof=1) / np.sqrt(len(estimates)))
    assert abs(mean - exact) <= 3 * max(stderr, 1e-12)


def test_shots_require_positive_count():
    observable = pl.PauliExpansion(1, ((pl.PauliString.from_text("Z"), 1.0 + 0j),))
    grouping = pl.group_commuting(observable)
    with pytest.raises(ContractViolation):
        qsim.estimate_shots(qsim.zero_state(1), grouping, observable, shots=0, rng_seed=0)


def test_amplitude_dump(tmp_path):
    path = tmp_path / "amps.csv"
    qsim.dump_amplitudes(qsim.build_ry_embedding([np.pi / 2]), path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "index,re,im"
    assert len(lines) == 3
