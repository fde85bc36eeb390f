import numpy as np
import pytest

from vqspectral import anglenet as an
from vqspectral import loss as ls
from vqspectral import qsim
from vqspectral import spectral as sp
from vqspectral import training as tr
from vqspectral.errors import ConfigurationError, DivergenceError

BC_D = sp.BoundarySpec((sp.DirectionBC.dirichlet(),))
BC_WAVE = sp.BoundarySpec((sp.DirectionBC.dirichlet(), sp.DirectionBC.initial_value()))


def helm_system(n_modes=16):
    return sp.assemble_system("helm1d", {"k_squared": 4.0}, BC_D, n_modes)


# ---------------------------------------------------------------------------
# Forcing families and dataset generation


def test_trig_family_special_case_is_sine():
    x = np.linspace(-1, 1, 33)
    assert np.array_equal(tr.trig_forcing_1d(1.0, 1.0, 0.0, 0.7, x), np.sin(x))


def test_wave_family_at_omega_one():
    x = np.linspace(0, 1, 17)
    t = np.linspace(0, 2, 9)
    xg, tg = np.meshgrid(x, t, indexing="ij")
    expected = (1 + 2 * np.pi**2 * tg**2) * np.sin(2 * np.pi * xg)
    assert np.abs(tr.wave_forcing(1.0, xg, tg) - expected).max() <= 1e-12


def test_dataset_deterministic():
    system = helm_system()
    spec = tr.DatasetSpec("trig_1d", 5, 3, seed=9)
    d1 = tr.generate_dataset(spec, system)
    d2 = tr.generate_dataset(spec, system)
    assert np.array_equal(d1.train.raw_targets, d2.train.raw_targets)
    assert np.array_equal(d1.test.raw_targets, d2.test.raw_targets)
    assert d1.resample_count == d2.resample_count


def test_dataset_seeds_differ():
    system = helm_system()
    d1 = tr.generate_dataset(tr.DatasetSpec("trig_1d", 3, 0, seed=1), system)
    d2 = tr.generate_dataset(tr.DatasetSpec("trig_1d", 3, 0, seed=2), system)
    assert not np.array_equal(d1.train.raw_targets, d2.train.raw_targets)


def test_shallow_family_targets_are_unit_amplitudes():
    system = sp.assemble_system(
        "helm1d", {"k_squared": 4.7}, sp.BoundarySpec((sp.DirectionBC.neumann(),)), 32
    )
    dataset = tr.generate_dataset(tr.DatasetSpec("shallow_ry", 4, 2, seed=3), system)
    norms = np.linalg.norm(dataset.train.raw_targets, axis=1)
    assert np.abs(norms - 1.0).max() <= 1e-12
    assert dataset.train.features[0].shape == (32,)


def test_wave_family_truth_solves_the_system():
    system = sp.assemble_system("wave1d", {}, BC_WAVE, 12)
    dataset = tr.generate_dataset(tr.DatasetSpec("wave_family", 2, 0, seed=5), system)
    for i, truth in enumerate(dataset.train.truth):
        residual = system.matrix @ truth.coefficients - dataset.train.raw_targets[i]
        assert np.abs(residual).max() <= 1e-9


def test_joint_family_truth_uses_instance_coefficient():
    system = sp.assemble_system("joint_helm", {"k_squared": 16.0}, BC_D, 8)
    dataset = tr.generate_dataset(tr.DatasetSpec("joint_k", 3, 0, seed=7), system)
    b, c = system.parametric_parts
    for i in range(3):
        k = dataset.train.k_values[i]
        assert 4.0 <= k < 5.0
        residual = (b + k * k * c) @ dataset.train.truth[i].coefficients - dataset.train.raw_targets[i]
        assert np.abs(residual).max() <= 1e-10


def test_joint_family_k_squared_draw():
    system = sp.assemble_system("joint_helm", {"k_squared": 4.02}, BC_D, 8)
    spec = tr.DatasetSpec("joint_k", 5, 0, seed=7, k_min=4.0, k_max=4.05, k_is_squared=True)
    dataset = tr.generate_dataset(spec, system)
    assert np.all((dataset.train.k_values**2 >= 4.0) & (dataset.train.k_values**2 < 4.05))


def test_feature_vector_prepends_k_squared():
    system = sp.assemble_system("joint_helm", {"k_squared": 16.0}, BC_D, 8)
    dataset = tr.generate_dataset(tr.DatasetSpec("joint_k", 2, 0, seed=7), system)
    flat = tr.feature_vector(dataset.train, 0, (len(dataset.train.features[0]) + 1,))
    assert flat[0] == pytest.approx(dataset.train.k_values[0] ** 2)


def test_unknown_family_rejected():
    with pytest.raises(ConfigurationError):
        tr.DatasetSpec("fourier", 1, 1, seed=0)


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_keeps_parameters():
    params = [np.array([1.0, -2.0])]
    state = tr.AdamState.for_params(params)
    tr.adam_step(state, params, [np.zeros(2)], lr=0.1)
    assert np.array_equal(params[0], [1.0, -2.0])


def test_adam_first_step_value():
    params = [np.array([0.0])]
    state = tr.AdamState.for_params(params)
    tr.adam_step(state, params, [np.array([1.0])], lr=0.1)
    assert params[0][0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_step_size_bounded_for_constant_gradient():
    params = [np.array([0.0])]
    state = tr.AdamState.for_params(params)
    prev = 0.0
    for _ in range(200):
        tr.adam_step(state, params, [np.array([1.0])], lr=0.05)
        delta = abs(params[0][0] - prev)
        prev = params[0][0]
        assert delta <= 0.05 * 1.01


def test_adam_rejects_non_finite_gradient():
    params = [np.array([0.0])]
    state = tr.AdamState.for_params(params)
    with pytest.raises(DivergenceError):
        tr.adam_step(state, params, [np.array([np.nan])], lr=0.1)


# ---------------------------------------------------------------------------
# L-BFGS


def quadratic_closure():
    q = np.diag([1.0, 3.0, 10.0, 0.5, 7.0])
    b = np.arange(5.0)

    def closure(x):
        return 0.5 * x @ q @ x - b @ x, q @ x - b

    return closure, np.linalg.solve(q, b)


def test_lbfgs_converges_on_quadratic_bowl():
    closure, x_star = quadratic_closure()
    state = tr.lbfgs_minimize(closure, np.zeros(5), max_iter=20)
    assert np.abs(state.x - x_star).max() <= 1e-10


def test_lbfgs_no_movement_from_optimum():
    closure, x_star = quadratic_closure()
    state = tr.lbfgs_minimize(closure, x_star, max_iter=5)
    assert np.abs(state.x - x_star).max() <= 1e-12


def test_lbfgs_zero_history_is_line_searched_descent():
    closure, x_star = quadratic_closure()
    state = tr.lbfgs_minimize(closure, np.zeros(5), max_iter=300, m=0)
    assert not state.s_hist and not state.y_hist
    assert np.abs(state.x - x_star).max() <= 1e-6


# ---------------------------------------------------------------------------
# Training loop


def toy_data():
    ctx = ls.build_loss_context(np.eye(2), np.array([[1.0, 0.0]]))
    truth = [sp.SolutionField(np.array([1.0, 0.0]), np.array([1.0, 0.0]))]
    feats = [np.array([1.0])]
    return tr.TrainData(
        ctx_train=ctx,
        ctx_test=ctx,
        train_features=feats,
        test_features=feats,
        train_truth=truth,
        test_truth=truth,
    )


def toy_program():
    return qsim.GateProgram(1, (qsim.Gate("ry", 0, slot=0),), 1)


def toy_net(seed=3):
    spec = an.NetworkSpec((1,), (an.Dense(1, 4, "gelu"), an.Dense(4, 1)))
    return an.init(spec, seed)


def test_toy_converges_within_500_steps():
    config = tr.TrainConfig(
        objective="normalized", epochs=500, learning_rate=0.005, eval_every=100, seed=0
    )
    record = tr.train(config, toy_data(), toy_program(), toy_net())
    assert not record.aborted
    assert record.rows[-1].test_rel_l2 <= 1e-4


def test_toy_loss_trend_is_monotone_after_burn_in():
    config = tr.TrainConfig(
        objective="normalized", epochs=400, learning_rate=0.005, eval_every=1, seed=0
    )
    record = tr.train(config, toy_data(), toy_program(), toy_net())
    losses = np.array([row.train_loss for row in record.rows])
    violations = 0
    windows = 0
    for start in range(100, len(losses) - 50):
        windows += 1
        if losses[start + 50] > losses[start] + 1e-12:
            violations += 1
    assert violations <= 0.05 * windows


def test_training_is_deterministic():
    config = tr.TrainConfig(
        objective="normalized", epochs=120, learning_rate=0.01, eval_every=40, seed=0
    )
    rec1 = tr.train(config, toy_data(), toy_program(), toy_net(7))
    rec2 = tr.train(config, toy_data(), toy_program(), toy_net(7))
    for a, b in zip(rec1.rows, rec2.rows):
        assert (a.train_loss, a.test_loss, a.train_rel_l2, a.test_rel_l2) == (
            b.train_loss,
            b.test_loss,
            b.train_rel_l2,
            b.test_rel_l2,
        )
    for w1, w2 in zip(rec1.checkpoint_final.weights, rec2.checkpoint_final.weights):
        assert np.array_equal(w1, w2)


def test_training_unsupervised_contract():
    # corrupting the truth fields must not change the gradient trajectory
    config = tr.TrainConfig(objective="normalized", epochs=60, learning_rate=0.01, eval_every=60)
    data_clean = toy_data()
    data_dirty = toy_data()
    data_dirty.train_truth = [
        sp.SolutionField(np.array([9.0, -9.0]), np.array([9.0, -9.0]))
    ]
    data_dirty.test_truth = data_clean.test_truth
    rec_clean = tr.train(config, data_clean, toy_program(), toy_net(5))
    rec_dirty = tr.train(config, data_dirty, toy_program(), toy_net(5))
    for w1, w2 in zip(rec_clean.checkpoint_final.weights, rec_dirty.checkpoint_final.weights):
        assert np.array_equal(w1, w2)
    assert rec_clean.rows[-1].test_loss == rec_dirty.rows[-1].test_loss


def test_training_aborts_on_divergence():
    net = toy_net()
    net.weights[0][...] = np.nan
    config = tr.TrainConfig(epochs=10, learning_rate=0.01, eval_every=5)
    record = tr.train(config, toy_data(), toy_program(), net)
    assert record.aborted
    assert "diverge" in record.abort_reason or "finite" in record.abort_reason


def test_lbfgs_training_path_runs():
    config = tr.TrainConfig(
        objective="normalized", optimizer="lbfgs", epochs=30, eval_every=10, learning_rate=1.0
    )
    record = tr.train(config, toy_data(), toy_program(), toy_net())
    assert not record.aborted
    assert record.rows[-1].test_rel_l2 <= 1e-3


def test_checkpoint_reproduces_metrics(tmp_path):
    system = helm_system(8)
    dataset = tr.generate_dataset(tr.DatasetSpec("trig_1d", 4, 3, seed=2), system)
    program = qsim.build_hardware_efficient_ry(3, 3)
    feat_dim = len(dataset.train.features[0])
    spec = an.NetworkSpec((feat_dim,), (an.Dense(feat_dim, 16, "gelu"), an.Dense(16, program.n_slots)))
    net = an.init(spec, 1)
    data = tr.TrainData.from_dataset(dataset, system, spec.input_shape)
    config = tr.TrainConfig(objective="normalized", epochs=150, learning_rate=5e-3, eval_every=50)
    record = tr.train(config, data, program, net)
    ref = tr.evaluate_split(
        data.ctx_test, program, record.checkpoint_best, data.test_features, data.test_truth, "normalized"
    )
    path = tmp_path / "checkpoint.bin"
    an.save_checkpoint(record.checkpoint_best, path)
    loaded = an.load_checkpoint(path)
    again = tr.evaluate_split(
        data.ctx_test, program, loaded, data.test_features, data.test_truth, "normalized"
    )
    assert again["rel_l2"] == pytest.approx(ref["rel_l2"], abs=1e-12)
    assert again["loss"] == pytest.approx(ref["loss"], abs=1e-12)
    # the last recorded row is reproducible from the final checkpoint
    final_eval = tr.evaluate_split(
        data.ctx_test,
        program,
        record.checkpoint_final,
        data.test_features,
        data.test_truth,
        "normalized",
    )
    assert final_eval["rel_l2"] == pytest.approx(record.rows[-1].test_rel_l2, abs=1e-12)
    assert final_eval["loss"] == pytest.approx(record.rows[-1].test_loss, abs=1e-12)


def test_run_record_roundtrip(tmp_path):
    config = tr.TrainConfig(objective="normalized", epochs=60, learning_rate=0.01, eval_every=20)
    record = tr.train(config, toy_data(), toy_program(), toy_net())
    path = tmp_path / "run_record.csv"
    tr.write_run_record(record, path)
    rows = tr.read_run_record(path)
    assert len(rows) == len(record.rows)
    for a, b in zip(rows, record.rows):
        assert a.epoch == b.epoch
        assert a.train_loss == b.train_loss
        assert a.test_rel_l2 == b.test_rel_l2
