from dataclasses import replace

import numpy as np
import pytest

from engine.errors import CheckpointError, ConfigError, ContractError, NonFiniteLossError
from engine.tensor import Graph, Tensor, backward
from fixations.dataset import DataConfig, Sample
from networks.rgbs_classifier import extend_first_layer
from networks.saliency_map import SaliencyMap
from tests.conftest import tiny_two_class_model
from training.checkpoint import decode, encode, load_checkpoint, save_checkpoint
from training.losses import cross_entropy, mse_saliency, multi_loss
from training.optimizer import SGDState, lr_at, sgd_step
from training.state import TrainState
from training.sweep import parse_alphas, sweep_alpha
from training.trainer import MultiLossTrainer, TrainConfig, evaluate_classification, predict_maps

DATA = DataConfig(rescale_target=18, crop_size=16)


# --- losses ----------------------------------------------------------------------


def test_cross_entropy_examples():
    assert cross_entropy(np.full(120, 1.0 / 120), 5, 120).item() == pytest.approx(4.7875, abs=1e-4)
    assert cross_entropy(np.array([0.0, 1.0]), 1).item() == 0.0
    assert cross_entropy(np.array([0.7, 0.2, 0.1]), 0).item() == pytest.approx(0.35667, abs=1e-5)
    with pytest.raises(ContractError):
        cross_entropy(np.array([0.5, 0.5]), 2)


def test_mse_saliency_examples(rng):
    t = rng.uniform(size=(10, 10))
    assert mse_saliency(SaliencyMap(t), SaliencyMap(t)).item() == 0.0
    assert mse_saliency(SaliencyMap(t + 0.3), SaliencyMap(t)).item() == pytest.approx(0.09, abs=1e-12)
    y = rng.uniform(size=(10, 10))
    oracle = 0.0
    for i in range(10):
        for j in range(10):
            oracle += (y[i, j] - t[i, j]) ** 2
    assert mse_saliency(SaliencyMap(y), SaliencyMap(t)).item() == pytest.approx(oracle / 100, abs=1e-12)
    with pytest.raises(ContractError):
        mse_saliency(SaliencyMap(y), SaliencyMap(t[:5]))


def test_multi_loss_combination(rng):
    probs = Tensor(np.array([[0.25, 0.75]]))
    y, t = Tensor(rng.uniform(size=(1, 1, 4, 4))), Tensor(rng.uniform(size=(1, 1, 4, 4)))
    terms = multi_loss(probs, y, [1], t, 0.0)
    assert terms.total.item() == terms.saliency.item()
    terms = multi_loss(probs, y, [1], t, 0.2)
    assert terms.total.item() == pytest.approx(0.2 * terms.classification.item() + terms.saliency.item(), abs=1e-15)
    with pytest.raises(ContractError):
        multi_loss(probs, y, [1], t, -1.0)


# --- optimizer ---------------------------------------------------------------------


def test_lr_schedule():
    assert lr_at(0.001, 0) == 0.001
    assert lr_at(0.001, 10**5) == pytest.approx(0.0005, abs=1e-15)
    assert lr_at(0.001, 3 * 10**5) == pytest.approx(0.00025, abs=1e-15)
    values = [lr_at(0.01, i) for i in range(0, 10**6, 10**5)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(ContractError):
        lr_at(0.01, -1)


def test_sgd_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    sgd_step({"p": p}, {"p": np.zeros(2)}, SGDState(), lr=0.1, momentum=0.9, weight_decay=0.0)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_sgd_single_step():
    p = Tensor(np.array(0.5), requires_grad=True)
    sgd_step({"p": p}, {"p": np.array(1.0)}, SGDState(), lr=0.1, momentum=0.0)
    assert p.data.item() == pytest.approx(0.4, abs=1e-15)


def test_sgd_momentum_recursion():
    p = Tensor(np.array(0.0), requires_grad=True)
    state = SGDState()
    for _ in range(2):
        sgd_step({"p": p}, {"p": np.array(1.0)}, state, lr=0.1, momentum=0.9)
    assert p.data.item() == pytest.approx(-0.29, abs=1e-12)


def test_sgd_weight_decay_respects_exemptions():
    a = Tensor(np.array(1.0), requires_grad=True)
    b = Tensor(np.array(1.0), requires_grad=True)
    sgd_step({"a": a, "b": b}, {}, SGDState(), lr=1.0, momentum=0.0, weight_decay=0.5, no_decay={"b"})
    assert a.data.item() == 0.5
    assert b.data.item() == 1.0


# --- gradient structure ----------------------------------------------------------------


def _batch(seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(3, 3, 16, 16)), rng.uniform(size=(3, 1, 16, 16)), rng.integers(0, 2, size=3)


def _grads(model, images, maps, labels, alpha, pick):
    model.zero_grad()
    with Graph() as graph:
        out = model(Tensor(images))
        terms = multi_loss(out.probs, out.full, labels, Tensor(maps), alpha)
    backward(graph, pick(terms))
    return {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for n, t in model.named_parameters()}


@pytest.mark.parametrize("seed", range(10))
def test_joint_gradient_is_weighted_sum_of_separate_passes(seed):
    model = tiny_two_class_model(seed=seed)
    batch = _batch(seed)
    alpha = 0.2
    joint = _grads(model, *batch, alpha, lambda t: t.total)
    classification = _grads(model, *batch, alpha, lambda t: t.classification)
    saliency = _grads(model, *batch, alpha, lambda t: t.saliency)
    for name in joint:
        np.testing.assert_allclose(joint[name], alpha * classification[name] + saliency[name], rtol=0, atol=1e-10, err_msg=name)


def test_zero_alpha_leaves_classifier_without_gradient():
    model = tiny_two_class_model()
    grads = _grads(model, *_batch(0), 0.0, lambda t: t.total)
    for name, grad in grads.items():
        if name.startswith(("classifier.", "bridge.")):
            assert not np.any(grad), name
    assert any(np.any(g) for n, g in grads.items() if n.startswith("saliency."))


def test_classification_loss_reaches_saliency_net():
    model = tiny_two_class_model(seed=1)
    grads = _grads(model, *_batch(1), 0.2, lambda t: t.classification)
    assert any(np.any(g) for n, g in grads.items() if n.startswith("saliency."))


def test_zero_alpha_saliency_gradients_equal_saliency_loss_alone():
    model = tiny_two_class_model(seed=2)
    batch = _batch(2)
    joint = _grads(model, *batch, 0.0, lambda t: t.total)
    alone = _grads(model, *batch, 0.0, lambda t: t.saliency)
    for name in joint:
        if name.startswith("saliency."):
            np.testing.assert_array_equal(joint[name], alone[name], err_msg=name)


def test_total_loss_is_scalar_and_backpropagates():
    model = tiny_two_class_model(seed=4)
    images, maps, labels = _batch(4)
    with Graph() as graph:
        out = model(Tensor(images))
        terms = multi_loss(out.probs, out.full, labels, Tensor(maps), 0.2)
    assert terms.total.ndim == 0 and terms.classification.ndim == 0 and terms.saliency.ndim == 0
    grads = backward(graph, terms.total)
    assert grads and all(np.isfinite(g).all() for g in grads.values())


# --- checkpoints -----------------------------------------------------------------


def test_checkpoint_round_trip_is_bitwise(tmp_path, rng):
    model = tiny_two_class_model()
    model(Tensor(rng.uniform(size=(2, 3, 16, 16))))
    state = TrainState(epoch=3, iteration=17, best_mca=0.5, best_mse=0.125, best_epoch=2, epochs_since_mse=1)
    state.optimizer.velocity = {n: rng.normal(size=t.shape) for n, t in model.named_parameters()}
    state.traces["loss_total"] = [1.0, 0.5, 0.25]
    path = save_checkpoint(tmp_path / "a.scnc", model, state)

    restored_model = tiny_two_class_model(seed=8)
    restored = load_checkpoint(path, restored_model)
    for key, value in model.state_dict().items():
        assert restored_model.state_dict()[key].tobytes() == value.tobytes()
    for name, v in state.optimizer.velocity.items():
        assert restored.optimizer.velocity[name].tobytes() == v.tobytes()
    assert restored.scalars() == state.scalars()
    assert restored.traces["loss_total"] == [1.0, 0.5, 0.25]
    assert save_checkpoint(tmp_path / "b.scnc", restored_model, restored).read_bytes() == path.read_bytes()


def test_init_from_three_channel_checkpoint_tags_groups(tmp_path, tiny_train_config):
    rgb = tiny_two_class_model(seed=1, input_channels=3)
    path = save_checkpoint(tmp_path / "rgb.scnc", rgb)
    model = tiny_two_class_model(seed=9)
    config = replace(tiny_train_config, lr=0.001, lr_fresh=0.05)
    trainer = MultiLossTrainer(model, config, DATA)
    assert trainer.init_from(path) == ["param/classifier.stage0.conv0.weight_sal"]

    rates = trainer.learning_rates(0)
    assert rates["classifier.stage0.conv0.weight_rgb"] == 0.001
    assert rates["saliency.score.weight"] == 0.001
    assert rates["classifier.stage0.conv0.weight_sal"] == 0.05
    np.testing.assert_array_equal(model.classifier.weight_rgb.data, rgb.classifier.weight_rgb.data)
    expected = extend_first_layer(rgb.classifier.weight_rgb, rng_seed=config.seed).data[:, 3:]
    np.testing.assert_array_equal(model.classifier.weight_sal.data, expected)


def test_checkpoint_keeps_parameter_groups(tmp_path):
    model = tiny_two_class_model()
    model.set_parameter_group("classifier.stage0.conv0.weight_rgb", "pretrained")
    path = save_checkpoint(tmp_path / "a.scnc", model)
    restored = tiny_two_class_model(seed=8)
    load_checkpoint(path, restored)
    assert restored.parameter_group("classifier.stage0.conv0.weight_rgb") == "pretrained"
    assert restored.parameter_group("classifier.stage0.conv0.weight_sal") == "fresh"


def test_checkpoint_scalar_and_infinite_values():
    tensors, scalars = decode(encode({"x": np.array(2.5)}, {"best_mca": -np.inf}))
    assert tensors["x"].shape == () and tensors["x"].item() == 2.5
    assert scalars["best_mca"] == -np.inf


def test_bad_checkpoints(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.scnc", tiny_two_class_model())
    bad = tmp_path / "bad.scnc"
    bad.write_bytes(b"NOPE\x01\x00\x00\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad, tiny_two_class_model())
    good = save_checkpoint(tmp_path / "good.scnc", tiny_two_class_model())
    truncated = tmp_path / "truncated.scnc"
    truncated.write_bytes(good.read_bytes()[:-5])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated, tiny_two_class_model())


def test_checkpoint_shape_mismatch(tmp_path, tiny_model):
    path = save_checkpoint(tmp_path / "two.scnc", tiny_two_class_model())
    with pytest.raises(CheckpointError):
        load_checkpoint(path, tiny_model)
    state = load_checkpoint(path, tiny_model, strict=False)
    assert state.missing == ["param/classifier.head.weight", "param/classifier.head.bias"]


# --- trainer -------------------------------------------------------------------------


def _config(**overrides):
    values = dict(alpha=0.2, lr=0.01, momentum=0.9, weight_decay=0.0005, batch_size=4, patience_epochs=50, max_epochs=2, seed=5)
    values.update(overrides)
    return TrainConfig(**values)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        _config(alpha=-0.1).validate()
    with pytest.raises(ConfigError):
        _config(patience_epochs=0).validate()
    with pytest.raises(ConfigError):
        _config(stage="everything").validate()
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rate": 0.1})


def test_same_seed_same_trace(synth_splits, tmp_path):
    runs = []
    for name in ("a", "b"):
        trainer = MultiLossTrainer(tiny_two_class_model(), _config(), DATA, tmp_path / name)
        runs.append(trainer.train(synth_splits["train"], synth_splits["val"]))
    assert runs[0].state.traces == runs[1].state.traces
    assert (tmp_path / "a" / "last.scnc").read_bytes() == (tmp_path / "b" / "last.scnc").read_bytes()
    assert (tmp_path / "a" / "train_log.csv").read_bytes() == (tmp_path / "b" / "train_log.csv").read_bytes()


def test_log_columns(synth_splits, tmp_path):
    MultiLossTrainer(tiny_two_class_model(), _config(max_epochs=1), DATA, tmp_path).train(synth_splits["train"], synth_splits["val"])
    lines = (tmp_path / "train_log.csv").read_text().splitlines()
    assert lines[0] == "epoch,iter,lr,loss_total,loss_class,loss_sal,val_mca,val_mse"
    assert lines[1].startswith("1,4,")


def test_resume_reproduces_uninterrupted_run(synth_splits, tmp_path):
    full = MultiLossTrainer(tiny_two_class_model(), _config(max_epochs=3), DATA, tmp_path / "full")
    expected = full.train(synth_splits["train"], synth_splits["val"])

    first = MultiLossTrainer(tiny_two_class_model(), _config(max_epochs=2), DATA, tmp_path / "split")
    first.train(synth_splits["train"], synth_splits["val"])
    second = MultiLossTrainer(tiny_two_class_model(), _config(max_epochs=3), DATA, tmp_path / "split")
    state = second.resume(tmp_path / "split" / "last.scnc")
    resumed = second.train(synth_splits["train"], synth_splits["val"], state)

    assert resumed.state.traces == expected.state.traces
    assert resumed.state.iteration == expected.state.iteration
    assert (tmp_path / "split" / "last.scnc").read_bytes() == (tmp_path / "full" / "last.scnc").read_bytes()


def test_iteration_counter_and_early_stopping_bound(synth_splits):
    patience = 1
    trainer = MultiLossTrainer(tiny_two_class_model(), _config(max_epochs=8, patience_epochs=patience, lr=0.0001), DATA)
    result = trainer.train(synth_splits["train"], synth_splits["val"])
    iterations = [e.iteration for e in result.history]
    assert all(a < b for a, b in zip(iterations, iterations[1:]))

    best_mca, best_mse, last_mca, last_mse = -np.inf, np.inf, 0, 0
    for e in result.history:
        if e.val_mca > best_mca + 1e-6:
            best_mca, last_mca = e.val_mca, e.epoch
        if e.val_mse < best_mse - 1e-6:
            best_mse, last_mse = e.val_mse, e.epoch
    assert len(result.history) <= max(last_mca, last_mse) + patience or len(result.history) == 8


def test_selected_weights_are_restored(synth_splits):
    trainer = MultiLossTrainer(tiny_two_class_model(), _config(max_epochs=3), DATA)
    result = trainer.train(synth_splits["train"], synth_splits["val"])
    for key, value in result.best_state.items():
        np.testing.assert_array_equal(trainer.model.state_dict()[key], value)


def test_zero_alpha_run_never_moves_classifier_by_gradient(synth_splits):
    model = tiny_two_class_model()
    before = {n: t.data.copy() for n, t in model.named_parameters() if n.startswith("classifier.")}
    trainer = MultiLossTrainer(model, _config(alpha=0.0, weight_decay=0.0, max_epochs=1), DATA)
    trainer.train(synth_splits["train"], synth_splits["val"])
    for name, value in before.items():
        np.testing.assert_array_equal(dict(model.named_parameters())[name].data, value)


def test_saliency_stage_only_updates_detector(synth_splits):
    model = tiny_two_class_model()
    before = {n: t.data.copy() for n, t in model.named_parameters()}
    trainer = MultiLossTrainer(model, _config(stage="saliency", max_epochs=1), DATA)
    trainer.train(synth_splits["train"], synth_splits["val"])
    after = dict(model.named_parameters())
    assert all(np.array_equal(after[n].data, v) for n, v in before.items() if not n.startswith("saliency."))
    assert any(not np.array_equal(after[n].data, v) for n, v in before.items() if n.startswith("saliency."))


def test_classifier_stage_keeps_detector_fixed(synth_splits):
    model = tiny_two_class_model()
    before = {n: t.data.copy() for n, t in model.named_parameters() if n.startswith("saliency.")}
    trainer = MultiLossTrainer(model, _config(stage="classifier", max_epochs=1), DATA)
    assert trainer.feeds_ground_truth
    trainer.train(synth_splits["train"], synth_splits["val"])
    for name, value in before.items():
        np.testing.assert_array_equal(dict(model.named_parameters())[name].data, value)


def test_non_finite_loss_names_batch_and_iteration(synth_splits):
    broken = [
        Sample(s.image_id, s.image, s.label, s.fixations, SaliencyMap(np.full(s.heatmap.shape, np.nan)))
        for s in synth_splits["train"]
    ]
    trainer = MultiLossTrainer(tiny_two_class_model(), _config(), DATA)
    with pytest.raises(NonFiniteLossError) as info:
        trainer.train(broken, synth_splits["val"])
    assert info.value.batch_index == 0
    assert info.value.iteration == 0


def test_overlapping_validation_rejected(synth_splits):
    trainer = MultiLossTrainer(tiny_two_class_model(), _config(), DATA)
    with pytest.raises(ContractError):
        trainer.train(synth_splits["train"], synth_splits["train"][:2])


def test_crop_must_match_network_input():
    with pytest.raises(ConfigError):
        MultiLossTrainer(tiny_two_class_model(), _config(), DataConfig(rescale_target=40, crop_size=32))


def test_predict_maps_match_image_size(synth_splits):
    maps = predict_maps(tiny_two_class_model(), synth_splits["test"])
    assert [m.shape for m in maps] == [s.heatmap.shape for s in synth_splits["test"]]


def test_evaluate_classification_range(synth_splits):
    mca = evaluate_classification(tiny_two_class_model(), synth_splits["test"], DATA)
    assert 0.0 <= mca <= 1.0


def test_alpha_sweep(synth_splits, tmp_path):
    points = sweep_alpha(
        parse_alphas("0,0.5"), tiny_two_class_model, synth_splits["train"], synth_splits["val"], _config(max_epochs=1), DATA, tmp_path
    )
    assert [p.alpha for p in points] == [0.0, 0.5]
    lines = (tmp_path / "alpha_sweep.csv").read_text().splitlines()
    assert lines[0] == "alpha,val_mca,val_mse"
    assert len(lines) == 3
    with pytest.raises(ContractError):
        parse_alphas("0,-1")


@pytest.mark.slow
def test_separable_set_is_learned(synth_splits):
    model = tiny_two_class_model(seed=0)
    config = _config(lr=0.01, weight_decay=0.0, max_epochs=50, patience_epochs=50, seed=0)
    trainer = MultiLossTrainer(model, config, DATA)
    trainer.train(synth_splits["train"], synth_splits["val"])
    assert evaluate_classification(model, synth_splits["train"], DATA) == 1.0
