import numpy as np
import pytest

from factify.entailment_head import (
    DegenerateDataWarning,
    HeadVariant,
    MlpConfig,
    MlpParams,
    ShapeMismatch,
    cross_entropy_loss,
    head_features,
    init_params,
    load_head,
    loss_and_grads,
    mlp_forward,
    save_head,
    softmax,
    train_head,
    variant_output_dim,
)


def _blobs(n_per_class, n_classes=3, dim=4, scale=0.3, seed=3):
    """Linearly separable clusters around orthogonal-ish centers."""
    rng = np.random.default_rng(seed)
    centers = 4.0 * np.eye(n_classes, dim)
    xs, ys = [], []
    for c in range(n_classes):
        for _ in range(n_per_class):
            xs.append(centers[c] + rng.normal(scale=scale, size=dim))
            ys.append(c)
    return xs, ys


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


def test_zero_params_give_uniform_probs():
    config = MlpConfig(input_dim=4, hidden_dim=5, output_dim=3)
    zeros = MlpParams(
        w1=np.zeros((4, 5)), b1=np.zeros(5), w2=np.zeros((5, 3)), b2=np.zeros(3)
    )
    probs = mlp_forward(config, zeros, np.array([1.0, -2.0, 0.5, 3.0]))
    np.testing.assert_allclose(probs, np.full(3, 1 / 3), atol=1e-12)


def test_dominant_logit_wins():
    config = MlpConfig(input_dim=4, hidden_dim=5, output_dim=3, seed=0)
    params = init_params(config)
    params.b2 = params.b2.copy()
    params.b2[2] += 10.0
    probs = mlp_forward(config, params, np.zeros(4))
    assert int(np.argmax(probs)) == 2
    assert probs[2] > 0.99


def test_probs_form_a_simplex():
    rng = np.random.default_rng(1)
    config = MlpConfig(input_dim=6, hidden_dim=8, output_dim=3, seed=2)
    params = init_params(config)
    for _ in range(50):
        probs = mlp_forward(config, params, rng.normal(size=6))
        assert probs.min() >= 0.0
        assert abs(probs.sum() - 1.0) < 1e-6


def test_softmax_shift_invariance():
    rng = np.random.default_rng(2)
    for _ in range(50):
        logits = rng.normal(size=5)
        shifted = softmax(logits + rng.uniform(-100, 100))
        np.testing.assert_allclose(softmax(logits), shifted, atol=1e-9)


def test_forward_shape_mismatch():
    config = MlpConfig(input_dim=4, hidden_dim=5, output_dim=3)
    params = init_params(config)
    with pytest.raises(ShapeMismatch):
        mlp_forward(config, params, np.zeros(5))


# ---------------------------------------------------------------------------
# gradients vs central finite differences (independent oracle lives here)
# ---------------------------------------------------------------------------


def numeric_grads(config, params, x, y, step=1e-5):
    grads = []
    for _, block in params.blocks():
        flat = block.ravel()
        numeric = np.zeros_like(flat)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = cross_entropy_loss(config, params, x, y)
            flat[k] = orig - step
            down = cross_entropy_loss(config, params, x, y)
            flat[k] = orig
            numeric[k] = (up - down) / (2 * step)
        grads.append(numeric.reshape(block.shape))
    return MlpParams(*grads)


def test_gradient_check_4_3_3():
    rng = np.random.default_rng(10)
    config = MlpConfig(input_dim=4, hidden_dim=3, output_dim=3)
    for draw in range(20):
        params = init_params(
            MlpConfig(input_dim=4, hidden_dim=3, output_dim=3, seed=500 + draw)
        )
        x = rng.normal(size=(5, 4))
        y = rng.integers(0, 3, size=5)
        _, analytic = loss_and_grads(config, params, x, y)
        numeric = numeric_grads(config, params, x, y)
        for (_, a), (_, n) in zip(analytic.blocks(), numeric.blocks()):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            assert np.max(np.abs(a - n) / denom) < 1e-4


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def test_overfits_separable_blobs_within_200_epochs():
    xs, ys = _blobs(10)
    config = MlpConfig(
        input_dim=4, hidden_dim=16, output_dim=3, max_epochs=200, batch_size=8, seed=5
    )
    params, log = train_head(config, list(zip(xs, ys)))
    probs = mlp_forward(config, params, np.stack(xs))
    assert float((np.argmax(probs, axis=1) == np.asarray(ys)).mean()) == 1.0
    assert log.epoch_losses[-1] <= log.epoch_losses[0]


def test_initial_loss_near_ln3_with_tiny_init():
    xs, ys = _blobs(10)
    config = MlpConfig(input_dim=4, hidden_dim=16, output_dim=3, seed=5, init_scale=1e-3)
    params = init_params(config)
    loss0 = cross_entropy_loss(config, params, np.stack(xs), np.asarray(ys))
    assert abs(loss0 - np.log(3)) < 0.05


def test_training_is_seed_deterministic():
    xs, ys = _blobs(8, seed=9)
    config = MlpConfig(
        input_dim=4, hidden_dim=12, output_dim=3, max_epochs=40, batch_size=8, seed=21
    )
    params_a, log_a = train_head(config, list(zip(xs, ys)))
    params_b, log_b = train_head(config, list(zip(xs, ys)))
    for (_, a), (_, b) in zip(params_a.blocks(), params_b.blocks()):
        np.testing.assert_array_equal(a, b)  # bit-identical
    assert log_a.epoch_losses == log_b.epoch_losses


def test_label_shuffle_sanity_no_leak():
    # shuffled labels on balanced data: validation accuracy ~ chance
    rng = np.random.default_rng(33)
    xs, ys = _blobs(30, seed=14)
    shuffled = list(np.asarray(ys)[rng.permutation(len(ys))])
    examples = list(zip(xs, shuffled))
    train, val = examples[:60], examples[60:]
    config = MlpConfig(
        input_dim=4, hidden_dim=16, output_dim=3, max_epochs=60, batch_size=16, seed=8,
        patience=1000,
    )
    params, _ = train_head(config, train)
    xv = np.stack([x for x, _ in val])
    yv = np.asarray([y for _, y in val])
    acc = float((np.argmax(mlp_forward(config, params, xv), axis=1) == yv).mean())
    assert abs(acc - 1 / 3) <= 0.15


def test_degenerate_data_warns_but_trains():
    xs, ys = _blobs(6)
    two_class = [(x, min(y, 1)) for x, y in zip(xs, ys)]
    config = MlpConfig(input_dim=4, hidden_dim=8, output_dim=3, max_epochs=5, seed=2)
    with pytest.warns(DegenerateDataWarning):
        params, _ = train_head(config, two_class)
    assert params.w1.shape == (4, 8)


def test_early_stopping_keeps_best_checkpoint():
    xs, ys = _blobs(10, seed=6)
    examples = list(zip(xs, ys))
    config = MlpConfig(
        input_dim=4, hidden_dim=16, output_dim=3, max_epochs=200, batch_size=8,
        seed=4, patience=5,
    )
    params, log = train_head(config, examples[:24], val_examples=examples[24:])
    assert log.val_losses  # tracked
    assert log.best_epoch <= len(log.val_losses) - 1
    best = min(log.val_losses)
    got = cross_entropy_loss(
        config,
        params,
        np.stack([x for x, _ in examples[24:]]),
        np.asarray([y for _, y in examples[24:]]),
    )
    assert got == pytest.approx(best, abs=1e-9)


def test_rejects_bad_targets():
    config = MlpConfig(input_dim=2, hidden_dim=3, output_dim=3)
    with pytest.raises(ValueError):
        train_head(config, [(np.zeros(2), 7)])
    with pytest.raises(ValueError):
        train_head(config, [])


# ---------------------------------------------------------------------------
# head feature extraction and persistence
# ---------------------------------------------------------------------------


def test_variant_output_dims():
    assert variant_output_dim(HeadVariant.TEXT_PAIR_3) == 3
    assert variant_output_dim(HeadVariant.IMAGE_PAIR_3) == 3
    assert variant_output_dim(HeadVariant.TEXT_AND_IMAGE_PAIR_3) == 3
    assert variant_output_dim(HeadVariant.ALL_CONCAT_5) == 5


def test_head_features_single_and_dual():
    config3 = MlpConfig(input_dim=4, hidden_dim=5, output_dim=3, seed=1)
    params3 = init_params(config3)
    single = head_features([(config3, params3)], [np.ones(4)])
    assert single.shape == (3,)
    assert abs(single.sum() - 1.0) < 1e-6

    dual = head_features(
        [(config3, params3), (config3, params3)], [np.ones(4), np.zeros(4)]
    )
    assert dual.shape == (6,)
    assert abs(dual[:3].sum() - 1.0) < 1e-6
    assert abs(dual[3:].sum() - 1.0) < 1e-6


def test_head_features_five_way():
    config5 = MlpConfig(input_dim=8, hidden_dim=5, output_dim=5, seed=1)
    params5 = init_params(config5)
    probs = head_features([(config5, params5)], [np.ones(8)])
    assert probs.shape == (5,)
    assert abs(probs.sum() - 1.0) < 1e-6


def test_head_features_hard_labels_one_hot():
    config = MlpConfig(input_dim=4, hidden_dim=5, output_dim=3, seed=3)
    params = init_params(config)
    hard = head_features([(config, params)], [np.ones(4)], hard_labels=True)
    assert sorted(hard.tolist()) == [0.0, 0.0, 1.0]


def test_head_features_count_mismatch():
    config = MlpConfig(input_dim=4, hidden_dim=5, output_dim=3)
    with pytest.raises(ShapeMismatch):
        head_features([(config, init_params(config))], [np.ones(4), np.ones(4)])


def test_save_load_round_trip(tmp_path):
    config = MlpConfig(input_dim=6, hidden_dim=7, output_dim=3, seed=11)
    params = init_params(config)
    path = tmp_path / "head.bin"
    save_head(path, config, params)
    loaded_config, loaded_params = load_head(path)
    assert loaded_config == config
    x = np.linspace(-1, 1, 6)
    np.testing.assert_allclose(
        mlp_forward(config, params, x),
        mlp_forward(loaded_config, loaded_params, x),
        atol=1e-6,  # f32 storage
    )


def test_saved_file_layout(tmp_path):
    config = MlpConfig(input_dim=2, hidden_dim=3, output_dim=3)
    save_head(tmp_path / "h.bin", config, init_params(config))
    blob = (tmp_path / "h.bin").read_bytes()
    header, _, rest = blob.partition(b"\n\n")
    assert b"input_dim=2" in header
    assert int.from_bytes(rest[:4], "little") == 2  # w1 is 2-dimensional
    assert int.from_bytes(rest[4:8], "little") == 2  # rows
    assert int.from_bytes(rest[8:12], "little") == 3  # cols
