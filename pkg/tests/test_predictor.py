import numpy as np
import pytest

from metadse import autodiff as ad
from metadse.checkpoint import load_checkpoint, save_checkpoint
from metadse.errors import ContractError, DegenerateMask, ParseError, ShapeError
from metadse.predictor import (
    AttentionRecord,
    BatchLoss,
    PredictorConfig,
    batch_loss,
    copy_params,
    flatten,
    forward,
    init_params,
    param_count,
    predict,
    segment_shapes,
    unflatten,
)

SMALL = PredictorConfig(embed_dim=8, heads=2, layers=2, mlp_hidden=8)
P = 6


def rand_features(rng, n=4, p=P):
    return rng.uniform(0.0, 1.0, (n, p))


def test_config_validation():
    with pytest.raises(ContractError):
        PredictorConfig(embed_dim=10, heads=4)
    with pytest.raises(ContractError):
        PredictorConfig(layers=0)
    with pytest.raises(ContractError):
        PredictorConfig(outputs="latency")
    assert PredictorConfig(outputs="both").n_outputs == 2


def test_param_count_matches_flatten_length():
    for config in [SMALL, PredictorConfig(), PredictorConfig(outputs="both"),
                   PredictorConfig(embed_dim=16, heads=4, layers=3, mlp_hidden=24)]:
        for p in (5, 20):
            params = init_params(config, p, seed=0)
            assert flatten(params, config, p).shape == (param_count(config, p),)


def test_flatten_unflatten_roundtrip():
    params = init_params(SMALL, P, seed=1)
    flat = flatten(params, SMALL, P)
    back = unflatten(flat, SMALL, P)
    assert set(back) == set(params)
    for name in params:
        np.testing.assert_array_equal(back[name], params[name])
    with pytest.raises(ShapeError):
        unflatten(flat[:-1], SMALL, P)


def test_init_deterministic_per_seed():
    a = init_params(SMALL, P, seed=11)
    b = init_params(SMALL, P, seed=11)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])


def test_init_seeds_differ_on_random_segments():
    a = init_params(SMALL, P, seed=1)
    b = init_params(SMALL, P, seed=2)
    random_entries = 0
    differing = 0
    for name, arr in a.items():
        if ".b" in name or ".ln_" in name:
            np.testing.assert_array_equal(arr, b[name])  # deterministic segments
        else:
            random_entries += arr.size
            differing += np.sum(arr != b[name])
    assert differing >= 0.99 * random_entries


def test_init_biases_zero_gains_one():
    params = init_params(SMALL, P, seed=5)
    for name, arr in params.items():
        if ".ln_gain" in name:
            assert np.all(arr == 1.0)
        elif ".b" in name or ".ln_bias" in name:
            assert np.all(arr == 0.0)


def test_forward_pure_and_records_attention():
    rng = np.random.default_rng(0)
    params = init_params(SMALL, P, seed=3)
    x = rng.uniform(0, 1, P)
    y1, rec = forward(params, x, SMALL)
    y2, _ = forward(params, x, SMALL)
    np.testing.assert_array_equal(y1, y2)
    assert y1.shape == (1,)
    assert len(rec.layers) == SMALL.layers
    for layer in rec.layers:
        assert layer.shape == (SMALL.heads, 1, P, P)
        assert np.all(np.abs(layer.sum(axis=3) - 1.0) < 1e-9)


def test_masked_rows_still_stochastic():
    rng = np.random.default_rng(1)
    params = init_params(SMALL, P, seed=3)
    mask = rng.uniform(0.05, 1.0, (P, P))
    _, rec = forward(params, rng.uniform(0, 1, P), SMALL, mask=mask)
    for layer in rec.layers:
        assert np.all(np.abs(layer.sum(axis=3) - 1.0) < 1e-9)


def test_all_ones_mask_bitwise_identity():
    rng = np.random.default_rng(2)
    params = init_params(SMALL, P, seed=7)
    x = rand_features(rng)
    plain = predict(params, x, SMALL)
    masked = predict(params, x, SMALL, mask=np.ones((P, P)))
    np.testing.assert_array_equal(plain, masked)


def test_degenerate_mask_rejected():
    params = init_params(SMALL, P, seed=7)
    mask = np.ones((P, P))
    mask[2, :] = 0.0
    with pytest.raises(DegenerateMask):
        predict(params, np.zeros((1, P)), SMALL, mask=mask)
    with pytest.raises(ContractError):
        predict(params, np.zeros((1, P)), SMALL, mask=np.full((P, P), 1.5))
    with pytest.raises(ShapeError):
        predict(params, np.zeros((1, P)), SMALL, mask=np.ones((P, P + 1)))


def test_loss_zero_when_labels_equal_predictions():
    rng = np.random.default_rng(3)
    params = init_params(SMALL, P, seed=9)
    x = rand_features(rng)
    y = predict(params, x, SMALL)
    assert batch_loss(params, x, y, SMALL).value == 0.0


def test_loss_of_zero_model_is_mean_square_labels():
    rng = np.random.default_rng(4)
    params = {k: np.zeros_like(v) for k, v in init_params(SMALL, P, seed=0).items()}
    x = rand_features(rng)
    y = rng.standard_normal((x.shape[0], 1))
    res = batch_loss(params, x, y, SMALL)
    assert res.value == pytest.approx(float(np.mean(y ** 2)), rel=1e-12)


def test_loss_mask_ones_equals_unmasked():
    rng = np.random.default_rng(5)
    params = init_params(SMALL, P, seed=2)
    x = rand_features(rng)
    y = rng.standard_normal((x.shape[0], 1))
    a = batch_loss(params, x, y, SMALL, want_grads=True)
    b = batch_loss(params, x, y, SMALL, mask=np.ones((P, P)), want_grads=True)
    assert a.value == b.value
    for name in a.grads:
        np.testing.assert_array_equal(a.grads[name], b.grads[name])


def test_empty_batch_rejected():
    params = init_params(SMALL, P, seed=2)
    with pytest.raises(ContractError):
        batch_loss(params, np.zeros((0, P)), np.zeros((0, 1)), SMALL)


def test_surrogate_finite_difference_full():
    """Exhaustive central-difference check over every segment and mask entry."""
    rng = np.random.default_rng(123)
    params = init_params(SMALL, P, seed=17)
    mask = rng.uniform(0.3, 0.9, (P, P))
    x = rand_features(rng, n=3)
    y = rng.standard_normal((3, 1))

    res = batch_loss(params, x, y, SMALL, mask=mask, learnable_mask=True, want_grads=True)

    def loss_value():
        return batch_loss(params, x, y, SMALL, mask=mask).value

    h = 1e-5
    worst = 0.0
    for name, arr in list(params.items()) + [("mask", mask)]:
        analytic = res.mask_grad if name == "mask" else res.grads[name]
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + h
            hi = loss_value()
            arr[i] = orig - h
            lo = loss_value()
            arr[i] = orig
            fd = (hi - lo) / (2 * h)
            an = analytic[i]
            rel = abs(an - fd) / max(abs(an), abs(fd), 1.0)
            worst = max(worst, rel)
            it.iternext()
    assert worst < 1e-4


def test_batch_loss_records_attention():
    rng = np.random.default_rng(6)
    params = init_params(SMALL, P, seed=1)
    x = rand_features(rng, n=5)
    y = rng.standard_normal((5, 1))
    res = batch_loss(params, x, y, SMALL, record=True)
    assert isinstance(res.record, AttentionRecord)
    assert res.record.layers[-1].shape == (SMALL.heads, 5, P, P)
    means = res.record.last_layer_sample_means()
    assert means.shape == (5, P, P)
    assert np.all(np.abs(means.sum(axis=2) - 1.0) < 1e-9)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    params = init_params(SMALL, P, seed=21)
    params["head.b2"][0, 0] = -0.0  # sign of zero must survive
    mask = np.random.default_rng(0).uniform(0, 1, (P, P))
    path = tmp_path / "model.mdse"
    save_checkpoint(path, params, SMALL, P, mask=mask, meta={"seed": "21", "config_hash": "abc"})
    ck = load_checkpoint(path)
    assert ck.config == SMALL and ck.p == P
    assert ck.meta == {"seed": "21", "config_hash": "abc"}
    for name in params:
        assert ck.params[name].tobytes() == params[name].tobytes()
    assert ck.mask.tobytes() == mask.tobytes()
    # saving the loaded state reproduces the file byte for byte
    path2 = tmp_path / "model2.mdse"
    save_checkpoint(path2, ck.params, ck.config, ck.p, mask=ck.mask, meta=ck.meta)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_without_mask(tmp_path):
    params = init_params(SMALL, P, seed=4)
    path = tmp_path / "m.mdse"
    save_checkpoint(path, params, SMALL, P)
    ck = load_checkpoint(path)
    assert ck.mask is None and ck.meta is None


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mdse"
    path.write_bytes(b"WXYZ 1\n\n")
    with pytest.raises(ParseError):
        load_checkpoint(path)
    path.write_bytes(b"MDSE 99\nembed_dim = 8\n\n")
    with pytest.raises(ParseError):
        load_checkpoint(path)
    save_checkpoint(path, init_params(SMALL, P, seed=0), SMALL, P)
    data = path.read_bytes()
    path.write_bytes(data[:-16])  # truncate the float block
    with pytest.raises(ParseError):
        load_checkpoint(path)


def test_copy_params_isolated():
    params = init_params(SMALL, P, seed=8)
    dup = copy_params(params)
    dup["head.w1"][0, 0] += 1.0
    assert params["head.w1"][0, 0] != dup["head.w1"][0, 0]
