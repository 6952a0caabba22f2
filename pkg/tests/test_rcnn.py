import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oarsmt import raster, rcnn
from oarsmt.errors import ContractError, FormatError, InputError
from oarsmt.mazegen import GenConfig, generate_instance


def _zero_weights(width=8):
    w = rcnn.init_weights(rcnn.NetworkConfig(width=width), 0)
    return rcnn.NetworkWeights(w.config, [np.zeros_like(k) for k in w.kernels],
                               [np.zeros_like(b) for b in w.biases], w.metadata)


def test_layer_chain():
    cfg = rcnn.NetworkConfig(width=128)
    assert cfg.layer_shapes() == [(128, 3), (128, 131), (128, 128), (128, 128), (128, 128), (128, 128),
                                  (32, 128), (8, 32), (2, 8)]
    assert rcnn.NetworkConfig(width=16).head_channels == (8, 4)
    with pytest.raises(InputError):
        rcnn.NetworkConfig(width=4)
    with pytest.raises(InputError):
        rcnn.NetworkConfig(kernel=4)


def test_conv_identity_and_zero():
    rng = np.random.default_rng(0)
    x = rng.random((4, 7, 9)).astype(np.float32)
    k = np.zeros((4, 4, 3, 3), dtype=np.float32)
    for c in range(4):
        k[c, c, 1, 1] = 1
    assert np.array_equal(rcnn.conv_apply(x, k, np.zeros(4, np.float32)), x)
    assert not rcnn.conv_apply(x, np.zeros_like(k), np.zeros(4, np.float32)).any()
    with pytest.raises(ContractError):
        rcnn.conv_apply(x[:3], k, np.zeros(4, np.float32))


def test_conv_hand_computed():
    rng = np.random.default_rng(1)
    x = rng.random((1, 3, 3)).astype(np.float32)
    k = rng.random((1, 1, 3, 3)).astype(np.float32)
    b = np.array([0.25], dtype=np.float32)
    out = rcnn.conv_apply(x, k, b)
    centre = float(b[0]) + sum(float(k[0, 0, i, j]) * float(x[0, i, j]) for i in range(3) for j in range(3))
    assert out[0, 1, 1] == pytest.approx(centre, rel=1e-6)
    corner = float(b[0]) + sum(float(k[0, 0, i, j]) * float(x[0, i - 1, j - 1]) for i in (1, 2) for j in (1, 2))
    assert out[0, 0, 0] == pytest.approx(corner, rel=1e-6)


def test_project_examples():
    x = raster.instance_to_image(generate_instance(GenConfig(11, 11, 3, 13, 1)))
    zw = _zero_weights()
    assert not rcnn.project(x, zw).any()
    neg = zw.copy()
    neg.biases[0][:] = -1.0
    assert not rcnn.project(x, neg).any()
    w = rcnn.init_weights(rcnn.NetworkConfig(width=128), 0)
    assert rcnn.project(x, w).shape == (128, 48, 48)


def test_rb_and_head_examples(golden_dir):
    x = raster.instance_to_image(generate_instance(GenConfig(5, 5, 3, 3, 77)))
    zw = _zero_weights()
    state = np.random.default_rng(0).random((8, 24, 24)).astype(np.float32)
    assert not rcnn.rb_iterate(x, state, zw).any()
    logits = rcnn.head(state, zw)
    assert logits.shape == (2, 24, 24) and not rcnn.argmax_image(logits).any()
    golden = json.loads((golden_dir / "rcnn_checksums.json").read_text())
    w = rcnn.init_weights(rcnn.NetworkConfig(width=golden["width"]), golden["weights_seed"])
    s1 = rcnn.rb_iterate(x, rcnn.project(x, w), w)
    s2 = rcnn.rb_iterate(x, rcnn.project(x, w), w)
    assert np.array_equal(s1, s2)
    assert hashlib.sha256(s1.astype("<f4").tobytes()).hexdigest() == golden["rb_state_sha256"]
    out = rcnn.head(s1, w)
    assert hashlib.sha256(out.astype("<f4").tobytes()).hexdigest() == golden["head_logits_sha256"]


def test_argmax():
    ones = np.stack([np.zeros((3, 3)), np.ones((3, 3))]).astype(np.float32)
    assert rcnn.argmax_image(ones).all()
    assert not rcnn.argmax_image(np.zeros((2, 3, 3), np.float32)).any()
    mixed = np.array([[[0, 1], [2, 2]], [[1, 0], [2, 3]]], dtype=np.float32)
    assert rcnn.argmax_image(mixed)[0].tolist() == [[1, 0], [0, 1]]
    with pytest.raises(ContractError):
        rcnn.argmax_image(np.zeros((3, 2, 2)))


def test_forward_checkpoints():
    x = raster.instance_to_image(generate_instance(GenConfig(5, 5, 2, 3, 5)))
    w = rcnn.init_weights(rcnn.NetworkConfig(width=8), 2)
    assert len(rcnn.forward(x, w, 1, [1])) == 1
    preds = rcnn.forward(x, w, 50, [30, 40, 50])
    assert len(preds) == 3 and all(p.shape == (1, 24, 24) for p in preds)
    states = rcnn.iterate_states(x, w)
    s30 = [next(states) for _ in range(30)][-1]
    assert np.array_equal(preds[0], rcnn.argmax_image(rcnn.head(s30, w)))
    with pytest.raises(InputError):
        rcnn.forward(x, w, 0)
    with pytest.raises(InputError):
        rcnn.forward(x, w, 5, [6])


def test_weights_roundtrip(tmp_path):
    w = rcnn.init_weights(rcnn.NetworkConfig(width=8, rb_activation="relu"), 3)
    rcnn.save_weights(w, tmp_path / "w.mznw")
    back = rcnn.load_weights(tmp_path / "w.mznw")
    assert back.config == w.config
    for a, b in zip(w.kernels + w.biases, back.kernels + back.biases):
        assert np.array_equal(a, b)
    rcnn.save_weights(back, tmp_path / "w2.mznw")
    assert (tmp_path / "w.mznw").read_bytes() == (tmp_path / "w2.mznw").read_bytes()
    assert back.metadata["raster"]["cell_px"] == raster.CELL_PX


def test_weights_errors(tmp_path):
    w = rcnn.init_weights(rcnn.NetworkConfig(width=8), 3)
    path = tmp_path / "w.mznw"
    rcnn.save_weights(w, path)
    blob = path.read_bytes()
    (tmp_path / "t.mznw").write_bytes(blob[:-7])
    with pytest.raises(FormatError, match="truncated"):
        rcnn.load_weights(tmp_path / "t.mznw")
    (tmp_path / "m.mznw").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError, match="magic"):
        rcnn.load_weights(tmp_path / "m.mznw")
    bad = w.copy()
    bad.kernels[1] = np.zeros((8, 8, 3, 3), np.float32)
    with pytest.raises(ContractError, match="conv1"):
        rcnn.NetworkWeights(bad.config, bad.kernels, bad.biases)
    # a file whose conv1 takes width channels instead of width + 3
    mixed = rcnn.NetworkWeights.__new__(rcnn.NetworkWeights)
    mixed.config, mixed.kernels, mixed.biases, mixed.metadata = bad.config, bad.kernels, bad.biases, {}
    rcnn.save_weights(mixed, tmp_path / "c.mznw")
    with pytest.raises(FormatError, match="conv1"):
        rcnn.load_weights(tmp_path / "c.mznw")


@settings(max_examples=15, deadline=None)
@given(st.integers(5, 20), st.integers(5, 20), st.integers(0, 1000))
def test_shape_law(h, w, seed):
    weights = rcnn.init_weights(rcnn.NetworkConfig(width=8), seed)
    x = np.random.default_rng(seed).random((3, h, w)).astype(np.float32)
    state = rcnn.project(x, weights)
    assert state.shape == (8, h, w)
    state = rcnn.rb_iterate(x, state, weights)
    assert state.shape == (8, h, w)
    assert rcnn.head(state, weights).shape == (2, h, w)


def test_translation_consistency():
    weights = rcnn.init_weights(rcnn.NetworkConfig(width=8), 4)
    rng = np.random.default_rng(4)
    x = np.zeros((3, 40, 40), np.float32)
    x[:, 10:26, 10:26] = rng.random((3, 16, 16))
    shifted = np.roll(x, (2, 2), axis=(1, 2))
    a = rcnn.forward(x, weights, 2, return_logits=True)[0]
    b = rcnn.forward(shifted, weights, 2, return_logits=True)[0]
    # away from the borders the response moves with the input
    assert np.allclose(np.roll(a, (2, 2), axis=(1, 2))[:, 14:26, 14:26], b[:, 14:26, 14:26], atol=1e-5)
