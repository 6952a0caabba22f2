"""Recurrent convolutional network: projection, recurrent block, head.

Nine 2-D convolutions, stride 1 with same padding::

    conv0            3      -> width     projection, ReLU
    conv1            width+3 -> width    recurrent block, input is [state, image]
    conv2..conv5     width  -> width
    conv6, conv7     width  -> h1 -> h2  head, ReLU between
    conv8            h2     -> 2         logits

Inference runs in float32.  Every output pixel is accumulated bias first,
then over the kernel window top-to-bottom, left-to-right, input channels
ascending within each tap.  The sum is built from element-wise ufuncs only,
so a pixel's value does not depend on the extent of the array it is computed
in; :mod:`oarsmt.parallel` relies on this to reproduce the serial output bit
for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import raster
from .errors import ContractError, FormatError, InputError

N_LAYERS = 9
RB_LAYERS = (1, 2, 3, 4, 5)
HEAD_LAYERS = (6, 7, 8)

WEIGHTS_MAGIC = b"MZNW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    width: int = 128
    input_channels: int = 3
    kernel: int = 3
    rb_layers: int = 5
    rb_activation: str = "none"

    def __post_init__(self) -> None:
        if self.width < 8:
            raise InputError(f"width must be at least 8, got {self.width}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InputError(f"kernel must be odd, got {self.kernel}")
        if self.rb_layers != 5:
            raise InputError("the recurrent block has exactly 5 layers")
        if self.rb_activation not in ("none", "relu"):
            raise InputError(f"rb_activation must be 'none' or 'relu', got {self.rb_activation!r}")

    @property
    def head_channels(self) -> tuple[int, int]:
        # 128 -> 32 -> 8 -> 2 ratios, floored for narrow networks
        return max(self.width // 4, 8), max(self.width // 16, 4)

    def layer_shapes(self) -> list[tuple[int, int]]:
        """``(out_channels, in_channels)`` for conv0..conv8."""
        w, c = self.width, self.input_channels
        h1, h2 = self.head_channels
        return [(w, c), (w, w + c), (w, w), (w, w), (w, w), (w, w), (h1, w), (h2, h1), (2, h2)]


@dataclass
class NetworkWeights:
    config: NetworkConfig
    kernels: list[np.ndarray]
    biases: list[np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.kernels = [np.ascontiguousarray(k, dtype=np.float32) for k in self.kernels]
        self.biases = [np.ascontiguousarray(b, dtype=np.float32) for b in self.biases]
        check_chain(self.config, [k.shape for k in self.kernels], [b.shape for b in self.biases], ContractError)

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(self.config, [k.copy() for k in self.kernels],
                              [b.copy() for b in self.biases], dict(self.metadata))


def check_chain(config: NetworkConfig, kernel_shapes, bias_shapes, error=ContractError) -> None:
    expected = config.layer_shapes()
    if len(kernel_shapes) != N_LAYERS or len(bias_shapes) != N_LAYERS:
        raise error(f"expected {N_LAYERS} layers, got {len(kernel_shapes)}")
    k = config.kernel
    for i, ((o, c), ks, bs) in enumerate(zip(expected, kernel_shapes, bias_shapes)):
        if tuple(ks) != (o, c, k, k):
            raise error(f"conv{i}: kernel shape {tuple(ks)} does not match expected {(o, c, k, k)}")
        if tuple(bs) != (o,):
            raise error(f"conv{i}: bias shape {tuple(bs)} does not match expected {(o,)}")


def default_metadata(config: NetworkConfig) -> dict:
    return {
        "config": asdict(config),
        "raster": {
            "cell_px": raster.CELL_PX,
            "pad_px": raster.PAD_PX,
            "channels": "rgb",
            "terminal_color": list(raster.GREEN),
            "target_marks_terminals": True,
        },
    }


def init_weights(config: NetworkConfig, seed: int, gain: float = 1.0) -> NetworkWeights:
    """Uniform(-g/sqrt(fan_in), g/sqrt(fan_in)) for kernels and biases.

    ``gain = sqrt(6)`` keeps activation variance constant through ReLU
    layers, which matters once the recurrent block is unrolled many times.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    kernels, biases = [], []
    k = config.kernel
    for o, c in config.layer_shapes():
        bound = gain / np.sqrt(c * k * k)
        kernels.append(rng.uniform(-bound, bound, size=(o, c, k, k)).astype(np.float32))
        biases.append(rng.uniform(-bound, bound, size=o).astype(np.float32))
    return NetworkWeights(config, kernels, biases, default_metadata(config))


def conv_apply(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 cross-correlation of a ``(C, H, W)`` array."""
    O, C, kh, kw = kernel.shape
    if x.ndim != 3 or x.shape[0] != C:
        raise ContractError(f"input has shape {x.shape}, layer expects {C} channels")
    p = kh // 2
    _, H, W = x.shape
    dtype = kernel.dtype
    xp = np.zeros((C, H + 2 * p, W + 2 * p), dtype=dtype)
    xp[:, p:p + H, p:p + W] = x
    out = np.empty((O, H, W), dtype=dtype)
    out[:] = bias[:, None, None]
    tmp = np.empty((O, H, W), dtype=dtype)
    w = kernel[:, :, :, :, None, None]
    for di in range(kh):
        for dj in range(kw):
            win = xp[:, di:di + H, dj:dj + W]
            for c in range(C):
                np.multiply(w[:, c, di, dj], win[c], out=tmp)
                np.add(out, tmp, out=out)
    return out


def conv2d(x: np.ndarray, layer: int, weights: NetworkWeights) -> np.ndarray:
    return conv_apply(x, weights.kernels[layer], weights.biases[layer])


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0, out=x)


def _check_input(x: np.ndarray, weights: NetworkWeights) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != weights.config.input_channels:
        raise ContractError(
            f"input has shape {x.shape}, network expects ({weights.config.input_channels}, H, W)"
        )
    return x


def project(x: np.ndarray, weights: NetworkWeights) -> np.ndarray:
    x = _check_input(x, weights)
    return _relu(conv2d(x, 0, weights))


def rb_iterate(x: np.ndarray, state: np.ndarray, weights: NetworkWeights) -> np.ndarray:
    x = _check_input(x, weights)
    if state.shape[1:] != x.shape[1:]:
        raise ContractError(f"state spatial dims {state.shape[1:]} differ from input {x.shape[1:]}")
    h = np.concatenate([state, x])
    act = weights.config.rb_activation == "relu"
    for layer in RB_LAYERS:
        h = conv2d(h, layer, weights)
        if act:
            _relu(h)
    return h


def head(state: np.ndarray, weights: NetworkWeights) -> np.ndarray:
    h = _relu(conv2d(state, 6, weights))
    h = _relu(conv2d(h, 7, weights))
    return conv2d(h, 8, weights)


def argmax_image(logits: np.ndarray) -> np.ndarray:
    """1 where the second logit is strictly larger; ties go to background."""
    if logits.shape[0] != 2:
        raise ContractError(f"expected 2 logit channels, got {logits.shape[0]}")
    return (logits[1] > logits[0]).astype(np.float32)[None]


def iterate_states(x: np.ndarray, weights: NetworkWeights) -> Iterator[np.ndarray]:
    """Yield the state after recurrent iteration 1, 2, 3, ... indefinitely."""
    x = _check_input(x, weights)
    state = project(x, weights)
    while True:
        state = rb_iterate(x, state, weights)
        yield state


def forward(
    x: np.ndarray,
    weights: NetworkWeights,
    iterations: int,
    checkpoints: Sequence[int] | None = None,
    *,
    return_logits: bool = False,
) -> list[np.ndarray]:
    """Binary predictions (or logits) after each checkpoint iteration, in order."""
    if iterations < 1:
        raise InputError("iterations must be at least 1")
    marks = sorted(set(checkpoints)) if checkpoints is not None else [iterations]
    if not marks or marks[0] < 1 or marks[-1] > iterations:
        raise InputError(f"checkpoints must lie in [1, {iterations}]")
    out = []
    wanted = set(marks)
    for t, state in enumerate(iterate_states(x, weights), start=1):
        if t in wanted:
            logits = head(state, weights)
            out.append(logits if return_logits else argmax_image(logits))
        if t >= iterations:
            break
    return out


# -- weights file --------------------------------------------------------------

def save_weights(weights: NetworkWeights, path) -> None:
    """``MZNW`` | u32 version | u32 len + JSON metadata | u32 n_layers |
    per layer: 4 x u32 dims, float32 kernel, float32 bias.  Little-endian."""
    meta = dict(weights.metadata)
    meta["config"] = asdict(weights.config)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(blob)), blob,
             struct.pack("<I", len(weights.kernels))]
    for k, b in zip(weights.kernels, weights.biases):
        parts.append(struct.pack("<IIII", *k.shape))
        parts.append(k.astype("<f4").tobytes())
        parts.append(b.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path) -> NetworkWeights:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated while reading {what}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic, not a weights file")
    version, meta_len = struct.unpack("<II", take(8, "header"))
    if version != WEIGHTS_VERSION:
        raise FormatError(f"{path}: unsupported weights version {version}")
    try:
        meta = json.loads(take(meta_len, "metadata").decode("utf-8"))
        config = NetworkConfig(**meta["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: bad metadata block: {exc}") from exc
    (n_layers,) = struct.unpack("<I", take(4, "layer count"))
    kernels, biases = [], []
    for i in range(n_layers):
        dims = struct.unpack("<IIII", take(16, f"conv{i} dims"))
        count = dims[0] * dims[1] * dims[2] * dims[3]
        kernels.append(np.frombuffer(take(4 * count, f"conv{i} kernel"), dtype="<f4").reshape(dims).astype(np.float32))
        biases.append(np.frombuffer(take(4 * dims[0], f"conv{i} bias"), dtype="<f4").astype(np.float32))
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    check_chain(config, [k.shape for k in kernels], [b.shape for b in biases], FormatError)
    return NetworkWeights(config, kernels, biases, meta)
