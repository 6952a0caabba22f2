"""Training for the recurrent network: backward pass, loss, Adam, progressive steps.

Training runs batched and channels-last, ``(B, H, W, C)``, with each
convolution lowered to one matrix product per kernel row over "bands" of
``k`` column-shifted copies of the input.  Inference in
:mod:`oarsmt.rcnn` uses a different accumulation order, so the two agree to
float32 rounding rather than bit for bit.  Gradient checks run the same code
in float64.

Progressive training: every step draws ``n`` in ``[0, m-1]`` and ``k`` in
``[1, m-n]``.  ``L_prog`` runs ``n`` iterations without gradient, then ``k``
tracked iterations from that (now constant) state; ``L_full`` runs ``m``
tracked iterations from the projection.  The step minimizes
``(1 - alpha) * L_full + alpha * L_prog``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rcnn
from .dataset import Sample, load_dataset
from .errors import ContractError, InputError
from .tc import tc_explore
from .core import is_valid_tree
from .raster import prediction_to_edges

log = logging.getLogger(__name__)


# sqrt(6) turns the fan-in uniform bound into He initialization, which keeps
# the unrolled ReLU recurrence from shrinking its signal to nothing.
HE_UNIFORM_GAIN = math.sqrt(6.0)


@dataclass(frozen=True)
class TrainConfig:
    m: int = 30
    alpha: float = 0.01
    learning_rate: float = 1e-3
    batch_size: int = 25
    epochs: int = 20
    width: int = 128
    seed: int = 0
    train_path: str | None = None
    test_path: str | None = None
    out_dir: str = "runs/train"
    rb_activation: str = "none"
    kernel: int = 3
    init_gain: float = HE_UNIFORM_GAIN
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    probe_low: int = 2
    probe_high: int = 70
    probes: tuple[int, ...] | None = None
    eval_every: int = 1
    stop_at_accuracy: float | None = None
    max_steps: int | None = None
    whiteness_threshold: float = 0.65

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError("alpha must lie in [0, 1]")
        if self.m < 2:
            raise InputError("m must be at least 2")
        if self.batch_size < 1 or self.epochs < 1:
            raise InputError("batch_size and epochs must be positive")
        if not 1 <= self.probe_low <= self.probe_high:
            raise InputError("need 1 <= probe_low <= probe_high")
        if self.probes is not None:
            object.__setattr__(self, "probes", tuple(sorted(set(int(p) for p in self.probes))))
            if not self.probes or self.probes[0] < 1:
                raise InputError("probes must be positive iteration counts")

    def probe_iterations(self) -> list[int]:
        """Explicit probes if given, else every iteration in [probe_low, probe_high]."""
        if self.probes is not None:
            return list(self.probes)
        return list(range(self.probe_low, self.probe_high + 1))

    def network_config(self) -> rcnn.NetworkConfig:
        return rcnn.NetworkConfig(width=self.width, kernel=self.kernel, rb_activation=self.rb_activation)


# -- batched layers --------------------------------------------------------------

class Params:
    """Layer parameters as matrices ``(k*k*C, O)`` in ``(di, dj, c)`` order plus biases."""

    def __init__(self, weights: rcnn.NetworkWeights, dtype=np.float32):
        self.config = weights.config
        self.k = weights.config.kernel
        self.dtype = np.dtype(dtype)
        self.mats = [k.astype(dtype).transpose(2, 3, 1, 0).reshape(-1, k.shape[0]).copy() for k in weights.kernels]
        self.biases = [b.astype(dtype).copy() for b in weights.biases]

    def to_weights(self, metadata: dict | None = None) -> rcnn.NetworkWeights:
        k = self.k
        kernels = []
        for mat, (o, c) in zip(self.mats, self.config.layer_shapes()):
            kernels.append(mat.reshape(k, k, c, o).transpose(3, 2, 0, 1).astype(np.float32))
        meta = metadata if metadata is not None else rcnn.default_metadata(self.config)
        return rcnn.NetworkWeights(self.config, kernels, [b.astype(np.float32) for b in self.biases], meta)

    def arrays(self) -> list[np.ndarray]:
        return self.mats + self.biases

    def zeros_like(self) -> list[np.ndarray]:
        return [np.zeros_like(a) for a in self.arrays()]


def _bands(x: np.ndarray, k: int) -> np.ndarray:
    """Horizontal patches of a rows-outermost ``(H, B, W, C)`` array.

    Returns ``(H + 2p, B, W, k*C)`` where entry ``[..., dj*C + c]`` is the
    padded input shifted by ``dj`` columns.  Slicing ``k`` consecutive rows out
    of this gives a contiguous matrix per kernel row.
    """
    H, B, W, C = x.shape
    p = k // 2
    xp = np.zeros((H + 2 * p, B, W + 2 * p, C), dtype=x.dtype)
    xp[p:p + H, :, p:p + W] = x
    bands = np.empty((H + 2 * p, B, W, k * C), dtype=x.dtype)
    for dj in range(k):
        bands[..., dj * C:(dj + 1) * C] = xp[:, :, dj:dj + W]
    return bands


def _unband(dbands: np.ndarray, C: int, k: int) -> np.ndarray:
    Hp, B, W, _ = dbands.shape
    p = k // 2
    dxp = np.zeros((Hp, B, W + 2 * p, C), dtype=dbands.dtype)
    for dj in range(k):
        dxp[:, :, dj:dj + W] += dbands[..., dj * C:(dj + 1) * C]
    return dxp[p:Hp - p, :, p:p + W]


class Tape:
    """Records what the backward pass needs; ``None`` tape means no tracking."""

    def __init__(self):
        self.ops: list[tuple] = []


def _conv(x: np.ndarray, layer: int, params: Params, tape: Tape | None, need_dx: bool = True) -> np.ndarray:
    H, B, W, C = x.shape
    k = params.k
    bands = _bands(x, k)
    mat = params.mats[layer].reshape(k, k * C, -1)
    rows = H * B * W
    y = bands[0:H].reshape(rows, k * C) @ mat[0]
    for di in range(1, k):
        y += bands[di:di + H].reshape(rows, k * C) @ mat[di]
    y += params.biases[layer]
    if tape is not None:
        tape.ops.append(("conv", layer, bands, need_dx))
    return y.reshape(H, B, W, -1)


def _relu(y: np.ndarray, tape: Tape | None) -> np.ndarray:
    mask = y > 0
    if tape is not None:
        tape.ops.append(("relu", mask))
    return y * mask


def _project(x, params, tape):
    return _relu(_conv(x, 0, params, tape, need_dx=False), tape)


def _rb(x, state, params, tape):
    h = np.concatenate([state, x], axis=-1)
    if tape is not None:
        tape.ops.append(("concat", state.shape[-1]))
    act = params.config.rb_activation == "relu"
    for layer in rcnn.RB_LAYERS:
        h = _conv(h, layer, params, tape)
        if act:
            h = _relu(h, tape)
    return h


def _head(state, params, tape):
    h = _relu(_conv(state, 6, params, tape), tape)
    h = _relu(_conv(h, 7, params, tape), tape)
    return _conv(h, 8, params, tape)


def _rows_outer(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.swapaxes(x, 0, 1))


def run_batch(params: Params, x: np.ndarray, iterations: int, probes: Sequence[int]) -> dict[int, np.ndarray]:
    """Untracked batched forward; logits ``(B, H, W, 2)`` at each probe iteration."""
    wanted = set(probes)
    out = {}
    xr = _rows_outer(x)
    state = _project(xr, params, None)
    for t in range(1, iterations + 1):
        state = _rb(xr, state, params, None)
        if t in wanted:
            out[t] = _rows_outer(_head(state, params, None))
    return out


def cross_entropy_loss(logits: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean two-class softmax cross-entropy and its gradient w.r.t. the logits.

    ``logits`` is ``(..., 2)`` channels-last; ``target`` holds 0/1 with the
    same leading shape.
    """
    if logits.shape[:-1] != target.shape or logits.shape[-1] != 2:
        raise ContractError(f"logits {logits.shape} do not match target {target.shape}")
    z = logits[..., 1] - logits[..., 0]
    t = target.astype(logits.dtype)
    # -log softmax of the true class, written via the logit difference
    per_px = np.logaddexp(0.0, -z) * t + np.logaddexp(0.0, z) * (1 - t)
    count = z.size
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    dz = (sig - t) / count
    grad = np.stack([-dz, dz], axis=-1).astype(logits.dtype)
    return float(per_px.mean()), grad


def _backward_tape(tape: Tape, grad: np.ndarray, params: Params) -> list[np.ndarray]:
    k = params.k
    dm = [np.zeros_like(m) for m in params.mats]
    db = [np.zeros_like(b) for b in params.biases]
    g = grad
    for op in reversed(tape.ops):
        kind = op[0]
        if kind == "conv":
            _, layer, bands, need_dx = op
            H = g.shape[0]
            kC = bands.shape[-1]
            g2 = g.reshape(-1, g.shape[-1])
            mat = params.mats[layer].reshape(k, kC, -1)
            dmat = dm[layer].reshape(k, kC, -1)
            for di in range(k):
                dmat[di] += bands[di:di + H].reshape(-1, kC).T @ g2
            db[layer] += g2.sum(axis=0)
            if need_dx:
                dbands = np.zeros_like(bands)
                for di in range(k):
                    dbands[di:di + H] += (g2 @ mat[di].T).reshape(bands[di:di + H].shape)
                g = _unband(dbands, kC // k, k)
            else:
                g = None
        elif kind == "relu":
            g = g * op[1]
        elif kind == "concat":
            g = g[..., :op[1]]
    return dm + db


def loss_and_grads(
    params: Params,
    x: np.ndarray,
    target: np.ndarray,
    n_detached: int,
    k_tracked: int,
    detached_state: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Loss after ``n_detached + k_tracked`` iterations with gradients from the last ``k``.

    ``x`` is ``(B, H, W, 3)``; ``target`` is ``(B, H, W)``.  Gradients come
    back as ``mats + biases`` in layer order.  When ``n_detached > 0`` the
    projection receives no gradient.  ``detached_state`` (rows-outermost,
    ``(H, B, W, width)``) replaces the untracked prefix when given.
    """
    if n_detached < 0 or k_tracked < 1:
        raise InputError("need n_detached >= 0 and k_tracked >= 1")
    xr = _rows_outer(x)
    tape = Tape()
    if n_detached == 0:
        state = _project(xr, params, tape)
    elif detached_state is not None:
        state = detached_state
    else:
        state = detached_prefix(params, x, n_detached)
    for _ in range(k_tracked):
        state = _rb(xr, state, params, tape)
    logits = _head(state, params, tape)
    loss, dlogits = cross_entropy_loss(logits, _rows_outer(target))
    return loss, _backward_tape(tape, dlogits, params)


def detached_prefix(params: Params, x: np.ndarray, n: int) -> np.ndarray:
    """State after ``n`` untracked iterations, rows-outermost."""
    xr = _rows_outer(x)
    state = _project(xr, params, None)
    for _ in range(n):
        state = _rb(xr, state, params, None)
    return state


def backward(
    x: np.ndarray,
    weights: rcnn.NetworkWeights,
    n_detached: int,
    k_tracked: int,
    target: np.ndarray,
    dtype=np.float64,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Single-sample convenience wrapper in the inference layout.

    ``x`` is ``(3, H, W)`` and ``target`` ``(1, H, W)`` or ``(H, W)``.
    Returns ``(loss, kernel_grads, bias_grads)`` with kernel gradients shaped
    ``(O, C, k, k)`` like :class:`NetworkWeights`.
    """
    params = Params(weights, dtype)
    xb = np.asarray(x, dtype=dtype).transpose(1, 2, 0)[None]
    tb = np.asarray(target).reshape(xb.shape[1:3])[None]
    loss, grads = loss_and_grads(params, xb, tb, n_detached, k_tracked)
    k = params.k
    kernels = []
    for g, (o, c) in zip(grads[:rcnn.N_LAYERS], weights.config.layer_shapes()):
        kernels.append(g.reshape(k, k, c, o).transpose(3, 2, 0, 1))
    return loss, kernels, grads[rcnn.N_LAYERS:]


# -- optimizer -------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def adam_init(arrays: Sequence[np.ndarray]) -> AdamState:
    return AdamState([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_update(
    arrays: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam step with bias correction."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        a -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(a.dtype)


# -- progressive training ------------------------------------------------------------

@dataclass
class TrainState:
    params: Params
    adam: AdamState
    config: TrainConfig
    step: int = 0


def new_train_state(config: TrainConfig, weights: rcnn.NetworkWeights | None = None) -> TrainState:
    if weights is None:
        weights = rcnn.init_weights(config.network_config(), config.seed, config.init_gain)
    params = Params(weights, np.float32)
    return TrainState(params, adam_init(params.arrays()), config)


def stack_batch(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.image.transpose(1, 2, 0) for s in samples]).astype(np.float32)
    t = np.stack([s.target[0] for s in samples]).astype(np.float32)
    return x, t


def draw_progressive(rng: np.random.Generator, m: int) -> tuple[int, int]:
    """``(n, k)`` with ``n`` uniform in ``[0, m-1]`` and ``k`` uniform in ``[1, m-n]``."""
    n = int(rng.integers(0, m))
    return n, int(rng.integers(1, m - n + 1))


def progressive_step(
    state: TrainState,
    x: np.ndarray,
    target: np.ndarray,
    rng: np.random.Generator,
    *,
    draw: tuple[int, int] | None = None,
) -> tuple[float, float]:
    """One optimizer step; returns ``(L_full, L_prog)``."""
    cfg = state.config
    m, alpha = cfg.m, cfg.alpha
    n, k = draw_progressive(rng, m)
    if draw is not None:
        n, k = draw
    params = state.params
    loss_full = loss_prog = float("nan")
    grads_full = grads_prog = None
    if alpha < 1.0:
        loss_full, grads_full = loss_and_grads(params, x, target, 0, m)
    if alpha > 0.0:
        if (n, k) == (0, m) and grads_full is not None:
            loss_prog, grads_prog = loss_full, grads_full
        else:
            loss_prog, grads_prog = loss_and_grads(params, x, target, n, k)
    if grads_full is None:
        grads = grads_prog
    elif grads_prog is None:
        grads = grads_full
    else:
        grads = [(1.0 - alpha) * gf + alpha * gp for gf, gp in zip(grads_full, grads_prog)]
    adam_update(params.arrays(), grads, state.adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    state.step += 1
    return loss_full, loss_prog


# -- evaluation and the training loop --------------------------------------------------

def evaluate(
    params: Params,
    samples: Sequence[Sample],
    probes: Sequence[int],
    threshold: float = 0.65,
    batch_size: int = 50,
) -> dict[str, list[float]]:
    """Per-probe accuracy with TC validation (``tc``) and plain decoding (``exact``).

    A sample counts as solved at a probe when the extracted tree is valid
    for the maze and has the optimal length.
    """
    probes = sorted(set(probes))
    tc_hits = np.zeros(len(probes))
    exact_hits = np.zeros(len(probes))
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo:lo + batch_size]
        x, _ = stack_batch(chunk)
        logits = run_batch(params, x, probes[-1], probes)
        for pi, p in enumerate(probes):
            preds = (logits[p][..., 1] > logits[p][..., 0]).astype(np.float32)
            for s, pred in zip(chunk, preds):
                tc_hits[pi] += judge_tc(pred[None], s, threshold)
                exact_hits[pi] += judge_decoded(pred[None], s)
    n = max(len(samples), 1)
    return {"probes": probes, "tc": list(tc_hits / n), "exact": list(exact_hits / n)}


def judge_tc(pred: np.ndarray, sample: Sample, threshold: float = 0.65) -> bool:
    report = tc_explore(pred, sample.instance, threshold)
    if not report.solved:
        return False
    tree = report.extracted_tree
    return is_valid_tree(sample.instance, tree).valid and len(tree) == sample.optimal_length


def judge_decoded(pred: np.ndarray, sample: Sample) -> bool:
    tree = prediction_to_edges(pred, sample.instance)
    return is_valid_tree(sample.instance, tree).valid and len(tree) == sample.optimal_length


@dataclass
class TrainOutcome:
    best_path: Path
    metrics_path: Path
    best_epoch: int
    best_accuracy: float
    steps: int
    history: list[dict] = field(default_factory=list)


def train(
    config: TrainConfig,
    train_set: Sequence[Sample] | None = None,
    eval_set: Sequence[Sample] | None = None,
) -> TrainOutcome:
    """Progressive training with per-epoch evaluation and checkpointing.

    Each evaluated epoch writes ``weights_epoch{NNN}.mznw``; the epoch with
    the highest peak TC accuracy over the probe range is copied to
    ``best.mznw``.  Metrics are appended to ``metrics.jsonl``.
    """
    if train_set is None:
        if config.train_path is None:
            raise InputError("no training data: pass train_set or set train_path")
        train_set = load_dataset(config.train_path)
    if eval_set is None:
        eval_set = load_dataset(config.test_path) if config.test_path else train_set
    if not train_set:
        raise InputError("training set is empty")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl"
    metrics_path.unlink(missing_ok=True)

    state = new_train_state(config)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    probes = config.probe_iterations()
    best = (-1.0, 0)
    history = []

    def emit(record: dict) -> None:
        with open(metrics_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    emit({"kind": "config", **asdict(config)})
    done = False
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        for lo in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[lo:lo + config.batch_size]]
            x, t = stack_batch(batch)
            l_full, l_prog = progressive_step(state, x, t, rng)
            emit({"kind": "step", "epoch": epoch, "step": state.step, "L_full": l_full, "L_prog": l_prog})
            if config.max_steps is not None and state.step >= config.max_steps:
                done = True
                break
        if epoch % config.eval_every == 0 or done or epoch == config.epochs:
            t0 = time.perf_counter()
            acc = evaluate(state.params, eval_set, probes, config.whiteness_threshold)
            peak = max(acc["tc"])
            weights = state.params.to_weights(_metadata(config, epoch, state.step))
            rcnn.save_weights(weights, out / f"weights_epoch{epoch:03d}.mznw")
            if peak > best[0]:
                best = (peak, epoch)
                rcnn.save_weights(weights, out / "best.mznw")
            record = {"kind": "eval", "epoch": epoch, "step": state.step, "peak_tc": peak, **acc}
            emit(record)
            history.append(record)
            log.info("epoch %d step %d peak tc accuracy %.3f (eval %.1fs)", epoch, state.step, peak,
                     time.perf_counter() - t0)
            if config.stop_at_accuracy is not None and peak >= config.stop_at_accuracy:
                done = True
        if done:
            break
    return TrainOutcome(out / "best.mznw", metrics_path, best[1], best[0], state.step, history)


def _metadata(config: TrainConfig, epoch: int, step: int) -> dict:
    meta = rcnn.default_metadata(config.network_config())
    meta["training"] = {
        "epoch": epoch,
        "step": step,
        "m": config.m,
        "alpha": config.alpha,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "adam": {"beta1": config.beta1, "beta2": config.beta2, "eps": config.eps},
    }
    return meta
