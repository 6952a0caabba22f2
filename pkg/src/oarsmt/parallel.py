"""Section-split inference: horizontal strips with halos, run concurrently.

A superstep is one module's convolution stack (projection: 1 layer,
recurrent block: 5, head: 3).  Each strip is cut from the current state with
``layers * (kernel // 2)`` extra rows on every interior side, convolved on
its own, trimmed back to its valid rows, and the strips are stacked again.
Rows near a cut see zero padding instead of their true neighbors, but that
contamination travels one row per layer and is trimmed away.

Because :func:`oarsmt.rcnn.conv_apply` accumulates every output pixel in a
fixed order using element-wise operations only, a pixel computed inside a
strip is bit-for-bit the pixel the whole-image pass computes.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rcnn
from .errors import ContractError, InputError, PlanningError

PROJECTION_LAYERS = 1
RB_LAYERS = len(rcnn.RB_LAYERS)
HEAD_LAYERS = len(rcnn.HEAD_LAYERS)
FULL_STACK_LAYERS = rcnn.N_LAYERS


@dataclass(frozen=True)
class SectionPlan:
    height: int
    n_sections: int
    halo: int
    valid: tuple[tuple[int, int], ...]
    sources: tuple[tuple[int, int], ...]
    axis: str = "rows"

    def sources_for(self, halo: int) -> list[tuple[int, int]]:
        """Source row ranges for a superstep needing ``halo`` rows of context."""
        return [(max(0, a - halo), min(self.height, b + halo)) for a, b in self.valid]


def plan_sections(height: int, n_sections: int, layers_per_superstep: int = FULL_STACK_LAYERS,
                  kernel: int = 3) -> SectionPlan:
    """Equal-height strips; the last one absorbs the remainder."""
    if height < 1 or n_sections < 1 or layers_per_superstep < 0 or kernel < 1:
        raise PlanningError("height, n_sections and kernel must be positive")
    halo = layers_per_superstep * (kernel // 2)
    if n_sections > height / (2 * halo + 1):
        raise PlanningError(
            f"{n_sections} sections of a {height}-row image would be thinner than "
            f"their {halo}-row halos (limit {height // (2 * halo + 1)})"
        )
    base = height // n_sections
    valid = []
    for i in range(n_sections):
        a = i * base
        b = height if i == n_sections - 1 else a + base
        valid.append((a, b))
    plan = SectionPlan(height, n_sections, halo, tuple(valid), ())
    return SectionPlan(height, n_sections, halo, plan.valid, tuple(plan.sources_for(halo)))


@dataclass
class SuperstepTiming:
    name: str
    split: float
    compute: float
    merge: float


class _Runner:
    def __init__(self, plan: SectionPlan, kernel: int, pool: ThreadPoolExecutor | None,
                 timings: list[SuperstepTiming] | None):
        self.plan = plan
        self.kernel = kernel
        self.pool = pool
        self.timings = timings

    def superstep(self, name: str, layers: int, fn: Callable[..., np.ndarray], *arrays: np.ndarray) -> np.ndarray:
        plan = self.plan
        if plan.n_sections == 1:
            t0 = time.perf_counter()
            out = fn(*arrays)
            if self.timings is not None:
                self.timings.append(SuperstepTiming(name, 0.0, time.perf_counter() - t0, 0.0))
            return out
        t0 = time.perf_counter()
        sources = plan.sources_for(layers * (self.kernel // 2))
        pieces = [[a[:, lo:hi] for a in arrays] for lo, hi in sources]
        t1 = time.perf_counter()
        if self.pool is None:
            results = [fn(*p) for p in pieces]
        else:
            results = list(self.pool.map(lambda p: fn(*p), pieces))
        t2 = time.perf_counter()
        out = np.concatenate(
            [r[:, a - lo:b - lo] for r, (a, b), (lo, _) in zip(results, plan.valid, sources)], axis=1
        )
        t3 = time.perf_counter()
        if self.timings is not None:
            self.timings.append(SuperstepTiming(name, t1 - t0, t2 - t1, t3 - t2))
        return out


def _project(weights):
    return lambda x: rcnn.project(x, weights)


def _rb(weights):
    return lambda x, s: rcnn.rb_iterate(x, s, weights)


def _head(weights):
    return lambda s: rcnn.head(s, weights)


def parallel_forward(
    x: np.ndarray,
    weights: rcnn.NetworkWeights,
    iterations: int,
    plan: SectionPlan,
    checkpoints: Sequence[int] | None = None,
    *,
    return_logits: bool = False,
    workers: int | None = None,
    timings: list[SuperstepTiming] | None = None,
) -> list[np.ndarray]:
    """Same contract as :func:`oarsmt.rcnn.forward`, computed strip by strip."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != weights.config.input_channels:
        raise ContractError(f"input has shape {x.shape}, network expects ({weights.config.input_channels}, H, W)")
    if x.shape[1] != plan.height:
        raise ContractError(f"plan covers {plan.height} rows but the input has {x.shape[1]}")
    if iterations < 1:
        raise InputError("iterations must be at least 1")
    marks = sorted(set(checkpoints)) if checkpoints is not None else [iterations]
    if not marks or marks[0] < 1 or marks[-1] > iterations:
        raise InputError(f"checkpoints must lie in [1, {iterations}]")
    n_workers = workers if workers is not None else plan.n_sections
    pool = ThreadPoolExecutor(n_workers) if plan.n_sections > 1 and n_workers > 1 else None
    try:
        run = _Runner(plan, weights.config.kernel, pool, timings)
        state = run.superstep("projection", PROJECTION_LAYERS, _project(weights), x)
        wanted = set(marks)
        out = []
        for t in range(1, iterations + 1):
            state = run.superstep(f"rb{t}", RB_LAYERS, _rb(weights), x, state)
            if t in wanted:
                logits = run.superstep(f"head{t}", HEAD_LAYERS, _head(weights), state)
                out.append(logits if return_logits else rcnn.argmax_image(logits))
        return out
    finally:
        if pool is not None:
            pool.shutdown()


def _full_stack(weights):
    def fn(x):
        return rcnn.head(rcnn.rb_iterate(x, rcnn.project(x, weights), weights), weights)
    return fn


def time_single_pass(x: np.ndarray, weights: rcnn.NetworkWeights, n_sections: int,
                     workers: int | None = None) -> tuple[float, np.ndarray, list[SuperstepTiming]]:
    """Wall-clock of one superstep covering all nine layers (projection, one
    recurrent iteration, head), split into ``n_sections`` strips."""
    x = np.asarray(x, dtype=np.float32)
    plan = plan_sections(x.shape[1], n_sections, FULL_STACK_LAYERS, weights.config.kernel)
    timings: list[SuperstepTiming] = []
    n_workers = workers if workers is not None else n_sections
    pool = ThreadPoolExecutor(n_workers) if n_sections > 1 and n_workers > 1 else None
    try:
        run = _Runner(plan, weights.config.kernel, pool, timings)
        t0 = time.perf_counter()
        out = run.superstep("full", FULL_STACK_LAYERS, _full_stack(weights), x)
        elapsed = time.perf_counter() - t0
    finally:
        if pool is not None:
            pool.shutdown()
    return elapsed, out, timings
