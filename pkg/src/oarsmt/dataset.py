"""Datasets of generated instances with certified-optimal targets.

On disk a dataset is a directory::

    manifest.json          generator identity, dataset config, one entry per instance
    instances/<id>.json    instance interchange records
    targets/<id>.pgm       target rasters (plain PGM)

Every file is a pure function of the config, so regenerating produces
byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mazegen, raster
from .core import MazeInstance, SteinerTree, dumps_instance, load_instance
from .errors import FormatError, InputError
from .exact import dreyfus_wagner

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class DatasetConfig:
    rows: int = 5
    cols: int = 5
    terminal_counts: tuple[int, ...] = (2, 3, 4)
    count: int = 100
    wall_removals: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "terminal_counts", tuple(int(n) for n in self.terminal_counts))
        if self.rows < 2 or self.cols < 2:
            raise InputError("mazes need at least 2 rows and 2 columns")
        if not self.terminal_counts:
            raise InputError("terminal_counts is empty")
        for n in self.terminal_counts:
            if not 2 <= n <= self.rows * self.cols:
                raise InputError(f"terminal count {n} does not fit a {self.rows}x{self.cols} maze")
        if self.count < 0:
            raise InputError("count must be non-negative")

    @property
    def walls(self) -> int:
        if self.wall_removals is None:
            return mazegen.default_wall_removals(self.rows, self.cols)
        return self.wall_removals

    def instance_configs(self) -> list[mazegen.GenConfig]:
        """Terminal counts cycle through the mix, so each gets an equal share."""
        mix = self.terminal_counts
        return [
            mazegen.GenConfig(self.rows, self.cols, mix[i % len(mix)], self.walls, self.seed + i)
            for i in range(self.count)
        ]

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetConfig":
        known = {k: data[k] for k in ("rows", "cols", "terminal_counts", "count", "wall_removals", "seed") if k in data}
        return cls(**known)


@dataclass
class Sample:
    instance: MazeInstance
    image: np.ndarray
    target: np.ndarray
    optimal_length: int
    tree: SteinerTree | None = None

    @property
    def n_terminals(self) -> int:
        return self.instance.n_terminals


def make_sample(instance: MazeInstance) -> Sample:
    result = dreyfus_wagner(instance)
    return Sample(
        instance=instance,
        image=raster.instance_to_image(instance),
        target=raster.tree_to_target(instance, result.tree),
        optimal_length=result.length,
        tree=result.tree,
    )


def generate_samples(config: DatasetConfig) -> list[Sample]:
    return [make_sample(mazegen.generate_instance(gc)) for gc in config.instance_configs()]


def manifest_for(config: DatasetConfig, samples: Sequence[Sample]) -> dict:
    gcs = config.instance_configs()
    return {
        "version": MANIFEST_VERSION,
        "generator": {"name": mazegen.GENERATOR_NAME, "version": mazegen.GENERATOR_VERSION},
        "config": {**asdict(config), "terminal_counts": list(config.terminal_counts)},
        "wall_removals": config.walls,
        "terminal_mix": {str(n): sum(1 for g in gcs if g.n_terminals == n) for n in config.terminal_counts},
        "target_solver": "dreyfus_wagner",
        "instances": [
            {"id": s.instance.id, **gc.to_dict(), "optimal_length": s.optimal_length}
            for gc, s in zip(gcs, samples)
        ],
    }


def write_dataset(directory, config: DatasetConfig, samples: Sequence[Sample] | None = None) -> Path:
    """Generate (unless given) and write a dataset; returns the manifest path."""
    if samples is None:
        samples = generate_samples(config)
    root = Path(directory)
    (root / "instances").mkdir(parents=True, exist_ok=True)
    (root / "targets").mkdir(parents=True, exist_ok=True)
    for s in samples:
        (root / "instances" / f"{s.instance.id}.json").write_text(dumps_instance(s.instance), encoding="utf-8")
        raster.write_pnm(root / "targets" / f"{s.instance.id}.pgm", s.target)
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest_for(config, samples), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise FormatError(f"{directory}: no manifest.json, not a dataset directory")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION or "instances" not in manifest:
        raise FormatError(f"{path}: unsupported manifest")
    return manifest


def load_dataset(directory) -> list[Sample]:
    """Reload a dataset; targets are checked against the stored optimum."""
    root = Path(directory)
    samples = []
    for entry in read_manifest(root)["instances"]:
        ident = entry["id"]
        inst = load_instance(root / "instances" / f"{ident}.json")
        target = raster.read_pnm(root / "targets" / f"{ident}.pgm")
        tree = raster.prediction_to_edges(target, inst)
        if len(tree) != entry["optimal_length"]:
            raise FormatError(f"{ident}: target tree has {len(tree)} edges, manifest says {entry['optimal_length']}")
        samples.append(Sample(inst, raster.instance_to_image(inst), target, int(entry["optimal_length"]), tree))
    return samples
