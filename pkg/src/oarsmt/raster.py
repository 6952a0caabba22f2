"""Graph <-> image codec.

An R x C node lattice becomes a (2R-1) x (2C-1) lattice of cells: node
``(r, c)`` is cell ``(2r, 2c)``, the cell between two adjacent nodes is their
connector, and cells with both coordinates odd are always wall.  Each cell is
a 2x2 pixel block and the maze is framed by 3 black pixels, so an 11 x 11
maze is a 48 x 48 image.

Images are float32 arrays shaped ``(channels, height, width)``.  Maze inputs
are RGB with white passages, black walls and green terminals; targets and
predictions have a single channel.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import GridGraph, MazeInstance, Node, SteinerTree, _components, spanning_tree
from .errors import DecodeError, FormatError, InputError

CELL_PX = 2
PAD_PX = 3

WHITE = (1.0, 1.0, 1.0)
BLACK = (0.0, 0.0, 0.0)
GREEN = (0.0, 1.0, 0.0)

DECODE_THRESHOLD = 0.5

TENSOR_MAGIC = b"MZTS"


def image_dims(rows: int, cols: int) -> tuple[int, int]:
    if rows < 2 or cols < 2:
        raise InputError(f"grid must be at least 2x2, got {rows}x{cols}")
    return CELL_PX * (2 * rows - 1) + 2 * PAD_PX, CELL_PX * (2 * cols - 1) + 2 * PAD_PX


def lattice_dims(height: int, width: int) -> tuple[int, int]:
    """Inverse of :func:`image_dims`; raises DecodeError for impossible sizes."""
    out = []
    for size in (height, width):
        inner = size - 2 * PAD_PX
        if inner <= 0 or inner % CELL_PX:
            raise DecodeError(f"image size {size} is not {CELL_PX}*(2n-1) + {2 * PAD_PX}")
        cells = inner // CELL_PX
        if cells % 2 == 0 or cells < 3:
            raise DecodeError(f"image size {size} gives an even or too small cell count {cells}")
        out.append((cells + 1) // 2)
    return out[0], out[1]


def cell_origin(ci: int, cj: int) -> tuple[int, int]:
    """Top-left pixel of a cell's block."""
    return PAD_PX + CELL_PX * ci, PAD_PX + CELL_PX * cj


def node_cell(node: Node) -> tuple[int, int]:
    return 2 * node[0], 2 * node[1]


def connector_cell(a: Node, b: Node) -> tuple[int, int]:
    return a[0] + b[0], a[1] + b[1]


def cells_to_pixels(cells: np.ndarray) -> np.ndarray:
    """Expand a ``(..., ci, cj)`` cell array to padded pixels."""
    px = np.repeat(np.repeat(cells, CELL_PX, axis=-2), CELL_PX, axis=-1)
    pad = [(0, 0)] * (px.ndim - 2) + [(PAD_PX, PAD_PX), (PAD_PX, PAD_PX)]
    return np.pad(px, pad)


def cell_means(image: np.ndarray) -> np.ndarray:
    """Mean pixel value of every cell block, per channel: ``(C, 2R-1, 2C-1)``."""
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[None]
    C, H, W = img.shape
    inner = img[:, PAD_PX:H - PAD_PX, PAD_PX:W - PAD_PX]
    ci, cj = inner.shape[1] // CELL_PX, inner.shape[2] // CELL_PX
    return inner.reshape(C, ci, CELL_PX, cj, CELL_PX).mean(axis=(2, 4))


def _passage_cells(graph: GridGraph) -> np.ndarray:
    R, C = graph.rows, graph.cols
    cells = np.zeros((2 * R - 1, 2 * C - 1), dtype=np.float32)
    cells[::2, ::2] = 1.0
    flags = graph.open
    cells[::2, 1::2] = (flags[:, :-1] & 2) > 0  # EAST
    cells[1::2, ::2] = (flags[:-1, :] & 4) > 0  # SOUTH
    return cells


def instance_to_image(instance: MazeInstance) -> np.ndarray:
    cells = _passage_cells(instance.graph)
    rgb = np.stack([cells, cells, cells])
    for t in instance.terminals:
        ci, cj = node_cell(t)
        rgb[:, ci, cj] = GREEN
    return cells_to_pixels(rgb).astype(np.float32)


def render_edges(rows: int, cols: int, edges) -> np.ndarray:
    """Single-channel image lighting the node and connector cells of ``edges``."""
    cells = np.zeros((2 * rows - 1, 2 * cols - 1), dtype=np.float32)
    for a, b in edges:
        cells[node_cell(a)] = 1.0
        cells[node_cell(b)] = 1.0
        cells[connector_cell(a, b)] = 1.0
    return cells_to_pixels(cells[None]).astype(np.float32)


def tree_to_target(instance: MazeInstance, tree: SteinerTree) -> np.ndarray:
    """Target raster of a tree; every edge must be an open passage."""
    graph = instance.graph
    for a, b in tree.edges:
        if not graph.is_open(a, b):
            raise InputError(f"tree edge {a}-{b} is not an open passage of the instance")
    return render_edges(graph.rows, graph.cols, tree.edges)


def _block_color(image: np.ndarray, ci: int, cj: int) -> tuple[float, ...]:
    y, x = cell_origin(ci, cj)
    block = image[:, y:y + CELL_PX, x:x + CELL_PX].reshape(image.shape[0], -1)
    if np.any(block != block[:, :1]):
        raise DecodeError(f"cell ({ci}, {cj}) at pixel ({y}, {x}) is not uniformly painted")
    return tuple(float(v) for v in block[:, 0])


def image_to_instance(image: np.ndarray, *, seed: int = 0, instance_id: str = "") -> MazeInstance:
    """Decode a rasterized maze.  Seed and id are not part of the image."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DecodeError(f"expected a (3, H, W) image, got shape {img.shape}")
    rows, cols = lattice_dims(img.shape[1], img.shape[2])
    if not np.all((img == 0) | (img == 1)):
        bad = np.argwhere((img != 0) & (img != 1))[0]
        raise DecodeError(f"non-binary pixel at {tuple(int(v) for v in bad[1:])}")
    frame = np.ones(img.shape[1:], dtype=bool)
    frame[PAD_PX:-PAD_PX, PAD_PX:-PAD_PX] = False
    if np.any(img[:, frame]):
        y, x = np.argwhere(frame & img.any(axis=0))[0]
        raise DecodeError(f"padding pixel ({y}, {x}) is not black")
    edges = []
    terminals = []
    for ci in range(2 * rows - 1):
        for cj in range(2 * cols - 1):
            color = _block_color(img, ci, cj)
            where = f"cell ({ci}, {cj}) at pixel {cell_origin(ci, cj)}"
            if ci % 2 and cj % 2:
                if color != BLACK:
                    raise DecodeError(f"{where} should be wall")
            elif ci % 2 == 0 and cj % 2 == 0:
                if color == GREEN:
                    terminals.append((ci // 2, cj // 2))
                elif color != WHITE:
                    raise DecodeError(f"{where} is a node and must be white or green")
            else:
                if color == WHITE:
                    if ci % 2:
                        edges.append(((ci // 2, cj // 2), (ci // 2 + 1, cj // 2)))
                    else:
                        edges.append(((ci // 2, cj // 2), (ci // 2, cj // 2 + 1)))
                elif color != BLACK:
                    raise DecodeError(f"{where} is a connector and must be white or black")
    graph = GridGraph.from_edges(rows, cols, edges)
    try:
        return MazeInstance(graph=graph, terminals=tuple(terminals), seed=seed, id=instance_id)
    except InputError as exc:
        raise DecodeError(f"decoded maze is not a valid instance: {exc}") from exc


def prediction_to_edges(pred: np.ndarray, instance: MazeInstance) -> SteinerTree:
    """Read a binary prediction back as a tree.

    An edge is kept when its connector and both end-node cells average at
    least 0.5.  Of the resulting components, the one holding the most
    terminals (then the most nodes) is reduced to a BFS spanning tree rooted
    at its first terminal.  Walls are not consulted, so the result may be
    invalid for the instance; callers judge it.
    """
    means = cell_means(pred)[0]
    R, C = instance.rows, instance.cols
    if means.shape != (2 * R - 1, 2 * C - 1):
        raise InputError(f"prediction cell grid {means.shape} does not fit a {R}x{C} maze")
    on = means >= DECODE_THRESHOLD
    edges = []
    for r in range(R):
        for c in range(C):
            if not on[2 * r, 2 * c]:
                continue
            if c + 1 < C and on[2 * r, 2 * c + 1] and on[2 * r, 2 * c + 2]:
                edges.append(((r, c), (r, c + 1)))
            if r + 1 < R and on[2 * r + 1, 2 * c] and on[2 * r + 2, 2 * c]:
                edges.append(((r, c), (r + 1, c)))
    if not edges:
        return SteinerTree()
    _, _, parent = _components(edges)

    def root(x):
        while parent[x] != x:
            x = parent[x]
        return x

    groups: dict[Node, list[Node]] = {}
    for node in parent:
        groups.setdefault(root(node), []).append(node)
    terms = set(instance.terminals)
    best = max(groups.values(), key=lambda g: (len(terms.intersection(g)), len(g), [-x for x in min(g)]))
    hits = sorted(terms.intersection(best), key=instance.terminals.index)
    start = hits[0] if hits else min(best)
    keep = set(best)
    return SteinerTree(frozenset(spanning_tree([e for e in edges if e[0] in keep], root=start)))


# -- pixmaps and raw tensors ---------------------------------------------------

def write_pnm(path, image: np.ndarray) -> None:
    """Plain-text PGM (P2) for one channel, PPM (P3) for three; maxval 255."""
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[None]
    C, H, W = img.shape
    if C not in (1, 3):
        raise InputError(f"pixmaps need 1 or 3 channels, got {C}")
    vals = np.clip(np.rint(img * 255), 0, 255).astype(np.int64)
    lines = ["P2" if C == 1 else "P3", f"{W} {H}", "255"]
    px = vals.transpose(1, 2, 0).reshape(H, W * C)
    lines.extend(" ".join(str(v) for v in row) for row in px)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pnm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] not in ("P2", "P3"):
        raise FormatError(f"{path}: not a plain PGM/PPM file")
    C = 1 if tokens[0] == "P2" else 3
    try:
        W, H, maxval = (int(t) for t in tokens[1:4])
        vals = np.array([int(t) for t in tokens[4:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: bad pixmap header or data") from exc
    if vals.size != W * H * C:
        raise FormatError(f"{path}: expected {W * H * C} samples, found {vals.size}")
    return (vals.reshape(H, W, C).transpose(2, 0, 1) / maxval).astype(np.float32)


def write_tensor(path, image: np.ndarray) -> None:
    """16-byte header (magic, channels, height, width as LE u32) + LE float32 data."""
    img = np.asarray(image, dtype="<f4")
    if img.ndim == 2:
        img = img[None]
    C, H, W = img.shape
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC + struct.pack("<III", C, H, W))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: missing tensor header")
    C, H, W = struct.unpack("<III", data[4:16])
    body = data[16:]
    if len(body) != 4 * C * H * W:
        raise FormatError(f"{path}: expected {4 * C * H * W} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(C, H, W).astype(np.float32)
