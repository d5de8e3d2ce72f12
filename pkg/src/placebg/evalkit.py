"""Grid-cell evaluation of LoC maps against bounding boxes, and the k-means baseline.

Cells from every query are ranked jointly; an annotated object counts as
detected when the selected cells touching its box cover it with enough IoU.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .imaging import resize_area
from .nn import TrainConfig, init_autoencoder, train
from .normalizer import DEFAULT_COEFFICIENT, normalizer_fit
from .rae import AeSet, generation_seed, raw_errors

DEFAULT_CELL_SIZE = 10
KMEANS_FEATURE_SHAPE = (8, 8)


@dataclass
class CellGrid:
    """Max-pooled LoC per cell; ``cells[r, c]`` covers rows ``r*cell_size`` onwards."""

    cells: np.ndarray
    cell_size: int
    image_shape: tuple[int, int]
    image_id: str = ""

    def cell_box(self, r: int, c: int) -> tuple[int, int, int, int]:
        h, w = self.image_shape
        s = self.cell_size
        return c * s, r * s, min((c + 1) * s, w), min((r + 1) * s, h)


@dataclass
class EvalReport:
    method: str
    x_percent: float
    iou_min: float
    accuracy: float
    detected: int
    total: int

    def row(self) -> list:
        return [self.method, self.x_percent, self.iou_min, self.accuracy, self.detected, self.total]


REPORT_COLUMNS = ["method", "X", "iou_min", "accuracy", "detected", "total"]


def pool_cells(locmap, cell_size: int = DEFAULT_CELL_SIZE) -> CellGrid:
    """Max-pool a LoC map (LoCMap or 2-D array) over square cells; edge cells may be smaller."""
    values = np.asarray(getattr(locmap, "values", locmap), dtype=np.float64)
    image_id = getattr(locmap, "image_id", "")
    cell_size = int(cell_size)
    if cell_size < 1:
        raise InvalidInputError("cell_size must be >= 1")
    if values.ndim != 2:
        raise InvalidInputError("LoC map must be 2-D")
    h, w = values.shape
    rows, cols = math.ceil(h / cell_size), math.ceil(w / cell_size)
    padded = np.full((rows * cell_size, cols * cell_size), -np.inf)
    padded[:h, :w] = values
    cells = padded.reshape(rows, cell_size, cols, cell_size).max(axis=(1, 3))
    return CellGrid(cells, cell_size, (h, w), image_id)


def box_area(b) -> int:
    return max(b[2] - b[0], 0) * max(b[3] - b[1], 0)


def iou(a, b) -> float:
    """Intersection over union of two ``(x_min, y_min, x_max, y_max)`` boxes, max exclusive."""
    ix = max(min(a[2], b[2]) - max(a[0], b[0]), 0)
    iy = max(min(a[3], b[3]) - max(a[1], b[1]), 0)
    inter = ix * iy
    union = box_area(a) + box_area(b) - inter
    return inter / union if union > 0 else 0.0


def select_top_cells(grids, x_percent: float) -> list[np.ndarray]:
    """Boolean masks of the top ``x_percent`` of all cells, ranked jointly.

    The budget is ``ceil(total * X / 100)`` cells; ties go to the earlier grid,
    then the lower cell index.
    """
    if not 0.0 < x_percent <= 100.0:
        raise InvalidInputError(f"x_percent must lie in (0, 100], got {x_percent}")
    flat = np.concatenate([g.cells.ravel() for g in grids])
    budget = min(math.ceil(flat.size * x_percent / 100.0 - 1e-9), flat.size)
    order = np.lexsort((np.arange(flat.size), -flat))
    chosen = np.zeros(flat.size, dtype=bool)
    chosen[order[:budget]] = True
    masks, start = [], 0
    for g in grids:
        masks.append(chosen[start : start + g.cells.size].reshape(g.cells.shape))
        start += g.cells.size
    return masks


def coverage_iou(grid: CellGrid, selected: np.ndarray, box) -> float:
    """IoU between ``box`` and the union of selected cells that intersect it."""
    s = grid.cell_size
    x0, y0, x1, y1 = box
    r0, r1 = y0 // s, (y1 - 1) // s
    c0, c1 = x0 // s, (x1 - 1) // s
    # work in a local window that holds the box and every touching cell
    wy0, wx0 = r0 * s, c0 * s
    wy1 = min((r1 + 1) * s, grid.image_shape[0])
    wx1 = min((c1 + 1) * s, grid.image_shape[1])
    cover = np.zeros((wy1 - wy0, wx1 - wx0), dtype=bool)
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if selected[r, c]:
                cover[r * s - wy0 : (r + 1) * s - wy0, c * s - wx0 : (c + 1) * s - wx0] = True
    bb = np.zeros_like(cover)
    bb[y0 - wy0 : y1 - wy0, x0 - wx0 : x1 - wx0] = True
    union = np.count_nonzero(cover | bb)
    return np.count_nonzero(cover & bb) / union if union else 0.0


def top_x_accuracy(grids, annots, x_percent: float, iou_min: float, method: str = "rAE") -> EvalReport:
    """Fraction of annotated objects covered with IoU >= ``iou_min`` by the top-X% cells."""
    grids, annots = list(grids), list(annots)
    if not annots:
        raise InvalidInputError("top_x_accuracy needs at least one annotation")
    if not 0.0 < iou_min <= 1.0:
        raise InvalidInputError(f"iou_min must lie in (0, 1], got {iou_min}")
    masks = select_top_cells(grids, x_percent)
    by_id = {g.image_id: k for k, g in enumerate(grids)}
    if len(by_id) != len(grids):
        raise InvalidInputError("cell grids must have distinct image ids")
    detected = 0
    for a in annots:
        if a.image_id not in by_id:
            raise InvalidInputError(f"annotation refers to unscored image {a.image_id!r}")
        k = by_id[a.image_id]
        a.validate(grids[k].image_shape)
        if coverage_iou(grids[k], masks[k], a.box) >= iou_min:
            detected += 1
    return EvalReport(method, float(x_percent), float(iou_min), detected / len(annots), detected, len(annots))


def evaluate(grids, annots, x_list, iou_list, method: str = "rAE") -> list[EvalReport]:
    """One report per (X, iou_min) combination."""
    grids = list(grids)
    return [top_x_accuracy(grids, annots, x, t, method) for x in x_list for t in iou_list]


def save_report_csv(path, reports) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.row())


def random_grids(shapes_and_ids, seed: int, cell_size: int = DEFAULT_CELL_SIZE) -> list[CellGrid]:
    """Control scores: uniform random per-pixel LoC, pooled like real maps."""
    rng = np.random.default_rng(seed)
    return [pool_cells(_IdMap(rng.random(shape), iid), cell_size) for shape, iid in shapes_and_ids]


@dataclass
class _IdMap:
    values: np.ndarray
    image_id: str


# ---------------------------------------------------------------- k-means baseline


def kmeans_features(images) -> np.ndarray:
    """Each image area-downsampled to 8x8 and flattened."""
    return np.stack([resize_area(np.asarray(im, dtype=np.float64), KMEANS_FEATURE_SHAPE).ravel() for im in images])


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    # total within-cluster squared distance after each Lloyd iteration
    inertia: list[float]


def lloyd(x: np.ndarray, k: int, seed: int, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding; empty clusters take the farthest point."""
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must lie in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)
    centroids = [x[rng.integers(n)]]
    for _ in range(1, k):
        d = _sq_dists(x, np.array(centroids)).min(axis=1)
        total = d.sum()
        idx = rng.choice(n, p=d / total) if total > 0 else rng.integers(n)
        centroids.append(x[idx])
    centroids = np.array(centroids, dtype=np.float64)
    labels = np.full(n, -1)
    inertia: list[float] = []
    for _ in range(max_iter):
        d = _sq_dists(x, centroids)
        new = np.argmin(d, axis=1)
        for j in range(k):
            if not np.any(new == j):
                # farthest point from its own centroid restarts the empty cluster
                far = int(np.argmax(d[np.arange(n), new]))
                centroids[j] = x[far]
                d = _sq_dists(x, centroids)
                new = np.argmin(d, axis=1)
        for j in range(k):
            members = new == j
            # duplicate points can leave a reseeded cluster empty; keep its centroid
            if np.any(members):
                centroids[j] = x[members].mean(axis=0)
        inertia.append(float(_sq_dists(x, centroids)[np.arange(n), new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new
    return KMeansResult(labels, centroids, inertia)


def kmeans_train(
    images,
    k: int,
    cfg: TrainConfig,
    input_shape: tuple[int, int] = (32, 32),
    layer_sizes: list[int] | None = None,
    hidden_activation: str = "relu",
    coefficient: float = DEFAULT_COEFFICIENT,
    threshold: float = 1.0,
) -> AeSet:
    """Cluster images with k-means, then train one AE per cluster.

    Clusters are ordered by their lowest member index; each AE's normalizer
    is fitted to the REs of its own cluster. The cluster label of every
    image is left in ``history``.
    """
    images = list(images)
    if not images:
        raise InvalidInputError("kmeans_train needs at least one image")
    km = lloyd(kmeans_features(images), int(k), cfg.seed)
    first = {}
    for i, lab in enumerate(km.labels):
        first.setdefault(int(lab), i)
    order = sorted(first, key=first.get)
    x = np.stack([resize_area(np.asarray(im, dtype=np.float64), input_shape).ravel() for im in images])
    aes = []
    assignments = {}
    for j, lab in enumerate(order, start=1):
        members = np.flatnonzero(km.labels == lab)
        seed = generation_seed(cfg.seed, j)
        ae = init_autoencoder(input_shape, layer_sizes, seed, cfg.weight_init_scale, hidden_activation, id=j)
        tcfg = TrainConfig(cfg.learning_rate, cfg.epochs, cfg.batch_size, seed, cfg.weight_init_scale)
        ae = train(ae, x[members].reshape(-1, *input_shape), tcfg)
        ae.id = j
        ae.normalizer = normalizer_fit(raw_errors([ae], x[members])[:, 0], coefficient)
        aes.append(ae)
        assignments.update({int(i): j for i in members})
    aeset = AeSet(aes, threshold)
    aeset.history = [
        {"kmeans_inertia": km.inertia},
        {"assignments": [{"index": i, "ae_id": assignments[i], "forced": False} for i in range(len(images))]},
    ]
    return aeset
