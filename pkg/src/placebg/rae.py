"""Recursive growth of an ordered autoencoder set, and prefix compression.

Each generation's autoencoder is trained on the images the current set still
reconstructs badly (normalized RE above the threshold); images it explains
well only refresh the normalizer of the AE they are assigned to.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidStateError, ShapeError
from .imaging import resize_area
from .nn import Autoencoder, TrainConfig, init_autoencoder, reconstruct_batch, train
from .normalizer import (
    DEFAULT_COEFFICIENT,
    Normalizer,
    normalize_or_fallback,
    normalizer_fit,
    normalizer_update,
)

log = logging.getLogger(__name__)


@dataclass
class AeSet:
    """Autoencoders in training order; ``aes[j-1]`` has id ``j``."""

    aes: list[Autoencoder]
    threshold: float
    detection_threshold: float | None = None
    # filled by recursive_train, written to the manifest rather than the model file
    history: list[dict] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if self.detection_threshold is None:
            self.detection_threshold = self.threshold
        shapes = {ae.input_shape for ae in self.aes}
        if len(shapes) > 1:
            raise ShapeError(f"autoencoders disagree on input shape: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.aes)

    @property
    def input_shape(self) -> tuple[int, int]:
        if not self.aes:
            raise InvalidStateError("empty AE set has no input shape")
        return self.aes[0].input_shape

    def get(self, j: int) -> Autoencoder:
        if isinstance(j, bool) or not isinstance(j, (int, np.integer)) or not 1 <= j <= len(self.aes):
            raise InvalidInputError(f"AE id {j} not in 1..{len(self.aes)}")
        return self.aes[j - 1]


@dataclass
class PartitionEntry:
    index: int
    ae_id: int
    normalized_re: float


@dataclass
class TrainingPartition:
    normal: list[PartitionEntry]
    anomalous: list[PartitionEntry]

    def normal_ids(self) -> list[int]:
        return [e.index for e in self.normal]

    def anomalous_ids(self) -> list[int]:
        return [e.index for e in self.anomalous]


@dataclass
class RecursionConfig:
    v_re_star: float = 1.0
    max_aes: int = 8
    min_cluster_size: int = 5
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    input_shape: tuple[int, int] = (32, 32)
    layer_sizes: list[int] | None = None
    hidden_activation: str = "relu"
    coefficient: float = DEFAULT_COEFFICIENT
    detection_threshold: float | None = None

    def __post_init__(self):
        if not self.v_re_star >= 0:
            raise InvalidInputError("v_re_star must be nonnegative")
        if self.max_aes < 1 or self.min_cluster_size < 1:
            raise InvalidInputError("max_aes and min_cluster_size must be positive")
        if not self.coefficient > 0:
            raise InvalidInputError("coefficient must be positive")
        self.input_shape = tuple(int(s) for s in self.input_shape)


def generation_seed(base: int, generation: int) -> int:
    """Independent child seed for one AE generation."""
    ss = np.random.SeedSequence(entropy=int(base) & (2**63 - 1), spawn_key=(int(generation),))
    return int(ss.generate_state(1)[0])


def _stack(images, shape) -> np.ndarray:
    return np.stack([resize_area(np.asarray(im, dtype=np.float64), shape).reshape(-1) for im in images])


def raw_errors(aes, x: np.ndarray) -> np.ndarray:
    """Full-image L1 REs, shape (n_images, n_aes), for flattened inputs ``x``."""
    cols = []
    for ae in aes:
        y = np.clip(reconstruct_batch(ae, x), 0.0, 1.0)
        cols.append(np.abs(x - y).sum(axis=1))
    return np.stack(cols, axis=1)


def normalized_errors(aes, raw: np.ndarray) -> np.ndarray:
    out = np.empty_like(raw)
    for j, ae in enumerate(aes):
        out[:, j] = [normalize_or_fallback(ae.normalizer, v) for v in raw[:, j]]
    return out


def _check(aeset: AeSet) -> None:
    if len(aeset) == 0:
        raise InvalidStateError("AE set is empty")


def assign_best_ae(aeset: AeSet, img) -> tuple[int, float]:
    """Id of the AE with the lowest normalized RE for ``img`` (lowest id on ties) and that RE."""
    _check(aeset)
    norm = normalized_errors(aeset.aes, raw_errors(aeset.aes, _stack([img], aeset.input_shape)))[0]
    j = int(np.argmin(norm))
    return j + 1, float(norm[j])


def _partition_from(norm: np.ndarray, indices, v_re_star: float) -> TrainingPartition:
    best = np.argmin(norm, axis=1)
    normal, anomalous = [], []
    for row, idx in enumerate(indices):
        e = PartitionEntry(int(idx), int(best[row]) + 1, float(norm[row, best[row]]))
        (normal if e.normalized_re <= v_re_star else anomalous).append(e)
    return TrainingPartition(normal, anomalous)


def partition(aeset: AeSet, images, v_re_star: float) -> TrainingPartition:
    """Split ``images`` into normal (best normalized RE <= v_re_star) and anomalous."""
    _check(aeset)
    images = list(images)
    if not images:
        return TrainingPartition([], [])
    raw = raw_errors(aeset.aes, _stack(images, aeset.input_shape))
    return _partition_from(normalized_errors(aeset.aes, raw), range(len(images)), v_re_star)


def _normalizer_state(aes) -> list[dict]:
    return [dict(ae.normalizer.to_dict(), id=ae.id) for ae in aes]


def recursive_train(images, cfg: RecursionConfig) -> AeSet:
    """Grow an AE set until the current set explains every training image.

    Stops early when ``max_aes`` is reached or fewer than ``min_cluster_size``
    images remain anomalous; leftovers are force-assigned to their best AE.
    The returned set's ``history`` holds one record per generation plus a
    final ``assignments`` record.
    """
    images = list(images)
    if not images:
        raise InvalidInputError("recursive_train needs at least one image")
    x = _stack(images, cfg.input_shape)
    aes: list[Autoencoder] = []
    history: list[dict] = []
    current = list(range(len(images)))
    base_seed = cfg.train_cfg.seed

    while True:
        j = len(aes) + 1
        seed = generation_seed(base_seed, j)
        ae = init_autoencoder(
            cfg.input_shape,
            cfg.layer_sizes,
            seed=seed,
            weight_init_scale=cfg.train_cfg.weight_init_scale,
            hidden_activation=cfg.hidden_activation,
            id=j,
        )
        tcfg = TrainConfig(
            cfg.train_cfg.learning_rate,
            cfg.train_cfg.epochs,
            cfg.train_cfg.batch_size,
            seed,
            cfg.train_cfg.weight_init_scale,
        )
        xs = x[current]
        ae = train(ae, xs.reshape(-1, *cfg.input_shape), tcfg)
        ae.id = j
        # seed the new AE's normalizer from its own training-set REs
        ae.normalizer = normalizer_fit(raw_errors([ae], xs)[:, 0], cfg.coefficient)
        aes.append(ae)

        raw = raw_errors(aes, xs)
        part = _partition_from(normalized_errors(aes, raw), current, cfg.v_re_star)
        # the training-set seed is provisional: retire it, then fold in the normals
        seed_stats = ae.normalizer
        ae.normalizer = Normalizer(coefficient=cfg.coefficient)
        pos = {idx: r for r, idx in enumerate(current)}
        for e in part.normal:
            a = aes[e.ae_id - 1]
            a.normalizer = normalizer_update(a.normalizer, raw[pos[e.index], e.ae_id - 1])
        if ae.normalizer.count < 2:
            # nothing (or one image) was normal for the newcomer; keep the seed
            ae.normalizer = seed_stats

        anomalous = part.anomalous_ids()
        history.append(
            {
                "iteration": j,
                "train_size": len(current),
                "normal": len(part.normal),
                "anomalous": len(anomalous),
                "n_aes": len(aes),
                "normalizers": _normalizer_state(aes),
            }
        )
        log.info("generation %d: |T|=%d |T+|=%d", j, len(current), len(anomalous))

        if not anomalous:
            # normalizer updates can push earlier normals back over the threshold
            full = _partition_from(normalized_errors(aes, raw_errors(aes, x)), range(len(images)), cfg.v_re_star)
            anomalous = full.anomalous_ids()
            if not anomalous:
                break
        if len(aes) >= cfg.max_aes or len(anomalous) < cfg.min_cluster_size:
            break
        current = anomalous

    aeset = AeSet(aes, cfg.v_re_star, cfg.detection_threshold)
    final = _partition_from(normalized_errors(aes, raw_errors(aes, x)), range(len(images)), cfg.v_re_star)
    history.append(
        {
            "assignments": [
                {"index": e.index, "ae_id": e.ae_id, "normalized_re": e.normalized_re, "forced": forced}
                for forced, entries in ((False, final.normal), (True, final.anomalous))
                for e in entries
            ],
            "normalizer_mean_basis": "full-image RE of training normals at AE input resolution",
        }
    )
    aeset.history = history
    return aeset


def final_assignments(aeset: AeSet) -> dict[int, int]:
    """Image index -> AE id from the record ``recursive_train`` leaves in ``history``."""
    for rec in reversed(aeset.history):
        if "assignments" in rec:
            return {a["index"]: a["ae_id"] for a in rec["assignments"]}
    raise InvalidStateError("AE set carries no training assignments")


def compress(aeset: AeSet, n_prime: int) -> AeSet:
    """Keep the first ``n_prime`` AEs; nothing is retrained."""
    n_prime = int(n_prime)
    if not 1 <= n_prime <= len(aeset):
        raise InvalidInputError(f"n_prime must lie in 1..{len(aeset)}, got {n_prime}")
    return AeSet([ae.copy() for ae in aeset.aes[:n_prime]], aeset.threshold, aeset.detection_threshold)


def link_pairs(aeset: AeSet, pairs) -> list[int]:
    """Link each pair to the best AE for its background image."""
    _check(aeset)
    x = _stack([p.background for p in pairs], aeset.input_shape)
    best = np.argmin(normalized_errors(aeset.aes, raw_errors(aeset.aes, x)), axis=1) + 1
    for p, j in zip(pairs, best):
        p.linked_ae = int(j)
    return [int(j) for j in best]
