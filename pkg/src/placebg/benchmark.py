"""Standard synthetic corpora, training presets and the scoring pipeline.

The growth corpus is small (32x32) and exercises recursive training; the
detection corpus is larger (160x160) so that 10-pixel cells resolve the
20x20 injected objects.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .data_io import SyntheticSpec, generate_synthetic
from .evalkit import evaluate, kmeans_train, pool_cells, random_grids
from .nn import TrainConfig
from .rae import AeSet, RecursionConfig, link_pairs, recursive_train
from .scoring import LoCMap, score_image


def growth_spec(seed: int = 0) -> SyntheticSpec:
    """Three phase-drifting cosine modes of decreasing contrast, 30 images each."""
    return SyntheticSpec(
        n_modes=3,
        images_per_mode=30,
        image_size=32,
        mode_contrast=0.7,
        contrast_step=0.25,
        viewpoint_drift=1.0,
        pattern_sharpness=0.0,
        noise_sd=0.05,
        seed=seed,
    )


def detection_spec(seed: int = 0) -> SyntheticSpec:
    """Growth modes at 160x160 with exposure jitter and two 20x20 objects per query."""
    return replace(
        growth_spec(seed),
        image_size=160,
        illumination_sd=0.01,
        anomaly_count=2,
        anomaly_size=20,
        registration_jitter=1,
    )


def standard_recursion_config(seed: int = 0, input_shape=(32, 32)) -> RecursionConfig:
    """Linear two-unit bottleneck: one drifting cosine mode spans a 2-D subspace."""
    d = int(input_shape[0]) * int(input_shape[1])
    return RecursionConfig(
        v_re_star=0.0,
        max_aes=6,
        min_cluster_size=20,
        train_cfg=TrainConfig(learning_rate=100.0, epochs=800, batch_size=8, seed=seed),
        input_shape=tuple(input_shape),
        layer_sizes=[d, 2, d],
        hidden_activation="linear",
    )


def score_pairs(aeset: AeSet, pairs) -> list[LoCMap]:
    """Link every pair through its background, then score its query."""
    links = link_pairs(aeset, pairs)
    return [score_image(aeset, p.query, j, p.pair_id) for p, j in zip(pairs, links)]


def train_kmeans_like(aeset_size: int, images, cfg: RecursionConfig) -> AeSet:
    """k-means baseline with the same AE architecture and training schedule."""
    return kmeans_train(
        images,
        aeset_size,
        cfg.train_cfg,
        cfg.input_shape,
        cfg.layer_sizes,
        cfg.hidden_activation,
        cfg.coefficient,
        cfg.v_re_star,
    )


def run_detection_benchmark(seed: int, x_list=(5.0,), iou_list=(0.25,), with_kmeans: bool = True):
    """Train on one seeded detection corpus and evaluate rAE, k-means and random scores.

    Returns ``(reports, n_aes)``.
    """
    pairs, annots, _ = generate_synthetic(detection_spec(seed))
    cfg = standard_recursion_config(seed)
    backgrounds = [p.background for p in pairs]
    aeset = recursive_train(backgrounds, cfg)
    reports = evaluate([pool_cells(m) for m in score_pairs(aeset, pairs)], annots, x_list, iou_list, "rAE")
    if with_kmeans:
        km = train_kmeans_like(len(aeset), backgrounds, cfg)
        reports += evaluate([pool_cells(m) for m in score_pairs(km, pairs)], annots, x_list, iou_list, "kmeans")
    rnd = random_grids([(p.query.shape, p.pair_id) for p in pairs], int(np.random.SeedSequence(seed).generate_state(1)[0]))
    reports += evaluate(rnd, annots, x_list, iou_list, "random")
    return reports, len(aeset)
