"""Per-pixel likelihood-of-change maps and global pixel ranking."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError
from .imaging import resize_area, upsample_nearest
from .nn import reconstruct
from .normalizer import (
    Normalizer,
    effective_sigma,
    normalize,
    normalize_or_fallback,
    normalizer_fit,
    normalizer_update,
)

# the normalizer operations belong to the scoring surface as well
__all__ = [
    "LoCMap",
    "Normalizer",
    "RankedPixel",
    "effective_sigma",
    "normalize",
    "normalize_or_fallback",
    "normalizer_fit",
    "normalizer_update",
    "rank_pixels",
    "region_changed",
    "region_loc",
    "residual_map",
    "save_locmap_pgm",
    "save_ranked_csv",
    "score_image",
]


@dataclass
class LoCMap:
    """Normalized per-pixel LoC for one query, at the query's resolution."""

    values: np.ndarray
    source_ae: int
    image_id: str = ""

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


class RankedPixel(NamedTuple):
    image_id: str
    x: int
    y: int
    loc: float


def residual_map(ae, query: np.ndarray) -> np.ndarray:
    """|I - I'| computed at the autoencoder's resolution and mapped back to the query's."""
    small = resize_area(np.asarray(query, dtype=np.float64), ae.input_shape)
    res = np.abs(small - reconstruct(ae, small))
    return upsample_nearest(res, query.shape)


def score_image(aeset, query, linked_ae: int, image_id: str = "") -> LoCMap:
    """Reconstruct ``query`` with AE ``linked_ae`` and scale the residual by 1/(sigma*c)."""
    ae = aeset.get(linked_ae)
    query = np.asarray(query, dtype=np.float64)
    scale = 1.0 / (effective_sigma(ae.normalizer) * ae.normalizer.coefficient)
    return LoCMap(residual_map(ae, query) * scale, ae.id, image_id)


def region_loc(aeset, query, linked_ae: int, region: np.ndarray) -> float:
    """Normalized LoC of a pixel region (boolean mask at the query's resolution).

    The AE's mean full-image RE is scaled by the region's share of the image
    before subtracting, so the full-image region reproduces ``normalize``.
    """
    ae = aeset.get(linked_ae)
    region = np.asarray(region, dtype=bool)
    query = np.asarray(query, dtype=np.float64)
    if region.shape != query.shape:
        raise InvalidInputError("region mask must match the query shape")
    # per-pixel residual at query resolution, re-weighted to AE-resolution units
    res = residual_map(ae, query) * (ae.layer_sizes[0] / query.size)
    v = float(res[region].sum())
    n = ae.normalizer
    mu = (n.sum / n.count if n.count else 0.0) * region.mean()
    return (v - mu) / (effective_sigma(n) * n.coefficient)


def region_changed(aeset, query, linked_ae: int, region: np.ndarray) -> bool:
    """True when the region's normalized LoC exceeds the set's detection threshold."""
    return region_loc(aeset, query, linked_ae, region) > aeset.detection_threshold


def rank_pixels(maps) -> list[RankedPixel]:
    """Every pixel of every map, by LoC descending; ties by image id then pixel index."""
    maps = list(maps)
    if not maps:
        return []
    locs = np.concatenate([m.values.ravel() for m in maps])
    img_rank = {iid: r for r, iid in enumerate(sorted({m.image_id for m in maps}))}
    img_key = np.concatenate([np.full(m.values.size, img_rank[m.image_id]) for m in maps])
    pix = np.concatenate([np.arange(m.values.size) for m in maps])
    which = np.concatenate([np.full(m.values.size, i) for i, m in enumerate(maps)])
    order = np.lexsort((which, pix, img_key, -locs))
    widths = [m.width for m in maps]
    out = []
    for k in order:
        m = which[k]
        y, x = divmod(int(pix[k]), widths[m])
        out.append(RankedPixel(maps[m].image_id, x, y, float(locs[k])))
    return out


def save_locmap_pgm(path, locmap: LoCMap) -> None:
    """Write an 8-bit PGM rescaled to the map's range plus a ``.json`` sidecar with that range."""
    from .data_io import write_pgm

    v = locmap.values
    lo, hi = float(v.min()), float(v.max())
    scaled = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    write_pgm(path, scaled)
    sidecar = Path(path).with_suffix(".json")
    sidecar.write_text(
        json.dumps({"image_id": locmap.image_id, "source_ae": locmap.source_ae, "min": lo, "max": hi}, indent=2)
    )


def save_ranked_csv(path, ranked, limit: int | None = None) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "x", "y", "loc"])
        for r in ranked[:limit] if limit is not None else ranked:
            w.writerow([r.image_id, r.x, r.y, repr(r.loc)])
