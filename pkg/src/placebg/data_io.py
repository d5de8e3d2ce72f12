"""Corpus ingestion, PGM codec and the synthetic place-sequence generator."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import CorpusError, InvalidInputError, ShapeError
from .imaging import as_image


@dataclass
class Annotation:
    """Ground-truth box of a changed object; pixels x_min <= x < x_max."""

    image_id: str
    x_min: int
    y_min: int
    x_max: int
    y_max: int
    label: str = "change"

    @property
    def box(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def validate(self, shape: tuple[int, int] | None = None) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError(f"degenerate box for {self.image_id}: {self.box}")
        if shape is not None:
            h, w = shape
            if self.x_min < 0 or self.y_min < 0 or self.x_max > w or self.y_max > h:
                raise InvalidInputError(f"box {self.box} outside {w}x{h} image {self.image_id}")


@dataclass
class ImagePair:
    pair_id: str
    query: np.ndarray
    background: np.ndarray
    linked_ae: int | None = None

    def __post_init__(self):
        if self.query.shape != self.background.shape:
            raise ShapeError(
                f"pair {self.pair_id}: query {self.query.shape} vs background {self.background.shape}"
            )


# ---------------------------------------------------------------- PGM codec


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    values, pos = [], 2
    while len(values) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ValueError("malformed PGM header")
        values.append(int(data[start:pos]))
    return values, pos + 1  # single whitespace byte ends the header


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode binary (P5) or plain (P2) PGM bytes to intensities in [0, 1]."""
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"not a PGM file (magic {magic!r})")
    (width, height, maxval), pos = _pgm_tokens(data, 3)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError("invalid PGM dimensions or maxval")
    n = width * height
    if magic == b"P2":
        raw = np.array(data[pos:].split()[:n], dtype=np.int64)
    elif maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos)
    else:
        raw = np.frombuffer(data, dtype=">u2", count=n, offset=pos)
    if raw.size != n:
        raise ValueError("truncated PGM pixel data")
    return raw.reshape(height, width).astype(np.float64) / maxval


def encode_pgm(img: np.ndarray, maxval: int = 255) -> bytes:
    """Encode an image as binary P5, rounding intensities to ``maxval`` levels."""
    img = as_image(img)
    h, w = img.shape
    q = np.rint(img * maxval)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes()


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CorpusError(f"cannot read image {path}: {e.strerror}") from e
    try:
        return decode_pgm(data)
    except ValueError as e:
        raise CorpusError(f"{path}: {e}") from e


def write_pgm(path, img: np.ndarray, maxval: int = 255) -> None:
    Path(path).write_bytes(encode_pgm(img, maxval))


def quantize(img: np.ndarray, maxval: int = 255) -> np.ndarray:
    """Round intensities to the grid a PGM round trip produces."""
    return np.rint(np.asarray(img) * maxval) / maxval


# ---------------------------------------------------------------- manifests


def _read_jsonl(path) -> list[dict]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise CorpusError(f"cannot read {path}: {e.strerror}") from e
    records = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise CorpusError(f"{path}:{n}: invalid JSON ({e.msg})") from e
    return records


def _write_jsonl(path, records) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def load_corpus(root, manifest) -> list[ImagePair]:
    """Load the query/background pairs listed in a JSON-lines manifest.

    Relative image paths resolve against ``root``.
    """
    root = Path(root)
    pairs = []
    for rec in _read_jsonl(manifest):
        try:
            pid, qp, bp = str(rec["pair_id"]), rec["query_path"], rec["background_path"]
        except KeyError as e:
            raise CorpusError(f"manifest record missing field {e.args[0]}: {rec}") from e
        paths = [root / qp, root / bp]
        for p in paths:
            if not p.is_file():
                raise CorpusError(f"pair {pid}: image file not found: {p}")
        query, background = read_pgm(paths[0]), read_pgm(paths[1])
        pairs.append(ImagePair(pid, query, background))
    return pairs


def load_annotations(path) -> list[Annotation]:
    annots = []
    for rec in _read_jsonl(path):
        try:
            a = Annotation(
                str(rec["image_id"]),
                int(rec["x_min"]),
                int(rec["y_min"]),
                int(rec["x_max"]),
                int(rec["y_max"]),
                str(rec.get("label", "change")),
            )
        except KeyError as e:
            raise CorpusError(f"annotation record missing field {e.args[0]}: {rec}") from e
        a.validate()
        annots.append(a)
    return annots


def save_annotations(path, annots) -> None:
    _write_jsonl(path, [asdict(a) for a in annots])


def save_corpus(out_dir, pairs, annots=(), mode_labels=None) -> Path:
    """Write PGMs, ``manifest.jsonl``, ``annotations.jsonl`` and ``mode_labels.csv``.

    Returns the manifest path.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for p in pairs:
        qp, bp = f"images/{p.pair_id}_query.pgm", f"images/{p.pair_id}_background.pgm"
        write_pgm(out / qp, p.query)
        write_pgm(out / bp, p.background)
        records.append({"pair_id": p.pair_id, "query_path": qp, "background_path": bp})
    manifest = out / "manifest.jsonl"
    _write_jsonl(manifest, records)
    save_annotations(out / "annotations.jsonl", annots)
    if mode_labels is not None:
        with open(out / "mode_labels.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["pair_id", "mode"])
            for p, m in zip(pairs, mode_labels):
                w.writerow([p.pair_id, int(m)])
    return manifest


def load_mode_labels(path) -> dict[str, int]:
    with open(path, newline="") as f:
        return {row["pair_id"]: int(row["mode"]) for row in csv.DictReader(f)}


# ---------------------------------------------------------------- synthetic corpus


@dataclass
class SyntheticSpec:
    n_modes: int = 3
    images_per_mode: int = 30
    image_size: int = 32
    mode_contrast: float = 0.5
    anomaly_count: int = 0
    anomaly_size: int = 8
    noise_sd: float = 0.03
    registration_jitter: int = 0
    seed: int = 0
    # also paste (unannotated) rectangles into backgrounds
    background_anomalies: bool = False
    # mode m uses contrast mode_contrast * (1 - contrast_step * m)
    contrast_step: float = 0.0
    # each background's pattern phase drifts by up to this fraction of a period
    viewpoint_drift: float = 0.0
    # 0 gives pure cosines; larger values flatten the pattern into plateaus
    pattern_sharpness: float = 3.0
    # sd of a global brightness offset drawn per background (exposure changes)
    illumination_sd: float = 0.0

    def validate(self) -> None:
        if self.n_modes < 1 or self.images_per_mode < 1 or self.image_size < 2:
            raise InvalidInputError("n_modes, images_per_mode must be >= 1 and image_size >= 2")
        if not 0.0 < self.mode_contrast <= 1.0:
            raise InvalidInputError("mode_contrast must lie in (0, 1]")
        if self.anomaly_count < 0 or self.anomaly_size < 1:
            raise InvalidInputError("anomaly_count must be >= 0 and anomaly_size >= 1")
        if self.anomaly_size >= self.image_size:
            raise InvalidInputError("anomaly_size must be smaller than image_size")
        if self.noise_sd < 0 or self.registration_jitter < 0:
            raise InvalidInputError("noise_sd and registration_jitter must be nonnegative")
        if not 0.0 <= self.contrast_step * (self.n_modes - 1) < 1.0:
            raise InvalidInputError("contrast_step must keep every mode's contrast positive")
        if not 0.0 <= self.viewpoint_drift <= 1.0 or self.pattern_sharpness < 0:
            raise InvalidInputError("viewpoint_drift must lie in [0, 1] and pattern_sharpness >= 0")
        if self.illumination_sd < 0:
            raise InvalidInputError("illumination_sd must be nonnegative")

    def mode_contrast_of(self, mode: int) -> float:
        return self.mode_contrast * (1.0 - self.contrast_step * mode)


ANOMALY_MIN_CONTRAST = 0.3


def base_scene(mode: int, size: int, contrast: float, phase: float = 0.0, sharpness: float = 3.0) -> np.ndarray:
    """Separable cosine pattern; each mode uses its own spatial frequency pair.

    ``phase`` (fraction of a period) translates the pattern horizontally.
    """
    fx, fy = 1 + mode % 3, 1 + (mode // 3 + mode) % 3
    offset = 0.7 * mode
    t = np.arange(size) / size
    wave = np.outer(
        np.cos(2 * np.pi * fy * t + offset),
        np.cos(2 * np.pi * fx * t + 1.3 * offset + 2 * np.pi * phase),
    )
    pattern = np.tanh(sharpness * wave) / np.tanh(sharpness) if sharpness > 0 else wave
    return np.clip(0.5 + 0.5 * contrast * pattern, 0.0, 1.0)


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate by (dy, dx) pixels, replicating the edge."""
    h, w = img.shape
    pad = max(abs(dy), abs(dx))
    if pad == 0:
        return img.copy()
    padded = np.pad(img, pad, mode="edge")
    return padded[pad - dy : pad - dy + h, pad - dx : pad - dx + w]


def _paste_anomalies(img, count, size, noise_sd, rng):
    """Paste non-overlapping rectangles; returns boxes (x0, y0, x1, y1)."""
    h, w = img.shape
    boxes = []
    for _ in range(count):
        for _attempt in range(200):
            x0 = int(rng.integers(0, w - size + 1))
            y0 = int(rng.integers(0, h - size + 1))
            box = (x0, y0, x0 + size, y0 + size)
            if all(box[2] <= b[0] or b[2] <= box[0] or box[3] <= b[1] or b[3] <= box[1] for b in boxes):
                break
        else:
            raise InvalidInputError("cannot place non-overlapping anomalies; image too small")
        local = img[y0 : y0 + size, x0 : x0 + size].mean()
        delta = rng.uniform(ANOMALY_MIN_CONTRAST + 0.1, ANOMALY_MIN_CONTRAST + 0.3)
        up_ok, down_ok = local + delta <= 1.0, local - delta >= 0.0
        if up_ok and down_ok:
            sign = 1.0 if rng.random() < 0.5 else -1.0
        else:
            sign = 1.0 if up_ok or local < 0.5 else -1.0
        level = np.clip(local + sign * delta, 0.0, 1.0)
        patch = level + rng.normal(0.0, noise_sd, size=(size, size))
        img[y0 : y0 + size, x0 : x0 + size] = np.clip(patch, 0.0, 1.0)
        boxes.append(box)
    return boxes


def generate_synthetic(spec: SyntheticSpec):
    """Generate ``(pairs, annotations, mode_labels)`` deterministically from ``spec.seed``.

    Backgrounds are a mode's base scene plus Gaussian noise; each query is its
    background shifted by up to ``registration_jitter`` pixels with
    ``anomaly_count`` rectangles pasted in.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    s = spec.image_size
    pairs, annots, labels = [], [], []
    for m in range(spec.n_modes):
        for i in range(spec.images_per_mode):
            pid = f"m{m}_{i:04d}"
            phase = rng.uniform(0.0, spec.viewpoint_drift) if spec.viewpoint_drift > 0 else 0.0
            base = base_scene(m, s, spec.mode_contrast_of(m), phase, spec.pattern_sharpness)
            if spec.illumination_sd > 0:
                base = base + rng.normal(0.0, spec.illumination_sd)
            bg = np.clip(base + rng.normal(0.0, spec.noise_sd, size=(s, s)), 0.0, 1.0)
            if spec.background_anomalies:
                _paste_anomalies(bg, spec.anomaly_count, spec.anomaly_size, spec.noise_sd, rng)
            j = spec.registration_jitter
            dy, dx = (int(v) for v in rng.integers(-j, j + 1, size=2))
            query = _shift(bg, dy, dx)
            boxes = _paste_anomalies(query, spec.anomaly_count, spec.anomaly_size, spec.noise_sd, rng)
            annots.extend(Annotation(pid, *b, label="synthetic") for b in boxes)
            pairs.append(ImagePair(pid, query, bg))
            labels.append(m)
    return pairs, annots, labels


def spec_from_dict(d: dict) -> SyntheticSpec:
    known = SyntheticSpec.__dataclass_fields__
    unknown = set(d) - set(known)
    if unknown:
        raise InvalidInputError(f"unknown synthetic fields: {sorted(unknown)}")
    spec = SyntheticSpec(**d)
    spec.validate()
    return spec


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
