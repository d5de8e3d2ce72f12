"""AeSet serialization: one JSON document with base64-encoded float64 arrays.

Arrays are stored little-endian so the file bytes depend only on the
parameter values; keys are sorted so repeated saves are byte-identical.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import CorpusError, InvalidInputError
from .nn import Autoencoder
from .normalizer import Normalizer
from .rae import AeSet

FORMAT = "placebg-aeset"
FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)


def aeset_to_dict(aeset: AeSet) -> dict:
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "threshold": float(aeset.threshold),
        "detection_threshold": float(aeset.detection_threshold),
        "aes": [
            {
                "id": ae.id,
                "input_shape": list(ae.input_shape),
                "layer_sizes": list(ae.layer_sizes),
                "activations": list(ae.activations),
                "weights": [_encode_array(w) for w in ae.weights],
                "biases": [_encode_array(b) for b in ae.biases],
                "normalizer": ae.normalizer.to_dict(),
            }
            for ae in aeset.aes
        ],
    }


def aeset_from_dict(d: dict) -> AeSet:
    if d.get("format") != FORMAT:
        raise InvalidInputError(f"not an AE set file (format={d.get('format')!r})")
    if d.get("format_version") != FORMAT_VERSION:
        raise InvalidInputError(f"unsupported format_version {d.get('format_version')!r}")
    try:
        aes = [
            Autoencoder(
                tuple(a["input_shape"]),
                list(a["layer_sizes"]),
                [_decode_array(w) for w in a["weights"]],
                [_decode_array(b) for b in a["biases"]],
                list(a["activations"]),
                Normalizer.from_dict(a["normalizer"]),
                int(a["id"]),
            )
            for a in d["aes"]
        ]
        return AeSet(aes, float(d["threshold"]), float(d["detection_threshold"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"malformed AE set file: {exc}") from exc


def dumps_aeset(aeset: AeSet) -> str:
    return json.dumps(aeset_to_dict(aeset), sort_keys=True, indent=1) + "\n"


def save_aeset(path, aeset: AeSet) -> None:
    try:
        Path(path).write_text(dumps_aeset(aeset))
    except OSError as exc:
        raise CorpusError(f"cannot write {path}: {exc}") from exc


def load_aeset(path) -> AeSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON: {exc}") from exc
    return aeset_from_dict(d)
