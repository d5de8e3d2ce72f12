import json

import numpy as np
import pytest

from placebg.errors import CorpusError, InvalidInputError
from placebg.model_io import FORMAT_VERSION, aeset_to_dict, dumps_aeset, load_aeset, save_aeset
from placebg.nn import init_autoencoder
from placebg.normalizer import normalizer_fit
from placebg.rae import AeSet, compress


def small_set():
    aes = []
    for j in (1, 2):
        ae = init_autoencoder((3, 4), [12, 5, 12], seed=j, id=j)
        ae.normalizer = normalizer_fit([1.0 * j, 2.5, 4.0])
        aes.append(ae)
    return AeSet(aes, 0.5, 1.5)


def test_round_trip_exact(tmp_path):
    s = small_set()
    save_aeset(tmp_path / "m.json", s)
    t = load_aeset(tmp_path / "m.json")
    assert (t.threshold, t.detection_threshold) == (0.5, 1.5)
    for a, b in zip(s.aes, t.aes):
        assert a.id == b.id and a.layer_sizes == b.layer_sizes and a.activations == b.activations
        assert a.normalizer == b.normalizer and a.input_shape == b.input_shape
        assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))
    assert dumps_aeset(t) == dumps_aeset(s)


def test_has_format_version():
    d = json.loads(dumps_aeset(small_set()))
    assert d["format_version"] == FORMAT_VERSION and d["format"] == "placebg-aeset"


def test_full_prefix_is_byte_identical():
    s = small_set()
    assert dumps_aeset(compress(s, len(s))) == dumps_aeset(s)


def test_rejects_other_versions(tmp_path):
    d = aeset_to_dict(small_set())
    d["format_version"] = 99
    (tmp_path / "m.json").write_text(json.dumps(d))
    with pytest.raises(InvalidInputError, match="format_version"):
        load_aeset(tmp_path / "m.json")


def test_rejects_garbage(tmp_path):
    (tmp_path / "m.json").write_text("[1, 2")
    with pytest.raises(InvalidInputError):
        load_aeset(tmp_path / "m.json")
    d = aeset_to_dict(small_set())
    del d["aes"][0]["weights"]
    (tmp_path / "m.json").write_text(json.dumps(d))
    with pytest.raises(InvalidInputError):
        load_aeset(tmp_path / "m.json")
    with pytest.raises(CorpusError):
        load_aeset(tmp_path / "absent.json")
