import csv
import json

import numpy as np
import pytest

from placebg.data_io import read_pgm
from placebg.errors import InvalidInputError
from placebg.nn import init_autoencoder, reconstruct, reconstruction_error
from placebg.normalizer import normalize, normalizer_fit
from placebg.rae import AeSet
from placebg.scoring import (
    LoCMap,
    RankedPixel,
    rank_pixels,
    region_changed,
    region_loc,
    residual_map,
    save_locmap_pgm,
    save_ranked_csv,
    score_image,
)


def identity_set(shape=(4, 4)):
    d = shape[0] * shape[1]
    ae = init_autoencoder(shape, [d, d, d], hidden_activation="linear", output_activation="linear", id=1)
    ae.weights[0][:] = np.eye(d)
    ae.weights[1][:] = np.eye(d)
    ae.biases[1][:] = 0.5
    ae.normalizer = normalizer_fit([1.0, 3.0])
    return AeSet([ae], 1.0)


def test_perfect_reconstruction_gives_zero_map():
    s = identity_set()
    q = np.random.default_rng(0).random((4, 4))
    m = score_image(s, q, 1, "q")
    assert m.values.shape == q.shape and m.source_ae == 1
    assert np.all(m.values == 0.0)


def test_scaling_by_sigma_and_coefficient():
    s = identity_set((2, 2))
    ae = s.aes[0]
    ae.biases[1][:] = 0.6  # reconstruct every pixel 0.1 too bright
    q = np.full((2, 2), 0.5)
    m = score_image(s, q, 1)
    # sigma of {1, 3} is 1, c = 0.8
    assert np.allclose(m.values, 0.1 / 0.8)


def test_residual_upsampled_to_query_resolution():
    ae = init_autoencoder((2, 2), [4, 3, 4], seed=4)
    q = np.random.default_rng(1).random((6, 4))
    res = residual_map(ae, q)
    assert res.shape == (6, 4)
    assert np.array_equal(res[0:3, 0:2], np.full((3, 2), res[0, 0]))


def test_invalid_ae_id():
    with pytest.raises(InvalidInputError):
        score_image(identity_set(), np.zeros((4, 4)), 2)


def test_bright_square_stands_out(two_mode_run):
    pairs, _, s = two_mode_run
    p = pairs[0]
    q = p.background.copy()
    q[70:90, 70:90] = np.clip(q[70:90, 70:90] + 0.4, 0, 1)
    m = score_image(s, q, p.linked_ae).values
    mask = np.zeros(q.shape, bool)
    mask[70:90, 70:90] = True
    assert m[mask].mean() >= 5 * m[~mask].mean()


def test_linked_aes_comparable(two_mode_run):
    pairs, _, s = two_mode_run
    means = {}
    for p in pairs:
        means.setdefault(p.linked_ae, []).append(score_image(s, p.query, p.linked_ae).values.mean())
    assert len(means) == 2
    a, b = (np.mean(v) for v in means.values())
    assert abs(a - b) < 0.5


def test_region_loc_full_image_equals_normalize(two_mode_run):
    pairs, _, s = two_mode_run
    p = pairs[3]
    ae = s.get(p.linked_ae)
    small = np.asarray(p.query)
    from placebg.imaging import resize_area

    x = resize_area(small, ae.input_shape)
    full = normalize(ae.normalizer, reconstruction_error(x, reconstruct(ae, x)))
    got = region_loc(s, p.query, p.linked_ae, np.ones(p.query.shape, bool))
    assert got == pytest.approx(full, rel=1e-9, abs=1e-9)


def test_region_changed_uses_detection_threshold(two_mode_run):
    pairs, _, s = two_mode_run
    p = pairs[0]
    q = p.background.copy()
    q[40:80, 40:80] = np.clip(q[40:80, 40:80] + 0.5, 0, 1)
    box = np.zeros(q.shape, bool)
    box[40:80, 40:80] = True
    quiet = np.zeros(q.shape, bool)
    quiet[100:140, 100:140] = True
    strict = AeSet(s.aes, s.threshold, detection_threshold=3.0)
    assert region_changed(strict, q, p.linked_ae, box)
    assert not region_changed(strict, q, p.linked_ae, quiet)
    # the growth threshold of zero is far too lax for detection
    assert region_changed(s, q, p.linked_ae, quiet)


def test_region_loc_shape_check():
    with pytest.raises(InvalidInputError):
        region_loc(identity_set(), np.zeros((4, 4)), 1, np.ones((3, 3), bool))


# ---------------------------------------------------------------- ranking


def test_rank_matches_sorted_oracle():
    rng = np.random.default_rng(0)
    maps = [LoCMap(np.round(rng.random((10, 10)), 2), 1, f"img{k}") for k in range(10)]
    got = rank_pixels(maps)
    oracle = sorted(
        (RankedPixel(m.image_id, x, y, float(m.values[y, x])) for m in maps for y in range(10) for x in range(10)),
        key=lambda r: (-r.loc, r.image_id, r.y * 10 + r.x),
    )
    assert got == oracle


def test_rank_dominance_and_zero_map():
    a = LoCMap(np.full((2, 3), 5.0), 1, "b")
    b = LoCMap(np.full((3, 2), 1.0), 2, "a")
    ranked = rank_pixels([b, a])
    assert [r.image_id for r in ranked[:6]] == ["b"] * 6
    assert all(r.loc == 0.0 for r in rank_pixels([LoCMap(np.zeros((3, 3)), 1, "z")])[:4])
    assert rank_pixels([]) == []


def test_rank_is_permutation():
    rng = np.random.default_rng(3)
    maps = [LoCMap(rng.random((4, 7)), 1, "x"), LoCMap(rng.random((5, 2)), 1, "y")]
    got = rank_pixels(maps)
    assert len(got) == 38
    assert len({(r.image_id, r.x, r.y) for r in got}) == 38


def test_exports(tmp_path):
    m = LoCMap(np.array([[0.0, 2.0], [4.0, 1.0]]), 2, "q1")
    save_locmap_pgm(tmp_path / "q1.pgm", m)
    img = read_pgm(tmp_path / "q1.pgm")
    assert img[1, 0] == 1.0 and img[0, 0] == 0.0
    side = json.loads((tmp_path / "q1.json").read_text())
    assert side == {"image_id": "q1", "source_ae": 2, "min": 0.0, "max": 4.0}
    save_ranked_csv(tmp_path / "r.csv", rank_pixels([m]), limit=2)
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows == [["image_id", "x", "y", "loc"], ["q1", "0", "1", "4.0"], ["q1", "1", "0", "2.0"]]
