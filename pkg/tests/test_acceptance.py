"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from placebg.benchmark import growth_spec, run_detection_benchmark, standard_recursion_config
from placebg.cli import main
from placebg.data_io import Annotation, generate_synthetic
from placebg.evalkit import iou, pool_cells, top_x_accuracy
from placebg.nn import _backward, gradient, init_autoencoder, reconstruction_error
from placebg.normalizer import Normalizer, normalizer_update
from placebg.rae import assign_best_ae, compress, final_assignments, recursive_train
from placebg.scoring import LoCMap, score_image

SEEDS = range(5)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def purity(assign, labels):
    hits = 0
    for j in set(assign.values()):
        hits += max(np.bincount([labels[i] for i, a in assign.items() if a == j]))
    return hits / len(labels)


# 1 ------------------------------------------------------------------------------


def test_1_gradient_matches_finite_differences(capsys):
    t0 = time.perf_counter()
    ae = init_autoencoder((2, 2), [4, 6, 4], seed=3, hidden_activation="tanh")
    img = np.random.default_rng(5).random((2, 2))
    x = img.reshape(1, -1)
    gw, gb = gradient(ae, img)
    worst, h = 0.0, 1e-5
    for params, grads in ((ae.weights, gw), (ae.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = _backward(ae, x)[0]
                p[idx] = old - h
                down = _backward(ae, x)[0]
                p[idx] = old
                fd = (up - down) / (2 * h)
                worst = max(worst, abs(g[idx] - fd) / max(abs(g[idx]), abs(fd), 1e-7))
    dt = time.perf_counter() - t0
    report(capsys, 1, worst < 1e-4 and dt < 5, f"max relative error {worst:.2e} over 4-6-4 params, {dt:.2f}s")


# 2 ------------------------------------------------------------------------------


def test_2_reconstruction_error_matches_pixel_loop(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(1, 65, size=2))
        a, b = rng.random((h, w)), rng.random((h, w))
        total = 0.0
        for r in range(h):
            for c in range(w):
                total += abs(a[r, c] - b[r, c])
        mismatches += reconstruction_error(a, b) != total
    dt = time.perf_counter() - t0
    report(capsys, 2, mismatches == 0 and dt < 1, f"{mismatches} inexact of 100 pairs, {dt:.2f}s")


# 3 ------------------------------------------------------------------------------


def test_3_incremental_statistics(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    v = rng.uniform(0, 10, size=10_000)
    worst = 0.0
    for order in (np.arange(v.size), np.arange(v.size)[::-1], rng.permutation(v.size)):
        n = Normalizer()
        for i in order:
            n = normalizer_update(n, v[i])
        worst = max(worst, abs(n.mean - v.mean()), abs(n.variance - v.var()))
    dt = time.perf_counter() - t0
    report(capsys, 3, worst < 1e-9 and dt < 1, f"max |incremental - batch| {worst:.1e} over 3 orders, {dt:.2f}s")


# 4 ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def growth_sets():
    t0 = time.perf_counter()
    runs = []
    for seed in SEEDS:
        pairs, _, labels = generate_synthetic(growth_spec(seed))
        images = [p.background for p in pairs]
        runs.append((images, labels, recursive_train(images, standard_recursion_config(seed))))
    return runs, time.perf_counter() - t0


def test_4_recursive_growth(capsys, growth_sets):
    runs, dt = growth_sets
    results = [(len(s), purity(final_assignments(s), labels)) for _, labels, s in runs]
    good = sum(n == 3 and p >= 0.9 for n, p in results)
    detail = ", ".join(f"N={n} purity={p:.2f}" for n, p in results)
    report(capsys, 4, good >= 4 and dt < 300, f"{good}/5 seeds good ({detail}), {dt:.1f}s")


# 5 ------------------------------------------------------------------------------


def test_5_prefix_compression(capsys, growth_sets):
    t0 = time.perf_counter()
    images, _, s = growth_sets[0][0]
    full_best = [assign_best_ae(s, im) for im in images]
    full_maps = {j: [score_image(s, im, j).values for im in images] for j in range(1, len(s) + 1)}
    bad_scores = bad_assign = 0
    for n in range(1, len(s) + 1):
        c = compress(s, n)
        for j in range(1, n + 1):
            bad_scores += sum(not np.array_equal(score_image(c, im, j).values, m) for im, m in zip(images, full_maps[j]))
        for im, best in zip(images, full_best):
            if best[0] <= n:
                bad_assign += assign_best_ae(c, im) != best
    dt = time.perf_counter() - t0
    ok = bad_scores == 0 and bad_assign == 0 and dt < 30
    report(capsys, 5, ok, f"N={len(s)}: {bad_scores} score and {bad_assign} assignment mismatches, {dt:.1f}s")


# 6 and 7 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def detection_results():
    t0 = time.perf_counter()
    acc = {"rAE": [], "kmeans": [], "random": []}
    for seed in SEEDS:
        reports, _ = run_detection_benchmark(seed, x_list=(5.0,), iou_list=(0.25,))
        for r in reports:
            acc[r.method].append(r.accuracy)
    return {k: float(np.mean(v)) for k, v in acc.items()}, time.perf_counter() - t0


def test_6_detection_power(capsys, detection_results):
    acc, dt = detection_results
    ok = acc["rAE"] >= 0.8 and acc["random"] <= 0.1 and dt < 600
    report(capsys, 6, ok, f"top-5% IoU>=0.25: rAE {acc['rAE']:.3f}, random {acc['random']:.3f} (5-seed mean), {dt:.1f}s")


def test_7_claim_direction_vs_kmeans(capsys, detection_results):
    acc, dt = detection_results
    ok = acc["rAE"] - acc["kmeans"] >= 0 and dt < 900
    report(capsys, 7, ok, f"rAE {acc['rAE']:.3f} vs k-means {acc['kmeans']:.3f}, margin {acc['rAE'] - acc['kmeans']:+.3f}, {dt:.1f}s")


# 8 ------------------------------------------------------------------------------


def test_8_evaluation_geometry(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    failures = 0
    for _ in range(200):
        a = tuple(int(v) for v in rng.integers(0, 30, 2))
        a = (a[0], a[1], a[0] + int(rng.integers(1, 20)), a[1] + int(rng.integers(1, 20)))
        b = tuple(int(v) for v in rng.integers(0, 30, 2))
        b = (b[0], b[1], b[0] + int(rng.integers(1, 20)), b[1] + int(rng.integers(1, 20)))
        grid = np.zeros((50, 50), int)
        grid[a[1] : a[3], a[0] : a[2]] += 1
        grid[b[1] : b[3], b[0] : b[2]] += 2
        oracle = np.count_nonzero(grid == 3) / np.count_nonzero(grid)
        failures += not math.isclose(iou(a, b), oracle, abs_tol=1e-12) or iou(a, b) != iou(b, a)
    for _ in range(30):
        h, w, s = int(rng.integers(1, 80)), int(rng.integers(1, 80)), int(rng.integers(1, 15))
        v = rng.normal(size=(h, w))
        oracle = np.array([[v[r * s : (r + 1) * s, c * s : (c + 1) * s].max() for c in range(-(-w // s))] for r in range(-(-h // s))])
        failures += not np.array_equal(pool_cells(v, s).cells, oracle)
    grids, annots = [], []
    for k in range(8):
        v = rng.random((57, 43))
        for _ in range(2):
            x0, y0 = int(rng.integers(0, 23)), int(rng.integers(0, 37))
            v[y0 : y0 + 20, x0 : x0 + 20] += rng.random()
            annots.append(Annotation(f"q{k}", x0, y0, x0 + 20, y0 + 20))
        grids.append(pool_cells(LoCMap(v, 1, f"q{k}")))
    accs = [top_x_accuracy(grids, annots, x, 0.25).accuracy for x in (1, 2, 5, 10, 20)]
    monotone = all(b >= a for a, b in zip(accs, accs[1:]))
    dt = time.perf_counter() - t0
    ok = failures == 0 and monotone and dt < 10
    report(capsys, 8, ok, f"{failures} oracle mismatches, accuracy over X=1..20: {[round(a, 3) for a in accs]}, {dt:.2f}s")


# 9 ------------------------------------------------------------------------------


def test_9_reproducible_cmd_train(capsys, tmp_path):
    t0 = time.perf_counter()
    (tmp_path / "s.json").write_text(json.dumps({"seed": 11, "synthetic": {"preset": "growth"}}))
    (tmp_path / "t.json").write_text(json.dumps({"seed": 11, "corpus": {"root": "c"}, "recursion": {"preset": "standard"}}))
    codes = [main(["synth", "--config", str(tmp_path / "s.json"), "--out", str(tmp_path / "c")])]
    for run in ("a", "b"):
        codes.append(main(["train", "--config", str(tmp_path / "t.json"), "--out", str(tmp_path / run)]))
    same = (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()
    dt = time.perf_counter() - t0
    report(capsys, 9, codes == [0, 0, 0] and same and dt < 120, f"exit codes {codes}, model files identical: {same}, {dt:.1f}s")
