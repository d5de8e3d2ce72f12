"""Command-line pipeline: synth, train, score, compress, eval, report.

Every command reads one JSON config file. Relative paths inside it resolve
against the config file's directory. Exit codes: 0 success, 1 validation
error, 2 I/O error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import detection_spec, growth_spec, score_pairs, standard_recursion_config, train_kmeans_like
from .data_io import ensure_dir, load_annotations, load_corpus, save_corpus, spec_from_dict, generate_synthetic
from .errors import CorpusError, InvalidInputError
from .evalkit import DEFAULT_CELL_SIZE, REPORT_COLUMNS, evaluate, pool_cells, random_grids, save_report_csv
from .model_io import dumps_aeset, load_aeset
from .nn import ACTIVATIONS, TrainConfig
from .rae import RecursionConfig, compress, recursive_train
from .scoring import rank_pixels, save_locmap_pgm, save_ranked_csv

log = logging.getLogger("placebg")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

SYNTH_PRESETS = {"growth": growth_spec, "detection": detection_spec}
BASELINES = ("kmeans", "random")


@dataclass
class RunConfig:
    """Everything a command needs, validated before any output is written."""

    seed: int
    base_dir: Path
    synthetic: dict | None = None
    corpus: dict = field(default_factory=dict)
    recursion: dict = field(default_factory=dict)
    model: str | None = None
    n_prime: int | None = None
    x_list: list[float] = field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0, 20.0])
    iou_list: list[float] = field(default_factory=lambda: [0.25, 0.5])
    cell_size: int = DEFAULT_CELL_SIZE
    baselines: list[str] = field(default_factory=list)
    rank_limit: int = 10000

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def child_seed(self, purpose: int) -> int:
        """Independent stream per purpose (0 synth, 1 training, 2 random control)."""
        ss = np.random.SeedSequence(self.seed & (2**63 - 1), spawn_key=(purpose,))
        return int(ss.generate_state(1)[0] >> 1)


_TOP_KEYS = {"seed", "synthetic", "corpus", "recursion", "model", "compress", "eval"}


def _require_type(name, value, types):
    if not isinstance(value, types) or isinstance(value, bool):
        raise InvalidInputError(f"config field {name!r} has the wrong type: {value!r}")
    return value


def load_run_config(path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise CorpusError(f"cannot read config {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"config {path} is not valid JSON: {e.msg}") from e
    if not isinstance(raw, dict):
        raise InvalidInputError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise InvalidInputError(f"unknown config sections: {sorted(unknown)}")
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise InvalidInputError("config must set 'seed' (or pass --seed)")
    _require_type("seed", seed, int)
    cfg = RunConfig(seed=seed, base_dir=path.resolve().parent)
    if "synthetic" in raw:
        cfg.synthetic = dict(_require_type("synthetic", raw["synthetic"], dict))
    cfg.corpus = dict(_require_type("corpus", raw.get("corpus", {}), dict))
    cfg.recursion = dict(_require_type("recursion", raw.get("recursion", {}), dict))
    if "model" in raw:
        cfg.model = _require_type("model", raw["model"], str)
    comp = _require_type("compress", raw.get("compress", {}), dict)
    if "n_prime" in comp:
        cfg.n_prime = _require_type("compress.n_prime", comp["n_prime"], int)
    ev = dict(_require_type("eval", raw.get("eval", {}), dict))
    for key in ("x_list", "iou_list"):
        if key in ev:
            vals = _require_type(f"eval.{key}", ev.pop(key), list)
            setattr(cfg, key, [float(_require_type(f"eval.{key}", v, (int, float))) for v in vals])
    cfg.cell_size = _require_type("eval.cell_size", ev.pop("cell_size", cfg.cell_size), int)
    cfg.rank_limit = _require_type("eval.rank_limit", ev.pop("rank_limit", cfg.rank_limit), int)
    cfg.baselines = list(_require_type("eval.baselines", ev.pop("baselines", []), list))
    if ev:
        raise InvalidInputError(f"unknown eval fields: {sorted(ev)}")
    _validate_eval(cfg)
    return cfg


def _validate_eval(cfg: RunConfig) -> None:
    if not cfg.x_list or any(not 0 < x <= 100 for x in cfg.x_list):
        raise InvalidInputError("eval.x_list needs values in (0, 100]")
    if not cfg.iou_list or any(not 0 < t <= 1 for t in cfg.iou_list):
        raise InvalidInputError("eval.iou_list needs values in (0, 1]")
    if cfg.cell_size < 1 or cfg.rank_limit < 0:
        raise InvalidInputError("eval.cell_size must be >= 1 and eval.rank_limit >= 0")
    bad = set(cfg.baselines) - set(BASELINES)
    if bad:
        raise InvalidInputError(f"unknown baselines {sorted(bad)}; choose from {list(BASELINES)}")


def build_synthetic_spec(cfg: RunConfig):
    if cfg.synthetic is None:
        raise InvalidInputError("config has no 'synthetic' section")
    d = dict(cfg.synthetic)
    if "seed" in d:
        raise InvalidInputError("synthetic.seed is not allowed; the top-level seed drives everything")
    preset = d.pop("preset", None)
    seed = cfg.child_seed(0)
    if preset is None:
        return spec_from_dict(dict(d, seed=seed))
    if preset not in SYNTH_PRESETS:
        raise InvalidInputError(f"unknown synthetic preset {preset!r}; choose from {sorted(SYNTH_PRESETS)}")
    base = asdict(SYNTH_PRESETS[preset](seed))
    return spec_from_dict(dict(base, **d))


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_RECURSION_KEYS = {f.name for f in fields(RecursionConfig)} - {"train_cfg"}


def build_recursion_config(cfg: RunConfig) -> RecursionConfig:
    d = dict(cfg.recursion)
    preset = d.pop("preset", None)
    train_d = dict(_require_type("recursion.train", d.pop("train", {}), dict))
    unknown = (set(d) - _RECURSION_KEYS) | {f"train.{k}" for k in set(train_d) - _TRAIN_KEYS}
    if unknown:
        raise InvalidInputError(f"unknown recursion fields: {sorted(unknown)}")
    seed = cfg.child_seed(1)
    shape = tuple(d.get("input_shape", (32, 32)))
    if len(shape) != 2 or any(not isinstance(s, int) or s < 1 for s in shape):
        raise InvalidInputError(f"recursion.input_shape must be two positive integers, got {shape}")
    if preset is None:
        base = RecursionConfig(train_cfg=TrainConfig(seed=seed))
    elif preset == "standard":
        base = standard_recursion_config(seed, shape)
    else:
        raise InvalidInputError(f"unknown recursion preset {preset!r}; only 'standard' exists")
    if d.get("hidden_activation", base.hidden_activation) not in ACTIVATIONS:
        raise InvalidInputError(f"hidden_activation must be one of {ACTIVATIONS}")
    tc = dict(asdict(base.train_cfg), **train_d, seed=seed)
    merged = {k: getattr(base, k) for k in _RECURSION_KEYS}
    merged.update(d)
    merged["input_shape"] = shape
    if preset == "standard" and "layer_sizes" not in d:
        n = shape[0] * shape[1]
        merged["layer_sizes"] = [n, 2, n]
    try:
        rc = RecursionConfig(train_cfg=TrainConfig(**tc), **merged)
    except TypeError as e:
        raise InvalidInputError(f"bad recursion config: {e}") from e
    if rc.layer_sizes is not None:
        n = shape[0] * shape[1]
        sizes = list(rc.layer_sizes)
        if sizes[0] != n or sizes != sizes[::-1] or any(s < 1 for s in sizes):
            raise InvalidInputError(f"layer_sizes {sizes} must be palindromic and start with {n}")
    return rc


def _corpus_paths(cfg: RunConfig, need_annotations: bool = False):
    if "root" not in cfg.corpus:
        raise InvalidInputError("config needs corpus.root")
    root = cfg.path(cfg.corpus["root"])
    manifest = cfg.path(cfg.corpus.get("manifest", root / "manifest.jsonl"))
    annots = cfg.path(cfg.corpus.get("annotations", root / "annotations.jsonl"))
    if not manifest.is_file():
        raise CorpusError(f"manifest not found: {manifest}")
    if need_annotations and not annots.is_file():
        raise CorpusError(f"annotations not found: {annots}")
    return root, manifest, annots


def _model_path(cfg: RunConfig) -> Path:
    if cfg.model is None:
        raise InvalidInputError("config needs 'model'")
    p = cfg.path(cfg.model)
    if not p.is_file():
        raise CorpusError(f"model file not found: {p}")
    return p


def _check_dims(aeset, pairs) -> None:
    shapes = {p.query.shape for p in pairs}
    if not pairs:
        raise InvalidInputError("corpus is empty")
    h, w = aeset.input_shape
    for s in shapes:
        if s[0] < h or s[1] < w:
            raise InvalidInputError(f"corpus images {s} are smaller than the model input {aeset.input_shape}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    spec = build_synthetic_spec(cfg)
    pairs, annots, labels = generate_synthetic(spec)
    ensure_dir(out)
    save_corpus(out, pairs, annots, labels)
    _write_json(out / "synthetic_spec.json", asdict(spec))
    print(f"wrote {len(pairs)} pairs and {len(annots)} annotations to {out}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, out: Path) -> int:
    rc = build_recursion_config(cfg)
    root, manifest, _ = _corpus_paths(cfg)
    pairs = load_corpus(root, manifest)
    if not pairs:
        raise InvalidInputError("corpus is empty")
    aeset = recursive_train([p.background for p in pairs], rc)
    ensure_dir(out)
    (out / "model.json").write_text(dumps_aeset(aeset))
    iterations = [h for h in aeset.history if "iteration" in h]
    final = aeset.history[-1]
    _write_json(
        out / "train_manifest.json",
        {
            "version": __version__,
            "seed": cfg.seed,
            "n_aes": len(aeset),
            "config": _recursion_to_dict(rc),
            "iterations": iterations,
            "assignments": [dict(a, pair_id=pairs[a["index"]].pair_id) for a in final["assignments"]],
            "normalizer_mean_basis": final["normalizer_mean_basis"],
        },
    )
    print(f"trained {len(aeset)} autoencoder(s); model written to {out / 'model.json'}")
    return EXIT_OK


def _recursion_to_dict(rc: RecursionConfig) -> dict:
    d = asdict(rc)
    d["input_shape"] = list(rc.input_shape)
    return d


def cmd_score(cfg: RunConfig, out: Path) -> int:
    model = _model_path(cfg)
    root, manifest, _ = _corpus_paths(cfg)
    aeset = load_aeset(model)
    pairs = load_corpus(root, manifest)
    _check_dims(aeset, pairs)
    maps = score_pairs(aeset, pairs)
    ensure_dir(out / "locmaps")
    for m in maps:
        save_locmap_pgm(out / "locmaps" / f"{m.image_id}.pgm", m)
    save_ranked_csv(out / "ranked_pixels.csv", rank_pixels(maps), cfg.rank_limit or None)
    with open(out / "links.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pair_id", "linked_ae"])
        for p in pairs:
            w.writerow([p.pair_id, p.linked_ae])
    print(f"scored {len(maps)} queries into {out}")
    return EXIT_OK


def cmd_compress(cfg: RunConfig, out: Path) -> int:
    model = _model_path(cfg)
    if cfg.n_prime is None:
        raise InvalidInputError("config needs compress.n_prime")
    small = compress(load_aeset(model), cfg.n_prime)
    ensure_dir(out)
    (out / "model.json").write_text(dumps_aeset(small))
    print(f"kept {len(small)} autoencoder(s); model written to {out / 'model.json'}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Path) -> int:
    model = _model_path(cfg)
    root, manifest, annots_path = _corpus_paths(cfg, need_annotations=True)
    aeset = load_aeset(model)
    pairs = load_corpus(root, manifest)
    annots = load_annotations(annots_path)
    _check_dims(aeset, pairs)
    if not annots:
        raise InvalidInputError("no annotations to evaluate against")
    grids = [pool_cells(m, cfg.cell_size) for m in score_pairs(aeset, pairs)]
    reports = evaluate(grids, annots, cfg.x_list, cfg.iou_list, "rAE")
    if "kmeans" in cfg.baselines:
        rc = build_recursion_config(cfg)
        rc.input_shape = aeset.input_shape
        rc.layer_sizes = list(aeset.aes[0].layer_sizes)
        rc.hidden_activation = aeset.aes[0].activations[0]
        km = train_kmeans_like(len(aeset), [p.background for p in pairs], rc)
        km_grids = [pool_cells(m, cfg.cell_size) for m in score_pairs(km, pairs)]
        reports += evaluate(km_grids, annots, cfg.x_list, cfg.iou_list, "kmeans")
    if "random" in cfg.baselines:
        rnd = random_grids([(p.query.shape, p.pair_id) for p in pairs], cfg.child_seed(2), cfg.cell_size)
        reports += evaluate(rnd, annots, cfg.x_list, cfg.iou_list, "random")
    ensure_dir(out)
    save_report_csv(out / "report.csv", reports)
    for r in reports:
        print(f"{r.method:>7}  X={r.x_percent:g}%  IoU>={r.iou_min:g}  acc={r.accuracy:.3f} ({r.detected}/{r.total})")
    return EXIT_OK


def cmd_report(cfg: RunConfig, out: Path) -> int:
    """Summarize whatever train/eval outputs exist in ``--out`` as Markdown."""
    tm, rep = out / "train_manifest.json", out / "report.csv"
    if not tm.is_file() and not rep.is_file():
        raise CorpusError(f"nothing to report in {out}: no train_manifest.json or report.csv")
    lines = ["# placebg run report", ""]
    if tm.is_file():
        m = json.loads(tm.read_text())
        lines += [f"Seed {m['seed']}, {m['n_aes']} autoencoder(s).", "", "| iter | train | normal | anomalous | N |", "|---|---|---|---|---|"]
        lines += [f"| {h['iteration']} | {h['train_size']} | {h['normal']} | {h['anomalous']} | {h['n_aes']} |" for h in m["iterations"]]
        forced = sum(a["forced"] for a in m["assignments"])
        lines += ["", f"Force-assigned images: {forced}", ""]
    if rep.is_file():
        with open(rep, newline="") as f:
            rows = list(csv.DictReader(f))
        lines += ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
        for r in rows:
            r["accuracy"] = f"{float(r['accuracy']):.3f}"
            r["X"], r["iou_min"] = f"{float(r['X']):g}", f"{float(r['iou_min']):g}"
            lines.append("| " + " | ".join(r[c] for c in REPORT_COLUMNS) + " |")
    text = "\n".join(lines) + "\n"
    (out / "report.md").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "score": cmd_score,
    "compress": cmd_compress,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="placebg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto (computation is sequential)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 0:
            raise InvalidInputError("--threads must be >= 0")
        cfg = load_run_config(args.config, args.seed)
        return COMMANDS[args.command](cfg, Path(args.out))
    except (InvalidInputError, ValueError, KeyError, TypeError) as e:
        print(f"placebg {args.command}: invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"placebg {args.command}: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as e:
        print(f"placebg {args.command}: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
