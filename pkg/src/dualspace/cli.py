"""Command-line entry point: ``dualspace <command> [flags]``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autodiff import NonFiniteError
from .config import ConfigError, load_dataclass, load_run_config, parse_config_text
from .formats import DataError, Dataset, load_dataset, write_dataset
from .metrics import average_precision, broadcast_to_frames
from .model import ModelConfig
from .optim import ParameterStore
from .synthetic import SyntheticSpec, ambiguous_subset, generate_synthetic
from .training import LOG_COLUMNS, TrainingError, evaluate, gradcheck_model, train

__all__ = ["main", "save_model", "load_model", "ABLATION_VARIANTS"]

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MODEL_FORMAT = "dualspace-model/1"

ABLATION_VARIANTS = {
    "full": {},
    "euclid-only": {"branches": "euclid"},
    "no-hvlgl": {"use_hvlgl": False},
}


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def save_model(path, store: ParameterStore, cfg: ModelConfig) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "config": cfg.to_dict(),
        "params": {n: {"shape": list(a.shape), "data": a.ravel().tolist()} for n, a in store.state_dict().items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> tuple[ParameterStore, ModelConfig]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read model {path}: {e}") from e
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a {MODEL_FORMAT} file")
    try:
        cfg = ModelConfig.from_dict(doc["config"])
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e
    state = {n: np.asarray(e["data"], dtype=np.float64).reshape(e["shape"]) for n, e in doc["params"].items()}
    return ParameterStore.from_state_dict(state), cfg


def _eval_split(ds: Dataset) -> list:
    test = ds.split("test")
    return test if test else ds.videos


def _train_split(ds: Dataset) -> list:
    tr = ds.split("train")
    return tr if tr else ds.videos


def _run_config(args):
    overrides = {"seed": args.seed} if getattr(args, "seed", None) is not None else None
    return load_run_config(args.config, overrides)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    values = {}
    if args.spec:
        try:
            values = parse_config_text(Path(args.spec).read_text(encoding="utf-8"), args.spec)
        except OSError as e:
            raise ConfigError(f"cannot read spec {args.spec}: {e}") from e
    if args.seed is not None:
        values["seed"] = str(args.seed)
    spec = load_dataclass(SyntheticSpec, values, args.spec or "<defaults>")
    ds = generate_synthetic(spec)
    try:
        path = write_dataset(ds, args.out)
    except OSError as e:
        raise DataError(f"cannot write dataset to {args.out}: {e}") from e
    for key in sorted(k for k in ds.meta if k.startswith("oracle_ap")):
        print(f"{key}={_fmt(ds.meta[key])}")
    print(f"wrote {len(ds.videos)} videos to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = _run_config(args)
    data = args.data or run.data
    out = args.out or run.out
    if not data or not out:
        raise ConfigError("train needs --data and --out (or data/out keys in the config)")
    ds = load_dataset(data)
    cfg = run.model
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)

        def progress(row):
            writer.writerow([_fmt(x) for x in row.row()])
            fh.flush()
            print(" ".join(f"{c}={_fmt(v)}" for c, v in zip(LOG_COLUMNS, row.row())))

        result = train(_train_split(ds), cfg, ds.bank, _eval_split(ds), progress=progress)
    save_model(out_dir / "model.json", result.store, cfg)
    print(f"model written to {out_dir / 'model.json'}")
    return EXIT_OK


def write_scores_csv(path, videos, scores: dict) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame rows ``video_id, frame_index, score, label``; returns pooled arrays."""
    all_s, all_y = [], []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "frame_index", "score", "label"])
        for v in videos:
            n = len(v.frame_labels) if v.frame_labels is not None else 16 * v.T
            frame_scores = broadcast_to_frames(scores[v.video_id], n)
            labels = v.frame_labels
            for i in range(n):
                writer.writerow([v.video_id, i, repr(float(frame_scores[i])), "" if labels is None else int(labels[i])])
            all_s.append(frame_scores)
            if labels is not None:
                all_y.append(labels)
    return np.concatenate(all_s), (np.concatenate(all_y) if len(all_y) == len(all_s) else None)


def read_scores_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["score"]) for r in rows]), np.array([int(r["label"]) for r in rows])


def cmd_score(args) -> int:
    store, cfg = load_model(args.model)
    ds = load_dataset(args.data)
    videos = ds.videos if args.split == "all" else ds.split(args.split)
    if not videos:
        raise DataError(f"no videos in split {args.split!r}")
    from .autodiff import no_grad
    from .model import forward

    with no_grad():
        scores = {v.video_id: forward(v, store, cfg).scores.data for v in videos}
    s, y = write_scores_csv(args.out, videos, scores)
    print(f"wrote {s.size} frame scores to {args.out}")
    if y is not None and y.any():
        print(f"AP={_fmt(average_precision(s, y))}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _run_config(args).model
    report = gradcheck_model(cfg, tol=args.tol)
    print(report.summary())
    for op, err in sorted(report.op_errors.items()):
        print(f"  op {op}: {err:.3e}")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def run_ablation(ds: Dataset, cfg: ModelConfig, seeds, progress=None) -> dict:
    """AP on the ambiguous test subset for each variant and seed."""
    subset = ambiguous_subset(_eval_split(ds))
    results = {name: [] for name in ABLATION_VARIANTS}
    for seed in seeds:
        for name, change in ABLATION_VARIANTS.items():
            variant = replace(cfg, seed=seed, **change)
            store = train(_train_split(ds), variant, ds.bank).store
            ap = evaluate(subset, store, variant).ap
            results[name].append(ap)
            if progress is not None:
                progress(name, seed, ap)
    return results


def cmd_ablate(args) -> int:
    cfg = _run_config(args).model
    ds = load_dataset(args.data)
    base = cfg.seed if args.seed is None else args.seed
    seeds = [base + i for i in range(args.seeds)]
    results = run_ablation(ds, cfg, seeds, lambda n, s, ap: print(f"seed={s} variant={n} AP={ap!r}"))
    means = {name: float(np.mean(v)) for name, v in results.items()}
    rows = [["variant", *[f"seed{s}" for s in seeds], "mean"]]
    rows += [[name, *[repr(float(a)) for a in results[name]], repr(means[name])] for name in results]
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    for name, m in means.items():
        print(f"mean AP {name:<12} {m:.6f}")
    ok = True
    for other in ("euclid-only", "no-hvlgl"):
        holds = means["full"] >= means[other]
        ok &= holds
        print(f"{'PASS' if holds else 'FAIL'} AP(full) >= AP({other})")
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dualspace", description="Train and check Euclidean plus hyperbolic graph models that score video snippets."
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--spec", help="key = value file of SyntheticSpec fields")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="run config (key = value)")
    t.add_argument("--data", help="dataset directory or manifest")
    t.add_argument("--out", help="output directory for model.json and metrics.csv")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("score", help="export per-frame scores")
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True, help="CSV path")
    c.add_argument("--split", default="all", choices=("all", "train", "test"))
    c.set_defaults(func=cmd_score)

    g = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("ablate", help="full vs Euclidean-only vs no text loss, over several seeds")
    a.add_argument("--config")
    a.add_argument("--data", required=True)
    a.add_argument("--out", help="optional CSV report")
    a.add_argument("--seeds", type=int, default=5)
    a.add_argument("--seed", type=int, help="first seed (default: config seed)")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, NonFiniteError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
