"""Command-line entry point: generate / train / score / eval / profile.

Every command is a thin wrapper over library functions.  Exit codes:
0 success, 1 usage or configuration error, 2 runtime failure.  The
--deterministic flag pins thread counts for bit-reproducible runs (the
library itself is single-threaded numpy).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, save_config
from .data import ClipStore, generate_dataset
from .evaluate import (EvalReport, ProfileReport, count_params, estimate_flops,
                       measure_fps, roc_auc, write_report)
from .objective import read_scores_csv
from .scoring import load_model, score_store
from .train import train

__all__ = ["main"]

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _apply_determinism():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = "1"


def _build_config(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        if not Path(args.config).is_file():
            raise ValueError(f"config file not found: {args.config}")
        return load_config(args.config, overrides=overrides)
    return RunConfig(**overrides)


def _add_common(p: argparse.ArgumentParser, out_required: bool = True):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the seed")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--deterministic", action="store_true",
                   help="pin thread counts for bit-reproducible runs")


def _cmd_generate(args) -> int:
    cfg = _build_config(args)
    n_train = cfg.n_train_clips if args.train_clips is None else args.train_clips
    n_test = cfg.n_test_clips if args.test_clips is None else args.test_clips
    store = generate_dataset(cfg.scene_spec(), n_train, n_test, args.out)
    save_config(cfg, Path(args.out) / "config.ini")
    print(f"wrote {n_train} train + {n_test} test clips to {store.root}")
    return 0


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    store = ClipStore(args.data)
    result = train(cfg, store, args.out, resume_from=args.resume,
                   max_steps=args.max_steps, log_every=args.log_every)
    print(f"trained {result.steps} steps ({result.epochs} epochs); "
          f"final l_total {result.final_loss:.6f}")
    print(f"loss log: {result.log_path}")
    print(f"checkpoint: {result.ckpt_path}")
    return 0


def _cmd_score(args) -> int:
    cfg = _build_config(args)
    model, _meta = load_model(args.ckpt)
    store = ClipStore(args.data)
    alpha = args.alpha if args.alpha is not None else cfg.effective_alpha
    normalize = args.normalize or cfg.normalize
    scored = score_store(model, store, alpha, args.out, normalize=normalize)
    n = sum(len(v) for v in scored.values())
    save_config(cfg, Path(args.out) / "config.ini")
    print(f"scored {n} frames across {len(scored)} clips into {args.out}")
    return 0


def _collect_eval_pairs(scores_path: Path, labels_path: Path):
    """Yield (anomaly_scores, labels) aligned per clip."""
    if scores_path.is_file():
        records = read_scores_csv(scores_path)
        labels = _read_labels_csv(labels_path)
        yield records, labels
        return
    store = ClipStore(labels_path)
    csvs = sorted(scores_path.glob("*.csv"))
    csvs = [c for c in csvs if c.name != "config.ini"]
    if not csvs:
        raise FileNotFoundError(f"no score CSVs under {scores_path}")
    for csv_file in csvs:
        clip = csv_file.stem
        records = read_scores_csv(csv_file)
        labels = store.load_labels(clip)
        yield records, labels


def _read_labels_csv(path: Path) -> np.ndarray:
    import csv as _csv

    with open(path, newline="") as fh:
        rd = _csv.reader(fh)
        header = next(rd)
        if header != ["frame_index", "label"]:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = sorted((int(r[0]), int(r[1])) for r in rd)
    return np.array([lab for _, lab in rows], dtype=np.uint8)


def _cmd_eval(args) -> int:
    scores = []
    labels = []
    for records, lab in _collect_eval_pairs(Path(args.scores), Path(args.labels)):
        for r in records:
            if r.frame_index >= len(lab):
                raise ValueError(
                    f"frame_index {r.frame_index} outside label range {len(lab)}")
            scores.append(r.anomaly_score)
            labels.append(int(lab[r.frame_index]))
    labels_arr = np.array(labels)
    if labels_arr.min() == labels_arr.max():
        print("error: labels contain a single class; AUC undefined",
              file=sys.stderr)
        return RUNTIME_ERROR
    report = EvalReport(auc=roc_auc(np.array(scores), labels_arr),
                        n_frames=len(scores),
                        n_anomalous=int(labels_arr.sum()))
    out = Path(args.out)
    write_report(report.as_kv(), out, "eval_report")
    print(f"auc={report.auc:.6f} n_frames={report.n_frames} "
          f"n_anomalous={report.n_anomalous}")
    return 0


def _cmd_profile(args) -> int:
    model, meta = load_model(args.ckpt)
    cfg = model.cfg
    params_m = count_params(model) / 1e6
    flops = estimate_flops(model)
    if args.data:
        store = ClipStore(args.data)
        frames = store.load_frames(store.clip_names()[0])
        n_starts = frames.shape[0] - cfg.k
        if n_starts < 1:
            raise ValueError("store clip shorter than one scoring window")
        windows = [frames[s : s + cfg.k] for s in range(min(4, n_starts))]
    else:
        rng = np.random.default_rng(0)
        h, w = cfg.frame_hw
        windows = [rng.uniform(0, 1, (cfg.k, h, w, 3)).astype(cfg.np_dtype())
                   for _ in range(2)]
    fps_mean, fps_std = measure_fps(model, windows, n_warmup=args.warmup,
                                    n_timed=args.timed, repeats=args.repeats)
    report = ProfileReport(params_m=params_m, flops_g=flops["total"] / 1e9,
                           fps_mean=fps_mean, fps_std=fps_std)
    write_report(report.as_kv(), Path(args.out), "profile_report")
    print(f"params_m={params_m:.6f} flops_g={report.flops_g:.6f} "
          f"fps={fps_mean:.3f}+/-{fps_std:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssvad",
                     description="selective state-space video anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic labeled dataset")
    _add_common(p)
    p.add_argument("--train-clips", type=int, default=None)
    p.add_argument("--test-clips", type=int, default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train on a store's normal clips")
    _add_common(p)
    p.add_argument("--data", required=True, help="clip store directory")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--log-every", type=int, default=0,
                   help="print progress every N steps")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score clips with a trained checkpoint")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--normalize", choices=("per_video", "global"), default=None)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="frame-level AUC from scores + labels")
    _add_common(p)
    p.add_argument("--scores", required=True,
                   help="scores CSV or directory of per-clip CSVs")
    p.add_argument("--labels", required=True,
                   help="labels CSV or clip store root")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("profile", help="params / FLOPs / FPS of a checkpoint")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", default=None, help="store for timing windows")
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--timed", type=int, default=4)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=_cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    if args.deterministic:
        _apply_determinism()
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
