"""Command-line entry point: ``xmhash <command> [flags]``.

Relative output paths resolve against ``$XMHASH_OUTPUT_DIR`` (default: the
current directory). Exit codes: 0 ok, 2 config, 3 data, 4 numeric, 5 io.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from ._accel import backend_name
from .checkpoint import (
    file_digest,
    load_label_anchored,
    load_split,
    load_student,
    load_teacher,
    save_label_anchored,
    save_split,
    save_student,
    save_teacher,
)
from .config import RunConfig
from .data import Dataset, SplitSpec, gen_synthetic, load_dataset, save_dataset, split_query_gallery, write_prompts
from .errors import ArtifactIOError, ConfigError, XMHashError
from .experiments import SWEEP_VALUES, cross_validate, sweep
from .retrieval import evaluate
from .student import train_label_anchored, train_student
from .teacher import train_teacher

log = logging.getLogger("xmhash")

OUTPUT_DIR_ENV = "XMHASH_OUTPUT_DIR"


def out_path(p: str | Path) -> Path:
    p = Path(p)
    if p.is_absolute():
        return p
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / p


# ---------------------------------------------------------------- argument groups


def _add_data_args(p):
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON Lines)")
    p.add_argument("--split", help="split file; overrides --n-query/--n-train/--split-seed")
    p.add_argument("--n-query", type=int, help="default: N // 10")
    p.add_argument("--n-train", type=int, help="default: min(5 * n_query, N - n_query)")
    p.add_argument("--split-seed", type=int, default=0)


def _add_train_args(p):
    d = RunConfig()
    p.add_argument("--code-length", "--bits", dest="code_length", type=int, default=d.code_length)
    p.add_argument("--allow-any-length", action="store_true", help="accept code lengths outside 16/32/64/128")
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--hidden", default=",".join(map(str, d.hidden)), help="comma-separated hidden widths; empty for a single linear layer")
    p.add_argument("--hidden-activation", default=d.hidden_activation, choices=("relu", "tanh", "identity"))
    p.add_argument("--output-activation", default=d.output_activation, choices=("identity", "tanh", "relu"))
    p.add_argument("--label-mode", default=d.label_mode, choices=("multihot", "prompt_feat"))
    p.add_argument("--pair-scope", default=d.pair_scope, choices=("full", "off_diagonal"))


def config_from_args(args) -> RunConfig:
    hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip()) if args.hidden else ()
    return RunConfig(
        code_length=args.code_length,
        alpha=args.alpha,
        beta=args.beta,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        hidden=hidden,
        hidden_activation=args.hidden_activation,
        output_activation=args.output_activation,
        label_mode=args.label_mode,
        pair_scope=args.pair_scope,
        allow_any_length=args.allow_any_length,
    )


def dataset_and_split(args) -> tuple[Dataset, SplitSpec, dict]:
    dataset = load_dataset(args.manifest)
    if args.split:
        split = load_split(args.split)
        echo = {"manifest": str(args.manifest), "split_file": str(args.split)}
    else:
        n_query = args.n_query if args.n_query is not None else max(1, dataset.N // 10)
        n_train = args.n_train if args.n_train is not None else min(5 * n_query, dataset.N - n_query)
        split = split_query_gallery(dataset, n_query, n_train, args.split_seed)
        echo = {"manifest": str(args.manifest), "n_query": n_query, "n_train": n_train, "split_seed": args.split_seed}
    return dataset, split, echo


class ProgressTable:
    """Per-epoch losses: CSV file plus a sparse echo on stderr."""

    def __init__(self, path: Path, every: int):
        self.path = path
        self.every = max(1, every)
        self.rows: list[tuple[str, int, float]] = []

    def hook(self, stage: str):
        def record(epoch, loss):
            self.rows.append((stage, epoch, loss))
            if epoch % self.every == 0:
                print(f"{stage:>8} epoch {epoch:5d}  loss {loss:.6g}", file=sys.stderr)

        return record

    def write(self):
        lines = ["stage,epoch,loss"] + [f"{s},{e},{l!r}" for s, e, l in self.rows]
        _write_text(self.path, "\n".join(lines) + "\n")


def _write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def _echo(args, config: RunConfig | None, extra: dict) -> dict:
    d = {"command": args.command, **extra}
    if config is not None:
        d["config"] = config.to_dict()
    return d


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    ds = gen_synthetic(
        K=args.labels,
        per_label=args.per_label,
        d_v=args.d_v,
        d_t=args.d_t,
        noise_sigma=args.noise,
        multilabel_prob=args.multilabel_prob,
        seed=args.seed,
    )
    path = out_path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, path)
    print(f"wrote {path}: N={ds.N} K={ds.K} d_v={ds.d_v} d_t={ds.d_t}")
    return 0


def cmd_prompts(args) -> int:
    ds = load_dataset(args.manifest)
    path = out_path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_prompts(ds.label_names, path, args.mode)
    print(f"wrote {ds.K} {args.mode} strings to {path}")
    return 0


def cmd_split(args) -> int:
    _, split, echo = dataset_and_split(args)
    path = out_path(args.out)
    save_split(split, path)
    print(f"wrote {path}: query={len(split.query)} train={len(split.train)} gallery={len(split.gallery)}")
    return 0


def cmd_train_teacher(args) -> int:
    config = config_from_args(args)
    dataset, split, echo = dataset_and_split(args)
    _print_config(config)
    path = out_path(args.out)
    progress = ProgressTable(path.with_suffix(".progress.csv"), args.log_every)
    state = train_teacher(dataset, split, config, progress.hook("teacher"))
    digest = save_teacher(state, path)
    progress.write()
    print(f"teacher checkpoint {path} sha256={digest}")
    print(f"loss first={state.loss_history[0]:.6g} last={state.loss_history[-1]:.6g}")
    return 0


def cmd_train_student(args) -> int:
    config = config_from_args(args)
    dataset, split, echo = dataset_and_split(args)
    teacher_path = Path(args.teacher)
    teacher = load_teacher(teacher_path)
    digest = file_digest(teacher_path)
    print(f"frozen teacher {teacher_path} sha256={digest} image-head={teacher.image_params.digest()}", flush=True)
    _print_config(config)
    path = out_path(args.out)
    progress = ProgressTable(path.with_suffix(".progress.csv"), args.log_every)
    state = train_student(dataset, split, teacher, config, progress.hook("student"))
    if state.image_params.digest() != teacher.image_params.digest():
        raise XMHashError("image head changed during student training")
    out_digest = save_student(state, path, teacher_path)
    progress.write()
    print(f"student checkpoint {path} sha256={out_digest}")
    print(f"loss first={state.loss_history[0]:.6g} last={state.loss_history[-1]:.6g}")
    return 0


def cmd_train_ablation(args) -> int:
    config = config_from_args(args)
    dataset, split, echo = dataset_and_split(args)
    _print_config(config)
    path = out_path(args.out)
    progress = ProgressTable(path.with_suffix(".progress.csv"), args.log_every)
    stage_hooks = {1: progress.hook("stage1"), 2: progress.hook("stage2")}
    state = train_label_anchored(dataset, split, config, lambda st, ep, l: stage_hooks[st](ep, l))
    digest = save_label_anchored(state, path)
    progress.write()
    print(f"ablation checkpoint {path} sha256={digest} label-head={state.label_params.digest()}")
    return 0


def cmd_eval(args) -> int:
    dataset, split, echo = dataset_and_split(args)
    if args.ablation:
        state = load_label_anchored(args.ablation)
        image, text = state.image_params, state.text_params
        echo.update(ablation=str(args.ablation), run_config=state.config.to_dict() if state.config else None)
    elif args.student:
        student, teacher = load_student(args.student, args.teacher)
        image, text = teacher.image_params, student.text_params
        print(f"verified teacher image-head={student.teacher_digest}")
        echo.update(student=str(args.student), run_config=student.config.to_dict() if student.config else None)
    else:
        raise ConfigError("eval needs --student (with its teacher) or --ablation")
    report = evaluate(image, text, dataset, split, config={"command": "eval", **echo})
    paths = report.write(out_path(args.out_dir), args.stem)
    print(f"MAP i2t={report.map_i2t:.4f} t2i={report.map_t2i:.4f} (random ranking i2t={report.random_map['i2t']:.4f} t2i={report.random_map['t2i']:.4f})")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_crossval(args) -> int:
    config = config_from_args(args)
    dataset, split, echo = dataset_and_split(args)
    _print_config(config)
    result = cross_validate(dataset, split, config, workers=args.workers)
    out_dir = out_path(args.out_dir)
    for k, rep in enumerate(result.reports):
        rep.write(out_dir, f"fold{k}")
    summary = {**result.summary(), "config": _echo(args, config, echo)}
    _write_text(out_dir / "crossval_summary.json", json.dumps(summary, indent=2) + "\n")
    rows = ["fold,map_i2t,map_t2i"] + [f"{f['fold']},{f['map_i2t']!r},{f['map_t2i']!r}" for f in summary["folds"]]
    rows.append(f"mean,{summary['mean_map_i2t']!r},{summary['mean_map_t2i']!r}")
    _write_text(out_dir / "crossval_summary.csv", "\n".join(rows) + "\n")
    print("\n".join(rows))
    return 0


def cmd_sweep(args) -> int:
    config = config_from_args(args)
    dataset, split, echo = dataset_and_split(args)
    values = tuple(float(v) for v in args.values.split(",")) if args.values else SWEEP_VALUES
    rows = sweep(dataset, split, config, values, args.grid_mode, workers=args.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "beta", "map_i2t", "map_t2i", "error"])
    for r in rows:
        w.writerow([repr(r.alpha), repr(r.beta), "" if r.map_i2t is None else repr(r.map_i2t), "" if r.map_t2i is None else repr(r.map_t2i), r.error or ""])
    path = out_path(args.out)
    _write_text(path, buf.getvalue())
    _write_text(path.with_suffix(".config.json"), json.dumps(_echo(args, config, {**echo, "grid_mode": args.grid_mode, "values": list(values)}), indent=2) + "\n")
    sys.stdout.write(buf.getvalue())
    failed = sum(r.error is not None for r in rows)
    if failed:
        print(f"{failed} grid point(s) failed; see the error column", file=sys.stderr)
    return 0


def _print_config(config: RunConfig):
    print(
        f"config: L={config.code_length} alpha={config.alpha:g} beta={config.beta:g} batch={config.batch_size} "
        f"epochs={config.epochs} lr={config.learning_rate:g} seed={config.seed} backend={backend_name()}",
        flush=True,
    )


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xmhash", description="Two-stage cross-modal hashing over precomputed features.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic Gaussian-centroid dataset")
    p.add_argument("--labels", type=int, default=3)
    p.add_argument("--per-label", type=int, default=100)
    p.add_argument("--d-v", type=int, default=32)
    p.add_argument("--d-t", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--multilabel-prob", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synthetic.jsonl")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prompts", help="export one label prompt per line, ordered by label id")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("prompt", "raw"), default="prompt")
    p.add_argument("--out", default="prompts.txt")
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("split", help="write a query/train/gallery split file")
    _add_data_args(p)
    p.add_argument("--out", default="split.json")
    p.set_defaults(func=cmd_split)

    helps = {
        "train-teacher": "stage one: image and label heads",
        "train-student": "stage two: text head against a frozen teacher",
        "train-ablation": "label-anchored ablation (three heads)",
    }
    for name, func, default_out in (
        ("train-teacher", cmd_train_teacher, "teacher.json"),
        ("train-student", cmd_train_student, "student.json"),
        ("train-ablation", cmd_train_ablation, "ablation.json"),
    ):
        p = sub.add_parser(name, help=helps[name])
        _add_data_args(p)
        _add_train_args(p)
        if name == "train-student":
            p.add_argument("--teacher", required=True, help="teacher checkpoint")
        p.add_argument("--out", default=default_out)
        p.add_argument("--log-every", type=int, default=10, help="echo every n-th epoch loss")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="MAP and P-R for both retrieval directions")
    _add_data_args(p)
    p.add_argument("--student", help="student checkpoint")
    p.add_argument("--teacher", help="teacher checkpoint (default: path recorded in the student)")
    p.add_argument("--ablation", help="label-anchored ablation checkpoint")
    p.add_argument("--out-dir", default="eval")
    p.add_argument("--stem", default="report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crossval", help="five-fold cross-validation of the full pipeline")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="crossval")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("sweep", help="alpha/beta sensitivity grid")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--grid-mode", choices=("tied", "independent"), default="tied")
    p.add_argument("--values", help="comma-separated grid values (default 0.1..1.0 step 0.1)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except XMHashError as exc:
        print(f"xmhash: {exc.category} error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"xmhash: io error: {exc}", file=sys.stderr)
        return ArtifactIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
