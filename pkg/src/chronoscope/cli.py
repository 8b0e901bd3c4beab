"""Command-line driver: ``chronoscope {gen,train,eval,gradcheck,report}``.

A run lives in one output directory::

    config.txt        canonical key=value config, first line is its sha256
    train.vtds        training clips
    test.vtds         test clips
    metrics.jsonl     one MetricsRecord per evaluation
    baseline.jsonl    frame-similarity baseline (future task only)
    checkpoint.vtck   final parameters
    embeddings.csv    head-input features of the test instances (report --embeddings)
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .encoders import EncoderSpec, VideoModel, read_checkpoint
from .encoders.spec import sub_seed
from .synthvid import CLASS_NAMES, Dataset, GENERATORS, gen_template_clip, read_dataset, write_dataset
from .tasks import (
    TASKS,
    FutureTaskConfig,
    build_future_dataset,
    build_task_instances,
    candidate_volumes,
    chance_level,
    frame_similarity_baseline,
    task_input_frames,
    task_num_classes,
)
from .tensor import Tensor, no_grad
from .trainer import (
    DivergenceError,
    MetricsError,
    MetricsRecord,
    TrainConfig,
    append_records,
    evaluate,
    read_records,
    train_loop,
)
from .verify import TOLERANCE, run_suite

EXIT_OK, EXIT_FAIL, EXIT_MISSING, EXIT_DIVERGED = 0, 1, 2, 3
ENCODERS = ("rnn", "lstm", "hier", "tad", "mean")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of an experiment. Empty optional fields mean "per task/family default"."""

    task: str = "arrow"
    encoder: str = "tad"
    kind: str = ""  # asym | sym | template; default asym, template for the template task
    n_train: int = 1000
    n_test: int = 1000
    train_seed_start: int = 0
    test_seed_start: int = 1_000_000
    T_raw: int = 48
    fps: float = 12.0
    n_frames: int = 0  # 0: 16 (arrow), 4 (template)
    lr: float = 0.0  # 0: 1e-3, or 1e-4 for hier
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    eval_every: int = 1
    clip_norm: float = -1.0  # <0: 5.0 for rnn/lstm, off otherwise; 0: off
    K: int = 12
    hidden: int = 64
    dropout: float = 0.1
    C: int = 5
    tau_frames: str = "15,20,25,30,35"
    horizon_fraction: float = 0.8

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.data_kind not in (*GENERATORS, "template"):
            raise ValueError(f"kind must be asym, sym or template, got {self.kind!r}")
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("clip counts must be >= 0")
        a = range(self.train_seed_start, self.train_seed_start + self.n_train)
        b = range(self.test_seed_start, self.test_seed_start + self.n_test)
        if a and b and a.start < b.stop and b.start < a.stop:
            raise ValueError(f"train seeds [{a.start}, {a.stop}) overlap test seeds [{b.start}, {b.stop})")

    @property
    def data_kind(self) -> str:
        return self.kind or ("template" if self.task == "template" else "asym")

    def future_cfg(self) -> FutureTaskConfig:
        taus = tuple(int(f) / self.fps for f in self.tau_frames.split(","))
        return FutureTaskConfig(C=self.C, tau_schedule=taus, horizon_fraction=self.horizon_fraction)

    def train_cfg(self) -> TrainConfig:
        return TrainConfig(lr=self.lr or None, momentum=self.momentum, weight_decay=self.weight_decay,
                           epochs=self.epochs, batch_size=self.batch_size, seed=self.seed,
                           eval_every=self.eval_every, task=self.task, encoder=self.encoder,
                           clip_norm=None if self.clip_norm < 0 else self.clip_norm,
                           n_frames=self.n_frames or None)

    def encoder_spec(self) -> EncoderSpec:
        T = task_input_frames(self.task, self.future_cfg(), self.n_frames or None)
        return EncoderSpec.from_name(self.encoder, T=T, K=self.K, hidden=self.hidden, dropout=self.dropout,
                                     num_classes=task_num_classes(self.task))

    def canonical(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in sorted(fields(self), key=lambda f: f.name))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**vals)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    casts = {"int": int, "float": float, "str": str}
    vals = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            vals[key] = casts[types[key]](value)
        except ValueError:
            raise ValueError(f"{source}:{lineno}: bad value {value!r} for {key}") from None
    return ExperimentConfig(**vals)


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"), path)


def _gen_clip(args):
    kind, seed, class_id, T_raw, fps = args
    if kind == "template":
        return gen_template_clip(seed, class_id, T_raw, fps)
    return GENERATORS[kind](seed, T_raw, fps)


def threads() -> int:
    return max(1, int(os.environ.get("CHRONOSCOPE_THREADS", "1")))


def build_split(cfg: ExperimentConfig, split: str) -> Dataset:
    n, start = (cfg.n_train, cfg.train_seed_start) if split == "train" else (cfg.n_test, cfg.test_seed_start)
    kind = cfg.data_kind
    k = len(CLASS_NAMES)
    if kind == "template" and n % k:
        raise ValueError(f"template datasets need a multiple of {k} clips, got {n}")
    jobs = [(kind, start + i, i % k if kind == "template" else None, cfg.T_raw, cfg.fps) for i in range(n)]
    if threads() > 1 and n > 1:
        with ProcessPoolExecutor(threads()) as pool:
            clips = list(pool.map(_gen_clip, jobs, chunksize=max(1, n // (4 * threads()))))
    else:
        clips = [_gen_clip(j) for j in jobs]
    return Dataset(clips, list(CLASS_NAMES) if kind == "template" else [], split)


def dataset_hash(out: Path) -> str:
    h = hashlib.sha256()
    for name in ("train.vtds", "test.vtds"):
        h.update((out / name).read_bytes())
    return h.hexdigest()


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    (out / "config.txt").write_text(f"# sha256 {cfg.hash}\n{cfg.canonical()}", encoding="utf-8")


def cmd_gen(cfg: ExperimentConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    for split in ("train", "test"):
        write_dataset(build_split(cfg, split), out / f"{split}.vtds")
    _write_config(cfg, out)
    print(f"wrote {cfg.n_train} train / {cfg.n_test} test {cfg.data_kind} clips to {out} (config {cfg.hash[:12]})")
    return EXIT_OK


def _load_split(out: Path, split: str) -> Dataset:
    path = out / f"{split}.vtds"
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path} (run 'chronoscope gen' first)")
    return read_dataset(path)


def cmd_train(cfg: ExperimentConfig, out: Path, timing: bool = False) -> int:
    train, test = _load_split(out, "train"), _load_split(out, "test")
    dhash = dataset_hash(out)
    _write_config(cfg, out)
    metrics = out / "metrics.jsonl"
    metrics.write_text("")
    model = VideoModel(cfg.encoder_spec(), seed=cfg.seed)
    fcfg = cfg.future_cfg()

    def show(rec: MetricsRecord) -> None:
        print(f"epoch {rec.epoch:3d}  loss {rec.loss:.4f}  acc {100 * rec.accuracy:5.1f}", flush=True)

    if cfg.task == "future":
        # the similarity baseline uses the untrained frame CNN, so measure it before training
        inst = build_future_dataset(test, fcfg, "test", sub_seed(cfg.seed, "test"))
        acc = frame_similarity_baseline(inst, model)
        base = MetricsRecord(task="future", split="test", epoch=0, loss=float("nan"), accuracy=acc,
                             prec1=acc, prec5=1.0, seed=cfg.seed, config_hash=cfg.hash,
                             encoder="frame_similarity", dataset_hash=dhash, chance=fcfg.chance, n=len(inst))
        (out / "baseline.jsonl").write_text(base.to_json() + "\n")
    try:
        train_loop(cfg.train_cfg(), train, test, model, future_cfg=fcfg, metrics_path=metrics,
                   checkpoint_path=out / "checkpoint.vtck", config_hash=cfg.hash, dataset_hash=dhash,
                   timing=timing, on_record=show)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}; last good parameters kept in {out / 'checkpoint.vtck'}",
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def load_model(cfg: ExperimentConfig, out: Path) -> VideoModel:
    path = out / "checkpoint.vtck"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path} (run 'chronoscope train' first)")
    digest, state = read_checkpoint(path)
    if digest.hex() != cfg.hash:
        raise ValueError(f"{path} was trained with config {digest.hex()[:12]}, not {cfg.hash[:12]}")
    model = VideoModel(cfg.encoder_spec(), seed=cfg.seed)
    model.load_state_dict(state)
    return model


def cmd_eval(cfg: ExperimentConfig, out: Path) -> int:
    test = _load_split(out, "test")
    model = load_model(cfg, out)
    inst = build_task_instances(cfg.task, test, "test", sub_seed(cfg.seed, "test"), cfg.future_cfg(),
                                cfg.n_frames or None)
    rec = evaluate(model, inst, cfg.task, cfg.epochs, "test", test.class_names, seed=cfg.seed,
                   config_hash=cfg.hash, encoder=model.spec.name, dataset_hash=dataset_hash(out),
                   chance=chance_level(cfg.task, cfg.future_cfg()))
    append_records(out / "eval.jsonl", [rec])
    print(rec.to_json())
    return EXIT_OK


def cmd_gradcheck() -> int:
    results = run_suite()
    for r in results:
        print(f"{r.name:24s} {r.max_rel_error:10.3e}  {'ok' if r.passed else 'FAIL'}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks below {TOLERANCE:g}")
    return EXIT_FAIL if failed else EXIT_OK


def report_table(records: Sequence[MetricsRecord]) -> str:
    """Final accuracy per (task, encoder) with a chance row closing each task block."""
    final: dict = {}
    chance: dict = {}
    for r in records:
        key = (r.task, r.encoder)
        if key not in final or r.epoch >= final[key].epoch:
            final[key] = r
        if r.chance is not None:
            chance[r.task] = r.chance
    for task in {t for t, _ in final}:
        hashes = {r.dataset_hash for (t, _), r in final.items() if t == task}
        if len(hashes) > 1:
            raise ValueError(f"metrics for task {task!r} come from different datasets: "
                             f"{sorted(h[:12] for h in hashes)}")
    lines = [f"{'task':10s} {'encoder':18s} {'acc':>6s} {'prec@1':>7s} {'prec@5':>7s} {'epoch':>6s}"]
    for task in sorted({t for t, _ in final}):
        for (t, enc), r in sorted(final.items()):
            if t == task:
                lines.append(f"{t:10s} {enc:18s} {100 * r.accuracy:6.1f} {100 * r.prec1:7.1f} "
                             f"{100 * r.prec5:7.1f} {r.epoch:6d}")
        if task in chance:
            lines.append(f"{task:10s} {'chance':18s} {100 * chance[task]:6.1f}")
    return "\n".join(lines)


def export_embeddings(run: Path, path: Path) -> int:
    """Head-input features of every test instance: ``instance,label,f0,f1,...``.

    Future-selection instances are embedded with their true candidate appended.
    """
    cfg = parse_config((run / "config.txt").read_text(encoding="utf-8"), str(run / "config.txt"))
    test = _load_split(run, "test")
    model = load_model(cfg, run)
    inst = build_task_instances(cfg.task, test, "test", sub_seed(cfg.seed, "test"), cfg.future_cfg(),
                                cfg.n_frames or None)
    rows = []
    with no_grad():
        for s in range(0, len(inst), 32):
            chunk = inst[s: s + 32]
            if cfg.task == "future":
                vols = np.stack([candidate_volumes(i)[i.target] for i in chunk])
            else:
                vols = np.stack([i.volume for i in chunk])
            feats = model.features(Tensor(vols), mode="eval")[0].data
            rows.extend(zip(range(s, s + len(chunk)), (i.target for i in chunk), feats))
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        width = len(rows[0][2]) if rows else 0
        w.writerow(["instance", "label"] + [f"f{j}" for j in range(width)])
        for idx, label, vec in rows:
            w.writerow([idx, label] + [repr(float(v)) for v in vec])
    return len(rows)


def cmd_report(paths: Sequence[str], out: Optional[Path], embeddings: Optional[str]) -> int:
    records = []
    for p in paths:
        recs = read_records(p)
        if not recs:
            raise MetricsError(f"{p}: no metrics records")
        records.extend(recs)
    table = report_table(records)
    print(table)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    if embeddings:
        dest = (out or Path(embeddings)) / "embeddings.csv"
        n = export_embeddings(Path(embeddings), dest)
        print(f"wrote {n} embeddings to {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chronoscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_config=True):
        if with_config:
            p.add_argument("--config", help="key=value config file")
            p.add_argument("--seed", type=int, help="overrides the config seed")
            p.add_argument("--encoder", choices=ENCODERS, help="overrides the config encoder")
            p.add_argument("--task", choices=TASKS, help="overrides the config task")
        p.add_argument("--out", default="run", help="output directory (default: ./run)")

    common(sub.add_parser("gen", help="generate train/test dataset files"))
    p = sub.add_parser("train", help="train on generated datasets")
    common(p)
    p.add_argument("--timing", action="store_true", help="keep wall-clock seconds in the metrics file")
    common(sub.add_parser("eval", help="evaluate the saved checkpoint on the test split"))
    sub.add_parser("gradcheck", help="finite-difference check of every primitive and encoder")
    p = sub.add_parser("report", help="compare final metrics of one or more runs")
    p.add_argument("metrics", nargs="+", help="metrics .jsonl files")
    p.add_argument("--out", help="also write report.txt (and embeddings.csv) here")
    p.add_argument("--embeddings", metavar="RUN_DIR", help="export test-set embeddings of this run")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=threads()):
            return _dispatch(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def _dispatch(args) -> int:
    if args.command == "gradcheck":
        return cmd_gradcheck()
    if args.command == "report":
        return cmd_report(args.metrics, Path(args.out) if args.out else None, args.embeddings)
    cfg = load_config(args.config).with_overrides(seed=args.seed, encoder=args.encoder, task=args.task)
    out = Path(args.out)
    if args.command == "gen":
        return cmd_gen(cfg, out)
    if args.command == "train":
        return cmd_train(cfg, out, args.timing)
    return cmd_eval(cfg, out)


if __name__ == "__main__":
    sys.exit(main())
