"""Command-line entry point: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import torch

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .data import corpus_stats, read_events, write_events, write_json
from .errors import ConfigInvalid, InfodemicError, ValidationError
from .evaluate import REPORT_SCHEMA, evaluate_samples, observation_sweep, sweep_rows, write_sweep_csv
from .export import EXPORT_KINDS, export_artifacts
from .legacy import convert_legacy_corpus
from .model import MultiTaskModel, ModelConfig
from .pipeline import (
    CHECKPOINT_FILE,
    EMBEDDINGS_FILE,
    EVENTS_FILE,
    LABELS_FILE,
    SPLITS_FILE,
    load_corpus,
    prepare_corpus,
    pretrain_for,
    run_training,
    samples_for,
    text_encoder_for,
)
from .pretrain import UserEmbeddingTable
from .synth import SynthConfig, generate_synthetic_corpus
from .trainer import STRATEGIES

log = logging.getLogger("infodemic")

EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_RUNTIME = 2, 3, 4, 1


class UsageError(InfodemicError):
    pass


class IoError(InfodemicError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def git_blob_hash(path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

class Run:
    """Tracks inputs and outputs of one command and writes its manifest."""

    def __init__(self, command: str, args, cfg: Optional[RunConfig]):
        self.command = command
        self.args = args
        self.cfg = cfg
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def use(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise IoError(f"missing input file {path}")
        self.inputs[str(path)] = git_blob_hash(path)
        return path

    def made(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def finish(self, out_dir, extra: Optional[dict] = None) -> Path:
        manifest = {
            "command": self.command,
            "argv": self.args.argv,
            "version": __version__,
            "seed": self.args.seed if self.cfg is None else self.cfg.run.seed,
            "config": None if self.cfg is None else self.cfg.to_dict(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time": time.perf_counter() - self.t0,
        }
        if extra:
            manifest.update(extra)
        path = Path(out_dir) / f"manifest-{self.command}.json"
        write_json(path, manifest)
        return path


def _out_dir(args) -> Path:
    out = Path(args.out or args.data or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _need_data(args) -> Path:
    if not args.data:
        raise UsageError(f"{args.command} needs --data DIR")
    d = Path(args.data)
    if not d.is_dir():
        raise IoError(f"data directory {d} does not exist")
    return d


def _config(args) -> RunConfig:
    overrides = {
        "run.seed": args.seed,
        "run.jobs": args.jobs,
        "run.fractions": args.fracs,
        "train.strategy": args.strategy,
        "train.epochs": args.epochs,
        "train.obs_fraction": args.obs_frac,
    }
    cfg = load_run_config(args.config, overrides)
    torch.set_num_threads(max(1, cfg.run.jobs))
    return cfg


def _parse_fracs(text: str) -> tuple:
    try:
        fracs = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"bad --fracs value {text!r}") from exc
    if not fracs:
        raise UsageError("--fracs needs at least one value")
    return fracs


def _load_model(run: Run, args, data: Path) -> tuple[MultiTaskModel, dict]:
    ckpt_path = run.use(args.checkpoint or data / CHECKPOINT_FILE)
    payload = load_checkpoint(ckpt_path)
    model = MultiTaskModel(ModelConfig(**payload["config"]["model"]))
    model.load_state_dict(payload["model"])
    return model, payload


def _load_table(run: Run, data: Path) -> UserEmbeddingTable:
    return UserEmbeddingTable.load(run.use(data / EMBEDDINGS_FILE))


def _checkpoint_config(payload: dict, args) -> RunConfig:
    """The run config stored in a checkpoint, with this command's CLI overrides on top."""
    stored = payload["config"]
    overrides = {f"{sec}.{k}": v for sec in ("run", "model", "train", "pretrain", "text")
                 for k, v in stored.get(sec, {}).items()}
    cli = {"run.seed": args.seed, "run.fractions": args.fracs, "train.obs_fraction": args.obs_frac}
    overrides.update({k: v for k, v in cli.items() if v is not None})
    cfg = load_run_config(None, overrides)
    cfg.sources = dict(stored.get("overrides", {}))
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> None:
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0
    sc = SynthConfig(n_events=args.events, rho=args.rho, user_pool=args.users, rumor_ratio=args.rumor_ratio)
    events, _ = generate_synthetic_corpus(sc, seed)
    run = Run("synth", args, None)
    write_events(run.made(out / EVENTS_FILE), events)
    run.finish(out, {"seed": seed, "synth_config": sc.to_dict()})


def cmd_prepare_data(args) -> None:
    data = _need_data(args)
    cfg = _config(args)
    run = Run("prepare-data", args, cfg)
    events = read_events(run.use(data / EVENTS_FILE))
    corpus = prepare_corpus(events, cfg.run.seed)
    out = _out_dir(args)
    if out != data:
        write_events(run.made(out / EVENTS_FILE), events)
    write_json(run.made(out / LABELS_FILE), corpus.labels.to_dict())
    write_json(run.made(out / SPLITS_FILE), corpus.splits.to_dict())
    run.finish(out)


def cmd_dataset_stats(args) -> None:
    data = _need_data(args)
    run = Run("dataset-stats", args, None)
    corpus = load_corpus(data, need_labels=(data / LABELS_FILE).exists(), need_splits=False)
    run.use(data / EVENTS_FILE)
    if (data / LABELS_FILE).exists():
        run.use(data / LABELS_FILE)
    table = corpus_stats(corpus.events, corpus.labels)
    out = _out_dir(args)
    text = table.to_text()
    (run.made(out / "stats.txt")).write_text(text + "\n", encoding="utf-8")
    write_json(run.made(out / "stats.json"), table.to_dict())
    print(text)
    run.finish(out)


def cmd_pretrain_users(args) -> None:
    data = _need_data(args)
    cfg = _config(args)
    run = Run("pretrain-users", args, cfg)
    for name in (EVENTS_FILE, LABELS_FILE, SPLITS_FILE):
        run.use(data / name)
    corpus = load_corpus(data)
    table = pretrain_for(corpus, cfg)
    out = _out_dir(args)
    table.save(run.made(out / EMBEDDINGS_FILE))
    run.finish(out)


def cmd_train(args) -> None:
    data = _need_data(args)
    cfg = _config(args)
    run = Run("train", args, cfg)
    for name in (EVENTS_FILE, LABELS_FILE, SPLITS_FILE):
        run.use(data / name)
    corpus = load_corpus(data)
    table = _load_table(run, data)
    result, trainer = run_training(cfg, corpus, table)
    out = _out_dir(args)
    with open(run.made(out / "train_log.jsonl"), "w", encoding="utf-8") as fh:
        for rec in result.log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    save_checkpoint(run.made(out / CHECKPOINT_FILE), result.best_state, cfg.to_dict(),
                    extra={"best_epoch": result.best_epoch})
    save_checkpoint(run.made(out / "last.ckpt"), result.final_state, cfg.to_dict(),
                    trainer_state=trainer.state_dict(), extra={"epochs": cfg.train.epochs})
    run.finish(out, {"best_epoch": result.best_epoch})


def cmd_eval(args) -> None:
    import jsonschema

    data = _need_data(args)
    run = Run("eval", args, None)
    model, payload = _load_model(run, args, data)
    cfg = _checkpoint_config(payload, args)
    run.cfg = cfg
    for name in (EVENTS_FILE, LABELS_FILE, SPLITS_FILE):
        run.use(data / name)
    corpus = load_corpus(data)
    table = _load_table(run, data)
    frac = cfg.train.obs_fraction
    samples = samples_for(corpus, args.split, frac, table, text_encoder_for(cfg))
    report = evaluate_samples(model, samples, {"split": args.split, "obs_fraction": frac, "seed": cfg.run.seed})
    doc = report.to_dict()
    jsonschema.validate(doc, REPORT_SCHEMA)
    out = _out_dir(args)
    write_json(run.made(out / f"report-{args.split}.json"), doc)
    print(json.dumps(doc, indent=2, sort_keys=True))
    run.finish(out)


def cmd_sweep(args) -> None:
    data = _need_data(args)
    run = Run("sweep-observation", args, None)
    model, payload = _load_model(run, args, data)
    cfg = _checkpoint_config(payload, args)
    run.cfg = cfg
    for name in (EVENTS_FILE, LABELS_FILE, SPLITS_FILE):
        run.use(data / name)
    corpus = load_corpus(data)
    table = _load_table(run, data)
    reports = observation_sweep(model, corpus.split_events(args.split), corpus.labels, table,
                                text_encoder_for(cfg), cfg.run.fractions, args.split, cfg.run.seed)
    out = _out_dir(args)
    write_json(run.made(out / f"sweep-{args.split}.json"), [r.to_dict() for r in reports])
    write_sweep_csv(run.made(out / f"sweep-{args.split}.csv"), reports)
    for row in sweep_rows(reports):
        print(json.dumps(row, sort_keys=True))
    run.finish(out)


def cmd_export(args) -> None:
    data = _need_data(args)
    run = Run("export", args, None)
    model, payload = _load_model(run, args, data)
    cfg = _checkpoint_config(payload, args)
    run.cfg = cfg
    for name in (EVENTS_FILE, LABELS_FILE, SPLITS_FILE):
        run.use(data / name)
    corpus = load_corpus(data)
    table = _load_table(run, data)
    kinds = [k.strip() for k in args.kind.split(",") if k.strip()]
    for k in kinds:
        if k not in EXPORT_KINDS:
            raise UsageError(f"unknown export kind {k!r}; choose from {', '.join(EXPORT_KINDS)}")
    samples = samples_for(corpus, args.split, cfg.train.obs_fraction, table, text_encoder_for(cfg))
    out = _out_dir(args)
    for path in export_artifacts(model, samples, out, kinds).values():
        run.made(path)
    run.finish(out)


def cmd_convert_legacy(args) -> None:
    data = _need_data(args)
    run = Run("convert-legacy", args, None)
    run.use(data / "label.txt")
    events, report = convert_legacy_corpus(data)
    if not args.out:
        raise UsageError("convert-legacy needs --out DIR")
    out = _out_dir(args)
    write_events(run.made(out / EVENTS_FILE), events)
    write_json(run.made(out / "conversion_report.json"), report.to_dict())
    run.finish(out, {"conversion": report.to_dict()})


COMMANDS = {
    "synth": cmd_synth,
    "prepare-data": cmd_prepare_data,
    "dataset-stats": cmd_dataset_stats,
    "pretrain-users": cmd_pretrain_users,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-observation": cmd_sweep,
    "export": cmd_export,
    "convert-legacy": cmd_convert_legacy,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--data", help="input directory")
    common.add_argument("--out", help="output directory (defaults to --data)")
    common.add_argument("--seed", type=int)
    common.add_argument("--obs-frac", type=float, dest="obs_frac")
    common.add_argument("--strategy", choices=STRATEGIES)
    common.add_argument("--epochs", type=int)
    common.add_argument("--config", help="INI file with [run]/[model]/[train]/[pretrain]/[text] sections")
    common.add_argument("--jobs", type=int)
    common.add_argument("--fracs", type=_parse_fracs, help="comma-separated observation fractions")
    common.add_argument("--checkpoint", help="checkpoint file (defaults to DATA/model.ckpt)")
    common.add_argument("--split", default="test", choices=("train", "validation", "test"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="infodemic", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    synth = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    synth.add_argument("--events", type=int, default=500)
    synth.add_argument("--rho", type=float, default=0.5)
    synth.add_argument("--users", type=int, default=None, help="user pool size")
    synth.add_argument("--rumor-ratio", type=float, default=0.5, dest="rumor_ratio")
    sub.add_parser("prepare-data", parents=[common], help="derive labels and leakage-free splits")
    sub.add_parser("dataset-stats", parents=[common], help="per-class corpus statistics")
    sub.add_parser("pretrain-users", parents=[common], help="contrastive user pre-training")
    sub.add_parser("train", parents=[common], help="train the multi-task model")
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a split")
    sub.add_parser("sweep-observation", parents=[common], help="evaluate over observation fractions")
    exp = sub.add_parser("export", parents=[common], help="export communities, embeddings, predictions")
    exp.add_argument("--kind", default=",".join(EXPORT_KINDS))
    sub.add_parser("convert-legacy", parents=[common], help="convert tree-file cascades")
    return parser


def _error_record(exc: BaseException, category: str, command: Optional[str]) -> dict:
    return {"error": type(exc).__name__, "category": category, "message": str(exc), "command": command}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    command = None
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[command](args)
        return 0
    except UsageError as exc:
        code, rec = EXIT_USAGE, _error_record(exc, "usage", command)
    except (IoError, OSError) as exc:
        code, rec = EXIT_IO, _error_record(exc, "io", command)
    except (ValidationError, ConfigInvalid) as exc:
        code, rec = EXIT_VALIDATION, _error_record(exc, "validation", command)
    except InfodemicError as exc:
        code, rec = EXIT_RUNTIME, _error_record(exc, "runtime", command)
    except Exception as exc:  # noqa: BLE001 - reported as a structured record
        if type(exc).__name__ == "ValidationError" and type(exc).__module__.startswith("jsonschema"):
            code, rec = EXIT_VALIDATION, _error_record(exc, "validation", command)
        else:
            code, rec = EXIT_RUNTIME, _error_record(exc, "runtime", command)
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
