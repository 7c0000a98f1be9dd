"""Command-line entry point: synth, train, eval, predict, gradcheck, ablate.

Exit codes: 0 success, 2 usage error, 3 validation failure, 4 numerical failure.
Every command writes a run manifest (JSON) describing what it did.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .data import SyntheticConfig, generate_synthetic, load_dataset, load_graph, save_dataset, split_dataset
from .errors import ConfigurationError, GradientError, GraphValidationError, NumericalError, VocabularyError
from .experiments import (
    ABLATION_ROWS,
    DESK_EPOCHS,
    default_target_scale,
    desk_model_config,
    format_table,
    run_ablation,
    run_gradcheck,
    select_rows,
)
from .metrics import MetricReport
from .predictor import Model, ModelConfig
from .training import TrainConfig, evaluate, history_csv, train

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3, 4
GRADCHECK_TOLERANCE = 1e-4

log = logging.getLogger("archrep")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# run manifest


def git_blob_hash(data: bytes) -> str:
    """SHA-1 of the bytes in git's blob framing."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class RunManifest:
    def __init__(self, command: str, config: dict, seed: int, inputs: Sequence[str]):
        self.command = command
        self.config = config
        self.seed = seed
        self.started = datetime.now(timezone.utc).isoformat()
        self.finished: Optional[str] = None
        self.inputs = {p: git_blob_hash(Path(p).read_bytes()) for p in inputs}
        self.outputs: Dict[str, str] = {}
        self.exit_code: Optional[int] = None

    @property
    def input_hash(self) -> str:
        """Hash of the command, resolved config, seed and input file contents."""
        key = json.dumps(
            {"command": self.command, "config": self.config, "seed": self.seed, "inputs": sorted(self.inputs.values())},
            sort_keys=True,
        )
        return git_blob_hash(key.encode())

    def record_output(self, path: Path) -> None:
        self.outputs[str(path)] = git_blob_hash(Path(path).read_bytes())

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "started": self.started,
            "finished": self.finished,
            "inputs": self.inputs,
            "input_hash": self.input_hash,
            "outputs": self.outputs,
            "exit_code": self.exit_code,
            "version": __version__,
        }

    def write(self, path: Path) -> None:
        self.finished = datetime.now(timezone.utc).isoformat()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


def _manifest_path(args, out: Optional[str]) -> Path:
    if args.manifest:
        return Path(args.manifest)
    if out:
        return Path(str(out) + ".manifest.json")
    return Path(f"{args.command}.manifest.json")


# ---------------------------------------------------------------------------
# config handling


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return cfg


def _override(base: dict, **flags) -> dict:
    """Flags win over config-file values; ``None`` means the flag was not given."""
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _write(path: Path, text: str, manifest: RunManifest) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    manifest.record_output(path)


def _report_text(rep: MetricReport, path: Optional[str]) -> str:
    return rep.to_csv() if path and path.endswith(".csv") else rep.to_json()


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg: dict) -> RunManifest:
    section = cfg.get("synthetic", cfg)
    d = _override(
        section,
        family=args.family,
        count=args.count,
        depth_min=args.depth_min,
        depth_max=args.depth_max,
        noise_std=args.noise_std,
        mode=args.mode,
        seed=args.seed,
    )
    try:
        syn = SyntheticConfig(**d)
    except TypeError as e:
        raise UsageError(f"bad synthetic config: {e}") from None
    m = RunManifest("synth", syn.to_dict(), syn.seed, [args.config] if args.config else [])
    ds = generate_synthetic(syn)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    m.record_output(out)
    print(f"wrote {len(ds)} graphs to {out}")
    return m


def _model_config(args, cfg: dict, task: str, target_scale: float) -> ModelConfig:
    if "model" in cfg:
        d = _override(cfg["model"], task=task)
        d.setdefault("target_scale", target_scale)
        mc = ModelConfig.from_dict(d)
    else:
        mc = desk_model_config(task, target_scale)
    block = asdict(mc.block)
    block = _override(block, kind=args.block, attention=getattr(args, "attention", None))
    if args.d_model is not None:
        block.update(d_model=args.d_model, d_attn=max(args.d_model // 2, 1), d_hidden=2 * args.d_model)
    mc.block = type(mc.block)(**block)
    if args.num_blocks is not None:
        mc.num_blocks = args.num_blocks
    return mc


def _train_split(args, ds):
    if args.split:
        return split_dataset(ds, args.split, seed=args.seed)
    return ds, None


def cmd_train(args, cfg: dict) -> RunManifest:
    ds = load_dataset(args.data)
    task = args.task or cfg.get("task") or ("latency" if ds.mode == "full" else "accuracy")
    tr, te = _train_split(args, ds)
    mc = _model_config(args, cfg, task, default_target_scale(tr.graphs, task))
    tc = TrainConfig(
        **_override(
            cfg.get("train", {}),
            epochs=args.epochs,
            batch_size=args.batch_size,
            peak_lr=args.peak_lr,
            seed=args.seed,
            block_kind=mc.block.kind,
            task=task,
        )
    )
    if args.epochs is None and "epochs" not in cfg.get("train", {}):
        tc.epochs = DESK_EPOCHS
    resolved = {"model": mc.to_dict(), "train": tc.to_dict(), "split": args.split}
    m = RunManifest("train", resolved, tc.seed, [args.data] + ([args.config] if args.config else []))
    model = Model(mc, seed=tc.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def dump_last_good(result):
        save_checkpoint(Checkpoint.capture(result.model, result.optimizer, result.rng, result.steps), out)
        m.record_output(out)

    result = train(tr.graphs, model, tc, on_divergence=dump_last_good, log_every=args.log_every)
    save_checkpoint(Checkpoint.capture(model, result.optimizer, result.rng, result.steps), out)
    m.record_output(out)
    _write(Path(str(out) + ".history.csv"), history_csv(result.history), m)
    if te is not None and len(te):
        rep = evaluate(model, te.graphs)
        _write(Path(str(out) + ".metrics.json"), rep.to_json(), m)
        print(rep.to_json(), end="")
    print(f"trained {result.steps} steps; checkpoint {out}")
    return m


def cmd_eval(args, cfg: dict) -> RunManifest:
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.build_model()
    ds = load_dataset(args.data)
    graphs = split_dataset(ds, args.split, seed=args.seed)[1].graphs if args.split else ds.graphs
    m = RunManifest("eval", {"split": args.split, "model": ckpt.config}, args.seed, [args.ckpt, args.data])
    rep = evaluate(model, graphs)
    text = _report_text(rep, args.out)
    if args.out:
        _write(Path(args.out), text, m)
    print(text, end="")
    return m


def cmd_predict(args, cfg: dict) -> RunManifest:
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.build_model()
    g = load_graph(args.graph)
    m = RunManifest("predict", {"model": ckpt.config}, args.seed, [args.ckpt, args.graph])
    y = model.predict(g)
    if not np.isfinite(y):
        raise NumericalError(f"non-finite prediction for graph {g.id!r}")
    print(repr(y))
    return m


def cmd_gradcheck(args, cfg: dict) -> RunManifest:
    kinds = [args.block or "graph"]
    m = RunManifest("gradcheck", {"block": kinds[0], "num_blocks": args.num_blocks or [1, 2]}, args.seed, [])
    worst = 0.0
    for nb in [args.num_blocks] if args.num_blocks else [1, 2]:
        res = run_gradcheck(kinds[0], nb, seed=args.seed)
        worst = max(worst, res.max_rel_error)
        print(f"{kinds[0]} blocks={nb} params={res.coordinates} max_rel_error={res.max_rel_error:.3e} ({res.worst_param})")
    print(f"max relative error {worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        raise GradientError(f"max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE}")
    return m


def cmd_ablate(args, cfg: dict) -> RunManifest:
    rows = select_rows(args.rows)
    if args.data:
        ds = load_dataset(args.data)
        inputs = [args.data]
    else:
        syn = SyntheticConfig(**_override(cfg.get("synthetic", {}), count=args.count, seed=args.seed))
        ds = generate_synthetic(syn)
        inputs = []
    iid = split_dataset(ds, args.split, seed=args.seed)
    family = None
    if any(r.split == "family" for r in rows):
        family = split_dataset(ds, f"family:{args.holdout}", seed=args.seed)
    epochs = args.epochs or DESK_EPOCHS
    resolved = {
        "rows": [r.row for r in rows],
        "split": args.split,
        "holdout": args.holdout,
        "epochs": epochs,
        "repeats": args.repeats,
    }
    m = RunManifest("ablate", resolved, args.seed, inputs)
    results = run_ablation(
        rows, (iid[0].graphs, iid[1].graphs), family and (family[0].graphs, family[1].graphs), args.seed, epochs,
        repeats=args.repeats,
    )
    text = format_table(results, "json" if args.out and args.out.endswith(".json") else "csv")
    if args.out:
        _write(Path(args.out), text, m)
    print(format_table(results, "csv"), end="")
    return m


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="archrep", description="Neural architecture representation learning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0, help="single source of all randomness")
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--manifest", help="where to write the run manifest")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    s = common(sub.add_parser("synth", help="generate a synthetic dataset"))
    s.add_argument("--out", required=True)
    s.add_argument("--family", choices=["chain", "branch", "cell-stamp", "mixed"])
    s.add_argument("--count", type=int)
    s.add_argument("--depth-min", type=int)
    s.add_argument("--depth-max", type=int)
    s.add_argument("--noise-std", type=float)
    s.add_argument("--mode", choices=["full", "cell"])

    t = common(sub.add_parser("train", help="train a predictor and write a checkpoint"))
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--task", choices=["latency", "accuracy"])
    t.add_argument("--block", choices=["graph", "vanilla", "gnn"])
    t.add_argument("--attention", choices=["local", "global"])
    t.add_argument("--d-model", type=int)
    t.add_argument("--num-blocks", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--peak-lr", type=float)
    t.add_argument("--split", help="hold out a test set: iid:<fraction> or family:<name>")
    t.add_argument("--log-every", type=int, default=0)

    e = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", help="evaluate only the test part of iid:<fraction> or family:<name>")
    e.add_argument("--out", help="metrics file (.json or .csv)")

    r = common(sub.add_parser("predict", help="predict one graph"))
    r.add_argument("--ckpt", required=True)
    r.add_argument("--graph", required=True)

    g = common(sub.add_parser("gradcheck", help="finite-difference gradient check"))
    g.add_argument("--block", choices=["graph", "vanilla", "gnn"])
    g.add_argument("--num-blocks", type=int)

    a = common(sub.add_parser("ablate", help="run the ablation matrix and the attention comparison"))
    a.add_argument("--rows", default="all", help="e.g. 1-6, 1,4,6, attention, all")
    a.add_argument("--data", help="dataset file (default: synthetic mixed-family data)")
    a.add_argument("--count", type=int, default=500, help="synthetic graphs when --data is absent")
    a.add_argument("--split", default="iid:0.8")
    a.add_argument("--holdout", default="cell-stamp", help="family held out for the attention comparison")
    a.add_argument("--epochs", type=int)
    a.add_argument("--repeats", type=int, default=1, help="runs per row; metrics drop the best and worst run")
    a.add_argument("--out", help="table file (.csv or .json)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    manifest = None
    code = EXIT_OK
    try:
        cfg = _load_config(args.config)
        manifest = COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except (GraphValidationError, VocabularyError, CheckpointError, FileNotFoundError, KeyError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        code = EXIT_INVALID
    except (NumericalError, GradientError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        code = EXIT_NUMERICAL
    if manifest is None:
        manifest = RunManifest(args.command, {"argv": list(argv or sys.argv[1:])}, getattr(args, "seed", 0), [])
    manifest.exit_code = code
    try:
        manifest.write(_manifest_path(args, getattr(args, "out", None)))
    except OSError as e:
        print(f"warning: could not write manifest: {e}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
