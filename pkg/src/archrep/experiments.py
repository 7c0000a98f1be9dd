"""Desk-scale experiment recipes shared by the CLI and the acceptance suite.

The models here are far smaller than a production predictor (``d_model`` 32
instead of 128) so that a full train/evaluate cycle on a few hundred graphs
finishes in about a minute on one core.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .blocks import BlockConfig
from .encoding import EncodingConfig
from .errors import ConfigurationError
from .graph import NetworkGraph, OpDescriptor
from .metrics import repeat_and_trim
from .predictor import Model, ModelConfig
from .training import TrainConfig, evaluate, mse_loss, train

DESK_BLOCK = dict(d_model=32, d_attn=16, d_hidden=64, groups=4)
DESK_HEAD = (64, 32)
DESK_EPOCHS = 60


def default_target_scale(graphs: Sequence[NetworkGraph], task: str) -> float:
    """Median training target for latency (so the initial prediction is typical), 1 otherwise."""
    if task != "latency":
        return 1.0
    return float(np.median([g.target for g in graphs]))


def desk_model_config(
    task: str = "latency",
    target_scale: float = 1.0,
    encoding: Optional[EncodingConfig] = None,
    num_blocks: int = 2,
    **block,
) -> ModelConfig:
    scheme = "full" if task == "latency" else "cell"
    return ModelConfig(
        task=task,
        encoding=encoding or EncodingConfig(scheme=scheme),
        block=BlockConfig(**{**DESK_BLOCK, **block}),
        num_blocks=num_blocks,
        head_hidden=DESK_HEAD,
        target_scale=target_scale,
    )


# ---------------------------------------------------------------------------
# ablation matrix


@dataclass(frozen=True)
class AblationRow:
    row: str
    structure: str  # block kind
    op_type: str  # "onehot" | "pe"
    op_attributes: str  # "raw" | "pe"
    gffn: bool
    ta_enhance: bool
    attention: str = "local"
    split: str = "iid"

    @property
    def graph_attention(self) -> bool:
        return self.structure == "graph"

    def model_config(self, target_scale: float, num_blocks: int = 2) -> ModelConfig:
        enc = EncodingConfig(scheme="full", op_type_encoding=self.op_type, attribute_encoding=self.op_attributes)
        groups = 8 if self.gffn else 1
        return desk_model_config(
            "latency",
            target_scale,
            encoding=enc,
            num_blocks=num_blocks,
            kind=self.structure,
            groups=groups,
            ta_enhance=self.ta_enhance,
            attention=self.attention,
        )


ABLATION_ROWS: Tuple[AblationRow, ...] = (
    AblationRow("1", "gnn", "onehot", "raw", False, False),
    AblationRow("2", "gnn", "pe", "pe", False, False),
    AblationRow("3", "gnn", "onehot", "pe", False, False),
    AblationRow("4", "graph", "onehot", "pe", False, False),
    AblationRow("5", "graph", "onehot", "pe", True, False),
    AblationRow("6", "graph", "onehot", "pe", True, True),
)
ATTENTION_ROWS: Tuple[AblationRow, ...] = (
    AblationRow("global", "graph", "onehot", "pe", True, True, attention="global", split="family"),
    AblationRow("local", "graph", "onehot", "pe", True, True, attention="local", split="family"),
)

ABLATION_COLUMNS = (
    "row",
    "structure",
    "op_type",
    "op_attributes",
    "graph_attention",
    "gffn",
    "ta_enhance",
    "attention",
    "split",
    "seed",
    "repeats",
    "parameters",
    "linear_parameters",
    "mape",
    "acc_10",
    "acc_5",
    "seconds",
)


def row_seeds(base_seed: int, n: int) -> List[int]:
    """Independent per-row seeds derived from one base seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(n)]


def linear_parameter_count(model: Model) -> int:
    """Weights of the encoder's feed-forward linear maps."""
    return sum(t.data.size for name, t in model.parameters().items() if ".ffn.W" in name)


def run_row(
    row: AblationRow,
    train_set: Sequence[NetworkGraph],
    test_set: Sequence[NetworkGraph],
    seed: int,
    epochs: int = DESK_EPOCHS,
    peak_lr: float = 1e-3,
) -> Dict[str, object]:
    model = Model(row.model_config(default_target_scale(train_set, "latency")), seed=seed)
    t0 = time.perf_counter()
    train(train_set, model, TrainConfig(epochs=epochs, peak_lr=peak_lr, seed=seed, block_kind=row.structure))
    rep = evaluate(model, test_set)
    return {
        "row": row.row,
        "structure": row.structure,
        "op_type": row.op_type,
        "op_attributes": row.op_attributes,
        "graph_attention": row.graph_attention,
        "gffn": row.gffn,
        "ta_enhance": row.ta_enhance,
        "attention": row.attention if row.structure == "graph" else "-",
        "split": row.split,
        "seed": seed,
        "repeats": 1,
        "parameters": model.num_parameters(),
        "linear_parameters": linear_parameter_count(model),
        "mape": rep.mape,
        "acc_10": rep.acc_10,
        "acc_5": rep.acc_5,
        "seconds": round(time.perf_counter() - t0, 3),
    }


def select_rows(spec: str) -> List[AblationRow]:
    """``"1-6"``, ``"1,3,6"``, ``"attention"`` or ``"all"``."""
    by_id = {r.row: r for r in ABLATION_ROWS + ATTENTION_ROWS}
    if spec == "all":
        return list(ABLATION_ROWS + ATTENTION_ROWS)
    out: List[AblationRow] = []
    try:
        for part in spec.split(","):
            part = part.strip()
            if part == "attention":
                out += ATTENTION_ROWS
            elif "-" in part:
                lo, hi = (int(x) for x in part.split("-"))
                out += [by_id[str(i)] for i in range(lo, hi + 1)]
            else:
                out.append(by_id[part])
    except (KeyError, ValueError):
        raise ConfigurationError(f"bad row selection {spec!r}; rows are 1-6, global, local, attention, all") from None
    return out


def run_ablation(
    rows: Sequence[AblationRow],
    iid: Tuple[Sequence[NetworkGraph], Sequence[NetworkGraph]],
    family: Optional[Tuple[Sequence[NetworkGraph], Sequence[NetworkGraph]]],
    seed: int,
    epochs: int = DESK_EPOCHS,
    peak_lr: float = 1e-3,
    repeats: int = 1,
) -> List[Dict[str, object]]:
    """Train and evaluate every row; never shares weights between rows.

    With ``repeats > 1`` each row is trained that many times from independent
    seeds and every metric is the mean after dropping the single best and
    worst run (no trimming below three runs).
    """
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    seeds = row_seeds(seed, len(rows))
    out = []
    for row, s in zip(rows, seeds):
        if row.split == "family" and family is None:
            raise ConfigurationError(f"row {row.row} needs a family-out split")
        tr, te = family if row.split == "family" else iid
        if repeats == 1:
            out.append(run_row(row, tr, te, s, epochs, peak_lr))
            continue
        runs = [run_row(row, tr, te, r, epochs, peak_lr) for r in row_seeds(s, repeats)]
        trim = 1 if repeats >= 3 else 0
        agg = dict(runs[0], seed=s, repeats=repeats)
        for k in ("mape", "acc_10", "acc_5"):
            agg[k] = repeat_and_trim([r[k] for r in runs], trim)
        agg["seconds"] = round(sum(r["seconds"] for r in runs), 3)
        out.append(agg)
    return out


def format_table(results: Sequence[Dict[str, object]], fmt: str = "csv") -> str:
    if fmt == "json":
        return json.dumps(list(results), indent=2) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# gradient check fixture


def gradcheck_graph() -> NetworkGraph:
    """Six-node residual fixture with static features and a target."""
    conv = {"kernel_size": 3, "stride": 1, "groups": 1, "in_channels": 16, "out_channels": 16, "spatial": 28}
    nodes = [
        OpDescriptor("input", {"out_channels": 16, "spatial": 28}),
        OpDescriptor("conv", conv),
        OpDescriptor("bn", {"in_channels": 16, "out_channels": 16, "spatial": 28}),
        OpDescriptor("relu", {"in_channels": 16, "out_channels": 16, "spatial": 28}),
        OpDescriptor("add", {"in_channels": 16, "out_channels": 16, "spatial": 28}),
        OpDescriptor("output", {"in_channels": 16, "out_channels": 16, "spatial": 28}),
    ]
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (4, 5)]
    static = {"batch_size": 1.0, "flops": 3.6e7, "parameter_count": 2336.0, "memory_access": 3.1e5}
    return NetworkGraph.from_edges(nodes, edges, static=static, target=0.8, id="gradcheck")


def gradcheck_model(kind: str, num_blocks: int, seed: int = 0, task: str = "latency") -> Model:
    block = BlockConfig(kind=kind, d_model=8, d_attn=4, d_hidden=16, groups=2)
    cfg = ModelConfig(task=task, block=block, num_blocks=num_blocks, head_hidden=(8, 4))
    return Model(cfg, seed=seed)


def run_gradcheck(kind: str = "graph", num_blocks: int = 1, seed: int = 0, graph: Optional[NetworkGraph] = None):
    """Finite-difference check of every parameter of a small model on an MSE loss."""
    g = graph or gradcheck_graph()
    model = gradcheck_model(kind, num_blocks, seed)
    pg = model.prepare(g)

    def loss(_params):
        return mse_loss(model.forward(pg), [g.target])

    return ad.check_gradients(loss, model.parameters())
