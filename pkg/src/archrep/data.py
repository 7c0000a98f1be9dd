"""Dataset files, a synthetic graph generator, and the analytic latency oracle.

Dataset JSON layout (``schema_version`` 1)::

    {
      "schema_version": 1,
      "mode": "full" | "cell",
      "graphs": [
        {
          "id": "chain-00000",
          "family": "chain",                       # optional
          "nodes": [{"kind": "conv", "attributes": {"kernel_size": 3, ...}}
                    | {"label": 2}, ...],
          "edges": [[src, dst], ...],
          "static": {"batch_size": 1, "flops": ..., ...},   # optional
          "target": 1.234                          # optional
        }
      ]
    }

Serialization is canonical: keys sorted, graphs sorted by id, edges sorted.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, GraphValidationError, VocabularyError
from .encoding import DEFAULT_KINDS
from .graph import NetworkGraph, OpDescriptor, fatal_violations, validate_graph

SCHEMA_VERSION = 1
FAMILIES = ("chain", "branch", "cell-stamp")
CELL_LABELS = {"input": 0, "output": 1, "conv3x3": 2, "conv1x1": 3, "maxpool3x3": 4}


class DatasetFormatError(GraphValidationError):
    """The dataset file could not be parsed into graphs."""


@dataclass
class DatasetFile:
    mode: str
    graphs: List[NetworkGraph]
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def ids(self) -> List[str]:
        return [g.id for g in self.graphs]

    def families(self) -> List[str]:
        return sorted({g.family for g in self.graphs if g.family})


# ---------------------------------------------------------------------------
# serialization


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("booleans are not numbers here")
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def graph_to_record(g: NetworkGraph) -> dict:
    nodes = []
    for op in g.nodes:
        if op.label is not None and op.kind is None:
            nodes.append({"label": int(op.label)})
        else:
            d = {"kind": op.kind, "attributes": {k: _num(v) for k, v in op.attributes.items()}}
            if op.label is not None:
                d["label"] = int(op.label)
            nodes.append(d)
    rec = {"id": g.id, "nodes": nodes, "edges": [list(e) for e in sorted(g.edges)]}
    if g.family is not None:
        rec["family"] = g.family
    if g.static:
        rec["static"] = {k: _num(v) for k, v in g.static.items()}
    if g.target is not None:
        rec["target"] = float(g.target)
    return rec


def dumps_dataset(ds: DatasetFile) -> str:
    doc = {
        "schema_version": ds.schema_version,
        "mode": ds.mode,
        "graphs": [graph_to_record(g) for g in sorted(ds.graphs, key=lambda g: g.id)],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save_dataset(ds: DatasetFile, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_dataset(ds))


def _field_error(where: str, msg: str) -> DatasetFormatError:
    return DatasetFormatError(f"{where}: {msg}", [f"{where}: {msg}"])


def graph_from_record(rec: Mapping, where: str = "graph") -> NetworkGraph:
    if not isinstance(rec, Mapping):
        raise _field_error(where, "expected an object")
    if "id" not in rec or not isinstance(rec["id"], str):
        raise _field_error(where, "missing string field 'id'")
    where = f"{where} (id={rec['id']!r})"
    raw_nodes = rec.get("nodes")
    if not isinstance(raw_nodes, list):
        raise _field_error(where, "missing list field 'nodes'")
    nodes = []
    for j, nd in enumerate(raw_nodes):
        loc = f"{where}.nodes[{j}]"
        if not isinstance(nd, Mapping) or ("kind" not in nd and "label" not in nd):
            raise _field_error(loc, "node needs 'kind' or 'label'")
        attrs = nd.get("attributes", {})
        if not isinstance(attrs, Mapping):
            raise _field_error(loc, "'attributes' must be an object")
        for k, v in attrs.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise _field_error(f"{loc}.attributes.{k}", f"expected a number, got {v!r}")
        label = nd.get("label")
        if label is not None and (isinstance(label, bool) or not isinstance(label, int)):
            raise _field_error(f"{loc}.label", f"expected an integer, got {label!r}")
        nodes.append(OpDescriptor(kind=nd.get("kind"), attributes=dict(attrs), label=label))
    edges = rec.get("edges", [])
    if not isinstance(edges, list):
        raise _field_error(where, "'edges' must be a list")
    pairs = []
    for j, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
            raise _field_error(f"{where}.edges[{j}]", f"expected [src, dst] integers, got {e!r}")
        if not all(0 <= x < len(nodes) for x in e):
            raise _field_error(f"{where}.edges[{j}]", f"edge {e} references a node outside 0..{len(nodes) - 1}")
        pairs.append((e[0], e[1]))
    static = rec.get("static", {})
    if not isinstance(static, Mapping):
        raise _field_error(where, "'static' must be an object")
    target = rec.get("target")
    if target is not None and (isinstance(target, bool) or not isinstance(target, (int, float))):
        raise _field_error(f"{where}.target", f"expected a number, got {target!r}")
    return NetworkGraph.from_edges(
        nodes,
        pairs,
        static=dict(static),
        target=None if target is None else float(target),
        id=rec["id"],
        family=rec.get("family"),
    )


def loads_dataset(text: str, source: str = "<string>") -> DatasetFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{source}:{e.lineno}:{e.colno}: {e.msg}", [e.msg]) from None
    if not isinstance(doc, Mapping):
        raise _field_error(source, "top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise _field_error(source, f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    mode = doc.get("mode")
    if mode not in ("cell", "full"):
        raise _field_error(source, f"'mode' must be 'cell' or 'full', got {mode!r}")
    raw = doc.get("graphs")
    if not isinstance(raw, list):
        raise _field_error(source, "missing list field 'graphs'")
    graphs = [graph_from_record(r, f"graphs[{i}]") for i, r in enumerate(raw)]

    problems = []
    seen = set()
    for g in graphs:
        if g.id in seen:
            problems.append(f"{g.id}: duplicate id")
        seen.add(g.id)
        bad = fatal_violations(validate_graph(g))
        if mode == "cell" and any(op.label is None for op in g.nodes):
            bad.append("cell-mode graph has a node without 'label'")
        if mode == "full" and any(op.kind is None for op in g.nodes):
            bad.append("full-mode graph has a node without 'kind'")
        problems += [f"{g.id}: {b}" for b in bad]
    if problems:
        raise GraphValidationError(f"{source}: {len(problems)} violation(s): " + "; ".join(problems), problems)
    graphs.sort(key=lambda g: g.id)
    return DatasetFile(mode=mode, graphs=graphs, schema_version=version)


def load_dataset(path: Union[str, Path]) -> DatasetFile:
    p = Path(path)
    return loads_dataset(p.read_text(), str(p))


def load_graph(path: Union[str, Path]) -> NetworkGraph:
    """Read a single graph record (same layout as one ``graphs`` entry)."""
    p = Path(path)
    try:
        rec = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{p}:{e.lineno}:{e.colno}: {e.msg}", [e.msg]) from None
    if isinstance(rec, Mapping) and "graphs" in rec:
        ds = loads_dataset(p.read_text(), str(p))
        if len(ds.graphs) != 1:
            raise _field_error(str(p), f"expected exactly one graph, found {len(ds.graphs)}")
        return ds.graphs[0]
    g = graph_from_record(rec, str(p))
    bad = fatal_violations(validate_graph(g))
    if bad:
        raise GraphValidationError(f"{p}: graph {g.id!r} is invalid: {'; '.join(bad)}", bad)
    return g


# ---------------------------------------------------------------------------
# latency oracle


@dataclass(frozen=True)
class KindCost:
    """Cost of one operation kind: ``launch + per_mac * MACs + per_elem * elements`` (ms)."""

    launch: float = 0.0
    per_mac: float = 0.0
    per_elem: float = 0.0


@dataclass(frozen=True)
class CostTable:
    kinds: Mapping[str, KindCost]
    edge_overhead: float = 0.002
    # bn/relu consuming the sole output of a conv/bn run at this fraction of their cost
    fusion_factor: float = 0.2

    def cost(self, kind: str) -> KindCost:
        try:
            return self.kinds[kind]
        except KeyError:
            raise VocabularyError(f"no oracle cost for operation kind {kind!r}") from None


DEFAULT_COSTS = CostTable(
    kinds={
        "input": KindCost(0.02, 0.0, 5e-9),
        "output": KindCost(0.02, 0.0, 5e-9),
        "conv": KindCost(0.06, 1e-10, 2e-9),
        "bn": KindCost(0.03, 0.0, 4e-9),
        "relu": KindCost(0.025, 0.0, 3e-9),
        "pool": KindCost(0.04, 5e-10, 3e-9),
        "fc": KindCost(0.05, 2e-10, 0.0),
        "add": KindCost(0.03, 0.0, 5e-9),
        "concat": KindCost(0.035, 0.0, 6e-9),
    },
    edge_overhead=0.005,
)


def _attr(op: OpDescriptor, name: str, default: float) -> float:
    return float(op.attributes.get(name, default))


def node_work(op: OpDescriptor, batch: float = 1.0) -> Tuple[float, float]:
    """(multiply-accumulates, elements touched) of one node."""
    k = _attr(op, "kernel_size", 1)
    stride = max(_attr(op, "stride", 1), 1.0)
    groups = max(_attr(op, "groups", 1), 1.0)
    cin = _attr(op, "in_channels", 1)
    cout = _attr(op, "out_channels", cin)
    s = _attr(op, "spatial", 1)
    s_out = max(s / stride, 1.0)
    kind = op.kind
    if kind == "conv":
        macs = k * k * cin * cout / groups * s_out * s_out
        elems = cin * s * s + cout * s_out * s_out
    elif kind == "fc":
        macs, elems = cin * cout, cin + cout
    elif kind == "pool":
        macs = k * k * cout * s_out * s_out
        elems = cin * s * s + cout * s_out * s_out
    else:
        macs, elems = 0.0, cout * s * s
    return batch * macs, batch * elems


def fused_nodes(g: NetworkGraph) -> List[bool]:
    """bn/relu nodes whose single producer is a conv/bn with no other consumer."""
    A = np.asarray(g.adjacency)
    indeg = A.sum(axis=0)
    outdeg = A.sum(axis=1)
    out = []
    for j, op in enumerate(g.nodes):
        fused = False
        if op.kind in ("bn", "relu") and indeg[j] == 1:
            i = int(np.flatnonzero(A[:, j])[0])
            fused = g.nodes[i].kind in ("conv", "bn") and outdeg[i] == 1
        out.append(fused)
    return out


def noise_factor(graph_id: str, seed: int, noise_std: float) -> float:
    """Multiplicative noise ``1 + noise_std * z`` seeded by (seed, graph id), floored at 0.01."""
    if noise_std <= 0:
        return 1.0
    rng = np.random.default_rng([seed, zlib.crc32(graph_id.encode())])
    return max(1.0 + noise_std * float(rng.standard_normal()), 0.01)


def oracle_latency(
    g: NetworkGraph,
    table: CostTable = DEFAULT_COSTS,
    noise_std: float = 0.0,
    seed: int = 0,
) -> float:
    """Synthetic ground-truth latency in milliseconds.

    Sum over nodes of the kind's cost (``launch + per_mac*MACs + per_elem*elems``,
    scaled by ``fusion_factor`` for fused bn/relu) plus ``edge_overhead`` per
    edge, times seeded multiplicative noise.
    """
    batch = float(g.static.get("batch_size", 1))
    total = 0.0
    for op, fused in zip(g.nodes, fused_nodes(g)):
        if op.kind is None:
            raise ConfigurationError("oracle_latency needs full-mode graphs (operation kinds)")
        c = table.cost(op.kind)
        macs, elems = node_work(op, batch)
        cost = c.launch + c.per_mac * macs + c.per_elem * elems
        total += cost * (table.fusion_factor if fused else 1.0)
    total += table.edge_overhead * int(np.asarray(g.adjacency).sum())
    return total * noise_factor(g.id, seed, noise_std)


def static_features(g: NetworkGraph, batch_size: int) -> Dict[str, float]:
    """FLOPs, parameter count and memory traffic (bytes, fp32) of a full-mode graph."""
    flops = params = elems_total = 0.0
    for op in g.nodes:
        macs, elems = node_work(op, batch_size)
        k = _attr(op, "kernel_size", 1)
        cin = _attr(op, "in_channels", 1)
        cout = _attr(op, "out_channels", cin)
        groups = max(_attr(op, "groups", 1), 1.0)
        if op.kind == "conv":
            p = k * k * cin * cout / groups + cout
        elif op.kind == "fc":
            p = cin * cout + cout
        elif op.kind == "bn":
            p = 2 * cout
        else:
            p = 0.0
        flops += 2 * macs if macs else elems
        params += p
        elems_total += elems
    return {
        "batch_size": float(batch_size),
        "flops": max(flops, 1.0),
        "parameter_count": max(params, 1.0),
        "memory_access": 4.0 * (elems_total + params),
    }


# ---------------------------------------------------------------------------
# cell accuracy oracle


def _longest_path(adj: np.ndarray) -> int:
    n = adj.shape[0]
    depth = [0] * n
    for j in range(n):
        preds = np.flatnonzero(adj[:, j])
        if preds.size:
            depth[j] = max(depth[i] for i in preds) + 1
    return depth[-1]


def oracle_accuracy(g: NetworkGraph, noise_std: float = 0.0, seed: int = 0) -> float:
    """Synthetic accuracy in (0, 1) for a labelled cell.

    Rewards 3x3 convolutions (more if they feed the output directly), 1x1
    convolutions and depth; penalizes pools feeding the output.
    """
    labels = [op.label for op in g.nodes]
    A = np.asarray(g.adjacency)
    n3 = labels.count(CELL_LABELS["conv3x3"])
    n1 = labels.count(CELL_LABELS["conv1x1"])
    npool = labels.count(CELL_LABELS["maxpool3x3"])
    last = len(labels) - 1
    feeders = [labels[i] for i in np.flatnonzero(A[:, last])]
    score = (
        0.9 * n3
        + 0.5 * n1
        + 0.15 * npool
        + 0.6 * _longest_path(A)
        + 0.5 * feeders.count(CELL_LABELS["conv3x3"])
        - 0.6 * feeders.count(CELL_LABELS["maxpool3x3"])
        - 0.8 * float(A[0, last])
    )
    acc = 0.55 + 0.4 / (1.0 + math.exp(-(score - 4.0) / 1.2))
    if noise_std > 0:
        rng = np.random.default_rng([seed, zlib.crc32(g.id.encode())])
        acc += noise_std * float(rng.standard_normal())
    return min(max(acc, 1e-3), 1.0 - 1e-3)


# ---------------------------------------------------------------------------
# synthetic generator

REQUIRED_KINDS = {
    "chain": ("input", "output", "conv"),
    "branch": ("input", "output", "conv", "add", "concat"),
    "cell-stamp": ("input", "output", "conv", "bn", "relu", "pool", "add", "concat"),
}


@dataclass
class SyntheticConfig:
    family: str = "mixed"
    depth_min: int = 5
    depth_max: int = 60
    vocabulary: Tuple[str, ...] = DEFAULT_KINDS
    noise_std: float = 0.03
    seed: int = 0
    count: int = 100
    mode: str = "full"  # "cell": single labelled cells with oracle accuracy targets

    def __post_init__(self) -> None:
        self.vocabulary = tuple(self.vocabulary)
        if self.mode not in ("full", "cell"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.mode == "full" and self.family not in FAMILIES + ("mixed",):
            raise ConfigurationError(f"unknown family {self.family!r}")
        if not 1 <= self.depth_min <= self.depth_max <= 600:
            raise ConfigurationError(f"depth range [{self.depth_min}, {self.depth_max}] must lie within [1, 600]")
        if self.count < 0 or self.noise_std < 0:
            raise ConfigurationError("count and noise_std must be non-negative")
        if self.mode == "full":
            for fam in FAMILIES if self.family == "mixed" else (self.family,):
                missing = [k for k in REQUIRED_KINDS[fam] if k not in self.vocabulary]
                if missing:
                    raise ConfigurationError(f"family {fam!r} needs operation kinds {missing} in the vocabulary")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vocabulary"] = list(self.vocabulary)
        return d


INPUT_SIZE = 224
MIN_SPATIAL = 7


class _Builder:
    """Accumulates nodes/edges while tracking channel count and feature-map size.

    Networks start from a 3x224x224 image.  Channel width follows the
    feature-map size (``base * 112 / spatial``), so per-layer compute stays in
    the same range however deep the network is, as in common CNN designs.
    """

    def __init__(self, rng: np.random.Generator, depth: int, vocabulary: Sequence[str]):
        self.rng = rng
        self.vocab = set(vocabulary)
        self.nodes: List[OpDescriptor] = []
        self.edges: List[Tuple[int, int]] = []
        self.c = 3
        self.s = INPUT_SIZE
        self.base = int(rng.choice([24, 32, 48]))
        # about four downsampling steps over the body
        self.p_down = min(0.5, 4.0 / max(depth - 3, 1))

    def width(self, s: int) -> int:
        return min(int(self.base * 112 // s), 1024)

    def add(self, kind: str, preds: Sequence[int], **attrs) -> int:
        idx = len(self.nodes)
        self.nodes.append(OpDescriptor(kind=kind, attributes=dict(attrs)))
        self.edges += [(p, idx) for p in preds]
        return idx

    def wants_down(self) -> bool:
        return self.s > MIN_SPATIAL and self.rng.random() < self.p_down

    def conv(self, pred: int, stem: bool = False) -> int:
        rng = self.rng
        c_in = self.c
        if stem:
            k, stride = int(rng.choice([3, 7])), 2
        else:
            k = int(rng.choice([1, 3, 3, 5]))
            stride = 2 if self.wants_down() else 1
        s_out = max(self.s // stride, 1)
        depthwise = not stem and stride == 1 and rng.random() < 0.2
        cout = c_in if depthwise else self.width(s_out)
        i = self.add(
            "conv",
            [pred],
            kernel_size=k,
            stride=stride,
            groups=c_in if depthwise else 1,
            in_channels=c_in,
            out_channels=cout,
            spatial=self.s,
        )
        self.c, self.s = cout, s_out
        return i

    def simple(self, kind: str, pred: int) -> int:
        return self.add(kind, [pred], in_channels=self.c, out_channels=self.c, spatial=self.s)

    def pool(self, pred: int, stride: Optional[int] = None) -> int:
        if stride is None:
            stride = 2 if self.s > MIN_SPATIAL else 1
        k = int(self.rng.choice([2, 3])) if stride == 2 else 3
        i = self.add(
            "pool", [pred], kernel_size=k, stride=stride, in_channels=self.c, out_channels=self.c, spatial=self.s
        )
        self.s = max(self.s // stride, 1)
        return i

    def fc(self, pred: int) -> int:
        # global average pooling is folded into the classifier
        i = self.add("fc", [pred], in_channels=self.c, out_channels=1000, spatial=1)
        self.c, self.s = 1000, 1
        return i

    def start(self) -> int:
        return self.add("input", [], out_channels=self.c, spatial=self.s)

    def finish(self, pred: int) -> int:
        return self.add("output", [pred], in_channels=self.c, out_channels=self.c, spatial=self.s)


_NEXT_KINDS = {
    "conv": (("bn", 0.5), ("relu", 0.35), ("conv", 0.15)),
    "bn": (("relu", 0.8), ("conv", 0.2)),
    "relu": (("conv", 0.85), ("pool", 0.15)),
    "pool": (("conv", 1.0),),
    "input": (("conv", 1.0),),
}


def _next_kind(rng: np.random.Generator, prev: str, vocab) -> str:
    options = [(k, p) for k, p in _NEXT_KINDS.get(prev, _NEXT_KINDS["relu"]) if k in vocab]
    if not options:
        return "conv"
    kinds, probs = zip(*options)
    probs = np.asarray(probs) / sum(probs)
    return str(kinds[int(rng.choice(len(kinds), p=probs))])


def _chain(rng: np.random.Generator, depth: int, vocab) -> _Builder:
    b = _Builder(rng, depth, vocab)
    cur = b.start()
    if depth == 1:
        return b
    body = depth - 2
    prev = "input"
    for j in range(body):
        if j == 0:
            cur, prev = b.conv(cur, stem=True), "conv"
            continue
        if j == body - 1 and body > 2 and "fc" in b.vocab and rng.random() < 0.5:
            cur, prev = b.fc(cur), "fc"
            continue
        kind = _next_kind(rng, prev, b.vocab)
        if kind == "conv":
            cur = b.conv(cur)
        elif kind == "pool":
            cur = b.pool(cur)
        else:
            cur = b.simple(kind, cur)
        prev = kind
    b.finish(cur)
    return b


def _branch(rng: np.random.Generator, depth: int, vocab) -> _Builder:
    """Stem, then residual (add) and inception-style (concat) blocks, then output."""
    b = _Builder(rng, depth, vocab)
    cur = b.start()
    if depth <= 2:
        if depth == 2:
            b.finish(cur)
        return b
    budget = depth - 2
    cur = b.conv(cur, stem=True)
    budget -= 1
    while budget > 0:
        c0, s0 = b.c, b.s
        if budget >= 4 and rng.random() < 0.5:
            # residual: conv(-bn-relu-conv) on one side, identity on the other
            x = cur
            n_in = min(budget - 1, int(rng.integers(2, 5)))
            for j in range(n_in):
                kind = ("conv", "bn", "relu", "conv")[j]
                if kind not in b.vocab:
                    kind = "conv"
                if kind == "conv":
                    k = int(rng.choice([1, 3]))
                    x = b.add(
                        "conv", [x], kernel_size=k, stride=1, groups=1, in_channels=c0, out_channels=c0, spatial=s0
                    )
                else:
                    x = b.add(kind, [x], in_channels=c0, out_channels=c0, spatial=s0)
            cur = b.add("add", [cur, x], in_channels=c0, out_channels=c0, spatial=s0)
            budget -= n_in + 1
        elif budget >= 4:
            # parallel conv paths joined by concat
            n_paths = 2 if budget < 6 else int(rng.integers(2, 4))
            per_path = max(b.width(s0) // n_paths, 1)
            ends: List[int] = []
            used = 0
            for _ in range(n_paths):
                if used + 1 > budget - 1:
                    break
                k = int(rng.choice([1, 3, 5]))
                x = b.add(
                    "conv", [cur], kernel_size=k, stride=1, groups=1, in_channels=c0, out_channels=per_path,
                    spatial=s0,
                )
                used += 1
                if used + 1 <= budget - 1 and "relu" in b.vocab and rng.random() < 0.5:
                    x = b.add("relu", [x], in_channels=per_path, out_channels=per_path, spatial=s0)
                    used += 1
                ends.append(x)
            width = per_path * len(ends)
            b.c = width
            cur = b.add("concat", ends, in_channels=width, out_channels=width, spatial=s0)
            budget -= used + 1
        else:
            kind = _next_kind(rng, "relu", b.vocab) if rng.random() < 0.6 else "conv"
            if kind == "conv":
                cur = b.conv(cur)
            elif kind == "pool":
                cur = b.pool(cur)
            else:
                cur = b.simple(kind, cur)
            budget -= 1
    b.finish(cur)
    return b


def random_cell(rng: np.random.Generator, n: int = 7) -> Tuple[List[int], np.ndarray]:
    """NAS-Bench-101-style cell: labels and an upper-triangular DAG in which every
    intermediate node lies on a path from node 0 to node n-1 (at most 9 edges)."""
    while True:
        A = np.triu((rng.random((n, n)) < 0.45).astype(np.int8), k=1)
        for j in range(1, n):
            if not A[:j, j].any():
                A[int(rng.integers(0, j)), j] = 1
        for i in range(n - 1):
            if not A[i, i + 1 :].any():
                A[i, int(rng.integers(i + 1, n))] = 1
        if A.sum() <= 9:
            break
    ops = [CELL_LABELS["input"]]
    ops += [int(rng.choice([2, 3, 4], p=[0.4, 0.35, 0.25])) for _ in range(n - 2)]
    ops.append(CELL_LABELS["output"])
    return ops, A


_CELL_KIND = {2: ("conv", 3), 3: ("conv", 1), 4: ("pool", 3)}


def _cell_nodes(labels: Sequence[int], A: np.ndarray) -> int:
    """Number of graph nodes one stamped cell expands to."""
    n = 0
    last = len(labels) - 1
    for j in range(1, last):
        n += 3 if _CELL_KIND[labels[j]][0] == "conv" else 1
        n += int(A[:, j].sum() > 1)
    return n + int(A[:, last].sum() > 1)


def _cell_stamp(rng: np.random.Generator, depth: int, vocab) -> _Builder:
    """One sampled 7-node cell repeated in a chain between stem and output.

    As in NAS-Bench-101, each conv vertex expands to conv-bn-relu, a vertex
    with several inputs sums them with ``add``, the cell output concatenates
    its inputs, and the cell input vertex is the previous cell's output.
    A stride-2 pool may separate consecutive cells.
    """
    b = _Builder(rng, depth, vocab)
    labels, A = random_cell(rng)
    cur = b.start()
    cur = b.conv(cur, stem=True)
    stamps = max(1, round((depth - 3) / max(_cell_nodes(labels, A), 1)))
    b.p_down = min(0.8, 3.0 / stamps)
    last = len(labels) - 1
    for t in range(stamps):
        s0 = b.s
        c = b.width(s0)
        idx: Dict[int, int] = {0: cur}
        chans: Dict[int, int] = {0: b.c}
        for j in range(1, last + 1):
            preds = [int(i) for i in np.flatnonzero(A[:, j])]
            src = [idx[i] for i in preds]
            if j == last:
                if len(src) > 1:
                    width = sum(chans[i] for i in preds)
                    idx[j] = b.add("concat", src, in_channels=width, out_channels=width, spatial=s0)
                    chans[j] = width
                else:
                    idx[j], chans[j] = src[0], chans[preds[0]]
                break
            src_c = chans[preds[0]]
            if len(src) > 1:
                src_c = max(chans[i] for i in preds)
                src = [b.add("add", src, in_channels=src_c, out_channels=src_c, spatial=s0)]
            kind, k = _CELL_KIND[labels[j]]
            if kind == "conv":
                x = b.add(
                    "conv", src, kernel_size=k, stride=1, groups=1, in_channels=src_c, out_channels=c, spatial=s0
                )
                x = b.add("bn", [x], in_channels=c, out_channels=c, spatial=s0)
                idx[j] = b.add("relu", [x], in_channels=c, out_channels=c, spatial=s0)
                chans[j] = c
            else:
                idx[j] = b.add(
                    "pool", src, kernel_size=k, stride=1, in_channels=src_c, out_channels=src_c, spatial=s0
                )
                chans[j] = src_c
        cur = idx[last]
        b.c = chans[last]
        if t < stamps - 1 and b.wants_down():
            cur = b.pool(cur, stride=2)
    b.finish(cur)
    return b


_FAMILY_BUILDERS = {"chain": _chain, "branch": _branch, "cell-stamp": _cell_stamp}


def _full_graph(rng, family: str, depth: int, gid: str, vocab) -> NetworkGraph:
    b = _FAMILY_BUILDERS[family](rng, depth, vocab)
    g = NetworkGraph.from_edges(b.nodes, b.edges, id=gid, family=family)
    batch = int(rng.choice([1, 2, 4, 8]))
    g.static = static_features(g, batch)
    return g


def generate_synthetic(cfg: SyntheticConfig, table: CostTable = DEFAULT_COSTS) -> DatasetFile:
    """Seeded synthetic dataset with oracle targets attached."""
    rng = np.random.default_rng(cfg.seed)
    graphs = []
    if cfg.mode == "cell":
        for i in range(cfg.count):
            labels, A = random_cell(rng)
            g = NetworkGraph(
                nodes=[OpDescriptor(label=l) for l in labels], adjacency=A, id=f"cell-{i:05d}", family="cell"
            )
            g.target = oracle_accuracy(g, cfg.noise_std, cfg.seed)
            graphs.append(g)
        return DatasetFile("cell", graphs)

    for i in range(cfg.count):
        family = cfg.family if cfg.family != "mixed" else FAMILIES[int(rng.integers(0, len(FAMILIES)))]
        depth = int(rng.integers(cfg.depth_min, cfg.depth_max + 1))
        g = _full_graph(rng, family, depth, f"{family}-{i:05d}", cfg.vocabulary)
        g.target = oracle_latency(g, table, cfg.noise_std, cfg.seed)
        graphs.append(g)
    graphs.sort(key=lambda g: g.id)
    return DatasetFile("full", graphs)


# ---------------------------------------------------------------------------
# splits


def parse_protocol(protocol: str) -> Tuple[str, str]:
    """``"iid:0.9"`` or ``"family:<name>"``."""
    kind, _, arg = protocol.partition(":")
    if kind not in ("iid", "family") or not arg:
        raise ConfigurationError(f"split protocol must be 'iid:<fraction>' or 'family:<name>', got {protocol!r}")
    return kind, arg


def split_dataset(ds: DatasetFile, protocol: str, seed: int = 0) -> Tuple[DatasetFile, DatasetFile]:
    """Disjoint, covering (train, test) split.

    ``iid:f`` shuffles with ``seed`` and keeps ``round(f * n)`` graphs for
    training; ``family:name`` puts every graph of that family in the test set.
    """
    kind, arg = parse_protocol(protocol)
    if kind == "iid":
        frac = float(arg)
        if not 0.0 < frac < 1.0:
            raise ConfigurationError(f"iid fraction must be in (0, 1), got {frac}")
        order = np.random.default_rng(seed).permutation(len(ds.graphs))
        k = int(round(frac * len(ds.graphs)))
        train_idx = set(order[:k].tolist())
        train = [g for i, g in enumerate(ds.graphs) if i in train_idx]
        test = [g for i, g in enumerate(ds.graphs) if i not in train_idx]
    else:
        if arg not in {g.family for g in ds.graphs}:
            raise ConfigurationError(f"family {arg!r} not present; dataset families are {ds.families()}")
        train = [g for g in ds.graphs if g.family != arg]
        test = [g for g in ds.graphs if g.family == arg]
    return DatasetFile(ds.mode, train, ds.schema_version), DatasetFile(ds.mode, test, ds.schema_version)
