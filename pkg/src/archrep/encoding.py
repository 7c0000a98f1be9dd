"""Turn a :class:`NetworkGraph` into encoder inputs: tokens, degrees, adjacency."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .errors import ConfigurationError, VocabularyError
from .graph import NetworkGraph, OpDescriptor, canonical_order, ensure_valid, topological_order

DEFAULT_KINDS = ("input", "output", "conv", "bn", "relu", "pool", "fc", "add", "concat")
DEFAULT_ATTRIBUTES = ("kernel_size", "stride", "groups", "in_channels", "out_channels", "spatial")
MISSING_ATTRIBUTE = -1.0
ADJACENCY_MODES = ("directed", "symmetric", "symmetric+self")


def positional_encode(x: float, L: int, scale: float) -> np.ndarray:
    """``[sin(2^k pi x / scale), cos(2^k pi x / scale)]`` for ``k = 0..L-1``, interleaved."""
    if L < 1:
        raise ConfigurationError(f"positional_encode: L must be >= 1, got {L}")
    if scale <= 0:
        raise ConfigurationError(f"positional_encode: scale must be > 0, got {scale}")
    angles = (2.0 ** np.arange(L)) * math.pi * (float(x) / scale)
    out = np.empty(2 * L)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


@dataclass(frozen=True)
class AttributeSlot:
    name: str
    frequencies: int = 16
    scale: float = 1000.0


@dataclass
class EncodingConfig:
    """Token layout.

    ``op_type_encoding`` and ``attribute_encoding`` exist for the ablation
    matrix: ``"pe"`` type encoding feeds the kind's vocabulary index through
    the sinusoidal map instead of one-hot; ``"raw"`` attributes are the value
    divided by the slot scale (one column per slot).
    """

    scheme: str = "full"
    pe_frequencies: int = 16
    pe_scale: float = 1000.0
    op_vocabulary: Tuple[str, ...] = DEFAULT_KINDS
    attribute_slots: Tuple[AttributeSlot, ...] = tuple(AttributeSlot(a) for a in DEFAULT_ATTRIBUTES)
    label_frequencies: int = 16
    label_scale: float = 1000.0
    op_type_encoding: str = "onehot"
    attribute_encoding: str = "pe"
    token_dim: Optional[int] = None

    def __post_init__(self) -> None:
        self.op_vocabulary = tuple(self.op_vocabulary)
        self.attribute_slots = tuple(
            s if isinstance(s, AttributeSlot) else AttributeSlot(**s) for s in self.attribute_slots
        )
        if self.scheme not in ("cell", "full"):
            raise ConfigurationError(f"unknown encoding scheme {self.scheme!r}")
        if self.op_type_encoding not in ("onehot", "pe"):
            raise ConfigurationError(f"unknown op_type_encoding {self.op_type_encoding!r}")
        if self.attribute_encoding not in ("pe", "raw"):
            raise ConfigurationError(f"unknown attribute_encoding {self.attribute_encoding!r}")
        if self.pe_frequencies < 1 or self.pe_scale <= 0:
            raise ConfigurationError("position encoding needs L >= 1 and scale > 0")
        computed = sum(stop - start for start, stop in self.layout().values())
        if self.token_dim is None:
            self.token_dim = computed
        elif self.token_dim != computed:
            raise ConfigurationError(f"token_dim {self.token_dim} != sum of sub-encoding widths {computed}")
        self._kind_index = {k: i for i, k in enumerate(self.op_vocabulary)}

    def layout(self) -> Dict[str, Tuple[int, int]]:
        """Column ranges of each sub-encoding, in token order."""
        widths: List[Tuple[str, int]] = []
        if self.scheme == "cell":
            widths.append(("op:label", 2 * self.label_frequencies))
        else:
            if self.op_type_encoding == "onehot":
                widths.append(("op:type", len(self.op_vocabulary)))
            else:
                widths.append(("op:type", 2 * self.label_frequencies))
            for slot in self.attribute_slots:
                w = 2 * slot.frequencies if self.attribute_encoding == "pe" else 1
                widths.append((f"op:attr:{slot.name}", w))
        widths.append(("pos", 2 * self.pe_frequencies))
        out, start = {}, 0
        for name, w in widths:
            out[name] = (start, start + w)
            start += w
        return out

    @property
    def op_width(self) -> int:
        return self.layout()["pos"][0]

    def kind_index(self, kind: str) -> int:
        try:
            return self._kind_index[kind]
        except KeyError:
            raise VocabularyError(f"operation kind {kind!r} not in vocabulary {list(self.op_vocabulary)}") from None

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "pe_frequencies": self.pe_frequencies,
            "pe_scale": self.pe_scale,
            "op_vocabulary": list(self.op_vocabulary),
            "attribute_slots": [
                {"name": s.name, "frequencies": s.frequencies, "scale": s.scale} for s in self.attribute_slots
            ],
            "label_frequencies": self.label_frequencies,
            "label_scale": self.label_scale,
            "op_type_encoding": self.op_type_encoding,
            "attribute_encoding": self.attribute_encoding,
            "token_dim": self.token_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingConfig":
        return cls(**d)


@dataclass
class TokenSequence:
    tokens: Tensor
    layout: Dict[str, Tuple[int, int]]
    order: List[int] = field(default_factory=list)

    @property
    def num_tokens(self) -> int:
        return self.tokens.rows

    def slot(self, name: str) -> np.ndarray:
        start, stop = self.layout[name]
        return self.tokens.data[:, start:stop]


def encode_operation(op: OpDescriptor, cfg: EncodingConfig) -> np.ndarray:
    if cfg.scheme == "cell":
        if op.label is None:
            raise ConfigurationError("cell encoding needs an integer label on every node")
        return positional_encode(op.label, cfg.label_frequencies, cfg.label_scale)

    if op.kind is None:
        raise ConfigurationError("full encoding needs an operation kind on every node")
    idx = cfg.kind_index(op.kind)
    parts = []
    if cfg.op_type_encoding == "onehot":
        onehot = np.zeros(len(cfg.op_vocabulary))
        onehot[idx] = 1.0
        parts.append(onehot)
    else:
        parts.append(positional_encode(idx, cfg.label_frequencies, cfg.label_scale))
    for slot in cfg.attribute_slots:
        v = float(op.attributes.get(slot.name, MISSING_ATTRIBUTE))
        if cfg.attribute_encoding == "pe":
            parts.append(positional_encode(v, slot.frequencies, slot.scale))
        else:
            parts.append(np.array([v / slot.scale]))
    return np.concatenate(parts)


def tokenize(g: NetworkGraph, cfg: EncodingConfig) -> TokenSequence:
    """Row ``i`` is ``encode_operation(node i) ++ positional_encode(i)``.

    Graphs whose node list is not in topological order are re-sorted first;
    ``order`` records which original node ended up in each row.
    """
    ensure_valid(g)
    if g.num_nodes and not _is_sorted(g):
        order = topological_order(g.adjacency)
        g = g.permuted(order)
    else:
        order = list(range(g.num_nodes))
    rows = [
        np.concatenate([encode_operation(op, cfg), positional_encode(i, cfg.pe_frequencies, cfg.pe_scale)])
        for i, op in enumerate(g.nodes)
    ]
    T = np.vstack(rows) if rows else np.zeros((0, cfg.token_dim))
    return TokenSequence(Tensor(T), cfg.layout(), order)


def _is_sorted(g: NetworkGraph) -> bool:
    return not np.any(np.tril(g.adjacency))


def effective_adjacency(A: np.ndarray, mode: str = "symmetric+self") -> np.ndarray:
    """Attention support: ``A``, ``A | A^T``, or ``A | A^T | I`` as float 0/1."""
    A = np.asarray(A) != 0
    if mode == "directed":
        out = A
    elif mode == "symmetric":
        out = A | A.T
    elif mode == "symmetric+self":
        out = A | A.T | np.eye(A.shape[0], dtype=bool)
    else:
        raise ConfigurationError(f"unknown adjacency mode {mode!r}; expected one of {ADJACENCY_MODES}")
    return out.astype(np.float64)


def degree_vector(A_hat: np.ndarray) -> np.ndarray:
    """Distinct neighbours per node (N x 1); self-loops are not counted."""
    A = np.asarray(A_hat) != 0
    und = A | A.T
    np.fill_diagonal(und, False)
    return und.sum(axis=1, keepdims=True).astype(np.float64)


@dataclass
class EncodedGraph:
    tokens: TokenSequence
    degrees: np.ndarray
    adjacency: np.ndarray
    graph: NetworkGraph


def encode_graph(g: NetworkGraph, cfg: EncodingConfig, mode: str = "symmetric+self") -> EncodedGraph:
    """Tokens, degree vector and effective adjacency of one graph, in topological order."""
    g = canonical_order(g)
    seq = tokenize(g, cfg)
    A_hat = effective_adjacency(g.adjacency, mode)
    return EncodedGraph(seq, degree_vector(A_hat), A_hat, g)
