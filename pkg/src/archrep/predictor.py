"""Attribute prediction on top of the encoder: pooling, static features, fusion, head."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import BlockConfig, EncoderParams, encoder_forward
from .encoding import EncodedGraph, EncodingConfig, encode_graph, positional_encode
from .errors import ConfigurationError, DimensionError, GraphValidationError
from .graph import STATIC_FEATURES, NetworkGraph

TASKS = ("latency", "accuracy")


@dataclass
class StaticFeatureConfig:
    """Layout of the graph-level feature vector appended for latency prediction.

    Each feature goes through ``log10`` and then the sinusoidal map.  The name
    order is part of the head's input layout; bump ``version`` if it changes.
    """

    names: Tuple[str, ...] = STATIC_FEATURES
    frequencies: int = 8
    scale: float = 32.0
    version: int = 1

    def __post_init__(self) -> None:
        self.names = tuple(self.names)

    @property
    def width(self) -> int:
        return 2 * self.frequencies * len(self.names)


@dataclass
class ModelConfig:
    task: str = "latency"
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    block: BlockConfig = field(default_factory=BlockConfig)
    num_blocks: int = 2
    adjacency_mode: str = "symmetric+self"
    pooling: str = "mean"
    head_hidden: Tuple[int, int] = (256, 64)
    static: StaticFeatureConfig = field(default_factory=StaticFeatureConfig)
    fusion: Optional[bool] = None  # None: on for accuracy, off for latency
    target_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.pooling not in ("mean", "sum"):
            raise ConfigurationError(f"unknown pooling {self.pooling!r}")
        if self.fusion is None:
            self.fusion = self.task == "accuracy"
        if self.target_scale <= 0:
            raise ConfigurationError("target_scale must be positive")
        self.head_hidden = tuple(self.head_hidden)

    @property
    def uses_static(self) -> bool:
        return self.task == "latency"

    @property
    def head_input(self) -> int:
        return self.block.d_model + (self.static.width if self.uses_static else 0)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "encoding": self.encoding.to_dict(),
            "block": asdict(self.block),
            "num_blocks": self.num_blocks,
            "adjacency_mode": self.adjacency_mode,
            "pooling": self.pooling,
            "head_hidden": list(self.head_hidden),
            "static": {**asdict(self.static), "names": list(self.static.names)},
            "fusion": self.fusion,
            "target_scale": self.target_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        enc = d.pop("encoding", {})
        d["encoding"] = enc if isinstance(enc, EncodingConfig) else EncodingConfig.from_dict(enc)
        blk = d.pop("block", {})
        d["block"] = blk if isinstance(blk, BlockConfig) else BlockConfig(**blk)
        st = d.pop("static", {})
        d["static"] = st if isinstance(st, StaticFeatureConfig) else StaticFeatureConfig(**st)
        return cls(**d)


@dataclass
class HeadParams:
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    W3: Tensor
    b3: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: Tuple[int, int], out_bias: float = 0.0):
        h1, h2 = hidden

        def w(a, b, name):
            return ad.parameter(rng.normal(0.0, 1.0 / math.sqrt(a), size=(a, b)), name)

        return cls(
            W1=w(d_in, h1, "head.fc1.W"),
            b1=ad.parameter(np.zeros((1, h1)), "head.fc1.b"),
            W2=w(h1, h2, "head.fc2.W"),
            b2=ad.parameter(np.zeros((1, h2)), "head.fc2.b"),
            W3=w(h2, 1, "head.fc3.W"),
            b3=ad.parameter(np.full((1, 1), out_bias), "head.fc3.b"),
        )

    def tensors(self) -> Dict[str, Tensor]:
        return {t.name: t for t in (self.W1, self.b1, self.W2, self.b2, self.W3, self.b3)}


# ---------------------------------------------------------------------------


def pool_nodes(H: Tensor, mode: str = "mean") -> Tensor:
    if H.rows == 0:
        raise DimensionError("pool_nodes: graph has no nodes")
    return ad.mean_rows(H) if mode == "mean" else ad.sum_rows(H)


def encode_static(static: Mapping[str, float], cfg: StaticFeatureConfig) -> np.ndarray:
    missing = [n for n in cfg.names if n not in static]
    if missing:
        raise GraphValidationError(f"missing static feature(s) {missing}", missing)
    parts = []
    for name in cfg.names:
        v = float(static[name])
        if not v > 0:
            raise GraphValidationError(f"static feature {name}={v} must be positive for log10", [name])
        parts.append(positional_encode(math.log10(v), cfg.frequencies, cfg.scale))
    return np.concatenate(parts)


def head_forward(z: Tensor, p: HeadParams) -> Tensor:
    """``-logsigmoid(FC(relu(FC(relu(FC(z))))))``; always positive."""
    if z.cols != p.W1.rows:
        raise DimensionError(f"head_forward: input width {z.cols} != {p.W1.rows}")
    h = ad.relu(ad.linear(z, p.W1, p.b1))
    h = ad.relu(ad.linear(h, p.W2, p.b2))
    u = ad.linear(h, p.W3, p.b3)
    return ad.scale(ad.logsigmoid(u), -1.0)


def fuse_layers(pooled: Sequence[Tensor], alpha: Tensor) -> Tensor:
    """Softmax(alpha)-weighted sum of per-layer pooled vectors."""
    pooled = list(pooled)
    if not pooled:
        raise DimensionError("fuse_layers: no layers")
    if alpha.shape != (1, len(pooled)):
        raise DimensionError(f"fuse_layers: {len(pooled)} layers but alpha has shape {alpha.shape}")
    w = ad.softmax_rows(alpha)
    return ad.matmul(w, ad.concat_rows(pooled))


# ---------------------------------------------------------------------------


@dataclass
class PreparedGraph:
    """Everything the model needs from one graph, computed once."""

    encoded: EncodedGraph
    static: Optional[np.ndarray]
    target: Optional[float]
    id: str


class Model:
    """Encoder + (optional fusion) + head, with named parameters."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.encoder = EncoderParams.init(rng, config.encoding.token_dim, config.num_blocks, config.block)
        # softplus(0.5413) = 1: initial prediction equals target_scale
        out_bias = -0.5413248546129181 if config.task == "latency" else 0.0
        self.head = HeadParams.init(rng, config.head_input, config.head_hidden, out_bias)
        self.alpha = ad.parameter(np.zeros((1, config.num_blocks)), "fusion.alpha") if config.fusion else None

    def parameters(self) -> Dict[str, Tensor]:
        out = dict(self.encoder.tensors())
        out.update(self.head.tensors())
        if self.alpha is not None:
            out[self.alpha.name] = self.alpha
        return out

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.parameters().values())

    def zero_(self) -> "Model":
        for t in self.parameters().values():
            t.data[...] = 0.0
        return self

    def state(self) -> Dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.parameters().items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(state) != set(params):
            raise ConfigurationError(
                f"state mismatch: missing {sorted(set(params) - set(state))}, extra {sorted(set(state) - set(params))}"
            )
        for k, t in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise DimensionError(f"parameter {k}: shape {arr.shape} != {t.data.shape}")
            t.data[...] = arr

    # -- data path ---------------------------------------------------------

    def prepare(self, g: NetworkGraph) -> PreparedGraph:
        cfg = self.config
        enc = encode_graph(g, cfg.encoding, cfg.adjacency_mode)
        static = encode_static(g.static, cfg.static) if cfg.uses_static else None
        return PreparedGraph(enc, static, g.target, g.id)

    def layers(self, pg: PreparedGraph, traces=None) -> List[Tensor]:
        e = pg.encoded
        return encoder_forward(e.tokens.tokens, e.degrees, e.adjacency, self.encoder, self.config.block, traces)

    def representation(self, pg: PreparedGraph) -> Tensor:
        cfg = self.config
        outs = self.layers(pg)
        if cfg.fusion:
            z = fuse_layers([pool_nodes(H, cfg.pooling) for H in outs], self.alpha)
        else:
            z = pool_nodes(outs[-1], cfg.pooling)
        if cfg.uses_static:
            z = ad.concat_cols([z, ad.constant(pg.static)])
        return z

    def forward(self, pg: PreparedGraph) -> Tensor:
        """Prediction in units of ``target_scale`` as a 1x1 tensor."""
        return head_forward(self.representation(pg), self.head)

    def predict(self, g) -> float:
        pg = g if isinstance(g, PreparedGraph) else self.prepare(g)
        return self.forward(pg).item() * self.config.target_scale


def predict_latency(g: NetworkGraph, model: Model) -> float:
    """Latency in the dataset's units (milliseconds for the synthetic oracle)."""
    if model.config.task != "latency":
        raise ConfigurationError("model was not configured for latency prediction")
    return model.predict(g)


def predict_accuracy(g: NetworkGraph, model: Model) -> float:
    if model.config.task != "accuracy":
        raise ConfigurationError("model was not configured for accuracy prediction")
    return model.predict(g)
