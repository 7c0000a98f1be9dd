"""Encoder blocks: graph-aided attention, vanilla Transformer, and GNN.

Node features are rows: ``H`` is ``N x d_model`` and every projection is
written ``H @ W + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError

BLOCK_KINDS = ("graph", "vanilla", "gnn")


@dataclass
class BlockConfig:
    kind: str = "graph"
    d_model: int = 128
    d_attn: int = 64
    d_hidden: int = 512
    groups: int = 8
    ta_enhance: bool = True
    gate: str = "scalar"  # "scalar": one gate per node; "channel": one per node and feature
    attention: str = "local"  # "global" drops the adjacency mask
    ln_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.kind not in BLOCK_KINDS:
            raise ConfigurationError(f"unknown block kind {self.kind!r}; expected one of {BLOCK_KINDS}")
        if self.gate not in ("scalar", "channel"):
            raise ConfigurationError(f"unknown gate mode {self.gate!r}")
        if self.attention not in ("local", "global"):
            raise ConfigurationError(f"unknown attention mode {self.attention!r}")
        if self.kind == "graph":
            for name in ("d_model", "d_hidden"):
                if getattr(self, name) % self.groups:
                    raise ConfigurationError(f"{name}={getattr(self, name)} not divisible by groups={self.groups}")


def _weight(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Tensor:
    return ad.parameter(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)), name)


def _zeros(shape, name: str) -> Tensor:
    return ad.parameter(np.zeros(shape), name)


def _ones(shape, name: str) -> Tensor:
    return ad.parameter(np.ones(shape), name)


class _Params:
    """Mixin: collect every Tensor (and nested params) field by tensor name."""

    def tensors(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Tensor):
                out[v.name] = v
            elif isinstance(v, _Params):
                out.update(v.tensors())
        return out


@dataclass
class FFNParams(_Params):
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    groups: int = 1

    @classmethod
    def init(cls, rng, prefix: str, d_model: int, d_hidden: int, groups: int) -> "FFNParams":
        # fan-in per group is the slice width
        return cls(
            W1=_weight(rng, d_model // groups, d_hidden, f"{prefix}.W1"),
            b1=_zeros((1, d_hidden), f"{prefix}.b1"),
            W2=_weight(rng, d_hidden // groups, d_model, f"{prefix}.W2"),
            b2=_zeros((1, d_model), f"{prefix}.b2"),
            groups=groups,
        )


@dataclass
class GraphBlockParams(_Params):
    W_q: Tensor
    b_q: Tensor
    W_a: Tensor
    b_a: Tensor
    W_r: Tensor
    W_d: Optional[Tensor]
    b_d: Optional[Tensor]
    ffn: FFNParams
    ln_gamma: Tensor
    ln_beta: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, cfg: BlockConfig) -> "GraphBlockParams":
        dm, da = cfg.d_model, cfg.d_attn
        gate_w = 1 if cfg.gate == "scalar" else dm
        return cls(
            W_q=_weight(rng, dm, da, f"{prefix}.W_q"),
            b_q=_zeros((1, da), f"{prefix}.b_q"),
            W_a=_weight(rng, dm, dm, f"{prefix}.W_a"),
            b_a=_zeros((1, dm), f"{prefix}.b_a"),
            W_r=_weight(rng, dm, dm, f"{prefix}.W_r"),
            W_d=_weight(rng, 1, gate_w, f"{prefix}.W_d") if cfg.ta_enhance else None,
            b_d=_zeros((1, gate_w), f"{prefix}.b_d") if cfg.ta_enhance else None,
            ffn=FFNParams.init(rng, f"{prefix}.ffn", dm, cfg.d_hidden, cfg.groups),
            ln_gamma=_ones((1, dm), f"{prefix}.ln.gamma"),
            ln_beta=_zeros((1, dm), f"{prefix}.ln.beta"),
        )


@dataclass
class VanillaBlockParams(_Params):
    W_q: Tensor
    W_k: Tensor
    W_v: Tensor
    W_o: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    ffn: FFNParams

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, cfg: BlockConfig) -> "VanillaBlockParams":
        dm, da = cfg.d_model, cfg.d_attn
        return cls(
            W_q=_weight(rng, dm, da, f"{prefix}.W_q"),
            W_k=_weight(rng, dm, da, f"{prefix}.W_k"),
            W_v=_weight(rng, dm, da, f"{prefix}.W_v"),
            W_o=_weight(rng, da, dm, f"{prefix}.W_o"),
            ln1_gamma=_ones((1, dm), f"{prefix}.ln1.gamma"),
            ln1_beta=_zeros((1, dm), f"{prefix}.ln1.beta"),
            ln2_gamma=_ones((1, dm), f"{prefix}.ln2.gamma"),
            ln2_beta=_zeros((1, dm), f"{prefix}.ln2.beta"),
            ffn=FFNParams.init(rng, f"{prefix}.ffn", dm, cfg.d_hidden, 1),
        )


@dataclass
class GnnBlockParams(_Params):
    W_a: Tensor
    W_r: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, cfg: BlockConfig) -> "GnnBlockParams":
        dm = cfg.d_model
        return cls(W_a=_weight(rng, dm, dm, f"{prefix}.W_a"), W_r=_weight(rng, dm, dm, f"{prefix}.W_r"))


@dataclass
class AttentionTrace:
    X: np.ndarray
    raw_scores: np.ndarray
    masked_scores: np.ndarray
    weights: np.ndarray
    Z: np.ndarray


def init_block(rng: np.random.Generator, prefix: str, cfg: BlockConfig) -> _Params:
    if cfg.kind == "graph":
        return GraphBlockParams.init(rng, prefix, cfg)
    if cfg.kind == "vanilla":
        return VanillaBlockParams.init(rng, prefix, cfg)
    return GnnBlockParams.init(rng, prefix, cfg)


# ---------------------------------------------------------------------------


def ta_enhance(H: Tensor, D: Tensor, W_d: Tensor, b_d: Tensor) -> Tensor:
    """Gate node features by a sigmoid of the neighbour count.

    Scalar mode (``W_d`` 1x1): one gate per node, applied to every column.
    Channel mode (``W_d`` 1 x d_model): one gate per node and column.
    """
    if D.shape != (H.rows, 1):
        raise DimensionError(f"ta_enhance: degree vector {D.shape} does not match features {H.shape}")
    gate = ad.sigmoid(ad.add_bias(ad.matmul(D, W_d), b_d))
    if gate.cols == 1:
        return ad.mul_rows(H, gate)
    return ad.hadamard(H, gate)


def graph_attention(
    Ht: Tensor,
    A_hat: np.ndarray,
    W_q: Tensor,
    b_q: Tensor,
    W_a: Tensor,
    b_a: Tensor,
    masked: bool = True,
    trace: bool = False,
):
    """Adjacency-masked linear attention.

    ``X = sigmoid(Ht W_q + b_q)``; scores ``X X^T / sqrt(d)`` are zeroed off the
    support of ``A_hat`` and each row divided by its sum.  With ``masked=False``
    every pair attends (the global-attention ablation).

    Returns ``(Z, AttentionTrace | None)``.
    """
    n = Ht.rows
    if A_hat.shape != (n, n):
        raise DimensionError(f"graph_attention: adjacency {A_hat.shape} vs {n} nodes")
    X = ad.sigmoid(ad.add_bias(ad.matmul(Ht, W_q), b_q))
    raw = ad.scale(ad.matmul(X, ad.transpose(X)), 1.0 / math.sqrt(X.cols))
    S = ad.hadamard(raw, ad.constant(A_hat)) if masked else raw
    P = ad.row_normalize(S)
    Z = ad.add_bias(ad.matmul(ad.matmul(P, Ht), W_a), b_a)
    tr = AttentionTrace(X.data, raw.data, S.data, P.data, Z.data) if trace else None
    return Z, tr


def gffn(H: Tensor, p: FFNParams) -> Tensor:
    """grouped_linear -> relu -> grouped_linear."""
    hidden = ad.relu(ad.grouped_linear(H, p.W1, p.b1, p.groups))
    return ad.grouped_linear(hidden, p.W2, p.b2, p.groups)


def graph_block(
    H: Tensor,
    D: Tensor,
    A_hat: np.ndarray,
    p: GraphBlockParams,
    cfg: BlockConfig,
    traces: Optional[list] = None,
) -> Tensor:
    Ht = ta_enhance(H, D, p.W_d, p.b_d) if p.W_d is not None else H
    Z, tr = graph_attention(
        Ht, A_hat, p.W_q, p.b_q, p.W_a, p.b_a, masked=cfg.attention == "local", trace=traces is not None
    )
    H_hat = ad.l2_normalize_rows(ad.add(Z, ad.matmul(Ht, p.W_r)))
    if traces is not None:
        traces.append((tr, H_hat.data))
    out = ad.add(gffn(ad.layer_norm(H_hat, p.ln_gamma, p.ln_beta, cfg.ln_eps), p.ffn), H_hat)
    return out


def vanilla_block(H: Tensor, p: VanillaBlockParams, cfg: BlockConfig, traces: Optional[list] = None) -> Tensor:
    """Pre-LN single-head softmax self-attention block, dense over all tokens."""
    x = ad.layer_norm(H, p.ln1_gamma, p.ln1_beta, cfg.ln_eps)
    q, k, v = ad.matmul(x, p.W_q), ad.matmul(x, p.W_k), ad.matmul(x, p.W_v)
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(q.cols))
    attn = ad.softmax_rows(scores)
    if traces is not None:
        traces.append(attn.data)
    H_hat = ad.add(ad.matmul(ad.matmul(attn, v), p.W_o), H)
    return ad.add(gffn(ad.layer_norm(H_hat, p.ln2_gamma, p.ln2_beta, cfg.ln_eps), p.ffn), H_hat)


def mean_aggregation_matrix(A_hat: np.ndarray) -> np.ndarray:
    """Row-normalized adjacency; rows without neighbours stay zero."""
    A = np.asarray(A_hat, dtype=np.float64)
    r = A.sum(axis=1, keepdims=True)
    return np.divide(A, r, out=np.zeros_like(A), where=r > 0)


def gnn_block(H: Tensor, A_hat: np.ndarray, p: GnnBlockParams) -> Tensor:
    agg = ad.matmul(ad.constant(mean_aggregation_matrix(A_hat)), H)
    H_hat = ad.add(ad.matmul(agg, p.W_a), ad.matmul(H, p.W_r))
    return ad.l2_normalize_rows(H_hat)


def apply_block(H: Tensor, D: Tensor, A_hat: np.ndarray, p: _Params, cfg: BlockConfig, traces=None) -> Tensor:
    if isinstance(p, GraphBlockParams):
        return graph_block(H, D, A_hat, p, cfg, traces)
    if isinstance(p, VanillaBlockParams):
        return vanilla_block(H, p, cfg, traces)
    return gnn_block(H, A_hat, p)


@dataclass
class EncoderParams(_Params):
    W_in: Tensor
    b_in: Tensor

    blocks: tuple = ()

    def tensors(self) -> Dict[str, Tensor]:
        out = {self.W_in.name: self.W_in, self.b_in.name: self.b_in}
        for b in self.blocks:
            out.update(b.tensors())
        return out

    @classmethod
    def init(cls, rng: np.random.Generator, token_dim: int, num_blocks: int, cfg: BlockConfig) -> "EncoderParams":
        if num_blocks < 1:
            raise ConfigurationError("encoder needs at least one block")
        W_in = _weight(rng, token_dim, cfg.d_model, "input.W")
        b_in = _zeros((1, cfg.d_model), "input.b")
        blocks = tuple(init_block(rng, f"block{k}", cfg) for k in range(num_blocks))
        return cls(W_in, b_in, blocks)


def encoder_forward(
    T: Tensor, D: np.ndarray, A_hat: np.ndarray, enc: EncoderParams, cfg: BlockConfig, traces=None
) -> List[Tensor]:
    """Project tokens to ``d_model`` and run every block; returns ``[H^1, ..., H^K]``."""
    H = ad.add_bias(ad.matmul(T, enc.W_in), enc.b_in)
    Dt = ad.constant(D)
    outs = []
    for p in enc.blocks:
        H = apply_block(H, Dt, A_hat, p, cfg, traces)
        outs.append(H)
    return outs
