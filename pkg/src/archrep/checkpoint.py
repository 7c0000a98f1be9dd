"""Self-describing checkpoint container.

A checkpoint is a JSON document::

    {
      "format": "archrep-checkpoint",
      "version": 1,
      "config": {...model config...},
      "parameters": [{"name": ..., "shape": [r, c], "data": <base64 float64 LE>}, ...],
      "optimizer": {"t": ..., "beta1": ..., "beta2": ..., "eps": ...,
                    "m": [...tensors...], "v": [...tensors...]} | null,
      "rng": <numpy bit-generator state> | null,
      "step": int,
      "extra": {...}
    }

Tensors are stored as raw little-endian float64 so values survive bit-exactly;
keys are sorted so save -> load -> save reproduces the same bytes.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from .errors import ArchRepError
from .predictor import Model, ModelConfig
from .training import Adam

FORMAT = "archrep-checkpoint"
VERSION = 1


class CheckpointError(ArchRepError, ValueError):
    """Malformed or incompatible checkpoint file."""


def encode_tensor(name: str, arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"name": name, "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_tensor(rec: Mapping) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in rec["shape"])
        raw = base64.b64decode(rec["data"], validate=True)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"bad tensor record {rec.get('name')!r}: {e}") from None
    if len(raw) != 8 * int(np.prod(shape, dtype=np.int64)):
        raise CheckpointError(f"tensor {rec.get('name')!r}: {len(raw)} bytes do not fit shape {shape}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def _tensors(d: Mapping[str, np.ndarray]) -> list:
    return [encode_tensor(k, d[k]) for k in sorted(d)]


def _untensors(items) -> Dict[str, np.ndarray]:
    return {rec["name"]: decode_tensor(rec) for rec in items}


@dataclass
class Checkpoint:
    config: dict
    parameters: Dict[str, np.ndarray]
    optimizer: Optional[dict] = None
    rng: Optional[dict] = None
    step: int = 0
    extra: dict = field(default_factory=dict)

    # -- construction ------------------------------------------------------

    @classmethod
    def capture(
        cls,
        model: Model,
        optimizer: Optional[Adam] = None,
        rng: Optional[np.random.Generator] = None,
        step: int = 0,
        extra: Optional[dict] = None,
    ) -> "Checkpoint":
        return cls(
            config=model.config.to_dict(),
            parameters=model.state(),
            optimizer=optimizer.state_dict() if optimizer is not None else None,
            rng=rng.bit_generator.state if rng is not None else None,
            step=step,
            extra=dict(extra or {}),
        )

    def build_model(self) -> Model:
        model = Model(ModelConfig.from_dict(self.config))
        model.load_state(self.parameters)
        return model

    def build_optimizer(self) -> Optional[Adam]:
        if self.optimizer is None:
            return None
        opt = Adam()
        opt.load_state_dict(self.optimizer)
        return opt

    def build_rng(self) -> Optional[np.random.Generator]:
        if self.rng is None:
            return None
        bg = getattr(np.random, self.rng["bit_generator"])()
        bg.state = self.rng
        return np.random.Generator(bg)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        opt = None
        if self.optimizer is not None:
            o = self.optimizer
            opt = {
                "t": int(o["t"]),
                "beta1": float(o["beta1"]),
                "beta2": float(o["beta2"]),
                "eps": float(o["eps"]),
                "m": _tensors(o["m"]),
                "v": _tensors(o["v"]),
            }
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "config": self.config,
            "parameters": _tensors(self.parameters),
            "optimizer": opt,
            "rng": self.rng,
            "step": int(self.step),
            "extra": self.extra,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str, source: str = "<string>") -> "Checkpoint":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from None
        if not isinstance(doc, dict) or doc.get("format") != FORMAT:
            raise CheckpointError(f"{source}: not an {FORMAT} file")
        if doc.get("version") != VERSION:
            raise CheckpointError(f"{source}: unsupported checkpoint version {doc.get('version')!r}")
        opt = doc.get("optimizer")
        if opt is not None:
            opt = dict(opt, m=_untensors(opt["m"]), v=_untensors(opt["v"]))
        return cls(
            config=doc["config"],
            parameters=_untensors(doc["parameters"]),
            optimizer=opt,
            rng=doc.get("rng"),
            step=int(doc.get("step", 0)),
            extra=doc.get("extra", {}),
        )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    Path(path).write_text(ckpt.to_json())


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    p = Path(path)
    return Checkpoint.from_json(p.read_text(), str(p))


def load_model(path: Union[str, Path]) -> Model:
    return load_checkpoint(path).build_model()
