"""Freeze the checkpoint format goldens (run once; the files are committed).

``zero_checkpoint.json``: a tiny latency model with every weight zero, so any
graph predicts -log(sigmoid(0)) = ln 2.  ``trained_checkpoint.json``: the same
architecture after one Adam step, with optimizer and RNG state.
"""

import json
from pathlib import Path

import numpy as np

from archrep.blocks import BlockConfig
from archrep.checkpoint import Checkpoint, save_checkpoint
from archrep.data import graph_to_record
from archrep.experiments import gradcheck_graph
from archrep.predictor import Model, ModelConfig
from archrep.training import TrainConfig, train

HERE = Path(__file__).parent
FIXTURES = HERE.parent / "fixtures"


def tiny_config() -> ModelConfig:
    return ModelConfig(block=BlockConfig(d_model=4, d_attn=2, d_hidden=8, groups=2), num_blocks=1, head_hidden=(4, 2))


def main():
    model = Model(tiny_config(), seed=0).zero_()
    save_checkpoint(Checkpoint.capture(model), HERE / "zero_checkpoint.json")

    g = gradcheck_graph()
    model = Model(tiny_config(), seed=0)
    res = train([g], model, TrainConfig(epochs=1, batch_size=1, seed=0))
    save_checkpoint(Checkpoint.capture(model, res.optimizer, res.rng, res.steps), HERE / "trained_checkpoint.json")

    FIXTURES.mkdir(exist_ok=True)
    (FIXTURES / "residual_graph.json").write_text(json.dumps(graph_to_record(g), indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    np.seterr(all="raise")
    main()
