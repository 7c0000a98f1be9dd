import base64
import json
import math
import struct

import numpy as np
import pytest

from archrep.checkpoint import Checkpoint, CheckpointError, load_checkpoint, load_model, save_checkpoint
from archrep.data import load_graph
from archrep.experiments import gradcheck_graph
from archrep.predictor import Model, ModelConfig
from archrep.training import TrainConfig, train
from conftest import GOLDEN, TESTS

ZERO = GOLDEN / "zero_checkpoint.json"
TRAINED = GOLDEN / "trained_checkpoint.json"


@pytest.mark.parametrize("path", [ZERO, TRAINED])
def test_golden_reserializes_byte_identical(path, tmp_path):
    out = tmp_path / "again.json"
    save_checkpoint(load_checkpoint(path), out)
    assert out.read_bytes() == path.read_bytes()


def test_tensor_payload_is_little_endian_float64():
    doc = json.loads(TRAINED.read_text())
    rec = next(p for p in doc["parameters"] if p["name"] == "head.fc3.b")
    raw = base64.b64decode(rec["data"])
    (value,) = struct.unpack("<d", raw)
    assert rec["shape"] == [1, 1]
    assert value == load_checkpoint(TRAINED).parameters["head.fc3.b"][0, 0]


def test_zero_checkpoint_predicts_ln2():
    model = load_model(ZERO)
    g = load_graph(TESTS / "fixtures" / "residual_graph.json")
    assert model.predict(g) == pytest.approx(math.log(2), abs=1e-15)


def test_trained_golden_matches_fresh_training():
    ck = load_checkpoint(TRAINED)
    fresh = Model(ModelConfig.from_dict(ck.config), seed=0)
    res = train([gradcheck_graph()], fresh, TrainConfig(epochs=1, batch_size=1, seed=0))
    assert res.steps == ck.step == 1
    for k, v in ck.parameters.items():
        np.testing.assert_allclose(fresh.state()[k], v, rtol=0, atol=1e-12)


def test_full_state_round_trip(tmp_path):
    ck = load_checkpoint(TRAINED)
    opt, rng = ck.build_optimizer(), ck.build_rng()
    assert opt.t == 1 and set(opt.m) == set(ck.parameters)
    again = Checkpoint.capture(ck.build_model(), opt, rng, ck.step)
    p = tmp_path / "c.json"
    save_checkpoint(again, p)
    assert p.read_bytes() == TRAINED.read_bytes()
    assert ck.build_rng().random() == ck.build_rng().random()


def test_special_values_survive(tmp_path):
    ck = load_checkpoint(ZERO)
    name = next(iter(ck.parameters))
    ck.parameters[name] = ck.parameters[name].copy()
    ck.parameters[name].flat[0] = -0.0
    ck.parameters[name].flat[-1] = 5e-324
    p = tmp_path / "s.json"
    save_checkpoint(ck, p)
    back = load_checkpoint(p).parameters[name]
    assert math.copysign(1.0, back.flat[0]) == -1.0 and back.flat[-1] == 5e-324


def test_rejects_foreign_or_future_files(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    doc = json.loads(ZERO.read_text())
    doc["version"] = 99
    p.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(p)
    p.write_text("{not json")
    with pytest.raises(CheckpointError, match=r"x.json:1:2"):
        load_checkpoint(p)
