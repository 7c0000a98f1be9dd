import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from archrep.encoding import (
    EncodingConfig,
    degree_vector,
    effective_adjacency,
    encode_graph,
    encode_operation,
    positional_encode,
    tokenize,
)
from archrep.errors import ConfigurationError, GraphValidationError, VocabularyError
from archrep.graph import NetworkGraph, OpDescriptor, canonical_order, fatal_violations, validate_graph
from conftest import chain, random_dag


def test_valid_chain_has_no_violations():
    assert validate_graph(chain(5)) == []


def test_cycle_is_fatal():
    g = NetworkGraph.from_edges([OpDescriptor("conv")] * 3, [(0, 1), (1, 2), (2, 0)])
    assert any("cycle" in v for v in fatal_violations(validate_graph(g)))
    with pytest.raises(GraphValidationError):
        tokenize(g, EncodingConfig())


def test_self_loop_and_bad_attribute_reported():
    A = np.array([[1, 1], [0, 0]])
    g = NetworkGraph([OpDescriptor("input"), OpDescriptor("output", {"spatial": -3})], A)
    v = validate_graph(g)
    assert any("self-loop" in x for x in v) and any("spatial" in x for x in v)


def test_dangling_node_is_only_a_warning():
    g = NetworkGraph.from_edges(
        [OpDescriptor("input"), OpDescriptor("conv"), OpDescriptor("relu"), OpDescriptor("output")],
        [(0, 1), (1, 3)],
    )
    v = validate_graph(g)
    assert v and all(x.startswith("warning:") for x in v)


def test_edge_out_of_range():
    with pytest.raises(GraphValidationError):
        NetworkGraph.from_edges([OpDescriptor("input")], [(0, 3)])


def test_canonical_order_sorts_unsorted_graph():
    g = chain(4).permuted([3, 1, 0, 2])
    s = canonical_order(g)
    assert not np.any(np.tril(s.adjacency))
    assert [op.kind for op in s.nodes] == ["input", "conv", "conv", "output"]


# ---------------------------------------------------------------------------
# positional encoding


def test_positional_encode_zero():
    v = positional_encode(0.0, 4, 10.0)
    assert v.tolist() == [0.0, 1.0] * 4


def test_positional_encode_quarter_and_half_period():
    v = positional_encode(5.0, 1, 10.0)
    assert v[0] == pytest.approx(1.0, abs=1e-15) and v[1] == pytest.approx(0.0, abs=1e-15)
    v = positional_encode(10.0, 1, 10.0)
    assert v[0] == pytest.approx(0.0, abs=1e-15) and v[1] == pytest.approx(-1.0, abs=1e-15)


@given(x=st.floats(-1e4, 1e4), L=st.integers(1, 20), scale=st.floats(0.1, 1e4))
def test_positional_encode_matches_oracle_and_is_bounded(x, L, scale):
    v = positional_encode(x, L, scale)
    assert v.shape == (2 * L,)
    assert np.all(np.abs(v) <= 1.0)
    np.testing.assert_allclose(v, oracles.positional_encode(x, L, scale), atol=1e-9)


def test_positional_encode_injective_on_integers():
    codes = {tuple(np.round(positional_encode(i, 16, 1000.0), 12)) for i in range(1000)}
    assert len(codes) == 1000


def test_positional_encode_rejects_bad_config():
    with pytest.raises(ConfigurationError):
        positional_encode(1.0, 0, 10.0)
    with pytest.raises(ConfigurationError):
        positional_encode(1.0, 4, 0.0)


# ---------------------------------------------------------------------------
# operation encoding and tokens


def test_token_width_is_sum_of_sub_encodings():
    cfg = EncodingConfig()
    assert cfg.token_dim == 9 + 6 * 32 + 32
    cell = EncodingConfig(scheme="cell")
    assert cell.token_dim == 32 + 32
    with pytest.raises(ConfigurationError):
        EncodingConfig(token_dim=7)


def test_encode_operation_onehot_and_missing_attribute():
    cfg = EncodingConfig()
    row = encode_operation(OpDescriptor("relu", {"spatial": 28}), cfg)
    lay = cfg.layout()
    onehot = row[slice(*lay["op:type"])]
    assert onehot.sum() == 1.0 and onehot[cfg.kind_index("relu")] == 1.0
    s = slice(*lay["op:attr:spatial"])
    np.testing.assert_allclose(row[s], positional_encode(28, 16, 1000.0))
    k = slice(*lay["op:attr:kernel_size"])
    np.testing.assert_allclose(row[k], positional_encode(-1.0, 16, 1000.0))


def test_unknown_kind_raises_vocabulary_error():
    with pytest.raises(VocabularyError, match="warp"):
        encode_operation(OpDescriptor("warp"), EncodingConfig())


def test_raw_attribute_mode_divides_by_scale():
    cfg = EncodingConfig(attribute_encoding="raw")
    row = encode_operation(OpDescriptor("conv", {"kernel_size": 3}), cfg)
    assert row[slice(*cfg.layout()["op:attr:kernel_size"])].tolist() == [0.003]


def test_cell_scheme_uses_label():
    cfg = EncodingConfig(scheme="cell")
    np.testing.assert_allclose(encode_operation(OpDescriptor(label=2), cfg), positional_encode(2, 16, 1000.0))
    with pytest.raises(ConfigurationError):
        encode_operation(OpDescriptor("conv"), cfg)


def test_tokenize_position_slot():
    cfg = EncodingConfig()
    seq = tokenize(chain(5), cfg)
    assert seq.num_tokens == 5
    for i in range(5):
        np.testing.assert_allclose(seq.slot("pos")[i], positional_encode(i, 16, 1000.0))


def test_tokenize_unsorted_graph_records_order():
    g = chain(4).permuted([2, 0, 3, 1])
    seq = tokenize(g, EncodingConfig())
    assert [g.nodes[i].kind for i in seq.order] == ["input", "conv", "conv", "output"]


def test_op_part_is_permutation_equivariant(rng):
    cfg = EncodingConfig()
    g = random_dag(rng, 8)
    base = tokenize(g, cfg)
    # tokenize re-sorts the permuted graph; the multiset of op encodings must be unchanged
    perm = np.arange(8)
    sub = rng.permutation(8)
    h = NetworkGraph(nodes=[g.nodes[i] for i in sub], adjacency=g.adjacency[np.ix_(sub, sub)])
    seq = tokenize(h, cfg)
    w = cfg.op_width
    original_rows = {tuple(base.tokens.data[i, :w]) for i in perm}
    assert {tuple(r[:w]) for r in seq.tokens.data} == original_rows


# ---------------------------------------------------------------------------
# adjacency and degrees


def test_effective_adjacency_modes():
    A = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    assert effective_adjacency(A, "directed").tolist() == A.tolist()
    assert effective_adjacency(A, "symmetric").tolist() == [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
    assert effective_adjacency(A).tolist() == [[1, 1, 0], [1, 1, 1], [0, 1, 1]]
    with pytest.raises(ConfigurationError):
        effective_adjacency(A, "sideways")


@given(n=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_degree_vector_matches_neighbour_count(n, seed):
    g = random_dag(np.random.default_rng(seed), n)
    D = degree_vector(effective_adjacency(g.adjacency))
    assert D[:, 0].tolist() == oracles.neighbour_count(n, g.edges)


def test_encode_graph_shapes():
    eg = encode_graph(chain(6), EncodingConfig())
    assert eg.degrees[:, 0].tolist() == [1, 2, 2, 2, 2, 1]
    assert eg.adjacency.shape == (6, 6) and np.all(np.diag(eg.adjacency) == 1)
    assert math.isclose(eg.tokens.tokens.data.shape[1], EncodingConfig().token_dim)
