"""Regenerate the oracle-derived golden files in this directory.

Run from the repository root: ``python tests/golden/make_golden.py``.
Only ``tests/oracles.py`` and hand-written fixtures are used here; the
package under test is never imported.
"""

import json
import random
import sys
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))

import oracles  # noqa: E402


def dump(name, obj):
    (HERE / name).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def rand_matrix(rng, r, c, s=1.0):
    return [[rng.gauss(0.0, s) for _ in range(c)] for _ in range(r)]


def block_params(rng, dm, da, dh, g):
    return {
        "W_d": rng.gauss(0, 1),
        "b_d": rng.gauss(0, 0.5),
        "W_q": rand_matrix(rng, dm, da, dm**-0.5),
        "b_q": [rng.gauss(0, 0.1) for _ in range(da)],
        "W_a": rand_matrix(rng, dm, dm, dm**-0.5),
        "b_a": [rng.gauss(0, 0.1) for _ in range(dm)],
        "W_r": rand_matrix(rng, dm, dm, dm**-0.5),
        "ln_gamma": [1.0 + rng.gauss(0, 0.1) for _ in range(dm)],
        "ln_beta": [rng.gauss(0, 0.1) for _ in range(dm)],
        "ffn_W1": [rand_matrix(rng, dm // g, dh // g, (dm // g) ** -0.5) for _ in range(g)],
        "ffn_b1": [rng.gauss(0, 0.1) for _ in range(dh)],
        "ffn_W2": [rand_matrix(rng, dh // g, dm // g, (dh // g) ** -0.5) for _ in range(g)],
        "ffn_b2": [rng.gauss(0, 0.1) for _ in range(dm)],
    }


def chain_support(n):
    """symmetric+self adjacency of a chain 0 -> 1 -> ... -> n-1."""
    return [[1.0 if abs(i - j) <= 1 else 0.0 for j in range(n)] for i in range(n)]


def graph_block_goldens():
    rng = random.Random(20240611)
    n, dm, da, dh, g = 5, 8, 4, 16, 2
    H = rand_matrix(rng, n, dm)
    A = chain_support(n)
    D = [1.0, 2.0, 2.0, 2.0, 1.0]
    p = block_params(rng, dm, da, dh, g)
    out = oracles.graph_block(H, D, A, p)
    dump("graph_block_random.json", {"H": H, "A": A, "D": D, "params": p, "groups": g, "H_out": out})

    # all weights and biases zero, LN gamma 1 / beta 0
    zero = {
        "W_d": 0.0,
        "b_d": 0.0,
        "W_q": oracles.zeros(dm, da),
        "b_q": [0.0] * da,
        "W_a": oracles.zeros(dm, dm),
        "b_a": [0.0] * dm,
        "W_r": oracles.zeros(dm, dm),
        "ln_gamma": [1.0] * dm,
        "ln_beta": [0.0] * dm,
        "ffn_W1": [oracles.zeros(dm // g, dh // g) for _ in range(g)],
        "ffn_b1": [0.0] * dh,
        "ffn_W2": [oracles.zeros(dh // g, dm // g) for _ in range(g)],
        "ffn_b2": [0.0] * dm,
    }
    zero_out = oracles.graph_block(H, D, A, zero)
    ident = dict(zero, W_r=[[1.0 if i == j else 0.0 for j in range(dm)] for i in range(dm)])
    ident_out = oracles.graph_block(H, D, A, ident)
    dump(
        "graph_block_zero.json",
        {"H": H, "A": A, "D": D, "groups": g, "dims": [dm, da, dh], "zero_H_out": zero_out, "identity_residual_H_out": ident_out},
    )


LATENCY_TABLE = {
    "input": [0.02, 0.0, 5e-9],
    "output": [0.02, 0.0, 5e-9],
    "conv": [0.06, 1e-10, 2e-9],
    "bn": [0.03, 0.0, 4e-9],
    "relu": [0.025, 0.0, 3e-9],
    "pool": [0.04, 5e-10, 3e-9],
    "fc": [0.05, 2e-10, 0.0],
    "add": [0.03, 0.0, 5e-9],
    "concat": [0.035, 0.0, 6e-9],
}


def latency_fixture():
    """20-node residual network; every row of the spreadsheet spelled out."""
    def conv(k, st, cin, cout, s, groups=1):
        return ("conv", {"kernel_size": k, "stride": st, "groups": groups, "in_channels": cin, "out_channels": cout, "spatial": s})

    def ew(kind, c, s):
        return (kind, {"in_channels": c, "out_channels": c, "spatial": s})

    nodes = [
        ("input", {"out_channels": 3, "spatial": 224}),          # 0
        conv(7, 2, 3, 32, 224),                                   # 1
        ew("bn", 32, 112),                                        # 2 fused (conv -> bn, conv has one consumer)
        ew("relu", 32, 112),                                      # 3 fused (bn -> relu, bn has one consumer)
        ("pool", {"kernel_size": 3, "stride": 2, "in_channels": 32, "out_channels": 32, "spatial": 112}),  # 4
        conv(3, 1, 32, 32, 56),                                   # 5
        ew("bn", 32, 56),                                         # 6 fused
        ew("relu", 32, 56),                                       # 7 fused
        conv(3, 1, 32, 32, 56),                                   # 8
        ew("add", 32, 56),                                        # 9  (4 + 8)
        ew("relu", 32, 56),                                       # 10 not fused: producer is add
        conv(1, 2, 32, 64, 56),                                   # 11
        conv(3, 2, 32, 64, 56),                                   # 12
        ew("bn", 64, 28),                                         # 13 fused (12 has one consumer)
        ew("concat", 128, 28),                                    # 14 (11 + 13)
        conv(3, 1, 128, 128, 28, groups=128),                     # 15 depthwise
        ew("relu", 128, 28),                                      # 16 not fused: 15 feeds two nodes
        ew("add", 128, 28),                                       # 17 (15 + 16)
        ("fc", {"in_channels": 128, "out_channels": 1000, "spatial": 1}),  # 18
        ("output", {"in_channels": 1000, "out_channels": 1000, "spatial": 1}),  # 19
    ]
    edges = [
        (0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (4, 9), (8, 9), (9, 10),
        (10, 11), (10, 12), (12, 13), (11, 14), (13, 14), (14, 15), (15, 16), (15, 17), (16, 17),
        (17, 18), (18, 19),
    ]
    fused = {2, 3, 6, 7, 13}
    batch = 2.0
    fusion_factor = 0.2
    edge_overhead = 0.005
    rows = []
    for i, (kind, attrs) in enumerate(nodes):
        base = oracles.node_latency(kind, attrs, batch, LATENCY_TABLE)
        rows.append({"node": i, "kind": kind, "base_ms": base, "fused": i in fused,
                     "contribution_ms": base * (fusion_factor if i in fused else 1.0)})
    total = sum(r["contribution_ms"] for r in rows) + edge_overhead * len(edges)
    dump(
        "latency_fixture_20.json",
        {
            "nodes": [{"kind": k, "attributes": a} for k, a in nodes],
            "edges": [list(e) for e in edges],
            "batch_size": batch,
            "table": LATENCY_TABLE,
            "fusion_factor": fusion_factor,
            "edge_overhead": edge_overhead,
            "spreadsheet": rows,
            "total_ms": total,
        },
    )


if __name__ == "__main__":
    graph_block_goldens()
    latency_fixture()
    print("golden files written to", HERE)
