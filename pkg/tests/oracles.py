"""Independent reference implementations used to produce and check golden values.

Everything here is plain Python on nested lists (no numpy, nothing imported
from the package) so it shares no code path with the implementation under test.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Dict, List, Sequence

Matrix = List[List[float]]


def zeros(r: int, c: int) -> Matrix:
    return [[0.0] * c for _ in range(r)]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    n, k, m = len(a), len(b), len(b[0])
    out = zeros(n, m)
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def transpose(a: Matrix) -> Matrix:
    return [list(col) for col in zip(*a)]


def add(a: Matrix, b: Matrix) -> Matrix:
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def add_row(a: Matrix, row: Sequence[float]) -> Matrix:
    return [[x + y for x, y in zip(r, row)] for r in a]


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def relu(x: float) -> float:
    return x if x > 0 else 0.0


def apply(a: Matrix, f) -> Matrix:
    return [[f(x) for x in r] for r in a]


def layer_norm_row(r: Sequence[float], gamma, beta, eps=1e-5) -> List[float]:
    mu = sum(r) / len(r)
    var = sum((x - mu) ** 2 for x in r) / len(r)
    return [(x - mu) / math.sqrt(var + eps) * g + b for x, g, b in zip(r, gamma, beta)]


def l2_row(r: Sequence[float], eps=1e-12) -> List[float]:
    norm = math.sqrt(sum(x * x for x in r))
    return [x / max(norm, eps) for x in r]


def block_diagonal(blocks: Sequence[Matrix]) -> Matrix:
    rows = sum(len(b) for b in blocks)
    cols = sum(len(b[0]) for b in blocks)
    out = zeros(rows, cols)
    r0 = c0 = 0
    for b in blocks:
        for i, row in enumerate(b):
            for j, v in enumerate(row):
                out[r0 + i][c0 + j] = v
        r0 += len(b)
        c0 += len(b[0])
    return out


def grouped_linear(x: Matrix, w_groups: Sequence[Matrix], bias: Sequence[float]) -> Matrix:
    """x @ blockdiag(w_groups) + bias."""
    return add_row(matmul(x, block_diagonal(w_groups)), bias)


def graph_block(H: Matrix, D: Sequence[float], A: Matrix, p: Dict[str, object], eps=1e-5) -> Matrix:
    """Graph-aided block written out step by step.

    ``p`` holds nested lists: W_d (scalar), b_d (scalar), W_q, b_q, W_a, b_a,
    W_r, ln_gamma, ln_beta, ffn_W1 (list of group matrices), ffn_b1,
    ffn_W2 (list of group matrices), ffn_b2.
    """
    n = len(H)
    gate = [sigmoid(D[i] * p["W_d"] + p["b_d"]) for i in range(n)]
    Ht = [[gate[i] * x for x in H[i]] for i in range(n)]
    X = apply(add_row(matmul(Ht, p["W_q"]), p["b_q"]), sigmoid)
    d = len(X[0])
    S = matmul(X, transpose(X))
    S = [[S[i][j] / math.sqrt(d) * A[i][j] for j in range(n)] for i in range(n)]
    P = zeros(n, n)
    for i in range(n):
        tot = sum(S[i])
        if tot < 1e-12:
            P[i][i] = 1.0
        else:
            P[i] = [s / tot for s in S[i]]
    Z = add_row(matmul(matmul(P, Ht), p["W_a"]), p["b_a"])
    R = matmul(Ht, p["W_r"])
    H_hat = [l2_row([z + r for z, r in zip(Z[i], R[i])]) for i in range(n)]
    normed = [layer_norm_row(r, p["ln_gamma"], p["ln_beta"], eps) for r in H_hat]
    hidden = apply(grouped_linear(normed, p["ffn_W1"], p["ffn_b1"]), relu)
    ffn = grouped_linear(hidden, p["ffn_W2"], p["ffn_b2"])
    return add(ffn, H_hat)


def positional_encode(x: float, L: int, scale: float) -> List[float]:
    out = []
    for k in range(L):
        a = (2**k) * math.pi * x / scale
        out += [math.sin(a), math.cos(a)]
    return out


def kendall_tau(pred: Sequence[float], target: Sequence[float]) -> float:
    n = len(pred)
    conc = disc = 0
    for i, j in combinations(range(n), 2):
        a = pred[i] - pred[j]
        b = target[i] - target[j]
        if a * b > 0:
            conc += 1
        elif a * b < 0:
            disc += 1
    return (conc - disc) / (n * (n - 1) / 2)


def neighbour_count(n: int, edges) -> List[int]:
    nb = [set() for _ in range(n)]
    for s, d in edges:
        if s != d:
            nb[s].add(d)
            nb[d].add(s)
    return [len(x) for x in nb]


def bfs_distance(n: int, edges, src: int) -> List[float]:
    nb = [set() for _ in range(n)]
    for s, d in edges:
        nb[s].add(d)
        nb[d].add(s)
    dist = [math.inf] * n
    dist[src] = 0
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in nb[u]:
                if dist[v] == math.inf:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def adam_first_step(theta: float, g: float, lr: float, b1=0.9, b2=0.999, eps=1e-8) -> float:
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    m_hat = m / (1 - b1)
    v_hat = v / (1 - b2)
    return theta - lr * m_hat / (math.sqrt(v_hat) + eps)


# latency spreadsheet: one explicit formula per kind, written independently of the oracle code


def node_latency(kind: str, a: Dict[str, float], batch: float, table: Dict[str, Sequence[float]]) -> float:
    launch, per_mac, per_elem = table[kind]
    k = a.get("kernel_size", 1)
    st = max(a.get("stride", 1), 1)
    gr = max(a.get("groups", 1), 1)
    cin = a.get("in_channels", 1)
    cout = a.get("out_channels", cin)
    s = a.get("spatial", 1)
    so = max(s / st, 1)
    if kind == "conv":
        macs = batch * k * k * cin * cout / gr * so * so
        elems = batch * (cin * s * s + cout * so * so)
    elif kind == "fc":
        macs, elems = batch * cin * cout, batch * (cin + cout)
    elif kind == "pool":
        macs = batch * k * k * cout * so * so
        elems = batch * (cin * s * s + cout * so * so)
    else:
        macs, elems = 0.0, batch * cout * s * s
    return launch + per_mac * macs + per_elem * elems
