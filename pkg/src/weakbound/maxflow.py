"""Max-flow / min-cut on sparse graphs with terminal links.

Used as the energy minimizer for figure-ground segmentation. Residual
edges are stored pairwise (slot 2i and 2i+1 are reverses of each other),
adjacency is CSR, and the blocking-flow search runs under numba.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import ParameterError


@njit(cache=True)
def _dinic(n, adj_start, adj, to, cap, s, t):
    total = 0.0
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    path = np.empty(n + 1, dtype=np.int64)  # edge slots along the DFS path
    while True:
        level[:] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for k in range(adj_start[u], adj_start[u + 1]):
                e = adj[k]
                v = to[e]
                if cap[e] > 1e-12 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            return total
        it[:] = adj_start[:n]
        while True:
            u = s
            depth = 0
            found = False
            while True:
                if u == t:
                    found = True
                    break
                advanced = False
                while it[u] < adj_start[u + 1]:
                    e = adj[it[u]]
                    v = to[e]
                    if cap[e] > 1e-12 and level[v] == level[u] + 1:
                        path[depth] = e
                        depth += 1
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if depth == 0:
                        break
                    level[u] = -1  # dead end, prune this node for the phase
                    depth -= 1
                    u = to[path[depth] ^ 1]
                    it[u] += 1
            if not found:
                break
            bottleneck = np.inf
            for i in range(depth):
                if cap[path[i]] < bottleneck:
                    bottleneck = cap[path[i]]
            for i in range(depth):
                cap[path[i]] -= bottleneck
                cap[path[i] ^ 1] += bottleneck
            total += bottleneck


@njit(cache=True)
def _source_side(n, adj_start, adj, to, cap, s):
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    seen[s] = True
    queue[0] = s
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(adj_start[u], adj_start[u + 1]):
            e = adj[k]
            v = to[e]
            if cap[e] > 1e-12 and not seen[v]:
                seen[v] = True
                queue[qt] = v
                qt += 1
    return seen


def max_flow(num_nodes: int,
             edge_u: np.ndarray, edge_v: np.ndarray,
             cap_uv: np.ndarray, cap_vu: np.ndarray,
             source_cap: np.ndarray, sink_cap: np.ndarray):
    """Min-cut of a graph with per-node terminal capacities.

    ``edge_u[i] -- edge_v[i]`` carries capacity ``cap_uv[i]`` forward and
    ``cap_vu[i]`` backward. Returns (cut_value, source_side) where
    source_side[i] is True when node i stays connected to the source.
    """
    edge_u = np.asarray(edge_u, dtype=np.int64)
    edge_v = np.asarray(edge_v, dtype=np.int64)
    cap_uv = np.asarray(cap_uv, dtype=np.float64)
    cap_vu = np.asarray(cap_vu, dtype=np.float64)
    source_cap = np.asarray(source_cap, dtype=np.float64)
    sink_cap = np.asarray(sink_cap, dtype=np.float64)
    if not (edge_u.size == edge_v.size == cap_uv.size == cap_vu.size):
        raise ParameterError("edge array lengths differ")
    if source_cap.size != num_nodes or sink_cap.size != num_nodes:
        raise ParameterError("terminal capacity arrays must have num_nodes entries")
    for arr in (cap_uv, cap_vu, source_cap, sink_cap):
        if arr.size and (np.min(arr) < 0 or not np.all(np.isfinite(arr))):
            raise ParameterError("capacities must be non-negative and finite")

    n = num_nodes + 2
    s, t = num_nodes, num_nodes + 1
    node_ids = np.arange(num_nodes, dtype=np.int64)
    # slot layout: pair edges first, then s->i and i->t links
    tails = np.concatenate([
        np.stack([edge_u, edge_v], axis=1).ravel(),
        np.stack([np.full(num_nodes, s, dtype=np.int64), node_ids], axis=1).ravel(),
        np.stack([node_ids, np.full(num_nodes, t, dtype=np.int64)], axis=1).ravel(),
    ])
    to = np.concatenate([
        np.stack([edge_v, edge_u], axis=1).ravel(),
        np.stack([node_ids, np.full(num_nodes, s, dtype=np.int64)], axis=1).ravel(),
        np.stack([np.full(num_nodes, t, dtype=np.int64), node_ids], axis=1).ravel(),
    ])
    cap = np.concatenate([
        np.stack([cap_uv, cap_vu], axis=1).ravel(),
        np.stack([source_cap, np.zeros(num_nodes)], axis=1).ravel(),
        np.stack([sink_cap, np.zeros(num_nodes)], axis=1).ravel(),
    ])
    adj = np.argsort(tails, kind="stable")
    counts = np.bincount(tails, minlength=n)
    adj_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    value = _dinic(n, adj_start, adj.astype(np.int64), to, cap, s, t)
    side = _source_side(n, adj_start, adj.astype(np.int64), to, cap, s)
    return float(value), side[:num_nodes]
