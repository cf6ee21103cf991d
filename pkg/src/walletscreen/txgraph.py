"""Wallet transaction graph and centrality scores.

The graph keeps every transfer as a directed multi-edge. Centralities are
computed on its undirected simple projection: direction and multiplicity are
collapsed, self-loops ignored, distances unweighted.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from numba import njit

from .ingest import TransferRecord

KINDS = ("degree", "closeness", "betweenness")
_CHUNK = 64


@dataclass(frozen=True)
class NodeScores:
    kind: str
    scores: dict[str, float]

    def __getitem__(self, address: str) -> float:
        return self.scores[address]

    def get(self, address: str, default: float = 0.0) -> float:
        return self.scores.get(address, default)


@dataclass
class TransactionGraph:
    nodes: tuple[str, ...] = ()
    edges: list[tuple[str, str, int, int]] = field(default_factory=list)
    out_edges: dict[str, list[int]] = field(default_factory=dict)
    in_edges: dict[str, list[int]] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, address: str) -> set[str]:
        """Distinct undirected neighbours, excluding the node itself."""
        out = {self.edges[i][1] for i in self.out_edges.get(address, ())}
        out.update(self.edges[i][0] for i in self.in_edges.get(address, ()))
        out.discard(address)
        return out

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected simple adjacency as (indptr, indices) over ``self.nodes``."""
        index = {a: i for i, a in enumerate(self.nodes)}
        adj: list[set[int]] = [set() for _ in self.nodes]
        for src, dst, _, _ in self.edges:
            if src != dst:
                u, v = index[src], index[dst]
                adj[u].add(v)
                adj[v].add(u)
        indptr = np.zeros(len(adj) + 1, dtype=np.int64)
        for i, nb in enumerate(adj):
            indptr[i + 1] = indptr[i] + len(nb)
        indices = np.fromiter(
            (v for nb in adj for v in sorted(nb)), dtype=np.int64, count=int(indptr[-1])
        )
        return indptr, indices


def build_graph(transfers: Iterable[TransferRecord]) -> TransactionGraph:
    edges: list[tuple[str, str, int, int]] = []
    out_edges: dict[str, list[int]] = defaultdict(list)
    in_edges: dict[str, list[int]] = defaultdict(list)
    nodes: set[str] = set()
    for i, t in enumerate(transfers):
        edges.append((t.src, t.dst, t.value, t.timestamp))
        out_edges[t.src].append(i)
        in_edges[t.dst].append(i)
        nodes.add(t.src)
        nodes.add(t.dst)
    return TransactionGraph(tuple(sorted(nodes)), edges, dict(out_edges), dict(in_edges))


def _require_nodes(graph: TransactionGraph) -> None:
    if graph.n_nodes < 2:
        raise ValueError("degenerate normalization: graph needs at least two nodes")


def degree_centrality(graph: TransactionGraph) -> NodeScores:
    _require_nodes(graph)
    indptr, _ = graph.csr()
    deg = np.diff(indptr) / (graph.n_nodes - 1)
    return NodeScores("degree", {a: float(d) for a, d in zip(graph.nodes, deg)})


@njit(cache=True, nogil=True)
def _sweep(indptr, indices, n, lo, hi):  # pragma: no cover - compiled
    """BFS + Brandes dependency accumulation for sources lo..hi-1.

    Returns (betweenness partial sums over ordered pairs, reach counts,
    distance sums) for the sources in the range.
    """
    bc = np.zeros(n)
    reach = np.zeros(hi - lo, dtype=np.int64)
    dsum = np.zeros(hi - lo, dtype=np.int64)
    dist = np.full(n, -1, dtype=np.int64)
    sigma = np.zeros(n)
    delta = np.zeros(n)
    order = np.empty(n, dtype=np.int64)
    for s in range(lo, hi):
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            delta[i] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head = 0
        tail = 1
        while head < tail:
            v = order[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        total = 0
        for i in range(1, tail):
            total += dist[order[i]]
        reach[s - lo] = tail - 1
        dsum[s - lo] = total
        for i in range(tail - 1, 0, -1):
            w = order[i]
            coeff = (1.0 + delta[w]) / sigma[w]
            for k in range(indptr[w], indptr[w + 1]):
                v = indices[k]
                if dist[v] == dist[w] - 1:
                    delta[v] += sigma[v] * coeff
            bc[w] += delta[w]
    return bc, reach, dsum


def _all_sources(graph: TransactionGraph, threads: int = 1):
    indptr, indices = graph.csr()
    n = graph.n_nodes
    chunks = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]

    def run(chunk):
        return _sweep(indptr, indices, n, chunk[0], chunk[1])

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    # partial sums are combined in chunk order, so the result does not depend
    # on the worker count
    bc = np.zeros(n)
    for part, _, _ in parts:
        bc += part
    reach = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.int64)
    dsum = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0, np.int64)
    return bc / 2.0, reach, dsum


def _closeness_from(reach: np.ndarray, dsum: np.ndarray, n: int) -> np.ndarray:
    r = reach.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(dsum > 0, (r / (n - 1)) * (r / np.maximum(dsum, 1)), 0.0)
    return c


def closeness_centrality(graph: TransactionGraph, threads: int = 1) -> NodeScores:
    """Component-scaled closeness: ``(|R|/(n-1)) * (|R| / sum of distances to R)``
    where R is the set of nodes reachable from v; isolated nodes score 0."""
    _require_nodes(graph)
    _, reach, dsum = _all_sources(graph, threads)
    c = _closeness_from(reach, dsum, graph.n_nodes)
    return NodeScores("closeness", {a: float(v) for a, v in zip(graph.nodes, c)})


def betweenness_centrality(graph: TransactionGraph, threads: int = 1) -> NodeScores:
    """Unnormalized shortest-path betweenness, each unordered pair counted once."""
    _require_nodes(graph)
    bc, _, _ = _all_sources(graph, threads)
    return NodeScores("betweenness", {a: float(v) for a, v in zip(graph.nodes, bc)})


def all_centralities(graph: TransactionGraph, threads: int = 1) -> dict[str, NodeScores]:
    """Degree, closeness and betweenness from a single all-sources sweep."""
    _require_nodes(graph)
    bc, reach, dsum = _all_sources(graph, threads)
    c = _closeness_from(reach, dsum, graph.n_nodes)
    return {
        "degree": degree_centrality(graph),
        "closeness": NodeScores("closeness", {a: float(v) for a, v in zip(graph.nodes, c)}),
        "betweenness": NodeScores("betweenness", {a: float(v) for a, v in zip(graph.nodes, bc)}),
    }


def write_node_scores(scores: NodeScores, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address", "score"])
        for addr in sorted(scores.scores):
            w.writerow([addr, repr(scores.scores[addr])])
    return path


def read_node_scores(path, kind: str) -> NodeScores:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return NodeScores(kind, {row["address"]: float(row["score"]) for row in reader})

