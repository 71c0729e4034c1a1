"""Seeded random road networks plus a plain Dijkstra oracle for route tests.

Generated networks are strongly connected (every tree edge goes in both
directions) and geometrically consistent: link length is at least the
straight-line distance between its endpoints, so a distance-over-top-speed
heuristic stays admissible.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from resroute.network import Link, Node, RoadNetwork


def random_network(
    rng: np.random.Generator, n_nodes: int, extra_edges: int
) -> RoadNetwork:
    coords = rng.uniform(0.0, 10_000.0, size=(n_nodes, 2))
    nodes = [Node(i, float(x), float(y)) for i, (x, y) in enumerate(coords)]

    pairs: set[tuple[int, int]] = set()
    order = [int(i) for i in rng.permutation(n_nodes)]
    for i in range(1, n_nodes):
        a = order[int(rng.integers(0, i))]
        b = order[i]
        pairs.add((a, b))
        pairs.add((b, a))
    for _ in range(extra_edges):
        a = int(rng.integers(0, n_nodes))
        b = int(rng.integers(0, n_nodes))
        if a != b:
            pairs.add((a, b))

    links = []
    for lid, (a, b) in enumerate(sorted(pairs)):
        d = math.dist(coords[a], coords[b])
        links.append(
            Link(
                id=lid,
                from_node=a,
                to_node=b,
                length=max(d, 1.0) * float(rng.uniform(1.0, 1.5)),
                free_speed=float(rng.uniform(5.0, 30.0)),
                capacity=600.0,
                capacity_hat=600.0,
            )
        )
    return RoadNetwork(nodes, links)


def dijkstra_from(
    net: RoadNetwork, weights: dict[int, float], source: int
) -> dict[int, float]:
    """Cheapest cost from `source` to every reachable node."""
    dist = {source: 0.0}
    heap = [(0.0, source)]
    seen: set[int] = set()
    while heap:
        d, n = heapq.heappop(heap)
        if n in seen:
            continue
        seen.add(n)
        for link in net.out_links[n]:
            cand = d + weights[link.id]
            if cand < dist.get(link.to_node, math.inf):
                dist[link.to_node] = cand
                heapq.heappush(heap, (cand, link.to_node))
    return dist


def dijkstra_to(
    net: RoadNetwork, weights: dict[int, float], target: int
) -> dict[int, float]:
    """Cheapest cost from every node to `target`, via reverse edges."""
    dist = {target: 0.0}
    heap = [(0.0, target)]
    seen: set[int] = set()
    while heap:
        d, n = heapq.heappop(heap)
        if n in seen:
            continue
        seen.add(n)
        for link in net.in_links[n]:
            cand = d + weights[link.id]
            if cand < dist.get(link.from_node, math.inf):
                dist[link.from_node] = cand
                heapq.heappush(heap, (cand, link.from_node))
    return dist


def path_cost(net: RoadNetwork, path: list[int], weights: dict[int, float]) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        link = next(l for l in net.out_links[a] if l.to_node == b)
        total += weights[link.id]
    return total
