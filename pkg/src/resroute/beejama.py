"""Distributed hive-inspired route guidance.

Infrastructure-side navigators own a partition of the road graph and keep,
per node, distance-vector routing tables toward the representatives of a
multi-layer cluster hierarchy.  Every simulated second:

* upstream scouts flood from each (needed) representative against the
  traffic direction, accumulating link costs and refreshing the tables out
  to the layer's hop limit;
* downstream scouts flood with the traffic direction, recording how soon
  currently traveling vehicles could reach each node, so that
  reservation-based link costs are evaluated at the right future time;
* vehicles are forwarded hop by hop along the freshest tables, and (under
  the reserving variants) a forager walks the currently preferred path
  first, booking per-link time slots that later cost evaluations see.

Flooding is computed round-synchronously: one round advances every live
scout of a generation by exactly one hop, so a table entry after round k
holds the cheapest known path of at most k hops.  Variants differ only in
the per-link cost a scout accumulates: measured mean travel time (plain),
reservation-derived standing-queue time (N), the same with the booked flow
scaled up by the inverse penetration rate (S), or a correlation-weighted
blend of prediction and measurement (DH).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numba import njit

from .network import Link, RoadNetwork, standing_queue_time
from .predictor import ErrorWindow, blend
from .reservation import PathReservation, ReservationEntry, ReservationLog, reserve_path

VARIANTS = ("plain", "N", "S", "DH")
RESERVING_VARIANTS = ("N", "S", "DH")


# -- cluster hierarchy ----------------------------------------------------------------


@dataclass(frozen=True)
class Layer:
    """One resolution level: grid-cell clusters plus their representatives."""

    cell_size: float
    hop_limit: float  # math.inf on the top layer
    memberships: dict[int, tuple[int, ...]]  # node id -> cluster ids (sorted)
    clusters: dict[int, tuple[int, ...]]  # cluster id -> member node ids (sorted)
    representatives: dict[int, int]  # cluster id -> representative node id
    singleton: bool  # every node alone in exactly one cluster


@dataclass(frozen=True)
class Hierarchy:
    layers: tuple[Layer, ...]  # ordered lowest (finest) to top (coarsest)

    def reps_for(self, layer_index: int, node: int) -> tuple[int, ...]:
        """Representatives of every cluster containing `node` at a layer."""
        layer = self.layers[layer_index]
        reps = {layer.representatives[c] for c in layer.memberships[node]}
        return tuple(sorted(reps))


def _cells_of(x: float, y: float, size: float, overlap: float) -> list[tuple[int, int]]:
    cx = math.floor(x / size)
    cy = math.floor(y / size)
    xs = [cx]
    if x - cx * size < overlap:
        xs.append(cx - 1)
    if (cx + 1) * size - x < overlap:
        xs.append(cx + 1)
    ys = [cy]
    if y - cy * size < overlap:
        ys.append(cy - 1)
    if (cy + 1) * size - y < overlap:
        ys.append(cy + 1)
    return [(a, b) for a in xs for b in ys]


def _build_layer(
    network: RoadNetwork, size: float, hop_limit: float, overlap: float
) -> Layer:
    primary = {
        nid: (math.floor(n.x / size), math.floor(n.y / size))
        for nid, n in network.nodes.items()
    }
    occupied = sorted(set(primary.values()))
    cell_id = {cell: i for i, cell in enumerate(occupied)}

    members: dict[int, set[int]] = {i: set() for i in cell_id.values()}
    memberships: dict[int, tuple[int, ...]] = {}
    for nid in sorted(network.nodes):
        node = network.nodes[nid]
        # Border nodes join adjacent clusters, but only clusters that exist:
        # a cell nobody primarily occupies is not a cluster.
        cells = {
            c for c in _cells_of(node.x, node.y, size, overlap) if c in cell_id
        }
        ids = tuple(sorted(cell_id[c] for c in cells))
        memberships[nid] = ids
        for cid in ids:
            members[cid].add(nid)

    representatives = {}
    for cell, cid in cell_id.items():
        centx = (cell[0] + 0.5) * size
        centy = (cell[1] + 0.5) * size
        rep = min(
            members[cid],
            key=lambda nid: (
                (network.nodes[nid].x - centx) ** 2
                + (network.nodes[nid].y - centy) ** 2,
                nid,
            ),
        )
        representatives[cid] = rep

    singleton = all(len(m) == 1 for m in members.values()) and all(
        len(ids) == 1 for ids in memberships.values()
    )
    return Layer(
        cell_size=size,
        hop_limit=hop_limit,
        memberships=memberships,
        clusters={cid: tuple(sorted(m)) for cid, m in members.items()},
        representatives=representatives,
        singleton=singleton,
    )


def build_hierarchy(
    network: RoadNetwork,
    layer_cell_sizes: list[float],
    hop_limits: list[float],
    overlap: float = 0.0,
) -> Hierarchy:
    """Multi-resolution grid clustering, finest layer first.

    Cell sizes must be strictly increasing and hop limits strictly
    increasing with them; the top layer's hop limit must be infinite.
    Nodes closer than `overlap` to a cell border also join the adjacent
    occupied cell (so guidance does not tear along cluster seams).
    """
    if not network.nodes:
        raise ValueError("cannot build a hierarchy over an empty network")
    if not layer_cell_sizes:
        raise ValueError("at least one layer is required")
    if len(layer_cell_sizes) != len(hop_limits):
        raise ValueError("layer_cell_sizes and hop_limits must align")
    for a, b in zip(layer_cell_sizes, layer_cell_sizes[1:]):
        if not b > a:
            raise ValueError("cell sizes must be strictly increasing")
    if any(s <= 0 for s in layer_cell_sizes):
        raise ValueError("cell sizes must be positive")
    if not math.isinf(hop_limits[-1]):
        raise ValueError("the top layer's hop limit must be infinite")
    for h in hop_limits[:-1]:
        if math.isinf(h) or int(h) != h or h < 1:
            raise ValueError("lower-layer hop limits must be integers >= 1")
    for a, b in zip(hop_limits, hop_limits[1:]):
        if not b > a:
            raise ValueError("hop limits must strictly increase toward the top")
    if not 0 <= overlap < layer_cell_sizes[0]:
        raise ValueError("overlap must be >= 0 and below the smallest cell size")

    layers = tuple(
        _build_layer(network, size, hop, overlap)
        for size, hop in zip(layer_cell_sizes, hop_limits)
    )
    return Hierarchy(layers)


def auto_layer_config(network: RoadNetwork) -> tuple[list[float], list[float]]:
    """Three-layer default sized from the node spacing.

    The finest layer isolates every node in its own cluster (cells of half
    the minimum Chebyshev node separation), which is what lets guidance
    deliver to exact destinations; the coarser layers pool roughly 5x5 and
    10x10 spacings.  Meant for lattice-like networks; irregular networks
    should configure layers explicitly.
    """
    nodes = list(network.nodes.values())
    if len(nodes) < 2:
        raise ValueError("auto layering needs at least two nodes")
    xs = np.array([n.x for n in nodes])
    ys = np.array([n.y for n in nodes])
    cheb = np.maximum(
        np.abs(xs[:, None] - xs[None, :]), np.abs(ys[:, None] - ys[None, :])
    )
    np.fill_diagonal(cheb, np.inf)
    gap = float(cheb.min())
    if gap <= 0:
        raise ValueError(
            "nodes share a position; specify layer_cell_sizes explicitly"
        )
    return [gap / 2, 5 * gap, 10 * gap], [6, 18, math.inf]


# -- navigators -----------------------------------------------------------------------


@dataclass(frozen=True)
class Navigator:
    """Infrastructure shard: owns one partition cell and its inbound links."""

    id: int
    area: frozenset[int]
    owned_links: tuple[int, ...]


def build_navigators(network: RoadNetwork, cell_m: float = 1500.0) -> list[Navigator]:
    """Partition nodes by grid cell; a navigator owns links ending in its area."""
    if cell_m <= 0:
        raise ValueError("navigator cell size must be positive")
    cells: dict[tuple[int, int], list[int]] = {}
    for nid in sorted(network.nodes):
        node = network.nodes[nid]
        cells.setdefault(
            (math.floor(node.x / cell_m), math.floor(node.y / cell_m)), []
        ).append(nid)
    navigators = []
    for nav_id, cell in enumerate(sorted(cells)):
        area = frozenset(cells[cell])
        owned = tuple(
            lid for lid in sorted(network.links) if network.links[lid].to_node in area
        )
        navigators.append(Navigator(nav_id, area, owned))
    return navigators


# -- graph arrays and the flood kernel ------------------------------------------------


class _Graph:
    """CSR adjacency over sorted node/link ids, both edge orientations."""

    def __init__(self, network: RoadNetwork):
        self.node_ids = sorted(network.nodes)
        self.node_index = {nid: i for i, nid in enumerate(self.node_ids)}
        self.link_ids = sorted(network.links)
        self.links = [network.links[lid] for lid in self.link_ids]
        n = len(self.node_ids)
        e = len(self.link_ids)
        self.n = n

        out_lists: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        in_lists: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for li, link in enumerate(self.links):  # ascending link id
            u = self.node_index[link.from_node]
            v = self.node_index[link.to_node]
            out_lists[u].append((v, li))
            in_lists[v].append((u, li))

        def to_csr(lists):
            indptr = np.zeros(n + 1, dtype=np.int64)
            nbr = np.empty(e, dtype=np.int64)
            link_of = np.empty(e, dtype=np.int64)
            pos = 0
            for i, row in enumerate(lists):
                for v, li in row:
                    nbr[pos] = v
                    link_of[pos] = li
                    pos += 1
                indptr[i + 1] = pos
            return indptr, nbr, link_of

        self.out_indptr, self.out_to, self.out_link = to_csr(out_lists)
        self.in_indptr, self.in_from, self.in_link = to_csr(in_lists)
        self.tail = np.array(
            [self.node_index[l.from_node] for l in self.links], dtype=np.int64
        )
        self.head = np.array(
            [self.node_index[l.to_node] for l in self.links], dtype=np.int64
        )


@njit(cache=True)
def _flood_kernel(
    relax_indptr,
    relax_to,
    relax_link,
    rev_indptr,
    rev_to,
    w,
    sources,
    max_rounds,
    costs,
    next_hops,
):
    """Round-synchronous min-plus flooding from each source.

    Round r leaves costs[s, n] equal to the cheapest path of at most r
    hops from n through the relax edges to source s (all values of a
    round are computed before any is applied, so one round is exactly one
    hop).  next_hops holds the first relax neighbor of that path, -1
    where no path of allowed length exists (and at the source itself).
    """
    n = relax_indptr.shape[0] - 1
    frontier = np.empty(n, dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    new_cost = np.empty(n, dtype=np.float64)
    new_hop = np.empty(n, dtype=np.int64)
    stamp = np.full(n, -1, dtype=np.int64)

    for s in range(sources.shape[0]):
        d = costs[s]
        nh = next_hops[s]
        d[sources[s]] = 0.0
        frontier[0] = sources[s]
        fsize = 1
        for rnd in range(max_rounds):
            key = s * max_rounds + rnd
            csize = 0
            for fi in range(fsize):
                m = frontier[fi]
                for k in range(rev_indptr[m], rev_indptr[m + 1]):
                    p = rev_to[k]
                    if stamp[p] != key:
                        stamp[p] = key
                        cand[csize] = p
                        csize += 1
            if csize == 0:
                break
            applied = 0
            for ci in range(csize):
                node = cand[ci]
                best = d[node]
                best_hop = nh[node]
                for k in range(relax_indptr[node], relax_indptr[node + 1]):
                    c = w[relax_link[k]] + d[relax_to[k]]
                    if c < best:
                        best = c
                        best_hop = relax_to[k]
                if best < d[node]:
                    cand[applied] = node
                    new_cost[applied] = best
                    new_hop[applied] = best_hop
                    applied += 1
            if applied == 0:
                break
            for ai in range(applied):
                node = cand[ai]
                d[node] = new_cost[ai]
                nh[node] = new_hop[ai]
                frontier[ai] = node
            fsize = applied


def _rounds_for(hop_limit: float, n_nodes: int) -> int:
    return n_nodes if math.isinf(hop_limit) else int(hop_limit)


def _flood_columns(
    graph: _Graph,
    w: np.ndarray,
    source_indices: np.ndarray,
    hop_limit: float,
    upstream: bool,
) -> tuple[np.ndarray, np.ndarray]:
    n_src = source_indices.shape[0]
    costs = np.full((n_src, graph.n), np.inf)
    hops = np.full((n_src, graph.n), -1, dtype=np.int64)
    if n_src:
        if upstream:  # scouts move against traffic: relax over out-links
            _flood_kernel(
                graph.out_indptr,
                graph.out_to,
                graph.out_link,
                graph.in_indptr,
                graph.in_from,
                w,
                source_indices,
                _rounds_for(hop_limit, graph.n),
                costs,
                hops,
            )
        else:  # scouts move with traffic: relax over in-links
            _flood_kernel(
                graph.in_indptr,
                graph.in_from,
                graph.in_link,
                graph.out_indptr,
                graph.out_to,
                w,
                source_indices,
                _rounds_for(hop_limit, graph.n),
                costs,
                hops,
            )
    return costs, hops


# -- contract-shaped flood views ------------------------------------------------------


@dataclass(frozen=True)
class TableEntry:
    next_hop: int
    cost: float
    generation: int
    layer: int


def _layer_reps(layer: Layer) -> list[int]:
    return sorted(set(layer.representatives.values()))


def flood_upstream(
    hierarchy: Hierarchy,
    network: RoadNetwork,
    link_cost_fn,
    generation: int,
    horizons: dict[int, float] | None = None,
) -> dict[int, dict[int, dict[int, TableEntry]]]:
    """Flood one scout generation from every representative of every layer.

    link_cost_fn(link, eval_offset) prices a link for a scout crossing it;
    the offset is the forward-travel horizon of the link's entry node
    (0 when unknown).  Returns {layer: {representative: {node: entry}}};
    nodes beyond the hop limit (and each representative itself) hold no
    entry.
    """
    graph = _Graph(network)
    horizons = horizons or {}
    w = np.array(
        [
            link_cost_fn(link, float(horizons.get(link.from_node, 0.0)))
            for link in graph.links
        ]
    )
    tables: dict[int, dict[int, dict[int, TableEntry]]] = {}
    for li, layer in enumerate(hierarchy.layers):
        reps = _layer_reps(layer)
        src = np.array([graph.node_index[r] for r in reps], dtype=np.int64)
        costs, hops = _flood_columns(graph, w, src, layer.hop_limit, upstream=True)
        per_rep: dict[int, dict[int, TableEntry]] = {}
        for row, rep in enumerate(reps):
            table = {}
            for ni, nid in enumerate(graph.node_ids):
                if hops[row, ni] >= 0:
                    table[nid] = TableEntry(
                        next_hop=graph.node_ids[hops[row, ni]],
                        cost=float(costs[row, ni]),
                        generation=generation,
                        layer=li,
                    )
            per_rep[rep] = table
        tables[li] = per_rep
    return tables


def flood_downstream(
    hierarchy: Hierarchy,
    network: RoadNetwork,
    cur_mean: dict[int, float],
    generation: int,
) -> dict[int, dict[int, float]]:
    """Forward flood from the finest layer's representatives.

    Accumulates current mean travel time with the traffic direction and
    returns {node: {origin: cheapest forward seconds}} out to the finest
    layer's hop limit.  Origins hold no entry for themselves.
    """
    del generation  # kept for call symmetry with flood_upstream
    graph = _Graph(network)
    w = np.array([cur_mean[lid] for lid in graph.link_ids])
    layer = hierarchy.layers[0]
    origins = _layer_reps(layer)
    src = np.array([graph.node_index[o] for o in origins], dtype=np.int64)
    costs, hops = _flood_columns(graph, w, src, layer.hop_limit, upstream=False)
    out: dict[int, dict[int, float]] = {}
    for row, origin in enumerate(origins):
        for ni, nid in enumerate(graph.node_ids):
            if hops[row, ni] >= 0:
                out.setdefault(nid, {})[origin] = float(costs[row, ni])
    return out


def horizon(downstream_table: dict[int, dict[int, float]], node: int) -> float:
    """Earliest forward-travel time recorded at `node`; 0 before any data."""
    entries = downstream_table.get(node)
    if not entries:
        return 0.0
    return min(entries.values())


# -- link cost variants ---------------------------------------------------------------


def link_cost(
    variant: str,
    link: Link,
    eval_offset: float,
    now: float,
    *,
    log: ReservationLog | None = None,
    cur_mean: float | None = None,
    penetration: float = 1.0,
    r: float = 0.0,
    s_time_scaling: bool = False,
) -> float:
    """Price one link for a scout or forager.

    plain ignores reservations and returns the measured mean (free-flow
    time when no measurement is supplied).  N prices the booked flow in
    the slot `now + eval_offset` plus the querying vehicle.  S additionally
    scales that flow by 1/penetration to estimate unregistered traffic
    (or, with s_time_scaling, scales the resulting time instead).  DH
    blends the N prediction with the measured mean by the link's
    prediction-error correlation.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if eval_offset < 0:
        raise ValueError("eval_offset must be >= 0")
    measured = link.t0 if cur_mean is None else cur_mean
    if variant == "plain":
        return measured
    booked = 0 if log is None else log.expected_flow(now + eval_offset)
    if variant == "N":
        return standing_queue_time(link.t0, booked + 1.0, link.capacity_hat)
    if variant == "S":
        if not 0.0 < penetration <= 1.0:
            raise ValueError("penetration must be in (0, 1]")
        if s_time_scaling:
            t = standing_queue_time(link.t0, booked + 1.0, link.capacity_hat)
            return t / penetration
        flow = (booked + 1.0) / penetration
        return standing_queue_time(link.t0, flow, link.capacity_hat)
    t_lpf = standing_queue_time(link.t0, booked + 1.0, link.capacity_hat)
    return blend(r, t_lpf, measured)


# -- hop selection and foragers -------------------------------------------------------


def next_hop(
    node: int,
    destination: int,
    tables: dict[int, dict[int, dict[int, TableEntry]]],
    hierarchy: Hierarchy,
) -> int | None:
    """Pick the next node toward `destination` from the layered tables.

    An entry for the destination itself wins at the lowest layer where one
    is readable (the one-element-cluster case).  Otherwise the lowest
    layer holding an entry for any representative of a cluster containing
    the destination decides, ties by cost then next-hop id.  None when no
    layer can help (caller waits and retries).
    """
    for li in range(len(hierarchy.layers)):
        entry = tables.get(li, {}).get(destination, {}).get(node)
        if entry is not None:
            return entry.next_hop
    for li in range(len(hierarchy.layers)):
        best: tuple[float, int] | None = None
        for rep in hierarchy.reps_for(li, destination):
            entry = tables.get(li, {}).get(rep, {}).get(node)
            if entry is None:
                continue
            cand = (entry.cost, entry.next_hop)
            if best is None or cand < best:
                best = cand
        if best is not None:
            return best[1]
    return None


def _walk_path(
    destination: int,
    node: int,
    now: float,
    next_hop_at,
    link_between,
    cost_of,
) -> tuple[list[ReservationEntry], bool]:
    """Greedy table walk from `node`, pricing each hop at its entry time.

    Returns the per-link entries and whether the destination was reached;
    the walk aborts early on a missing hop or on revisiting a node.
    """
    entries: list[ReservationEntry] = []
    visited = {node}
    current = node
    clock = float(now)
    while current != destination:
        nxt = next_hop_at(current)
        if nxt is None:
            return entries, False
        link = link_between(current, nxt)
        t_exit = clock + cost_of(link, clock - now)
        entries.append(ReservationEntry(link.id, clock, t_exit))
        clock = t_exit
        current = nxt
        if current in visited:
            return entries, False
        visited.add(current)
    return entries, True


def dispatch_forager(
    vehicle,
    node: int,
    now: float,
    tables: dict[int, dict[int, dict[int, TableEntry]]],
    hierarchy: Hierarchy,
    network: RoadNetwork,
    logs: dict[int, ReservationLog],
    cost_of,
    old: PathReservation | None = None,
) -> tuple[PathReservation, bool]:
    """Walk the vehicle's current best path and book it into the ledgers.

    The vehicle's old future bookings are released before the walk (the
    cost model already counts the querying vehicle, so its stale booking
    must not be double-counted), then every walked link is registered.
    Returns the booking and whether it reaches the destination; on a
    missing hop or a loop only the walked prefix is booked.
    """
    if old is not None:
        reserve_path(logs, old, PathReservation(vehicle.id, ()), now)

    def hop_at(n: int) -> int | None:
        return next_hop(n, vehicle.destination, tables, hierarchy)

    def link_between(u: int, v: int) -> Link:
        return next(l for l in network.out_links[u] if l.to_node == v)

    entries, completed = _walk_path(
        vehicle.destination, node, now, hop_at, link_between, cost_of
    )
    booking = PathReservation(vehicle.id, tuple(entries))
    reserve_path(logs, None, booking, now)
    return booking, completed


# -- the guidance protocol ------------------------------------------------------------


class _TableBlock:
    __slots__ = ("rows", "costs", "hops")

    def __init__(self, rows: dict[int, int], costs: np.ndarray, hops: np.ndarray):
        self.rows = rows  # representative node id -> row
        self.costs = costs
        self.hops = hops


class BeeJamA:
    """Engine-facing guidance protocol over the scout/forager machinery.

    One instance serves all vehicles assigned to it.  Navigator state is
    conceptually sharded by area; computation runs centrally but
    round-synchronously, which leaves the tables exactly as if the
    navigators had exchanged scouts in lockstep.
    """

    def __init__(
        self,
        variant: str = "plain",
        layer_cell_sizes: list[float] | None = None,
        hop_limits: list[float] | None = None,
        overlap_m: float = 60.0,
        navigator_cell_m: float = 1500.0,
        scout_period_s: int = 1,
        downstream_period_s: int = 1,
        penetration: float = 1.0,
        s_time_scaling: bool = False,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if (layer_cell_sizes is None) != (hop_limits is None):
            raise ValueError("give layer_cell_sizes and hop_limits together")
        if scout_period_s < 1 or downstream_period_s < 1:
            raise ValueError("scout and downstream periods must be >= 1 s")
        if not 0.0 < penetration <= 1.0:
            raise ValueError("penetration must be in (0, 1]")
        self.variant = variant
        self.layer_cell_sizes = layer_cell_sizes
        self.hop_limits = hop_limits
        self.overlap_m = overlap_m
        self.navigator_cell_m = navigator_cell_m
        self.scout_period = int(scout_period_s)
        self.downstream_period = int(downstream_period_s)
        self.penetration = penetration
        self.s_time_scaling = s_time_scaling
        self.engine = None
        self.hierarchy: Hierarchy | None = None
        self.navigators: list[Navigator] = []

    # -- wiring ------------------------------------------------------------------

    def bind(self, engine) -> None:
        self.engine = engine
        self.pid = next(p for p, obj in engine.protocols.items() if obj is self)
        net = engine.network
        self._graph = _Graph(net)
        g = self._graph
        if self.layer_cell_sizes is None:
            sizes, hops = auto_layer_config(net)
        else:
            sizes, hops = list(self.layer_cell_sizes), list(self.hop_limits)
        self.hierarchy = build_hierarchy(net, sizes, hops, self.overlap_m)
        self.navigators = build_navigators(net, self.navigator_cell_m)

        # destination node -> serving representatives, per layer
        self._dest_reps = [
            {nid: self.hierarchy.reps_for(li, nid) for nid in g.node_ids}
            for li in range(len(self.hierarchy.layers))
        ]
        self._active = Counter(
            v.destination
            for v in engine.vehicles.values()
            if v.protocol == self.pid and v.arrival is None
        )
        self._logs = [engine.reservation_logs[lid] for lid in g.link_ids]
        self._link_at = {}
        for link in g.links:  # ascending id: first wins between parallels
            self._link_at.setdefault((link.from_node, link.to_node), link)
        if self.variant == "DH":
            self._windows = {lid: ErrorWindow() for lid in g.link_ids}
        self._r = np.zeros(len(g.link_ids))
        self._reservations: dict[int, list] = {}  # vid -> [booking, position]
        self._tables: list[_TableBlock] | None = None
        self._generation = -1
        self._hz = np.zeros(g.n)
        self._now = 0

        # segment-min layout for the fast downstream horizon
        order = np.argsort(g.head, kind="stable")
        heads = g.head[order]
        seg_starts = np.flatnonzero(np.r_[True, heads[1:] != heads[:-1]])
        self._hz_perm = order
        self._hz_starts = seg_starts
        self._hz_nodes = heads[seg_starts]

    # -- per-second bookkeeping ----------------------------------------------------

    def advance(self, now: int) -> None:
        self._now = now
        if self.variant in RESERVING_VARIANTS and now % 60 == 0:
            for log in self._logs:
                log.prune(now)
        if self.variant == "DH" and now % 60 == 0:
            self._sample_errors(now)
        if now % self.scout_period == 0 or self._tables is None:
            if now % self.downstream_period == 0 or self._tables is None:
                self._refresh_horizons()
            self._flood(now)

    def _sample_errors(self, now: int) -> None:
        cm = self.engine.cur_mean
        for i, link in enumerate(self._graph.links):
            booked = self._logs[i].expected_flow(now)
            t_lpf = standing_queue_time(link.t0, booked + 1.0, link.capacity_hat)
            window = self._windows[link.id]
            window.record_sample(float(cm[i]) - t_lpf)
            self._r[i] = window.pearson_r()

    def _refresh_horizons(self) -> None:
        g = self._graph
        layer0 = self.hierarchy.layers[0]
        cm = self.engine.cur_mean
        if layer0.singleton:
            # Every node floods downstream, so the earliest arrival at a
            # node is simply its cheapest inbound link right now.
            hz = np.zeros(g.n)
            mins = np.minimum.reduceat(cm[self._hz_perm], self._hz_starts)
            hz[self._hz_nodes] = mins
            self._hz = hz
        else:
            origins = _layer_reps(layer0)
            src = np.array([g.node_index[o] for o in origins], dtype=np.int64)
            costs, hops = _flood_columns(
                g, cm.astype(np.float64), src, layer0.hop_limit, upstream=False
            )
            costs[hops < 0] = np.inf
            hz = costs.min(axis=0)
            hz[np.isinf(hz)] = 0.0
            self._hz = hz

    def _scout_weights(self, now: int) -> np.ndarray:
        g = self._graph
        cm = self.engine.cur_mean
        if self.variant == "plain":
            return cm.copy()
        eval_t = now + self._hz[g.tail]
        booked = np.fromiter(
            (self._logs[i].expected_flow(eval_t[i]) for i in range(len(g.links))),
            dtype=np.float64,
            count=len(g.links),
        )
        t0 = self.engine.t0_arr
        chat = self.engine.chat_arr
        flow = booked + 1.0
        if self.variant == "S" and not self.s_time_scaling:
            flow = flow / self.penetration
        t_lpf = t0 + np.maximum(0.0, flow - 1.0) * 3600.0 / chat
        if self.variant == "N":
            return t_lpf
        if self.variant == "S":
            return t_lpf / self.penetration if self.s_time_scaling else t_lpf
        absr = np.abs(self._r)
        hi = (1.0 - absr) * t_lpf + absr * cm
        lo = absr * t_lpf + (1.0 - absr) * cm
        return np.where(self._r > 0, hi, np.where(self._r < 0, lo, t_lpf))

    def _flood(self, now: int) -> None:
        g = self._graph
        w = self._scout_weights(now)
        active = sorted(d for d, c in self._active.items() if c > 0)
        tables = []
        for li, layer in enumerate(self.hierarchy.layers):
            reps = sorted({r for d in active for r in self._dest_reps[li][d]})
            src = np.array([g.node_index[r] for r in reps], dtype=np.int64)
            costs, hops = _flood_columns(g, w, src, layer.hop_limit, upstream=True)
            tables.append(_TableBlock({r: i for i, r in enumerate(reps)}, costs, hops))
        self._tables = tables
        self._generation = now

    # -- vehicle-facing interface ----------------------------------------------------

    def _choose_hop_index(self, node_idx: int, destination: int) -> int:
        for block in self._tables:
            row = block.rows.get(destination)
            if row is not None and block.hops[row, node_idx] >= 0:
                return int(block.hops[row, node_idx])
        for li, block in enumerate(self._tables):
            best_cost = np.inf
            best_hop = -1
            for rep in self._dest_reps[li][destination]:
                row = block.rows.get(rep)
                if row is None:
                    continue
                hop = block.hops[row, node_idx]
                if hop < 0:
                    continue
                cost = block.costs[row, node_idx]
                if cost < best_cost or (cost == best_cost and hop < best_hop):
                    best_cost = float(cost)
                    best_hop = int(hop)
            if best_hop >= 0:
                return best_hop
        return -1

    def _cost_at(self, link: Link, offset: float) -> float:
        i = self.engine.link_index[link.id]
        return link_cost(
            self.variant,
            link,
            offset,
            self._now,
            log=self._logs[i],
            cur_mean=float(self.engine.cur_mean[i]),
            penetration=self.penetration,
            r=float(self._r[i]),
            s_time_scaling=self.s_time_scaling,
        )

    def _dispatch(self, vehicle, node: int, now: int) -> None:
        state = self._reservations.get(vehicle.id)
        old = state[0] if state else None
        if old is not None:
            reserve_path(
                self.engine.reservation_logs,
                old,
                PathReservation(vehicle.id, ()),
                now,
            )

        def hop_at(n: int) -> int | None:
            idx = self._choose_hop_index(self._graph.node_index[n], vehicle.destination)
            return None if idx < 0 else self._graph.node_ids[idx]

        entries, completed = _walk_path(
            vehicle.destination,
            node,
            now,
            hop_at,
            lambda u, v: self._link_at[(u, v)],
            self._cost_at,
        )
        booking = PathReservation(vehicle.id, tuple(entries))
        reserve_path(self.engine.reservation_logs, None, booking, now)
        if not completed:
            self.engine.diagnostics["forager_aborts"] += 1
        self._reservations[vehicle.id] = [booking, 0]

    def choose_next(self, vehicle, node: int, now: int) -> int | None:
        hop_idx = self._choose_hop_index(
            self._graph.node_index[node], vehicle.destination
        )
        if hop_idx < 0:
            return None
        nxt = self._graph.node_ids[hop_idx]
        if self.variant in RESERVING_VARIANTS:
            chosen = self._link_at[(node, nxt)]
            state = self._reservations.get(vehicle.id)
            remembered = None
            if state is not None:
                booking, position = state
                remembered = booking.next_link_at(position)
            if remembered is None or remembered.link != chosen.id:
                self._dispatch(vehicle, node, now)
                state = self._reservations[vehicle.id]
            state[1] += 1
        return nxt

    def notify_arrival(self, vehicle, now: int) -> None:
        self._active[vehicle.destination] -= 1
        state = self._reservations.pop(vehicle.id, None)
        if state is not None and state[0] is not None:
            # Release slots booked past the actual arrival.
            reserve_path(
                self.engine.reservation_logs,
                state[0],
                PathReservation(vehicle.id, ()),
                now,
            )

    # -- introspection for tests ------------------------------------------------------

    def tables_snapshot(self) -> dict[int, dict[int, dict[int, TableEntry]]]:
        """Current tables in {layer: {rep: {node: entry}}} form."""
        g = self._graph
        out: dict[int, dict[int, dict[int, TableEntry]]] = {}
        for li, block in enumerate(self._tables or []):
            per_rep: dict[int, dict[int, TableEntry]] = {}
            for rep, row in block.rows.items():
                table = {}
                for ni, nid in enumerate(g.node_ids):
                    if block.hops[row, ni] >= 0:
                        table[nid] = TableEntry(
                            next_hop=g.node_ids[block.hops[row, ni]],
                            cost=float(block.costs[row, ni]),
                            generation=self._generation,
                            layer=li,
                        )
                per_rep[rep] = table
            out[li] = per_rep
        return out

    def horizon_at(self, node: int) -> float:
        return float(self._hz[self._graph.node_index[node]])

    def reservation_for(self, vehicle_id: int) -> PathReservation | None:
        state = self._reservations.get(vehicle_id)
        return state[0] if state else None
