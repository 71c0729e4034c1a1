"""Road network model.

Nodes are points in a planar metric (coordinates in metres); links are directed
edges with a free-flow travel time t0 = length / free_speed and two capacity
figures: `capacity` (veh/h, used by the BPR curve) and `capacity_hat` (veh/h,
the outflow capacity used by the queue model).  Networks are loaded from and
saved to a single JSON document with top-level keys `nodes` and `links`.

Travel-time functions:

* ``bpr_travel_time``      volume-delay curve t0 * (1 + alpha * (f/c)^beta)
* ``queue_travel_time``    queue model: t0 below the outflow capacity, else
                           t0 + (f - 1) * 3600 / capacity_hat
* ``standing_queue_time``  travel time of the n-th vehicle in a standing
                           (piled-up) queue: t0 + (n - 1) * 3600 / capacity_hat
                           for any n >= 1; the congested branch of the queue
                           model, continuous in the count
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

# (alpha, beta) presets for the BPR curve by road class.
BPR_PRESETS: dict[str, tuple[float, float]] = {
    "default": (0.15, 4.0),
    "highway": (0.88, 9.8),
    "multilane": (1.0, 5.4),
}

_NODE_KEYS = {"id", "x", "y"}
_LINK_KEYS_REQUIRED = {"id", "from", "to", "length", "free_speed", "capacity"}
_LINK_KEYS_OPTIONAL = {"capacity_hat", "lanes", "road_class"}


class NetworkFormatError(ValueError):
    """Raised when a network document is malformed or fails validation."""


@dataclass(frozen=True)
class BprParams:
    alpha: float = 0.15
    beta: float = 4.0


def bpr_params_for(road_class: str) -> BprParams:
    """BPR parameters for a road class; unknown classes fall back to default."""
    alpha, beta = BPR_PRESETS.get(road_class, BPR_PRESETS["default"])
    return BprParams(alpha, beta)


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Link:
    id: int
    from_node: int
    to_node: int
    length: float          # metres
    free_speed: float      # m/s
    capacity: float        # veh/h, BPR reference capacity
    capacity_hat: float    # veh/h, queue outflow capacity
    lanes: int = 1
    road_class: str = "default"

    @property
    def t0(self) -> float:
        """Free-flow travel time in seconds."""
        return self.length / self.free_speed


def _check_positive_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")


def bpr_travel_time(
    t0: float, flow: float, capacity: float, alpha: float = 0.15, beta: float = 4.0
) -> float:
    """BPR volume-delay travel time t0 * (1 + alpha * (flow/capacity)^beta)."""
    _check_positive_finite("t0", t0)
    _check_positive_finite("capacity", capacity)
    if not math.isfinite(flow) or flow < 0:
        raise ValueError(f"flow must be finite and >= 0, got {flow!r}")
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise ValueError("alpha and beta must be finite")
    return t0 * (1.0 + alpha * (flow / capacity) ** beta)


def queue_travel_time(t0: float, flow: float, capacity_hat: float) -> float:
    """Queue-model travel time for `flow` vehicles attempting the link.

    Below the outflow capacity the link serves everyone at free flow; from
    capacity_hat upward the outflow bounds the release rate and the last
    vehicle needs t0 + (flow - 1) * 3600 / capacity_hat.
    """
    _check_positive_finite("t0", t0)
    _check_positive_finite("capacity_hat", capacity_hat)
    if not math.isfinite(flow) or flow < 0:
        raise ValueError(f"flow must be finite and >= 0, got {flow!r}")
    if flow < capacity_hat:
        return t0
    return t0 + (flow - 1.0) * 3600.0 / capacity_hat


def standing_queue_time(t0: float, vehicles: float, capacity_hat: float) -> float:
    """Travel time of the last of `vehicles` simultaneous entrants on a link.

    A pile-up drains at one vehicle per 3600/capacity_hat seconds starting at
    t0, so the n-th vehicle leaves at t0 + (n - 1) * 3600 / capacity_hat.
    Continuous and non-decreasing in the count; equal to queue_travel_time
    for counts >= capacity_hat.
    """
    _check_positive_finite("t0", t0)
    _check_positive_finite("capacity_hat", capacity_hat)
    if not math.isfinite(vehicles) or vehicles < 0:
        raise ValueError(f"vehicles must be finite and >= 0, got {vehicles!r}")
    return t0 + max(0.0, vehicles - 1.0) * 3600.0 / capacity_hat


class RoadNetwork:
    """Validated directed road graph with id-ordered adjacency."""

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link]):
        self.nodes: dict[int, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise NetworkFormatError(f"duplicate node id {node.id}")
            self.nodes[node.id] = node
        self.links: dict[int, Link] = {}
        for link in links:
            if link.id in self.links:
                raise NetworkFormatError(f"duplicate link id {link.id}")
            if link.from_node not in self.nodes:
                raise NetworkFormatError(
                    f"link {link.id}: unknown from node {link.from_node}"
                )
            if link.to_node not in self.nodes:
                raise NetworkFormatError(f"link {link.id}: unknown to node {link.to_node}")
            if link.from_node == link.to_node:
                raise NetworkFormatError(f"link {link.id}: self loop at {link.from_node}")
            for field_name in ("length", "free_speed", "capacity", "capacity_hat"):
                value = getattr(link, field_name)
                if not (math.isfinite(value) and value > 0):
                    raise NetworkFormatError(
                        f"link {link.id}: {field_name} must be positive, got {value!r}"
                    )
            if link.lanes < 1 or link.lanes != int(link.lanes):
                raise NetworkFormatError(f"link {link.id}: lanes must be an integer >= 1")
            self.links[link.id] = link

        # Adjacency sorted by link id so that every traversal order is fixed.
        self.out_links: dict[int, list[Link]] = {nid: [] for nid in self.nodes}
        self.in_links: dict[int, list[Link]] = {nid: [] for nid in self.nodes}
        for link_id in sorted(self.links):
            link = self.links[link_id]
            self.out_links[link.from_node].append(link)
            self.in_links[link.to_node].append(link)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return self.nodes == other.nodes and self.links == other.links

    def node_distance(self, a: int, b: int) -> float:
        na, nb = self.nodes[a], self.nodes[b]
        return math.hypot(na.x - nb.x, na.y - nb.y)

    def euclidean_diameter(self) -> float:
        """Largest straight-line distance between any two nodes."""
        import numpy as np

        ids = sorted(self.nodes)
        if len(ids) < 2:
            return 0.0
        xy = np.array([[self.nodes[i].x, self.nodes[i].y] for i in ids])
        best = 0.0
        for i in range(len(ids) - 1):
            d2 = ((xy[i + 1 :] - xy[i]) ** 2).sum(axis=1).max()
            best = max(best, float(d2))
        return math.sqrt(best)

    def max_free_speed(self) -> float:
        return max(link.free_speed for link in self.links.values())


def _require_keys(obj: dict, required: set, optional: set, what: str) -> None:
    keys = set(obj)
    missing = required - keys
    if missing:
        raise NetworkFormatError(f"{what}: missing keys {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise NetworkFormatError(f"{what}: unknown keys {sorted(unknown)}")


def network_from_dict(doc: dict) -> RoadNetwork:
    if not isinstance(doc, dict):
        raise NetworkFormatError("network document must be a mapping")
    _require_keys(doc, {"nodes", "links"}, set(), "network document")
    nodes = []
    for i, raw in enumerate(doc["nodes"]):
        if not isinstance(raw, dict):
            raise NetworkFormatError(f"node entry {i} must be a mapping")
        _require_keys(raw, _NODE_KEYS, set(), f"node entry {i}")
        nodes.append(Node(id=int(raw["id"]), x=float(raw["x"]), y=float(raw["y"])))
    links = []
    for i, raw in enumerate(doc["links"]):
        if not isinstance(raw, dict):
            raise NetworkFormatError(f"link entry {i} must be a mapping")
        _require_keys(raw, _LINK_KEYS_REQUIRED, _LINK_KEYS_OPTIONAL, f"link entry {i}")
        lanes = int(raw.get("lanes", 1))
        capacity = float(raw["capacity"])
        # Outflow capacity defaults to the BPR capacity scaled by lane count.
        capacity_hat = float(raw.get("capacity_hat", capacity * lanes))
        links.append(
            Link(
                id=int(raw["id"]),
                from_node=int(raw["from"]),
                to_node=int(raw["to"]),
                length=float(raw["length"]),
                free_speed=float(raw["free_speed"]),
                capacity=capacity,
                capacity_hat=capacity_hat,
                lanes=lanes,
                road_class=str(raw.get("road_class", "default")),
            )
        )
    return RoadNetwork(nodes, links)


def load_network(path: str) -> RoadNetwork:
    """Load and validate a network JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError(f"{path}: invalid JSON: {exc}") from exc
    return network_from_dict(doc)


def network_to_dict(net: RoadNetwork) -> dict:
    return {
        "nodes": [
            {"id": n.id, "x": n.x, "y": n.y} for n in (net.nodes[i] for i in sorted(net.nodes))
        ],
        "links": [
            {
                "id": l.id,
                "from": l.from_node,
                "to": l.to_node,
                "length": l.length,
                "free_speed": l.free_speed,
                "capacity": l.capacity,
                "capacity_hat": l.capacity_hat,
                "lanes": l.lanes,
                "road_class": l.road_class,
            }
            for l in (net.links[i] for i in sorted(net.links))
        ],
    }


def save_network(net: RoadNetwork, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=2)
        fh.write("\n")


def generate_grid(
    rows: int,
    cols: int,
    edge_length: float,
    free_speed: float,
    capacity: float,
    bidirectional: bool = True,
    capacity_hat: float | None = None,
    lanes: int = 1,
    road_class: str = "default",
) -> RoadNetwork:
    """Rectangular lattice network.

    Node ids are row-major (id = row * cols + col) at coordinates
    (col * edge_length, row * edge_length).  Every lattice edge becomes two
    opposite links when `bidirectional`, otherwise a single link oriented from
    the lower to the higher node id.  Link ids enumerate the (from, to) pairs
    in sorted order.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    _check_positive_finite("edge_length", edge_length)
    _check_positive_finite("free_speed", free_speed)
    _check_positive_finite("capacity", capacity)
    nodes = [
        Node(id=r * cols + c, x=c * edge_length, y=r * edge_length)
        for r in range(rows)
        for c in range(cols)
    ]
    pairs: list[tuple[int, int]] = []
    for r in range(rows):
        for c in range(cols):
            nid = r * cols + c
            if c + 1 < cols:
                pairs.append((nid, nid + 1))
            if r + 1 < rows:
                pairs.append((nid, nid + cols))
    if bidirectional:
        pairs.extend([(b, a) for a, b in list(pairs)])
    pairs.sort()
    c_hat = capacity * lanes if capacity_hat is None else capacity_hat
    links = [
        Link(
            id=i,
            from_node=a,
            to_node=b,
            length=edge_length,
            free_speed=free_speed,
            capacity=capacity,
            capacity_hat=c_hat,
            lanes=lanes,
            road_class=road_class,
        )
        for i, (a, b) in enumerate(pairs)
    ]
    return RoadNetwork(nodes, links)
