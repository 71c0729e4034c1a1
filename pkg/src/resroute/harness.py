"""Scenario configuration, demand generation, and penetration sweeps.

A scenario is one structured mapping (YAML or JSON syntax):

    network:
      grid: {rows: 20, cols: 20, edge_length: 500.0, free_speed: 13.9,
             capacity: 600.0}
      # or: path: nets/city.json
    demand:
      departures: {hours: 5, per_hour: 60000}   # or {window_s, count},
                                                # or an explicit list of seconds
      od: {min_separation_frac: 0.25}           # or min_separation_m,
                                                # or pairs: [[o, d], ...]
      seed: 42
    protocols:
      - {id: plain, type: beejama, share: 0.5, variant: plain}
      - {id: background, type: dynsp, share: 0.5, period_s: 1800}
    horizon_s: 14400
    slot_length_s: 60
    outputs: out/run1

The demand seed fully determines the vehicle set (ids, ODs, departures) and
the protocol assignment: every run of a penetration sweep therefore reuses a
byte-identical vehicle population, and only the protocol labels change.
Shares must sum to 1; protocols with share 0 are listed in the summary but
never instantiated.
"""

from __future__ import annotations

import copy
import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from .baseline import DynResSP, DynSP
from .beejama import BeeJamA
from .network import RoadNetwork, generate_grid, load_network
from .simulator import Engine, MetricsLog, Vehicle


class ConfigError(ValueError):
    """The scenario document is malformed or internally inconsistent."""


SHARE_TOLERANCE = 1e-9
BACKGROUND_ID = "background"
SUMMARY_COLUMNS = [
    "penetration",
    "protocol",
    "mean_tt_min",
    "median_tt_min",
    "q1_min",
    "q3_min",
    "max_min",
    "arrived",
    "stranded",
]
SWEEP_COLUMNS = [
    "penetration",
    "protocol_mean_min",
    "background_mean_min",
    "overall_mean_min",
]

# Rejection sampling of OD pairs gives up after this many draws per vehicle;
# hitting the cap means the separation constraint is effectively impossible.
_OD_DRAW_CAP = 10_000
_OD_BATCH = 4096

_TOP_REQUIRED = {"network", "demand", "protocols", "horizon_s"}
_TOP_OPTIONAL = {"slot_length_s", "outputs"}
_GRID_REQUIRED = {"rows", "cols", "edge_length", "free_speed", "capacity"}
_GRID_OPTIONAL = {"bidirectional", "capacity_hat", "lanes", "road_class"}
_DEMAND_REQUIRED = {"departures", "seed"}
_DEMAND_OPTIONAL = {"vehicle_count", "od"}
_OD_KEYS = {"min_separation_m", "min_separation_frac", "pairs"}
_PROTOCOL_EXTRAS = {
    "beejama": {
        "variant",
        "layer_cell_sizes",
        "hop_limits",
        "overlap_m",
        "navigator_cell_m",
        "scout_period_s",
        "downstream_period_s",
        "penetration",
        "s_time_scaling",
    },
    "dynsp": {"period_s", "snapshot_period_s"},
    "dynressp": {"period_s"},
}


def _require_keys(obj: dict, required: set, optional: set, what: str) -> None:
    keys = set(obj)
    missing = required - keys
    if missing:
        raise ConfigError(f"{what}: missing keys {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")


def _as_mapping(value, what: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{what} must be a mapping")
    return value


def _as_int(value, what: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be an integer, got {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigError(f"{what} must be an integer, got {value!r}")
        value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{what} must be >= {minimum}, got {value}")
    return value


def _as_number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{what} must be finite, got {value!r}")
    return value


def _validate_shares(shares: dict[str, float]) -> None:
    if not shares:
        raise ConfigError("at least one protocol is required")
    for name, share in shares.items():
        if not 0.0 <= share <= 1.0:
            raise ConfigError(f"protocol {name!r}: share {share} outside [0, 1]")
    total = math.fsum(shares.values())
    if abs(total - 1.0) > SHARE_TOLERANCE:
        raise ConfigError(f"protocol shares sum to {total!r}, expected 1")


def _validate_departures(spec, what: str):
    if isinstance(spec, list):
        return [_as_int(t, f"{what} entry", minimum=0) for t in spec]
    spec = _as_mapping(spec, what)
    keys = set(spec)
    if keys == {"hours", "per_hour"}:
        return {
            "hours": _as_int(spec["hours"], f"{what}.hours", minimum=0),
            "per_hour": _as_int(spec["per_hour"], f"{what}.per_hour", minimum=0),
        }
    if keys == {"window_s", "count"}:
        return {
            "window_s": _as_int(spec["window_s"], f"{what}.window_s", minimum=1),
            "count": _as_int(spec["count"], f"{what}.count", minimum=0),
        }
    raise ConfigError(
        f"{what} must be {{hours, per_hour}}, {{window_s, count}}, "
        f"or an explicit list of departure seconds; got keys {sorted(keys)}"
    )


def _validate_od(spec, what: str) -> dict:
    spec = _as_mapping(spec, what)
    unknown = set(spec) - _OD_KEYS
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")
    if len(spec) > 1:
        raise ConfigError(f"{what}: give at most one of {sorted(_OD_KEYS)}")
    out: dict = {}
    if "min_separation_m" in spec:
        sep = _as_number(spec["min_separation_m"], f"{what}.min_separation_m")
        if sep < 0:
            raise ConfigError(f"{what}.min_separation_m must be >= 0")
        out["min_separation_m"] = sep
    if "min_separation_frac" in spec:
        frac = _as_number(spec["min_separation_frac"], f"{what}.min_separation_frac")
        if frac < 0:
            raise ConfigError(f"{what}.min_separation_frac must be >= 0")
        out["min_separation_frac"] = frac
    if "pairs" in spec:
        pairs = spec["pairs"]
        if not isinstance(pairs, list) or not pairs:
            raise ConfigError(f"{what}.pairs must be a non-empty list of [o, d]")
        cleaned = []
        for i, pair in enumerate(pairs):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(f"{what}.pairs[{i}] must be a pair [origin, destination]")
            o = _as_int(pair[0], f"{what}.pairs[{i}] origin")
            d = _as_int(pair[1], f"{what}.pairs[{i}] destination")
            if o == d:
                raise ConfigError(f"{what}.pairs[{i}]: origin equals destination ({o})")
            cleaned.append([o, d])
        out["pairs"] = cleaned
    return out


def _validate_protocol(entry, index: int) -> dict:
    what = f"protocols[{index}]"
    entry = _as_mapping(entry, what)
    _require_keys(entry, {"id", "type", "share"}, set().union(*_PROTOCOL_EXTRAS.values()), what)
    name = entry["id"]
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{what}.id must be a non-empty string")
    kind = entry["type"]
    if kind not in _PROTOCOL_EXTRAS:
        raise ConfigError(
            f"{what}.type must be one of {sorted(_PROTOCOL_EXTRAS)}, got {kind!r}"
        )
    extras = set(entry) - {"id", "type", "share"}
    bad = extras - _PROTOCOL_EXTRAS[kind]
    if bad:
        raise ConfigError(f"{what}: keys {sorted(bad)} not valid for type {kind!r}")
    out = copy.deepcopy(entry)
    out["share"] = _as_number(entry["share"], f"{what}.share")
    if "layer_cell_sizes" in out:
        out["layer_cell_sizes"] = [
            _as_number(s, f"{what}.layer_cell_sizes entry") for s in out["layer_cell_sizes"]
        ]
    if "hop_limits" in out:
        # YAML spells infinity ".inf"; tolerate the bare string too.
        out["hop_limits"] = [
            float(h) if isinstance(h, str) else h for h in out["hop_limits"]
        ]
    return out


@dataclass
class ScenarioConfig:
    """Validated scenario document; see the module docstring for the schema."""

    network: dict
    demand: dict
    protocols: list
    horizon_s: int
    slot_length_s: float = 60.0
    outputs: str | None = None

    @classmethod
    def from_dict(cls, doc) -> "ScenarioConfig":
        doc = _as_mapping(doc, "scenario document")
        _require_keys(doc, _TOP_REQUIRED, _TOP_OPTIONAL, "scenario document")

        network = _as_mapping(doc["network"], "network")
        if set(network) == {"path"}:
            if not isinstance(network["path"], str):
                raise ConfigError("network.path must be a string")
        elif set(network) == {"grid"}:
            grid = _as_mapping(network["grid"], "network.grid")
            _require_keys(grid, _GRID_REQUIRED, _GRID_OPTIONAL, "network.grid")
        else:
            raise ConfigError("network must contain exactly one of 'path' or 'grid'")

        demand = _as_mapping(doc["demand"], "demand")
        _require_keys(demand, _DEMAND_REQUIRED, _DEMAND_OPTIONAL, "demand")
        clean_demand = {
            "departures": _validate_departures(demand["departures"], "demand.departures"),
            "seed": _as_int(demand["seed"], "demand.seed", minimum=0),
        }
        if "vehicle_count" in demand:
            clean_demand["vehicle_count"] = _as_int(
                demand["vehicle_count"], "demand.vehicle_count", minimum=0
            )
        if "od" in demand:
            clean_demand["od"] = _validate_od(demand["od"], "demand.od")

        raw_protocols = doc["protocols"]
        if not isinstance(raw_protocols, list) or not raw_protocols:
            raise ConfigError("protocols must be a non-empty list")
        protocols = [_validate_protocol(e, i) for i, e in enumerate(raw_protocols)]
        names = [e["id"] for e in protocols]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate protocol ids: {names}")
        _validate_shares({e["id"]: e["share"] for e in protocols})

        horizon_s = _as_int(doc["horizon_s"], "horizon_s", minimum=1)
        slot_length_s = _as_number(doc.get("slot_length_s", 60.0), "slot_length_s")
        if slot_length_s <= 0:
            raise ConfigError("slot_length_s must be positive")
        outputs = doc.get("outputs")
        if outputs is not None and not isinstance(outputs, str):
            raise ConfigError("outputs must be a directory path string")

        return cls(
            network=copy.deepcopy(network),
            demand=clean_demand,
            protocols=protocols,
            horizon_s=horizon_s,
            slot_length_s=slot_length_s,
            outputs=outputs,
        )

    def to_dict(self) -> dict:
        doc = {
            "network": copy.deepcopy(self.network),
            "demand": copy.deepcopy(self.demand),
            "protocols": copy.deepcopy(self.protocols),
            "horizon_s": self.horizon_s,
            "slot_length_s": self.slot_length_s,
        }
        if self.outputs is not None:
            doc["outputs"] = self.outputs
        return doc


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid syntax: {err}") from err
    return ScenarioConfig.from_dict(doc)


def apply_overrides(doc: dict, assignments: list[str]) -> dict:
    """Apply dotted-path overrides like ``demand.seed=7`` to a raw document.

    Values are parsed with YAML semantics (7 is an int, true a bool, [1,2] a
    list).  Integer segments index into lists; missing intermediate mapping
    keys are created.
    """
    out = copy.deepcopy(doc)
    for raw in assignments:
        key, sep, value = raw.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like dotted.path=value: {raw!r}")
        try:
            parsed = yaml.safe_load(value) if value else None
        except yaml.YAMLError as err:
            raise ConfigError(f"override {raw!r}: bad value: {err}") from err
        _set_path(out, key.split("."), parsed, raw)
    return out


def _set_path(doc, segments: list[str], value, raw: str) -> None:
    cur = doc
    for i, seg in enumerate(segments):
        last = i == len(segments) - 1
        if isinstance(cur, list):
            try:
                idx = int(seg)
            except ValueError:
                raise ConfigError(f"override {raw!r}: {seg!r} does not index a list") from None
            if not 0 <= idx < len(cur):
                raise ConfigError(f"override {raw!r}: index {idx} out of range")
            if last:
                cur[idx] = value
            else:
                cur = cur[idx]
        elif isinstance(cur, dict):
            if last:
                cur[seg] = value
            else:
                if seg not in cur:
                    cur[seg] = {}
                cur = cur[seg]
        else:
            raise ConfigError(f"override {raw!r}: {seg!r} traverses a scalar")


# -- network and demand -------------------------------------------------------


def build_network(config: ScenarioConfig) -> RoadNetwork:
    spec = config.network
    if "path" in spec:
        try:
            return load_network(spec["path"])
        except OSError as err:
            raise ConfigError(f"cannot read network {spec['path']}: {err}") from err
    return generate_grid(**spec["grid"])


def _demand_streams(seed: int):
    """Child seeds for (departures, od sampling, protocol assignment).

    Spawning is a pure function of the parent seed, so demand never sees the
    protocol mix and stays byte-identical across every run of a sweep.
    """
    return np.random.SeedSequence(seed).spawn(3)


def _departure_times(demand: dict, stream) -> list[int]:
    spec = demand["departures"]
    if isinstance(spec, list):
        return list(spec)
    rng = np.random.default_rng(stream)
    if "hours" in spec:
        blocks, per_block, block_s = spec["hours"], spec["per_hour"], 3600
    else:
        blocks, per_block, block_s = 1, spec["count"], spec["window_s"]
    times: list[int] = []
    for b in range(blocks):
        draws = np.sort(rng.integers(0, block_s, size=per_block))
        base = b * block_s
        times.extend(int(t) + base for t in draws)
    return times


def _od_pairs(
    demand: dict, network: RoadNetwork, count: int, stream
) -> list[tuple[int, int]]:
    od = demand.get("od", {})
    node_ids = sorted(network.nodes)

    if "pairs" in od:
        pairs = od["pairs"]
        known = set(node_ids)
        for o, d in pairs:
            if o not in known or d not in known:
                raise ConfigError(f"demand.od.pairs: unknown node in ({o}, {d})")
        if count == 0:
            return []
        if len(pairs) not in (1, count):
            raise ConfigError(
                f"demand.od.pairs has {len(pairs)} entries for {count} vehicles; "
                f"give one pair to broadcast or exactly one per vehicle"
            )
        if len(pairs) == 1:
            o, d = pairs[0]
            return [(o, d)] * count
        return [(o, d) for o, d in pairs]

    if count == 0:
        return []
    if len(node_ids) < 2:
        raise ConfigError("need at least two nodes to sample OD pairs")

    diameter = network.euclidean_diameter()
    if "min_separation_m" in od:
        min_sep = od["min_separation_m"]
    else:
        frac = od.get("min_separation_frac", 0.25)
        min_sep = frac * diameter
    if min_sep > diameter:
        raise ConfigError(
            f"minimum OD separation {min_sep:.1f} m exceeds the network "
            f"diameter {diameter:.1f} m; no eligible pairs exist"
        )

    xy = np.array([[network.nodes[i].x, network.nodes[i].y] for i in node_ids])
    rng = np.random.default_rng(stream)
    chosen_o: list[int] = []
    chosen_d: list[int] = []
    drawn = 0
    while len(chosen_o) < count:
        if drawn >= _OD_DRAW_CAP * count + _OD_BATCH:
            raise ConfigError(
                "OD sampling rejected too many draws; loosen the minimum separation"
            )
        idx = rng.integers(0, len(node_ids), size=(_OD_BATCH, 2))
        drawn += _OD_BATCH
        o, d = idx[:, 0], idx[:, 1]
        dist = np.hypot(xy[o, 0] - xy[d, 0], xy[o, 1] - xy[d, 1])
        ok = (o != d) & (dist >= min_sep)
        chosen_o.extend(int(i) for i in o[ok])
        chosen_d.extend(int(i) for i in d[ok])
    return [
        (node_ids[o], node_ids[d]) for o, d in zip(chosen_o[:count], chosen_d[:count])
    ]


def generate_demand(
    config: ScenarioConfig, network: RoadNetwork | None = None
) -> list[Vehicle]:
    """Deterministic vehicle population: ids, ODs, and departure seconds.

    Departures are uniform within each block of the schedule; OD pairs are
    uniform over node pairs at least the minimum separation apart.  Protocol
    labels are left empty here; `assign_protocols` fills them in.
    """
    net = build_network(config) if network is None else network
    demand = config.demand
    dep_stream, od_stream, _ = _demand_streams(demand["seed"])
    times = _departure_times(demand, dep_stream)
    expected = demand.get("vehicle_count")
    if expected is not None and expected != len(times):
        raise ConfigError(
            f"demand.vehicle_count is {expected} but the departure schedule "
            f"generates {len(times)} vehicles"
        )
    pairs = _od_pairs(demand, net, len(times), od_stream)
    return [
        Vehicle(id=i, origin=o, destination=d, departure=t, protocol="")
        for i, (t, (o, d)) in enumerate(zip(times, pairs))
    ]


def assign_protocols(vehicles: list[Vehicle], shares: dict[str, float], seed) -> dict[int, str]:
    """Stratified protocol assignment: exact largest-remainder counts,
    uniformly mixed over vehicles regardless of departure order."""
    _validate_shares(shares)
    n = len(vehicles)
    names = sorted(shares)
    counts = {p: int(math.floor(shares[p] * n)) for p in names}
    leftover = n - sum(counts.values())
    if not 0 <= leftover <= len(names):
        raise ConfigError(f"shares {shares} cannot be rounded to {n} vehicles")
    by_remainder = sorted(names, key=lambda p: (-(shares[p] * n - counts[p]), p))
    for p in by_remainder[:leftover]:
        counts[p] += 1

    ids = sorted(v.id for v in vehicles)
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(n)]
    mapping: dict[int, str] = {}
    start = 0
    for p in names:
        for vid in order[start : start + counts[p]]:
            mapping[vid] = p
        start += counts[p]
    return mapping


# -- protocol construction ----------------------------------------------------


def build_protocols(config: ScenarioConfig) -> dict[str, object]:
    """Instantiate the guidance protocols with a positive share.

    A beejama entry without an explicit penetration gets its own share: the
    S variant's flow scaling divides by the fraction of guided vehicles.
    """
    protocols: dict[str, object] = {}
    for entry in config.protocols:
        if entry["share"] == 0.0:
            continue
        kwargs = {k: v for k, v in entry.items() if k not in ("id", "type", "share")}
        kind = entry["type"]
        if kind == "beejama":
            kwargs.setdefault("penetration", entry["share"])
            protocols[entry["id"]] = BeeJamA(**kwargs)
        elif kind == "dynsp":
            protocols[entry["id"]] = DynSP(**kwargs)
        else:
            protocols[entry["id"]] = DynResSP(**kwargs)
    return protocols


# -- summaries ----------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolSummary:
    protocol: str
    penetration: float
    mean_tt_min: float
    median_tt_min: float
    q1_min: float
    q3_min: float
    max_min: float
    arrived: int
    stranded: int


@dataclass(frozen=True)
class SummaryStats:
    """Travel-time statistics over arrived vehicles, one row per protocol."""

    rows: tuple[ProtocolSummary, ...]
    overall_mean_min: float

    def row(self, protocol: str) -> ProtocolSummary:
        for r in self.rows:
            if r.protocol == protocol:
                return r
        raise KeyError(protocol)


def summarize(metrics: MetricsLog, shares: dict[str, float]) -> SummaryStats:
    per: dict[str, list[float]] = {p: [] for p in shares}
    stranded = {p: 0 for p in shares}
    all_tt: list[float] = []
    for v in metrics.per_vehicle:
        if v.arrival is None:
            stranded[v.protocol] += 1
        else:
            per[v.protocol].append(float(v.travel_time))
            all_tt.append(float(v.travel_time))

    rows = []
    for p in sorted(shares):
        tt = np.asarray(per[p], dtype=float) / 60.0
        if tt.size:
            q1, median, q3 = np.percentile(tt, [25.0, 50.0, 75.0])
            row = ProtocolSummary(
                p, shares[p], float(tt.mean()), float(median), float(q1),
                float(q3), float(tt.max()), int(tt.size), stranded[p],
            )
        else:
            nan = float("nan")
            row = ProtocolSummary(p, shares[p], nan, nan, nan, nan, nan, 0, stranded[p])
        rows.append(row)
    overall = float(np.mean(all_tt)) / 60.0 if all_tt else float("nan")
    return SummaryStats(tuple(rows), overall)


def _fmt_min(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.6f}"


def write_summary_csv(stats: SummaryStats, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for r in stats.rows:
            writer.writerow(
                [
                    f"{r.penetration:g}",
                    r.protocol,
                    _fmt_min(r.mean_tt_min),
                    _fmt_min(r.median_tt_min),
                    _fmt_min(r.q1_min),
                    _fmt_min(r.q3_min),
                    _fmt_min(r.max_min),
                    r.arrived,
                    r.stranded,
                ]
            )


# -- running ------------------------------------------------------------------


def run_scenario(config: ScenarioConfig, outputs: str | None = None) -> SummaryStats:
    """Wire network, demand, and protocols together; run; write artifacts.

    Writes vehicles/arrivals/links/summary CSVs into the output directory
    (argument wins over config.outputs; both unset skips writing).
    """
    net = build_network(config)
    vehicles = generate_demand(config, net)
    shares = {e["id"]: e["share"] for e in config.protocols}
    _, _, assign_stream = _demand_streams(config.demand["seed"])
    mapping = assign_protocols(vehicles, shares, assign_stream)
    for v in vehicles:
        v.protocol = mapping[v.id]

    protocols = build_protocols(config)
    engine = Engine(net, vehicles, protocols, slot_length=config.slot_length_s)
    metrics = engine.run(config.horizon_s)
    stats = summarize(metrics, shares)

    out_dir = config.outputs if outputs is None else outputs
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        metrics.write_vehicles_csv(os.path.join(out_dir, "vehicles.csv"))
        metrics.write_arrivals_csv(os.path.join(out_dir, "arrivals.csv"))
        metrics.write_links_csv(os.path.join(out_dir, "links.csv"))
        write_summary_csv(stats, os.path.join(out_dir, "summary.csv"))
    return stats


def _sweep_entry(job: tuple[dict, float]) -> tuple[float, SummaryStats]:
    doc, fraction = job
    return fraction, run_scenario(ScenarioConfig.from_dict(doc))


def sweep_penetration(
    base_config: ScenarioConfig,
    protocol_under_test: str,
    fractions: list[float],
    parallel: int = 1,
) -> list[tuple[float, SummaryStats]]:
    """One run per fraction: the protocol under test at that share, the rest
    of the traffic on a DynSP 30 min background (id "background").

    The demand seed is untouched, so every run sees the same vehicles.  Rows
    come back in the given fraction order; with outputs configured, each run
    writes into pen_<percent>/ and the sweep table lands in sweep.csv.
    """
    entry = next(
        (e for e in base_config.protocols if e["id"] == protocol_under_test), None
    )
    if entry is None:
        known = [e["id"] for e in base_config.protocols]
        raise ConfigError(
            f"protocol {protocol_under_test!r} is not in the config (have {known})"
        )
    if protocol_under_test == BACKGROUND_ID:
        raise ConfigError("the protocol under test cannot be the background")
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise ConfigError(f"fractions must lie in [0, 1], got {f}")
    if parallel < 1:
        raise ConfigError("parallel must be >= 1")

    base_doc = base_config.to_dict()
    base_out = base_config.outputs
    jobs: list[tuple[dict, float]] = []
    for f in fractions:
        doc = copy.deepcopy(base_doc)
        test = copy.deepcopy(entry)
        test["share"] = float(f)
        background = {
            "id": BACKGROUND_ID,
            "type": "dynsp",
            "share": 1.0 - float(f),
            "period_s": 1800,
        }
        doc["protocols"] = [test, background]
        if base_out:
            doc["outputs"] = os.path.join(base_out, f"pen_{100.0 * f:g}")
        else:
            doc.pop("outputs", None)
        jobs.append((doc, float(f)))

    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_sweep_entry, jobs))
    else:
        results = [_sweep_entry(job) for job in jobs]

    if base_out:
        os.makedirs(base_out, exist_ok=True)
        write_sweep_csv(results, protocol_under_test, os.path.join(base_out, "sweep.csv"))
    return results


def write_sweep_csv(
    results: list[tuple[float, SummaryStats]], protocol_under_test: str, path: str
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for fraction, stats in results:
            test = stats.row(protocol_under_test)
            background = stats.row(BACKGROUND_ID)
            writer.writerow(
                [
                    f"{fraction:g}",
                    _fmt_min(test.mean_tt_min),
                    _fmt_min(background.mean_tt_min),
                    _fmt_min(stats.overall_mean_min),
                ]
            )
