"""Whole-system checks: the shipped scenarios end to end, plus exact numeric
properties of the routing and reservation primitives.

These run full simulations (roughly ten minutes in total) and carry the
`acceptance` marker; deselect them during development with
``pytest -m "not acceptance"``.  Each test prints one PASS/FAIL verdict line,
visible with ``-s`` or in the captured output of a failure.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from netgen import dijkstra_to, random_network
from resroute.baseline import WeightSnapshot, astar
from resroute.beejama import build_hierarchy, flood_upstream
from resroute.harness import (
    ScenarioConfig,
    build_network,
    generate_demand,
    load_config,
    run_scenario,
    sweep_penetration,
)
from resroute.network import bpr_travel_time, queue_travel_time
from resroute.predictor import ErrorWindow
from resroute.reservation import ReservationLog

pytestmark = pytest.mark.acceptance

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
SEEDS = (0, 1, 2)
FRACTIONS = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)


def _verdict(label: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    return ok


def _seeded(path: Path, seed: int) -> ScenarioConfig:
    doc = load_config(str(path)).to_dict()
    doc["demand"]["seed"] = seed
    return ScenarioConfig.from_dict(doc)


@pytest.fixture(scope="session")
def fleet_means():
    """Mean fleet travel time (minutes, averaged over SEEDS) per (arm, share).

    One penetration sweep of the shared scenario per (arm, seed); the sweep
    fills the remaining share with the slow centralized background.  All
    trend tests read from this table, so the simulations run once.
    """
    base = SCENARIOS / "penetration_sweep.yaml"
    samples: dict[tuple[str, float], list[float]] = {}
    for arm, fracs in (
        ("plain", FRACTIONS),
        ("n", FRACTIONS),
        ("dh", FRACTIONS),
        ("s", (0.5,)),
    ):
        for seed in SEEDS:
            cfg = _seeded(base, seed)
            for frac, stats in sweep_penetration(cfg, arm, list(fracs)):
                row = stats.row(arm)
                samples.setdefault((arm, frac), []).append(row.mean_tt_min)
    return {key: sum(vals) / len(vals) for key, vals in samples.items()}


# -- end-to-end scenario checks --------------------------------------------------------


def test_single_link_queue_times():
    """A one-link road serves simultaneous entrants on the queue curve.

    The last of f vehicles injected at t=0 should need
    queue_travel_time(t0, f, c_hat) seconds, within one step.
    """

    def doc(f: int) -> dict:
        return {
            "network": {
                "grid": {
                    "rows": 1,
                    "cols": 2,
                    "edge_length": 500.0,
                    "free_speed": 10.0,
                    "capacity": 600.0,
                }
            },
            "demand": {"departures": [0] * f, "seed": 0, "od": {"pairs": [[0, 1]]}},
            "protocols": [
                {"id": "sp", "type": "dynsp", "share": 1.0, "period_s": 3600.0}
            ],
            "horizon_s": 10000,
        }

    results = {}
    for f in (1, 50, 600, 601, 1200):
        stats = run_scenario(ScenarioConfig.from_dict(doc(f)))
        row = stats.row("sp")
        assert row.arrived == f and row.stranded == 0
        results[f] = (row.max_min * 60.0, queue_travel_time(50.0, float(f), 600.0))
    ok = all(abs(got - want) <= 1.0 for got, want in results.values())
    detail = "  ".join(
        f"f={f}: {got:.0f}s vs {want:.0f}s" for f, (got, want) in results.items()
    )
    _verdict("single-link queue times", ok, detail)
    assert ok, detail


def test_reserving_baseline_cuts_congestion():
    """Path reservation lifts the centralized 10-minute baseline.

    On the shared grid the reserving variant must come in at or below 80%
    of the plain baseline's mean, with every quartile strictly better, and
    the baseline itself must be congested (>= 1.5x the free-flow mean).
    """
    sp_cfg = load_config(str(SCENARIOS / "dynsp_10min.yaml"))
    rsp_cfg = load_config(str(SCENARIOS / "dynressp_10min.yaml"))

    net = build_network(sp_cfg)
    vehicles = generate_demand(sp_cfg, net)
    snap = WeightSnapshot.capture(net, {}, 0)
    cheapest_t0 = {}
    for link in net.links.values():
        key = (link.from_node, link.to_node)
        if key not in cheapest_t0 or link.t0 < cheapest_t0[key]:
            cheapest_t0[key] = link.t0
    free_flow = []
    for v in vehicles:
        nodes = astar(net, v.origin, v.destination, snap)
        free_flow.append(sum(cheapest_t0[(a, b)] for a, b in zip(nodes, nodes[1:])))
    ff_mean = float(np.mean(free_flow)) / 60.0

    sp = run_scenario(sp_cfg).row("sp")
    rsp = run_scenario(rsp_cfg).row("rsp")
    congested = sp.mean_tt_min >= 1.5 * ff_mean
    improved = rsp.mean_tt_min <= 0.8 * sp.mean_tt_min
    quartiles = (
        rsp.q1_min < sp.q1_min
        and rsp.median_tt_min < sp.median_tt_min
        and rsp.q3_min < sp.q3_min
    )
    ok = congested and improved and quartiles
    detail = (
        f"free-flow {ff_mean:.2f}min, baseline {sp.mean_tt_min:.2f}min "
        f"({sp.mean_tt_min / ff_mean:.2f}x), reserving {rsp.mean_tt_min:.2f}min "
        f"({rsp.mean_tt_min / sp.mean_tt_min:.2f}x baseline), "
        f"quartiles strictly better: {quartiles}"
    )
    _verdict("reserving baseline cuts congestion", ok, detail)
    assert ok, detail


def test_naive_reservation_needs_full_penetration(fleet_means):
    """Reservation-only link costs lose to measured costs below full share.

    The naive variant must be worse than plain BeeJamA at every partial
    share and better at 100%, on means over the demand seeds.
    """
    diffs = {
        frac: fleet_means[("n", frac)] - fleet_means[("plain", frac)]
        for frac in FRACTIONS
    }
    partials_worse = all(diffs[f] > 0 for f in FRACTIONS[:-1])
    full_better = diffs[1.0] < 0
    ok = partials_worse and full_better
    detail = "  ".join(f"{int(100 * f)}%: {d:+.2f}min" for f, d in diffs.items())
    _verdict("naive reservation needs full penetration", ok, detail)
    assert ok, detail


def test_hybrid_reservation_crossover(fleet_means):
    """The correlation-blended variant pays off from half penetration up.

    It must beat plain BeeJamA at shares >= 50% and stay within +15% of it
    at 10-30%, on means over the demand seeds.
    """
    high_ok = all(
        fleet_means[("dh", f)] < fleet_means[("plain", f)] for f in (0.5, 0.7, 0.9, 1.0)
    )
    low_ok = all(
        fleet_means[("dh", f)] <= 1.15 * fleet_means[("plain", f)] for f in (0.1, 0.3)
    )
    ok = high_ok and low_ok
    detail = "  ".join(
        f"{int(100 * f)}%: {fleet_means[('dh', f)] - fleet_means[('plain', f)]:+.2f}min"
        for f in FRACTIONS
    )
    _verdict("hybrid reservation crossover", ok, detail)
    assert ok, detail


def test_variant_ordering_at_half_penetration(fleet_means):
    """At a 50% share the variants order hybrid <= plain < static < naive-ish.

    The blended variant must not lose to plain, while both fixed-weight
    reservation variants must.
    """
    dh = fleet_means[("dh", 0.5)]
    plain = fleet_means[("plain", 0.5)]
    s = fleet_means[("s", 0.5)]
    n = fleet_means[("n", 0.5)]
    ok = dh <= plain < s and plain < n
    detail = f"hybrid {dh:.2f}  plain {plain:.2f}  static {s:.2f}  naive {n:.2f} (min)"
    _verdict("variant ordering at half penetration", ok, detail)
    assert ok, detail


# -- exact numeric properties ----------------------------------------------------------


def test_lpf_reference_values():
    """Both travel-time curves hit their reference points exactly."""
    cases = [
        (bpr_travel_time(100.0, 0.0, 1000.0), 100.0),
        (bpr_travel_time(100.0, 1000.0, 1000.0), 115.0),
        (bpr_travel_time(100.0, 2000.0, 1000.0), 340.0),
        (queue_travel_time(50.0, 1.0, 600.0), 50.0),
        (queue_travel_time(50.0, 600.0, 600.0), 3644.0),
        (queue_travel_time(50.0, 601.0, 600.0), 3650.0),
    ]
    ok = all(math.isclose(got, want, rel_tol=1e-9) for got, want in cases)
    detail = "  ".join(f"{got:g}~{want:g}" for got, want in cases)
    _verdict("travel-time reference values", ok, detail)
    assert ok, detail


def _pearson_oracle(ys: list[float]) -> float:
    n = len(ys)
    xs = list(range(1, n + 1))
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    sxx = sum((x - mean_x) ** 2 for x in xs)
    syy = sum((y - mean_y) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return sxy / math.sqrt(sxx * syy)


def test_pearson_matches_covariance_oracle():
    """Windowed correlation equals a two-pass covariance computation.

    1000 random windows, 1e-12 relative tolerance, plus invariance under
    positive affine transforms of the samples.
    """
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 61))
        scale = float(10.0 ** rng.integers(-2, 4))
        ys = [float(v) for v in rng.normal(0.0, scale, size=n)]
        if rng.integers(0, 10) == 0:
            ys = [ys[0]] * n  # zero variance
        window = ErrorWindow()
        for y in ys:
            window.record_sample(y)
        r = window.pearson_r()
        want = _pearson_oracle(ys)
        assert math.isclose(r, want, rel_tol=1e-12, abs_tol=1e-12)
        worst = max(worst, abs(r - want))

        a = float(rng.uniform(0.5, 3.0))
        b = float(rng.uniform(-5.0, 5.0))
        scaled = ErrorWindow()
        for y in ys:
            scaled.record_sample(a * y + b)
        assert math.isclose(scaled.pearson_r(), r, rel_tol=1e-12, abs_tol=1e-12)
    _verdict("windowed correlation oracle", True, f"worst abs deviation {worst:.2e}")


def test_flood_matches_exact_shortest_paths():
    """Scout flooding with ample hop budget converges to exact costs.

    100 random strongly-ish connected graphs of up to 50 nodes; every
    reachable table entry must equal the Dijkstra cost bit for bit.
    """
    rng = np.random.default_rng(13)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(5, 51))
        net = random_network(rng, n, extra_edges=int(rng.integers(0, 80)))
        weights = {lid: float(rng.uniform(1.0, 100.0)) for lid in net.links}
        xs = np.array([node.x for node in net.nodes.values()])
        ys = np.array([node.y for node in net.nodes.values()])
        cheb = np.maximum(
            np.abs(xs[:, None] - xs[None, :]), np.abs(ys[:, None] - ys[None, :])
        )
        np.fill_diagonal(cheb, np.inf)
        hierarchy = build_hierarchy(
            net, [float(cheb.min()) / 2, 30000.0], [n, math.inf]
        )
        tables = flood_upstream(
            hierarchy, net, lambda link, off: weights[link.id], generation=0
        )
        for target in net.nodes:
            exact = dijkstra_to(net, weights, target)
            column = tables[0][target]
            assert set(column) == {m for m in exact if m != target}
            for node, entry in column.items():
                assert entry.cost == exact[node]
                checked += 1
    _verdict("flood equals exact shortest paths", True, f"{checked} entries exact")


def test_reservation_ledger_interval_oracle():
    """Slot counts equal brute-force interval intersection after any history.

    1000 random register/deregister histories; deregistering only intervals
    that are actually registered must never trip the clamp counter.
    """
    rng = np.random.default_rng(29)
    for _ in range(1000):
        slot = float(rng.choice([30.0, 60.0, 90.0]))
        log = ReservationLog(link=0, slot_length=slot)
        live: list[tuple[float, float]] = []
        for _ in range(int(rng.integers(1, 40))):
            if live and rng.integers(0, 3) == 0:
                enter, exit_ = live.pop(int(rng.integers(0, len(live))))
                log.deregister(enter, exit_)
            else:
                enter = float(np.round(rng.uniform(0.0, 3000.0), 3))
                exit_ = enter + float(np.round(rng.uniform(0.001, 600.0), 3))
                live.append((enter, exit_))
                log.register(enter, exit_)
        assert log.clamp_count == 0
        horizon = max((x for _, x in live), default=slot) + slot
        k = 0
        while k * slot < horizon:
            lo, hi = k * slot, (k + 1) * slot
            want = sum(1 for enter, exit_ in live if enter < hi and exit_ > lo)
            assert log.expected_flow(lo + slot / 2) == want
            k += 1
    _verdict("reservation ledger interval oracle", True, "1000 histories, clamp 0")


def test_rerun_byte_identical_outputs(tmp_path):
    """Re-running a scenario reproduces every output file byte for byte."""
    names = ("vehicles.csv", "arrivals.csv", "links.csv", "summary.csv")
    for run in ("a", "b"):
        cfg = load_config(str(SCENARIOS / "dynsp_10min.yaml"))
        run_scenario(cfg, outputs=str(tmp_path / run))
    same = {
        name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in names
    }
    ok = all(same.values())
    _verdict("re-run byte-identical outputs", ok, str(same))
    assert ok, same
