"""Acceptance criteria 1-8.

Each test records one PASS/FAIL line, printed in the pytest terminal
summary (or directly when this file is run as a script).  Criterion 7 is
the 100K-record timing run and takes several minutes.
"""
import itertools
import math
import random
import statistics
import time
from dataclasses import replace
from decimal import ROUND_CEILING, Decimal
from fractions import Fraction

import pytest

from conftest import random_instance
from svsjoin.cli import main, parse_report
from svsjoin.datagen import GenSpec, generate
from svsjoin.engine import prepare, run
from svsjoin.grid import build_grid
from svsjoin.join import JoinStats, Prepared
from svsjoin.model import IDF, UNIFORM, GeoImage, JoinConfig, build_vocabulary, canonicalize
from svsjoin.prefixfilter import prefix_bounds
from svsjoin.quadtree import build_global_index, build_quadtree, morton_decode, morton_encode

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


# ---- criteria 1 and 6 share the same 200 instances

N_INSTANCES = 200
TIME_LIMIT_1 = 300.0


def instances():
    rng = random.Random(20240601)
    for i in range(N_INSTANCES):
        data = random_instance(rng, n=rng.randint(50, 500), vocab=rng.randint(10, 100))
        cfg = JoinConfig(
            gamma_g=rng.uniform(0.02, 0.3),
            gamma_v=rng.uniform(0.4, 0.9),
            weight_scheme=UNIFORM if i % 2 else IDF,
            suffix_filter=(i // 2) % 2 == 0,
            leaf_capacity=rng.choice([8, 32, 64]),
        )
        yield i, data, cfg


@pytest.fixture(scope="module")
def workloads():
    return [(i, prepare(data, cfg), cfg) for i, data, cfg in instances()]


def test_criterion_1_oracle_equivalence(workloads):
    t0 = time.perf_counter()
    bad = []
    for i, w, cfg in workloads:
        ref = run(w, replace(cfg, algorithm="oracle"))
        for algo in ("b", "g", "q"):
            if run(w, replace(cfg, algorithm=algo)) != ref:
                bad.append((i, algo))
    elapsed = time.perf_counter() - t0
    schemes = {cfg.weight_scheme for _, _, cfg in workloads}
    suffix = {cfg.suffix_filter for _, _, cfg in workloads}
    ok = not bad and elapsed < TIME_LIMIT_1 and schemes == {UNIFORM, IDF} and suffix == {True, False}
    record(1, ok, f"{len(workloads)} instances x 3 algorithms, {len(bad)} mismatches {bad[:5]}, "
                  f"{elapsed:.1f}s (limit {TIME_LIMIT_1:.0f}s)")


def test_criterion_6_pruning_safety(workloads):
    bad = []
    for i, w, cfg in workloads:
        full = replace(cfg, suffix_filter=True, positional_filter=True, bound_pruning=True)
        for algo in ("b", "g", "q"):
            base_stats = JoinStats()
            base = run(w, replace(full, algorithm=algo), base_stats)
            variants = {
                "positional": replace(full, algorithm=algo, positional_filter=False),
                "suffix": replace(full, algorithm=algo, suffix_filter=False),
            }
            if algo == "q":
                variants["maxweight"] = replace(full, algorithm=algo, bound_pruning=False)
            for name, vcfg in variants.items():
                st = JoinStats()
                if run(w, vcfg, st) != base:
                    bad.append((i, algo, name, "pairs"))
                # filters cut verifications; the bound cuts admitted candidates
                metric = "candidates" if name == "maxweight" else "verified"
                if getattr(base_stats, metric) > getattr(st, metric):
                    bad.append((i, algo, name, metric))
    record(6, not bad, f"{len(workloads)} instances, filters on vs off, {len(bad)} violations {bad[:5]}")


# ---- criterion 2

def test_criterion_2_prefix_principle():
    universe = range(8)
    subsets = [frozenset(c) for m in range(1, 9) for c in itertools.combinations(universe, m)]
    # two global orders: by id, and a fixed shuffle
    shuffled = list(universe)
    random.Random(3).shuffle(shuffled)
    orders = [list(universe), shuffled]
    checked = violations = 0
    for order in orders:
        rank = {t: r for r, t in enumerate(order)}
        canon = {s: sorted(s, key=rank.get) for s in subsets}
        for t in (0.5, 0.7, 0.9):
            for a in subsets:
                for b in subsets:
                    if Fraction(len(a & b), len(a | b)) < Fraction(repr(t)):
                        continue
                    checked += 1
                    pa = canon[a][:prefix_bounds(len(a), t).probe_len]
                    pb = canon[b][:prefix_bounds(len(b), t).probe_len]
                    if not set(pa) & set(pb):
                        violations += 1
    record(2, violations == 0 and checked > 0,
           f"{checked} qualifying ordered pairs over 2 token orders x 3 thresholds, {violations} violations")


# ---- criterion 3

PREFIX_CASES = [
    (1, 0.1), (1, 1.0), (2, 0.5), (3, 0.9), (4, 0.75), (5, 0.7), (7, 0.3), (10, 0.5),
    (10, 0.7), (10, 0.8), (12, 0.6), (20, 0.95), (25, 0.4), (33, 0.66), (40, 0.85),
    (60, 0.7), (64, 0.5), (80, 0.9), (99, 0.99), (100, 0.6),
]


def independent_bounds(n, t):
    # decimal ceiling for the probe prefix, integer ceiling for the index prefix
    probe = n - int((Decimal(str(t)) * n).to_integral_value(rounding=ROUND_CEILING)) + 1
    d = Decimal(str(t)).as_integer_ratio()
    num, den = 2 * d[0] * n, d[0] + d[1]
    index = n - (-(-num // den)) + 1
    return probe, index


def test_criterion_3_prefix_fixtures():
    b = prefix_bounds(5, 0.7)
    mism = [] if (b.probe_len, b.index_len) == (2, 1) else [(5, 0.7)]
    for n, t in PREFIX_CASES:
        got = prefix_bounds(n, t)
        if (got.probe_len, got.index_len) != independent_bounds(n, t):
            mism.append((n, t, got, independent_bounds(n, t)))
    record(3, not mism and len(PREFIX_CASES) == 20,
           f"prefix_bounds(5, 0.7) = ({b.probe_len}, {b.index_len}); "
           f"{len(PREFIX_CASES)} table cases, {len(mism)} mismatches {mism[:3]}")


# ---- criterion 4

def test_criterion_4_grid_completeness():
    violations = close = 0
    for run_no in range(10):
        rng = random.Random(1000 + run_no)
        gg = rng.uniform(0.02, 0.3)
        w, h = rng.uniform(50, 500), rng.uniform(50, 500)
        corners = [GeoImage(0, 0.0, 0.0), GeoImage(1, w, h)]
        maxdis = math.hypot(w, h)
        grid = build_grid(corners, gg, maxdis)
        r = gg * maxdis
        side = grid.cell_side
        for _ in range(100_000):
            if rng.random() < 0.3:
                # start on a cell edge
                x1 = min(rng.randrange(grid.cols + 1) * side, w)
                y1 = rng.uniform(0, h)
            else:
                x1, y1 = rng.uniform(0, w), rng.uniform(0, h)
            ang, f = rng.uniform(0, 2 * math.pi), rng.uniform(0, 1.05)
            x2 = min(max(x1 + f * r * math.cos(ang), 0.0), w)
            y2 = min(max(y1 + f * r * math.sin(ang), 0.0), h)
            if math.hypot(x2 - x1, y2 - y1) / maxdis > gg:
                continue
            close += 1
            c1, r1 = grid.cell_of(grid.locate(x1, y1))
            c2, r2 = grid.cell_of(grid.locate(x2, y2))
            if abs(c1 - c2) > 1 or abs(r1 - r2) > 1:
                violations += 1
    record(4, violations == 0, f"10 runs x 100000 pairs, {close} within threshold, {violations} violations")


# ---- criterion 5

def _walk(node):
    yield node
    for c in node.children or ():
        yield from _walk(c)


def test_criterion_5_quadtree_structure():
    problems = []
    # Morton round trip for every code at every depth up to 12
    codes = 0
    for d in range(13):
        size = 1 << d
        top = 1 << (2 * d)
        rows = range(size)
        for c in range(size):
            enc = [morton_encode(c, r, d) for r in rows]
            if any(x >= top for x in enc) or [morton_decode(x, d) for x in enc] != [(c, r) for r in rows]:
                problems.append(("morton", d, c))
            codes += size
    rng = random.Random(5)
    datasets = {
        "uniform": [GeoImage(i, rng.random(), rng.random(), tuple(rng.sample(range(500), 12)))
                    for i in range(10_000)],
        "clustered": generate(GenSpec(n_records=10_000, vocab_size=2000, tokens_per_record=20)),
    }
    for name, data in datasets.items():
        cfg = JoinConfig(gamma_g=0.06, gamma_v=0.7)
        vocab = build_vocabulary(data)
        recs = sorted((canonicalize(r, vocab) for r in data), key=lambda r: (len(r.tokens), r.id))
        maxdis = 1.0 if name == "uniform" else None
        w = prepare(recs, replace(cfg, max_dis_override=maxdis))
        tree = build_quadtree(w.records, cfg.gamma_g, w.maxdis, leaf_capacity=16)
        area = sum(l.side ** 2 for l in tree.leaves)
        if not math.isclose(area, tree.root.side ** 2, rel_tol=1e-9):
            problems.append((name, "area"))
        for leaf in tree.leaves:
            for p in leaf.records:
                r = w.records[p]
                if not leaf.contains(r.x, r.y) or tree.locate(r.x, r.y) is not leaf:
                    problems.append((name, "location", r.id))
        inner = [n for n in _walk(tree.root) if not n.is_leaf]
        for n in inner:
            for q, ch in enumerate(n.children):
                if ch.side != n.side / 2 or ch.morton != (n.morton << 2) | q:
                    problems.append((name, "quadrant"))
        prep = Prepared(w.records, w.vocab, cfg, w.maxdis)
        order = sorted(range(len(w.records)), key=lambda p: (tree.leaf_of[p].key, prep.ids[p]))
        seq = [tree.leaf_index[k] for k in order]
        if seq != sorted(seq):
            problems.append((name, "contiguity"))
        index = build_global_index(prep, tree, order)
        for tier in (0, 1):
            for rank, (plist, _) in index.lists[tier].items():
                spans = sorted(index.node_ranges(rank, tier).items())
                pos = 0
                for leaf, (s, e) in spans:
                    if s != pos or any(tree.leaf_index[k] != leaf for k, _ in plist[s:e]):
                        problems.append((name, "tiling", rank))
                    pos = e
                if pos != len(plist):
                    problems.append((name, "tiling", rank))
    record(5, not problems, f"{codes} Morton codes (depth 0-12), 2 trees of 10000 records, "
                            f"{len(problems)} violations {problems[:3]}")


# ---- criterion 7

PERF_N = 100_000
PERF_REPEATS = 3


@pytest.mark.slow
def test_criterion_7_performance_trend():
    data = generate(GenSpec(n_records=PERF_N, tokens_per_record=60))
    cfg = JoinConfig(gamma_g=0.06, gamma_v=0.7, weight_scheme=UNIFORM)
    work = prepare(data, cfg)
    times, counts = {}, {}
    for algo in ("b", "g", "q"):
        samples = []
        for _ in range(PERF_REPEATS):
            t0 = time.perf_counter()
            counts[algo] = len(run(work, replace(cfg, algorithm=algo)))
            samples.append(time.perf_counter() - t0)
        times[algo] = statistics.median(samples)
    tb, tg, tq = times["b"], times["g"], times["q"]
    ok = tq < tg < tb and tq <= 0.5 * tb and len(set(counts.values())) == 1
    record(7, ok, f"median of {PERF_REPEATS} at n={PERF_N}: B {tb:.1f}s, G {tg:.1f}s, Q {tq:.1f}s, "
                  f"Q/B {tq / tb:.2f} (need Q < G < B and Q/B <= 0.50), results {counts}")


# ---- criterion 8

def test_criterion_8_sweep_shape(tmp_path):
    out = tmp_path / "bench.txt"
    code = main(["bench", "--sweep", "all", "--scale", "0.01", "--algos", "b,g,q", "-o", str(out)])
    rows = parse_report(out.read_text()) if code == 0 else []
    bad = []
    points = {}
    for row in rows:
        if row["status"] != "ok":
            bad.append((row["axis"], row["value"], row["algorithm"], row["status"]))
        points.setdefault((row["axis"], row["value"]), {})[row["algorithm"]] = row["results"]
    for key, per_algo in points.items():
        if set(per_algo) != {"b", "g", "q"} or len(set(per_algo.values())) != 1:
            bad.append(key)
    axes = {a for a, _ in points}
    ok = code == 0 and not bad and axes == {"size", "words", "gamma_g", "gamma_v"} and len(points) == 20
    record(8, ok, f"{len(rows)} rows over {len(axes)} axes, {len(points)} points, "
                  f"{len(bad)} inconsistent points {bad[:3]}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
