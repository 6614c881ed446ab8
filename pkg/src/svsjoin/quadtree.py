"""Quadtree partition with Z-order leaf codes and one global inverted index.

Each token's posting list is ordered by (leaf Z-order key, record id), so a
leaf's postings form one contiguous ``[p_start, p_end)`` range.  A probe
scans its own leaf up to its own position and the earlier (smaller-key)
leaves that lie within the distance threshold.
"""
from __future__ import annotations

import math
import os
from bisect import bisect_left
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .join import GEO_SLACK, JoinStats, Kernel, Prepared, check_sorted, resolve_max_dis
from .model import ConfigError, GeoImage, JoinConfig, PairSet, Vocabulary

MAX_TREE_DEPTH = 30


def _spread(v: int) -> int:
    """Move bit i of a 32-bit value to bit 2i."""
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    return (v | (v << 1)) & 0x5555555555555555


def _compact(v: int) -> int:
    v &= 0x5555555555555555
    v = (v | (v >> 1)) & 0x3333333333333333
    v = (v | (v >> 2)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF0000FFFF
    return (v | (v >> 16)) & 0xFFFFFFFF


def morton_encode(col: int, row: int, depth: int) -> int:
    """Interleave bits; the digit per level is 2*row_bit + col_bit, top level first."""
    if not (0 <= depth <= 32 and 0 <= col < 1 << depth and 0 <= row < 1 << depth):
        raise ValueError(f"({col}, {row}) out of range at depth {depth}")
    return _spread(col) | (_spread(row) << 1)


def morton_decode(code: int, depth: int) -> tuple[int, int]:
    if not (0 <= depth <= 32 and 0 <= code < 1 << (2 * depth)):
        raise ValueError(f"code {code} out of range at depth {depth}")
    return _compact(code), _compact(code >> 1)


def default_max_depth(gamma_g: float) -> int:
    """floor(log2(1 / gamma_g)), computed without log rounding."""
    d = 0
    while d < MAX_TREE_DEPTH and gamma_g * (1 << (d + 1)) <= 1:
        d += 1
    return d


@dataclass(eq=False)
class QuadNode:
    depth: int
    morton: int
    x0: float
    y0: float
    side: float
    children: list | None = None
    records: list = field(default_factory=list)   # dataset positions, by id
    key: int = 0                                   # Z-order key at the tree's max depth

    @property
    def is_leaf(self):
        return self.children is None

    def contains(self, x, y):
        return self.x0 <= x <= self.x0 + self.side and self.y0 <= y <= self.y0 + self.side

    def child_index(self, x: float, y: float) -> int:
        half = self.side / 2
        col = min(max(math.floor((x - self.x0) / half), 0), 1)
        row = min(max(math.floor((y - self.y0) / half), 0), 1)
        return 2 * row + col

    def rect_distance(self, other: "QuadNode") -> float:
        dx = max(0.0, other.x0 - (self.x0 + self.side), self.x0 - (other.x0 + other.side))
        dy = max(0.0, other.y0 - (self.y0 + self.side), self.y0 - (other.y0 + other.side))
        return math.hypot(dx, dy)

    def point_distance(self, x: float, y: float) -> float:
        dx = max(0.0, self.x0 - x, x - (self.x0 + self.side))
        dy = max(0.0, self.y0 - y, y - (self.y0 + self.side))
        return math.hypot(dx, dy)


@dataclass
class QuadTree:
    root: QuadNode
    max_depth: int
    radius: float                 # gamma_g * max_dis in raw units
    leaves: list[QuadNode]        # Z-order
    leaf_of: list[QuadNode]       # per dataset position
    leaf_index: list[int]         # per dataset position, index into ``leaves``
    boxes: list = field(default_factory=list)   # per leaf, (x0, y0, x1, y1)

    def locate(self, x: float, y: float) -> QuadNode:
        node = self.root
        while node.children is not None:
            node = node.children[node.child_index(x, y)]
        return node


def build_quadtree(dataset: Sequence[GeoImage], gamma_g: float, maxdis: float,
                   leaf_capacity: int = 64, max_depth: int | None = None) -> QuadTree:
    if gamma_g <= 0:
        raise ConfigError("the quadtree needs gamma_g > 0")
    if max_depth is None:
        max_depth = default_max_depth(gamma_g)
    if dataset:
        x0 = min(r.x for r in dataset)
        y0 = min(r.y for r in dataset)
        side = max(max(r.x for r in dataset) - x0, max(r.y for r in dataset) - y0)
    else:
        x0 = y0 = side = 0.0
    if side <= 0:
        max_depth = 0
    root = QuadNode(0, 0, x0, y0, side, records=list(range(len(dataset))))
    stack = [root]
    while stack:
        node = stack.pop()
        if len(node.records) <= leaf_capacity or node.depth >= max_depth:
            continue
        half = node.side / 2
        node.children = [
            QuadNode(node.depth + 1, (node.morton << 2) | q,
                     node.x0 + half * (q & 1), node.y0 + half * (q >> 1), half)
            for q in range(4)
        ]
        for p in node.records:
            r = dataset[p]
            node.children[node.child_index(r.x, r.y)].records.append(p)
        node.records = []
        stack.extend(node.children)
    leaves = []
    leaf_of: list = [None] * len(dataset)
    stack = [root]
    while stack:
        node = stack.pop()
        node.key = node.morton << (2 * (max_depth - node.depth))
        if node.children is None:
            node.records.sort(key=lambda p: dataset[p].id)
            leaves.append(node)
            for p in node.records:
                leaf_of[p] = node
        else:
            stack.extend(reversed(node.children))
    leaves.sort(key=lambda n: n.key)
    pos_of = {id(leaf): i for i, leaf in enumerate(leaves)}
    leaf_index = [pos_of[id(leaf)] for leaf in leaf_of]
    boxes = [(n.x0, n.y0, n.x0 + n.side, n.y0 + n.side) for n in leaves]
    return QuadTree(root, max_depth, gamma_g * maxdis, leaves, leaf_of, leaf_index, boxes)


def near_leaves(tree: QuadTree, leaf: QuadNode) -> list[QuadNode]:
    """Every other leaf whose region lies within the distance threshold of ``leaf``."""
    limit = tree.radius * (1 + GEO_SLACK)
    out = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node is leaf or node.rect_distance(leaf) > limit:
            continue
        if node.children is None:
            out.append(node)
        else:
            stack.extend(node.children)
    out.sort(key=lambda n: n.key)
    return out


def leaf_neighbors(tree: QuadTree, leaf: QuadNode) -> list[QuadNode]:
    """Near leaves that come earlier in Z-order."""
    return [n for n in near_leaves(tree, leaf) if n.key < leaf.key]


@dataclass
class GlobalIndex:
    """Global postings over probe prefixes, ordered by (leaf Z-order, id).

    Tier 0 holds each record's index-prefix tokens and tier 1 the rest of
    its probe prefix.  ``lists[t][v]`` pairs token ``v``'s tier-``t``
    posting list with the Z-order leaf index of each posting; the latter is
    non-decreasing, so a run of consecutive leaves maps to one slice found
    by bisection.
    """

    lists: tuple[dict, dict] = field(default_factory=lambda: ({}, {}))
    zpos: dict = field(default_factory=dict)   # position -> rank in insertion order

    @property
    def postings(self) -> tuple[dict, dict]:
        return tuple({v: pl for v, (pl, _) in tier.items()} for tier in self.lists)

    @property
    def leafpos(self) -> tuple[dict, dict]:
        return tuple({v: lp for v, (_, lp) in tier.items()} for tier in self.lists)

    def insert(self, k: int, prep: Prepared, leaf_index: int):
        xt = prep.toks[k]
        tl = prep.tier_len[k]
        self.zpos[k] = len(self.zpos)
        for i in range(prep.probe_len[k]):
            tier = self.lists[0 if i < tl else 1]
            v = xt[i]
            entry = tier.get(v)
            if entry is None:
                entry = tier[v] = ([], [])
            entry[0].append((k, i))
            entry[1].append(leaf_index)

    def node_ranges(self, rank: int, tier: int = 0) -> dict[int, tuple[int, int]]:
        """leaf index -> (p_start, p_end) within the token's posting list."""
        lp = self.lists[tier].get(rank, ((), ()))[1]
        out = {}
        for e, leaf in enumerate(lp):
            if leaf in out:
                out[leaf] = (out[leaf][0], e + 1)
            else:
                out[leaf] = (e, e + 1)
        return out

    def node_range(self, rank: int, leaf_index: int, tier: int = 0) -> tuple[int, int]:
        lp = self.lists[tier].get(rank, ((), ()))[1]
        s = bisect_left(lp, leaf_index)
        return s, bisect_left(lp, leaf_index + 1, s)

    def position(self, k: int, rank: int, tier: int = 0) -> int:
        """Where record ``k`` sits, or would be inserted, in a tier list of ``rank``."""
        zpos = self.zpos
        plist = self.lists[tier].get(rank, ((), ()))[0]
        return bisect_left(plist, zpos[k], key=lambda en: zpos[en[0]])

    def entries(self) -> int:
        return sum(len(pl) for tier in self.lists for pl, _ in tier.values())


@dataclass
class TokenMaxWeights:
    """Largest weight a token contributes, over the dataset and per leaf."""

    overall: dict[int, float]             # rank -> weight
    per_leaf: list[dict[int, float]]      # leaf index -> rank -> weight

    def leaf(self, rank: int, leaf_index: int) -> float:
        return self.per_leaf[leaf_index].get(rank, 0.0)


def token_max_weights(prep: Prepared, tree: QuadTree) -> TokenMaxWeights:
    # a token's weight does not depend on the record holding it, so the
    # per-leaf maximum is the weight itself wherever the token occurs
    w = prep.vocab.rank_weights
    per_leaf: list = [{} for _ in tree.leaves]
    overall: dict = {}
    for k, xt in enumerate(prep.toks):
        mine = per_leaf[tree.leaf_index[k]]
        for r in xt:
            mine[r] = overall[r] = w[r]
    return TokenMaxWeights(overall, per_leaf)


def build_global_index(prep: Prepared, tree: QuadTree, order: Sequence[int]) -> GlobalIndex:
    """Append every record's probe prefix in Z-order, split into the two tiers."""
    index = GlobalIndex()
    for k in order:
        index.insert(k, prep, tree.leaf_index[k])
    return index


RUN_GAP = 0


def _runs(indices: list[int], gap: int = 0) -> list[list[int]]:
    """Group ascending leaf indices into runs, bridging up to ``gap`` missing leaves."""
    runs: list = []
    for i in indices:
        if runs and i - runs[-1][1] <= gap + 1:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    return runs


def join_search(k: int, prep: Prepared, tree: QuadTree, index: GlobalIndex,
                neighbors: list, kernel: Kernel, out: list, complete: bool = False):
    """All qualifying pairs of record ``k`` with records earlier in Z-order.

    ``neighbors[li]`` lists the Z-order indices of the earlier leaves near
    leaf ``li``.  Leaves out of range of the probe point itself are dropped,
    and the rest are scanned as runs of Z-consecutive leaves.  The run that
    ends at the probe's own leaf stops where the probe is (or would be)
    inserted: the list end while the index is still growing, or a bisection
    on insertion rank when ``complete`` is set.
    """
    xt = prep.toks[k]
    if not xt:
        return
    li = tree.leaf_index[k]
    px, py = prep.xs[k], prep.ys[k]
    limit = tree.radius * (1 + GEO_SLACK)
    lim2 = limit * limit
    boxes = tree.boxes
    near = []
    for n in neighbors[li]:
        x0, y0, x1, y1 = boxes[n]
        dx = x0 - px if px < x0 else (px - x1 if px > x1 else 0.0)
        dy = y0 - py if py < y0 else (py - y1 if py > y1 else 0.0)
        if dx * dx + dy * dy <= lim2:
            near.append(n)
    near.append(li)
    runs = [(a, b + 1) for a, b in _runs(near, RUN_GAP)]
    own_lo = runs.pop()[0]
    tl = prep.tier_len[k]
    # the remaining-score bound reaches the requirement exactly over the probe prefix
    stop = prep.probe_len[k] if prep.config.bound_pruning else len(xt)
    acc: dict = {}
    dead: set = set()
    zpos = index.zpos
    zk = zpos[k] if complete else 0
    scan = kernel.scan
    both = index.lists
    first = both[:1]
    for i in range(stop):
        v = xt[i]
        # tier 1 entries only pair up with the probe's own index prefix
        for lists in (both if i < tl else first):
            entry = lists.get(v)
            if entry is None:
                continue
            plist, lp = entry
            last = lp[-1]
            s = 0
            ranges = []
            for a, b in runs:
                if a > last:
                    break
                s = bisect_left(lp, a, s)
                e = bisect_left(lp, b, s)
                if e > s:
                    ranges.append((s, e))
                s = e
            if own_lo <= last:
                s = bisect_left(lp, own_lo, s)
                if complete:
                    os_ = bisect_left(lp, li, s)
                    oe = bisect_left(lp, li + 1, os_)
                    e = bisect_left(plist, zk, os_, oe, key=lambda en: zpos[en[0]])
                else:
                    e = len(plist)
                if e > s:
                    ranges.append((s, e))
            if ranges:
                scan(k, i, plist, ranges, acc, dead)
    if acc:
        kernel.finish(k, acc, dead, out)


_WORKER: dict = {}


def _search_chunk(chunk):
    w = _WORKER
    stats = JoinStats()
    kernel = Kernel(w["prep"], stats)
    out: list = []
    for k in chunk:
        join_search(k, w["prep"], w["tree"], w["index"], w["neighbors"], kernel, out, True)
    return out, stats


def svs_join_q(dataset: Sequence[GeoImage], vocab: Vocabulary, config: JoinConfig,
               stats: JoinStats | None = None, maxdis: float | None = None) -> PairSet:
    """Quadtree + global index join."""
    check_sorted(dataset)
    if maxdis is None:
        maxdis = resolve_max_dis(dataset, config)
    stats = stats if stats is not None else JoinStats()
    tree = build_quadtree(dataset, config.gamma_g, maxdis, config.leaf_capacity, config.max_depth)
    prep = Prepared(dataset, vocab, config, maxdis)
    order = sorted(range(len(dataset)), key=lambda p: (tree.leaf_of[p].key, prep.ids[p]))
    pos_of = {id(leaf): i for i, leaf in enumerate(tree.leaves)}
    neighbors = [[pos_of[id(n)] for n in leaf_neighbors(tree, leaf)] for leaf in tree.leaves]
    out: list = []
    threads = config.threads
    if threads > 1 and len(order) > threads and "fork" in _fork_methods():
        import multiprocessing as mp

        index = build_global_index(prep, tree, order)
        _WORKER.update(prep=prep, tree=tree, index=index, neighbors=neighbors)
        chunks = [order[c::threads] for c in range(threads)]
        try:
            with ProcessPoolExecutor(threads, mp_context=mp.get_context("fork")) as ex:
                for part, st in ex.map(_search_chunk, chunks):
                    out.extend(part)
                    stats.candidates += st.candidates
                    stats.verified += st.verified
                    stats.results += st.results
        finally:
            _WORKER.clear()
    else:
        # probe then insert: the index holds exactly the records earlier in Z-order
        index = GlobalIndex()
        kernel = Kernel(prep, stats)
        leaf_index = tree.leaf_index
        for k in order:
            join_search(k, prep, tree, index, neighbors, kernel, out)
            index.insert(k, prep, leaf_index[k])
    stats.index_entries = max(stats.index_entries, index.entries())
    return PairSet.from_pairs(out)


def _fork_methods():
    import multiprocessing as mp

    return mp.get_all_start_methods() if os.name == "posix" else []
