"""Flat prefix-filter joins: the textual core and the geo-filtered baseline.

Both share :class:`Prepared` (rank-coded records with precomputed prefix
lengths and length bounds) and :class:`Kernel` (the posting-scan filters
and verification), which the grid and quadtree joins reuse as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from .model import (
    UNIFORM,
    GeoImage,
    JoinConfig,
    PairSet,
    UnsortedInputError,
    Vocabulary,
    VocabularyMismatchError,
    max_dis,
)
from .prefixfilter import (
    EPS,
    _ceil,
    overlap_threshold,
    prefix_bounds,
    suffix_filter,
    verify,
    weighted_overlap_threshold,
)

# Slack on the inline squared-distance test; verify() has the final word.
GEO_SLACK = 1e-9


@dataclass
class JoinStats:
    candidates: int = 0   # distinct pairs surfaced from postings after geo/length filters
    verified: int = 0     # pairs that survived positional/suffix filters
    results: int = 0
    index_entries: int = 0

    def add(self, other: "JoinStats"):
        self.candidates += other.candidates
        self.verified += other.verified
        self.results += other.results
        self.index_entries = max(self.index_entries, other.index_entries)


@dataclass(frozen=True)
class PostingEntry:
    image_id: int
    prefix_pos: int


def size_order_key(img: GeoImage):
    return (len(img.tokens), img.id)


def check_sorted(dataset: Sequence[GeoImage]):
    for prev, cur in zip(dataset, dataset[1:]):
        if size_order_key(prev) > size_order_key(cur):
            raise UnsortedInputError(
                f"records must be sorted by (token count, id); {prev.id} precedes {cur.id}"
            )


class Prepared:
    """Rank-coded view of a canonical dataset, indexed by position ``k``."""

    def __init__(self, dataset: Sequence[GeoImage], vocab: Vocabulary, config: JoinConfig,
                 maxdis: float):
        self.records = list(dataset)
        self.vocab = vocab
        self.config = config
        self.maxdis = maxdis
        self.weighted = vocab.scheme != UNIFORM
        self.ids = [r.id for r in self.records]
        self.xs = [r.x for r in self.records]
        self.ys = [r.y for r in self.records]
        rank_of = {t: e.rank for t, e in vocab.entries.items()}
        try:
            self.toks = [[rank_of[t] for t in r.tokens] for r in self.records]
        except KeyError as exc:
            raise VocabularyMismatchError(f"token {exc.args[0]} not in vocabulary") from None
        for k, tk in enumerate(self.toks):
            if tk != sorted(set(tk)):
                raise UnsortedInputError(f"record {self.ids[k]} is not canonicalized")
        gv = config.gamma_v
        self.radius = config.gamma_g * maxdis
        self.r2 = self.radius * self.radius * (1 + GEO_SLACK)
        n = len(self.records)
        # index_len is valid for a size-ordered probe/insert sweep; tier_len is the
        # index prefix measured in the record's own size, used by the quadtree join
        if not self.weighted:
            t = config.gamma_v_exact
            self.sizes = [len(tk) for tk in self.toks]
            longest = max(self.sizes, default=0)
            bounds = [prefix_bounds(m, t) for m in range(longest + 1)]
            self.probe_len = [bounds[m].probe_len for m in self.sizes]
            self.index_len = [bounds[m].index_len for m in self.sizes]
            self.tier_len = self.index_len
            lo = [_ceil(t * m) for m in range(longest + 1)]
            hi = [math.floor(Fraction(m) / t) for m in range(longest + 1)]
            self.size_lo = [lo[m] for m in self.sizes]
            self.size_hi = [hi[m] for m in self.sizes]
            self.alpha_tab = [overlap_threshold(s, 0, t) for s in range(2 * longest + 1)]
            self.cum = None
        else:
            w = vocab.rank_weights
            self.cum = []
            self.sizes = []
            self.probe_len = []
            self.tier_len = []
            for tk in self.toks:
                c = [0.0]
                for r in tk:
                    c.append(c[-1] + w[r])
                self.cum.append(c)
                self.sizes.append(c[-1])
                b = prefix_bounds(len(tk), gv, vocab.scheme, [w[r] for r in tk])
                self.probe_len.append(b.probe_len)
                self.tier_len.append(b.index_len)
            # weighted records are swept in token-count order, not weight order
            self.index_len = list(self.probe_len)
            self.size_lo = [gv * s - EPS * s for s in self.sizes]
            self.size_hi = [s / gv + EPS * s for s in self.sizes]
            self.alpha_tab = None
        assert len(self.sizes) == n


class Kernel:
    """Posting-list scan with the length, geo, positional and suffix filters.

    One probe record ``k`` owns an accumulator ``acc`` (overlap so far) and a
    ``dead`` set of disqualified candidates.  Callers pass a posting list
    with the ``[start, end)`` ranges of it to scan.
    """

    def __init__(self, prep: Prepared, stats: JoinStats | None = None):
        self.prep = prep
        self.stats = stats if stats is not None else JoinStats()
        cfg = prep.config
        self.positional = cfg.positional_filter
        self.suffix_depth = cfg.suffix_depth if cfg.suffix_filter else 0

    def scan(self, k: int, i: int, plist, ranges, acc: dict, dead: set, geo: bool = True):
        p = self.prep
        sizes, size_lo, size_hi = p.sizes, p.size_lo[k], p.size_hi[k]
        xs, ys, r2 = p.xs, p.ys, p.r2
        px, py = xs[k], ys[k]
        xt = p.toks[k]
        nx = sizes[k]
        positional = self.positional
        sdepth = self.suffix_depth
        stats = self.stats
        if p.weighted:
            cum = p.cum
            cx = cum[k]
            wv = cx[i + 1] - cx[i]
            rest_x = nx - cx[i + 1]
            gv = p.config.gamma_v
        else:
            alpha_tab = p.alpha_tab
            rest_x = nx - i - 1
        weighted = p.weighted
        toks = p.toks
        for start, end in ranges:
            for yk, j in plist[start:end]:
                if yk in dead:
                    continue
                ny = sizes[yk]
                if ny < size_lo or ny > size_hi:
                    continue
                if geo:
                    dx = xs[yk] - px
                    dy = ys[yk] - py
                    if dx * dx + dy * dy > r2:
                        continue
                o = acc.get(yk)
                if o is None:
                    stats.candidates += 1
                    o = 0
                if not positional:
                    acc[yk] = o + 1
                    continue
                if weighted:
                    cy = cum[yk]
                    alpha = weighted_overlap_threshold(nx, ny, gv)
                    rest_y = ny - cy[j + 1]
                    ok = o + wv + (rest_x if rest_x < rest_y else rest_y) >= alpha
                    if ok and sdepth and o == 0:
                        ok = suffix_filter(xt, toks[yk], i, j, alpha, sdepth, cx, cy)
                    gain = wv
                else:
                    alpha = alpha_tab[nx + ny]
                    rest_y = ny - j - 1
                    ok = o + 1 + (rest_x if rest_x < rest_y else rest_y) >= alpha
                    if ok and sdepth and o == 0:
                        ok = suffix_filter(xt, toks[yk], i, j, alpha, sdepth)
                    gain = 1
                if ok:
                    acc[yk] = o + gain
                else:
                    acc[yk] = o
                    dead.add(yk)

    def finish(self, k: int, acc: dict, dead: set, out: list):
        """Verify the surviving candidates of probe ``k``."""
        p = self.prep
        rec = p.records
        a = rec[k]
        stats = self.stats
        vocab, cfg, maxdis = p.vocab, p.config, p.maxdis
        for yk in acc:
            if yk in dead:
                continue
            stats.verified += 1
            if verify(a, rec[yk], vocab, cfg, maxdis):
                stats.results += 1
                out.append((p.ids[k], p.ids[yk]))


def _flat_join(prep: Prepared, geo: bool, stats: JoinStats) -> list:
    kernel = Kernel(prep, stats)
    postings: dict[int, list] = {}
    out: list = []
    entries = 0
    for k, xt in enumerate(prep.toks):
        acc: dict = {}
        dead: set = set()
        ix = prep.index_len[k]
        for i in range(prep.probe_len[k]):
            v = xt[i]
            plist = postings.get(v)
            if plist:
                kernel.scan(k, i, plist, ((0, len(plist)),), acc, dead, geo)
            # probe before insert: each unordered pair is seen once
            if i < ix:
                if plist is None:
                    plist = postings[v] = []
                plist.append((k, i))
                entries += 1
        if acc:
            kernel.finish(k, acc, dead, out)
    stats.index_entries = max(stats.index_entries, entries)
    return out


def ppjoin(dataset: Sequence[GeoImage], gamma_v, vocab: Vocabulary,
           config: JoinConfig | None = None, stats: JoinStats | None = None) -> PairSet:
    """All pairs with (weighted) Jaccard >= gamma_v, ignoring location.

    ``dataset`` must be canonicalized and sorted by (token count, id).
    """
    check_sorted(dataset)
    base = config or JoinConfig(weight_scheme=vocab.scheme)
    cfg = replace(base, gamma_g=1.0, gamma_v=gamma_v, weight_scheme=vocab.scheme,
                  max_dis_override=None)
    stats = stats if stats is not None else JoinStats()
    # the geo test is disabled, so any positive normaliser works
    prep = Prepared(dataset, vocab, cfg, math.inf)
    return PairSet.from_pairs(_flat_join(prep, geo=False, stats=stats))


def resolve_max_dis(dataset: Sequence[GeoImage], config: JoinConfig) -> float:
    return max_dis(dataset, config.max_dis_override)


def svs_join_b(dataset: Sequence[GeoImage], vocab: Vocabulary, config: JoinConfig,
               stats: JoinStats | None = None, maxdis: float | None = None) -> PairSet:
    """Prefix-filter join with the geographic test applied inside posting scans."""
    check_sorted(dataset)
    if maxdis is None:
        maxdis = resolve_max_dis(dataset, config)
    stats = stats if stats is not None else JoinStats()
    prep = Prepared(dataset, vocab, config, maxdis)
    return PairSet.from_pairs(_flat_join(prep, geo=True, stats=stats))
