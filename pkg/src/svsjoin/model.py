"""Records, vocabulary, configuration and the two similarity measures.

A join pairs records that are close in the plane *and* share enough
visual words.  Closeness is the Euclidean distance normalised by the
dataset diameter; word similarity is (weighted) Jaccard.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

UNIFORM = "uniform"
IDF = "idf"
WEIGHT_SCHEMES = (UNIFORM, IDF)
ALGORITHMS = ("oracle", "b", "g", "q")


class SVSJoinError(Exception):
    """Base class for join errors."""


class VocabularyMismatchError(SVSJoinError):
    pass


class DegenerateDiameterError(SVSJoinError):
    pass


class UnsortedInputError(SVSJoinError):
    pass


class ConfigError(SVSJoinError, ValueError):
    pass


@dataclass(frozen=True)
class GeoImage:
    id: int
    x: float
    y: float
    tokens: tuple[int, ...] = ()

    def __post_init__(self):
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(self.tokens))

    @cached_property
    def token_set(self) -> frozenset:
        return frozenset(self.tokens)


@dataclass(frozen=True)
class VocabEntry:
    df: int
    weight: float
    rank: int


@dataclass(frozen=True)
class Vocabulary:
    """Token statistics plus the global ordering (rarest first)."""

    entries: dict[int, VocabEntry]
    n_docs: int
    scheme: str = UNIFORM
    # token id at each rank; weights indexed by rank
    by_rank: tuple[int, ...] = field(default=(), repr=False)
    rank_weights: tuple[float, ...] = field(default=(), repr=False)

    def rank(self, token: int) -> int:
        try:
            return self.entries[token].rank
        except KeyError:
            raise VocabularyMismatchError(f"token {token} not in vocabulary") from None

    def weight(self, token: int) -> float:
        return self.entries[token].weight

    def __len__(self):
        return len(self.entries)

    def __contains__(self, token):
        return token in self.entries


def idf_weight(n_docs: int, df: int) -> float:
    """Smoothed idf; strictly positive even for a token in every record."""
    return math.log((n_docs + 1) / (df + 1)) + 1.0


def build_vocabulary(dataset: Sequence[GeoImage], scheme: str = UNIFORM) -> Vocabulary:
    if scheme not in WEIGHT_SCHEMES:
        raise ConfigError(f"unknown weight scheme {scheme!r}")
    df = Counter()
    for img in dataset:
        df.update(set(img.tokens))
    order = sorted(df, key=lambda t: (df[t], t))
    n_docs = len(dataset)
    entries = {}
    weights = []
    for rank, tok in enumerate(order):
        w = 1.0 if scheme == UNIFORM else idf_weight(n_docs, df[tok])
        entries[tok] = VocabEntry(df[tok], w, rank)
        weights.append(w)
    return Vocabulary(entries, n_docs, scheme, tuple(order), tuple(weights))


def canonicalize(img: GeoImage, vocab: Vocabulary) -> GeoImage:
    """Deduplicate tokens and sort them rarest first."""
    ranked = sorted({vocab.rank(t) for t in img.tokens})
    by_rank = vocab.by_rank
    return replace(img, tokens=tuple(by_rank[r] for r in ranked))


def euc_dis(a: GeoImage, b: GeoImage) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Andrew's monotone chain. Counter-clockwise, no collinear points."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def diameter(points: Iterable[tuple[float, float]]) -> float:
    """Largest pairwise distance, by rotating calipers over the hull."""
    hull = convex_hull(points)
    h = len(hull)
    if h < 2:
        return 0.0
    if h == 2:
        return math.dist(hull[0], hull[1])
    best = 0.0
    j = 1
    for i in range(h):
        p, q = hull[i], hull[(i + 1) % h]
        # advance the antipodal pointer while the triangle area grows
        while abs(_cross(p, q, hull[(j + 1) % h])) > abs(_cross(p, q, hull[j])):
            j = (j + 1) % h
        best = max(best, math.dist(p, hull[j]), math.dist(q, hull[j]))
    return best


def max_dis(dataset: Sequence[GeoImage], override: float | None = None) -> float:
    if override is not None:
        if not override > 0:
            raise ConfigError("max_dis override must be positive")
        return float(override)
    d = diameter((img.x, img.y) for img in dataset)
    if d <= 0:
        raise DegenerateDiameterError(
            "all points coincide; distance normalisation is undefined (set max_dis)"
        )
    return d


def geo_dist(a: GeoImage, b: GeoImage, maxdis: float) -> float:
    return euc_dis(a, b) / maxdis


def geo_sim(a: GeoImage, b: GeoImage, maxdis: float) -> float:
    return 1.0 - geo_dist(a, b, maxdis)


def vis_sim(a: GeoImage, b: GeoImage, vocab: Vocabulary) -> float:
    """Weighted Jaccard similarity of the two token sets (0 if both empty)."""
    sa, sb = a.token_set, b.token_set
    if vocab.scheme == UNIFORM:
        inter = len(sa.intersection(sb))
        union = len(sa) + len(sb) - inter
        return inter / union if union else 0.0
    # summing in rank order keeps the value independent of set iteration order
    rank = vocab.rank
    inter = sum(vocab.weight(t) for t in sorted(sa & sb, key=rank))
    union = sum(vocab.weight(t) for t in sorted(sa | sb, key=rank))
    return inter / union if union else 0.0


@dataclass(frozen=True)
class JoinConfig:
    gamma_g: float = 0.06
    gamma_v: float = 0.7
    weight_scheme: str = UNIFORM
    algorithm: str = "q"
    suffix_filter: bool = False
    max_dis_override: float | None = None
    leaf_capacity: int = 64
    positional_filter: bool = True
    bound_pruning: bool = True
    suffix_depth: int = 2
    max_depth: int | None = None
    grid_cell_cap: int = 2**26
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.gamma_v <= 1:
            raise ConfigError(f"gamma_v must be in (0, 1], got {self.gamma_v}")
        if not 0 <= self.gamma_g <= 1:
            raise ConfigError(f"gamma_g must be in [0, 1], got {self.gamma_g}")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise ConfigError(f"unknown weight scheme {self.weight_scheme!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.leaf_capacity < 1:
            raise ConfigError("leaf_capacity must be positive")
        if self.max_dis_override is not None and not self.max_dis_override > 0:
            raise ConfigError("max_dis override must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be non-negative")

    @property
    def gamma_v_exact(self) -> Fraction:
        # decimal reading of the threshold, so 0.1 means 1/10 and not the binary float
        return Fraction(repr(float(self.gamma_v)))


@dataclass(frozen=True)
class PairSet:
    """Canonical join output: (a, b) with a < b, sorted, no duplicates."""

    pairs: tuple[tuple[int, int], ...] = ()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "PairSet":
        norm = set()
        for a, b in pairs:
            if a == b:
                raise ValueError(f"self pair ({a}, {a})")
            norm.add((a, b) if a < b else (b, a))
        return cls(tuple(sorted(norm)))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __contains__(self, pair):
        return pair in set(self.pairs)
