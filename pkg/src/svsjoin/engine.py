"""One entry point that canonicalizes a raw dataset and runs any algorithm."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .grid import svs_join_g
from .join import JoinStats, size_order_key, svs_join_b
from .model import (
    GeoImage,
    JoinConfig,
    PairSet,
    Vocabulary,
    build_vocabulary,
    canonicalize,
    max_dis,
)
from .oracle import brute_force_join
from .quadtree import svs_join_q

ALGORITHMS = {
    "b": svs_join_b,
    "g": svs_join_g,
    "q": svs_join_q,
}


@dataclass
class Workload:
    """A dataset ready for joining: canonical, size-sorted, with its vocabulary."""

    records: list[GeoImage]
    vocab: Vocabulary
    maxdis: float


def prepare(dataset: Sequence[GeoImage], config: JoinConfig) -> Workload:
    ids = set()
    for r in dataset:
        if r.id in ids:
            raise ValueError(f"duplicate record id {r.id}")
        ids.add(r.id)
    vocab = build_vocabulary(dataset, config.weight_scheme)
    records = sorted((canonicalize(r, vocab) for r in dataset), key=size_order_key)
    if len(records) >= 2 or config.max_dis_override is not None:
        maxdis = max_dis(records, config.max_dis_override)
    else:
        maxdis = 1.0   # no pairs to normalise
    return Workload(records, vocab, maxdis)


def run(work: Workload, config: JoinConfig, stats: JoinStats | None = None) -> PairSet:
    if config.algorithm == "oracle":
        result = brute_force_join(work.records, work.vocab, config, work.maxdis)
        if stats is not None:
            stats.results = len(result)
        return result
    return ALGORITHMS[config.algorithm](work.records, work.vocab, config, stats, work.maxdis)


def svs_join(dataset: Sequence[GeoImage], config: JoinConfig,
             stats: JoinStats | None = None) -> PairSet:
    """Join raw records (any token order, duplicates allowed) under ``config``."""
    if len(dataset) < 2:
        return PairSet()
    return run(prepare(dataset, config), config, stats)
