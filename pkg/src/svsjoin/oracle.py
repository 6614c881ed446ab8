"""Nested-loop reference join used as ground truth in tests."""
from __future__ import annotations

from typing import Sequence

from .model import GeoImage, JoinConfig, PairSet, Vocabulary, geo_dist, max_dis, vis_sim


def brute_force_join(dataset: Sequence[GeoImage], vocab: Vocabulary, config: JoinConfig,
                     maxdis: float | None = None) -> PairSet:
    if len(dataset) < 2:
        return PairSet()
    if maxdis is None:
        maxdis = max_dis(dataset, config.max_dis_override)
    out = []
    for i, a in enumerate(dataset):
        for b in dataset[i + 1:]:
            if geo_dist(a, b, maxdis) <= config.gamma_g and vis_sim(a, b, vocab) >= config.gamma_v:
                out.append((a.id, b.id))
    return PairSet.from_pairs(out)
