"""Deterministic synthetic geo-image corpora.

Points come from a mixture of isotropic Gaussians, token counts are
Poisson, and token ids follow a Zipf law over the vocabulary.  A fraction
of records are perturbed near-copies of earlier ones so joins at the
default thresholds return something.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GeoImage


@dataclass(frozen=True)
class GenSpec:
    n_records: int = 3000
    vocab_size: int = 20000
    tokens_per_record: float = 60
    token_skew: float = 1.0
    n_clusters: int = 20
    cluster_sigma: float = 40.0
    extent: float = 1000.0
    seed: int = 42
    near_dup_rate: float = 0.05
    near_dup_noise: float = 0.1      # fraction of tokens replaced in a near-copy
    near_dup_jitter: float = 5.0     # spatial spread of a near-copy

    def validate(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be at least 1")
        if self.n_records < 0 or self.n_clusters < 1 or self.tokens_per_record <= 0:
            raise ValueError("counts must be positive")
        if self.cluster_sigma < 0 or self.near_dup_jitter < 0 or self.extent <= 0:
            raise ValueError("spreads must be non-negative and extent positive")
        if not 0 <= self.near_dup_rate <= 1 or not 0 <= self.near_dup_noise <= 1:
            raise ValueError("near-duplicate rates must lie in [0, 1]")


def _zipf_probs(vocab_size: int, skew: float) -> np.ndarray:
    p = np.arange(1, vocab_size + 1, dtype=float) ** -skew
    return p / p.sum()


def _fill(rng, cdf, chosen: dict, count: int, vocab_size: int) -> list[int]:
    """Top ``chosen`` (an ordered set) up to ``count`` distinct Zipf-drawn ids."""
    while len(chosen) < count:
        need = count - len(chosen)
        draws = np.searchsorted(cdf, rng.random(2 * need + 8), side="right")
        for t in np.minimum(draws, vocab_size - 1).tolist():
            chosen.setdefault(t, None)
            if len(chosen) == count:
                break
    return list(chosen)


def generate(spec: GenSpec) -> list[GeoImage]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    cdf = np.cumsum(_zipf_probs(spec.vocab_size, spec.token_skew))
    centers = rng.uniform(0, spec.extent, size=(spec.n_clusters, 2))
    out: list[GeoImage] = []
    for i in range(spec.n_records):
        if out and rng.random() < spec.near_dup_rate:
            src = out[int(rng.integers(len(out)))]
            x, y = np.clip(np.array([src.x, src.y]) + rng.normal(0, spec.near_dup_jitter, 2),
                           0, spec.extent)
            keep = [t for t in src.tokens if rng.random() >= spec.near_dup_noise]
            tokens = _fill(rng, cdf, dict.fromkeys(keep), len(src.tokens), spec.vocab_size)
        else:
            c = centers[int(rng.integers(spec.n_clusters))]
            x, y = np.clip(c + rng.normal(0, spec.cluster_sigma, 2), 0, spec.extent)
            count = min(max(int(rng.poisson(spec.tokens_per_record)), 1), spec.vocab_size)
            tokens = _fill(rng, cdf, {}, count, spec.vocab_size)
        out.append(GeoImage(i, float(x), float(y), tuple(tokens)))
    return out
