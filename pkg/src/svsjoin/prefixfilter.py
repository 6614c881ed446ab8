"""Prefix filtering: prefix lengths, overlap bounds and candidate filters.

Token lists handed to the filters must be ascending in the global order.
The join kernels rank-code every record, so a token *is* its rank.
Weighted bounds carry a small relative slack (``EPS``) so float rounding
can only keep a candidate, never drop one.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import UNIFORM, GeoImage, JoinConfig, Vocabulary, geo_dist, vis_sim

EPS = 1e-9


@dataclass(frozen=True)
class PrefixBounds:
    probe_len: int
    index_len: int


def _exact(gamma_v) -> Fraction:
    if isinstance(gamma_v, Fraction):
        return gamma_v
    return Fraction(repr(float(gamma_v)))


def _ceil(q: Fraction) -> int:
    return -((-q.numerator) // q.denominator)


def _weighted_prefix(weights: Sequence[float], need: float) -> int:
    """Shortest prefix whose remaining suffix weighs less than ``need``."""
    suffix = 0.0
    p = len(weights)
    while p > 0 and suffix + weights[p - 1] < need:
        p -= 1
        suffix += weights[p]
    return max(p, 1)


def prefix_bounds(token_count: int, gamma_v, scheme: str = UNIFORM,
                  weights: Sequence[float] | None = None) -> PrefixBounds:
    """Probe and index prefix lengths for a record of ``token_count`` tokens.

    For the idf scheme ``weights`` are the record's token weights in global
    order and lengths become weights: the probe prefix is the shortest one
    whose suffix weighs less than ``gamma_v`` of the record, the index
    prefix the shortest whose suffix weighs less than ``2 gamma_v / (1 +
    gamma_v)`` of it.
    """
    n = token_count
    if n <= 0:
        return PrefixBounds(0, 0)
    if scheme == UNIFORM:
        t = _exact(gamma_v)
        probe = n - _ceil(t * n) + 1
        index = n - _ceil(2 * t / (t + 1) * n) + 1
        return PrefixBounds(max(probe, 0), max(index, 0))
    if weights is None or len(weights) != n:
        raise ValueError("idf prefix needs one weight per token")
    total = math.fsum(weights)
    t = float(gamma_v)
    probe = _weighted_prefix(weights, t * total - EPS * total)
    index = _weighted_prefix(weights, 2 * t / (1 + t) * total - EPS * total)
    return PrefixBounds(probe, min(index, probe))


def overlap_threshold(len_a: int, len_b: int, gamma_v) -> int:
    """Minimum shared-token count for Jaccard >= gamma_v."""
    t = _exact(gamma_v)
    return _ceil(t / (1 + t) * (len_a + len_b))


def weighted_overlap_threshold(weight_a: float, weight_b: float, gamma_v: float) -> float:
    """Minimum shared weight for weighted Jaccard >= gamma_v, slack applied."""
    t = float(gamma_v)
    total = weight_a + weight_b
    return t / (1 + t) * total - EPS * total


def positional_filter(len_a: int, pos_a: int, len_b: int, pos_b: int,
                      current_overlap, alpha) -> bool:
    """True iff the tokens from the shared one onward can still reach ``alpha``."""
    return current_overlap + 1 + min(len_a - pos_a - 1, len_b - pos_b - 1) >= alpha


def weighted_positional_filter(rest_a: float, rest_b: float, token_weight: float,
                               current_overlap: float, alpha: float) -> bool:
    # rest_* is the weight strictly after the shared token
    return current_overlap + token_weight + min(rest_a, rest_b) >= alpha


def _hamming_lb(a, b, alo, ahi, blo, bhi, depth, max_depth, cum_a, cum_b):
    if cum_a is None:
        wa, wb = ahi - alo, bhi - blo
    else:
        wa, wb = cum_a[ahi] - cum_a[alo], cum_b[bhi] - cum_b[blo]
    if depth > max_depth or alo >= ahi or blo >= bhi:
        return abs(wa - wb)
    mid = (blo + bhi) // 2
    pivot = b[mid]
    p = bisect_left(a, pivot, alo, ahi)
    if p < ahi and a[p] == pivot:
        diff, aright = 0, p + 1
    else:
        diff = 1 if cum_b is None else cum_b[mid + 1] - cum_b[mid]
        aright = p
    left = _hamming_lb(a, b, alo, p, blo, mid, depth + 1, max_depth, cum_a, cum_b)
    right = _hamming_lb(a, b, aright, ahi, mid + 1, bhi, depth + 1, max_depth, cum_a, cum_b)
    return left + right + diff


def suffix_filter(a_tokens: Sequence[int], b_tokens: Sequence[int], pos_a: int, pos_b: int,
                  alpha, max_depth: int = 2, cum_a: Sequence[float] | None = None,
                  cum_b: Sequence[float] | None = None) -> bool:
    """Divide-and-conquer Hamming bound on the suffixes after a first shared token.

    Valid only when ``a_tokens[pos_a] == b_tokens[pos_b]`` is the first token
    the two lists share.  Returns False only when the suffixes provably
    cannot lift the overlap to ``alpha``.  ``cum_*`` are prefix sums of token
    weights (length ``len + 1``) for the weighted variant.
    """
    if max_depth <= 0:
        return True
    la, lb = len(a_tokens), len(b_tokens)
    if cum_a is None:
        rest = (la - pos_a - 1) + (lb - pos_b - 1)
        hmax = rest - 2 * (alpha - 1)
    else:
        token_w = cum_a[pos_a + 1] - cum_a[pos_a]
        rest = (cum_a[la] - cum_a[pos_a + 1]) + (cum_b[lb] - cum_b[pos_b + 1])
        hmax = rest - 2 * (alpha - token_w) + EPS * (cum_a[la] + cum_b[lb])
    if hmax < 0:
        return False
    h = _hamming_lb(a_tokens, b_tokens, pos_a + 1, la, pos_b + 1, lb, 1, max_depth, cum_a, cum_b)
    return h <= hmax


def verify(a: GeoImage, b: GeoImage, vocab: Vocabulary, config: JoinConfig, maxdis: float) -> bool:
    """The exact join predicate; every algorithm decides through this."""
    return (geo_dist(a, b, maxdis) <= config.gamma_g
            and vis_sim(a, b, vocab) >= config.gamma_v)
