"""Uniform spatial grid with cells of side ``gamma_g * max_dis``.

Any qualifying pair lies in one cell or in two 8-adjacent cells, so a
cell only has to be joined with itself and its smaller-id neighbours.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .join import JoinStats, Kernel, Prepared, check_sorted, resolve_max_dis
from .model import ConfigError, GeoImage, JoinConfig, PairSet, SVSJoinError, Vocabulary


class GridTooLargeError(SVSJoinError):
    pass


@dataclass
class GridCell:
    records: list = field(default_factory=list)   # dataset positions, (count, id) order
    postings: dict = field(default_factory=dict)  # rank -> [(position, prefix_pos)]


@dataclass
class GridIndex:
    origin: tuple[float, float]
    cell_side: float
    cols: int
    rows: int
    cells: dict[int, GridCell]

    def locate(self, x: float, y: float) -> int:
        col = min(max(math.floor((x - self.origin[0]) / self.cell_side), 0), self.cols - 1)
        row = min(max(math.floor((y - self.origin[1]) / self.cell_side), 0), self.rows - 1)
        return row * self.cols + col

    def cell_of(self, cell_id: int) -> tuple[int, int]:
        """(col, row) of a cell id."""
        row, col = divmod(cell_id, self.cols)
        return col, row


def build_grid(dataset: Sequence[GeoImage], gamma_g: float, maxdis: float,
               cell_cap: int = 2**26) -> GridIndex:
    if gamma_g <= 0:
        raise ConfigError("the grid needs gamma_g > 0")
    if not maxdis > 0:
        raise ConfigError("max_dis must be positive")
    side = gamma_g * maxdis
    if dataset:
        ox = min(r.x for r in dataset)
        oy = min(r.y for r in dataset)
        width = max(r.x for r in dataset) - ox
        height = max(r.y for r in dataset) - oy
    else:
        ox = oy = width = height = 0.0
    cols = max(1, math.ceil(width / side))
    rows = max(1, math.ceil(height / side))
    if cols * rows > cell_cap:
        raise GridTooLargeError(
            f"grid of {cols}x{rows} cells exceeds the cap of {cell_cap}; use a larger gamma_g"
        )
    grid = GridIndex((ox, oy), side, cols, rows, {})
    for pos, r in enumerate(dataset):
        grid.cells.setdefault(grid.locate(r.x, r.y), GridCell()).records.append(pos)
    for cell in grid.cells.values():
        cell.records.sort(key=lambda p: (len(dataset[p].tokens), dataset[p].id))
    return grid


def get_join_cells(grid: GridIndex, cell_id: int) -> list[int]:
    """The cell itself plus its 8-adjacent neighbours with smaller id."""
    col, row = grid.cell_of(cell_id)
    out = [cell_id]
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            r, c = row + dr, col + dc
            if 0 <= r < grid.rows and 0 <= c < grid.cols:
                nid = r * grid.cols + c
                if nid < cell_id:
                    out.append(nid)
    return sorted(out)


def index_cells(grid: GridIndex, prep: Prepared):
    """Per-cell inverted lists over each record's probe prefix."""
    for cell in grid.cells.values():
        post = cell.postings
        for k in cell.records:
            xt = prep.toks[k]
            for i in range(prep.probe_len[k]):
                post.setdefault(xt[i], []).append((k, i))


def _self_join(kernel: Kernel, prep: Prepared, cell: GridCell, out: list) -> int:
    postings: dict = {}
    entries = 0
    for k in cell.records:
        xt = prep.toks[k]
        acc: dict = {}
        dead: set = set()
        ix = prep.index_len[k]
        for i in range(prep.probe_len[k]):
            v = xt[i]
            plist = postings.get(v)
            if plist:
                kernel.scan(k, i, plist, ((0, len(plist)),), acc, dead)
            if i < ix:
                if plist is None:
                    plist = postings[v] = []
                plist.append((k, i))
                entries += 1
        if acc:
            kernel.finish(k, acc, dead, out)
    return entries


def _cross_join(kernel: Kernel, prep: Prepared, probe: GridCell, indexed: GridCell, out: list):
    post = indexed.postings
    for k in probe.records:
        xt = prep.toks[k]
        acc: dict = {}
        dead: set = set()
        for i in range(prep.probe_len[k]):
            plist = post.get(xt[i])
            if plist:
                kernel.scan(k, i, plist, ((0, len(plist)),), acc, dead)
        if acc:
            kernel.finish(k, acc, dead, out)


def svs_join_g(dataset: Sequence[GeoImage], vocab: Vocabulary, config: JoinConfig,
               stats: JoinStats | None = None, maxdis: float | None = None) -> PairSet:
    """Grid-partitioned join: each cell against itself and smaller-id neighbours."""
    check_sorted(dataset)
    if maxdis is None:
        maxdis = resolve_max_dis(dataset, config)
    stats = stats if stats is not None else JoinStats()
    grid = build_grid(dataset, config.gamma_g, maxdis, config.grid_cell_cap)
    prep = Prepared(dataset, vocab, config, maxdis)
    index_cells(grid, prep)
    kernel = Kernel(prep, stats)
    out: list = []
    cross_entries = sum(len(pl) for c in grid.cells.values() for pl in c.postings.values())
    peak_local = 0
    for cid in sorted(grid.cells):
        cell = grid.cells[cid]
        for jid in get_join_cells(grid, cid):
            if jid == cid:
                peak_local = max(peak_local, _self_join(kernel, prep, cell, out))
            elif jid in grid.cells:
                _cross_join(kernel, prep, cell, grid.cells[jid], out)
    stats.index_entries = max(stats.index_entries, cross_entries + peak_local)
    return PairSet.from_pairs(out)
