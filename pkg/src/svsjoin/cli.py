"""Command line: generate, join, check and bench.

Dataset files hold one record per line: ``id x y token token ...``.
Blank lines and lines starting with ``#`` are skipped.  Pair files hold
one ``id_a id_b`` per line in canonical order.

Exit codes: 0 ok, 1 usage or parse error, 2 runtime error, 3 check mismatch.
"""
from __future__ import annotations

import argparse
import logging
import multiprocessing as mp
import sys
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .datagen import GenSpec, generate
from .engine import prepare, run
from .join import JoinStats
from .model import GeoImage, JoinConfig, PairSet, SVSJoinError

log = logging.getLogger("svsjoin")

EXIT_USAGE, EXIT_RUNTIME, EXIT_MISMATCH = 1, 2, 3

BASE_POINT = {"size": 300_000, "words": 60, "gamma_g": 0.06, "gamma_v": 0.7}
SWEEPS = {
    "size": [100_000, 200_000, 300_000, 400_000, 500_000],
    "words": [20, 40, 60, 80, 100],
    "gamma_g": [0.02, 0.04, 0.06, 0.08, 0.10],
    "gamma_v": [0.5, 0.6, 0.7, 0.8, 0.9],
}


class DatasetParseError(SVSJoinError):
    pass


class UsageError(Exception):
    pass


def parse_dataset(lines: Iterable[str], source: str = "<input>") -> list[GeoImage]:
    records = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise DatasetParseError(f"{source}:{lineno}: expected 'id x y tokens...'")
        try:
            rid = int(parts[0])
            x, y = float(parts[1]), float(parts[2])
            tokens = tuple(int(t) for t in parts[3:])
        except ValueError as exc:
            raise DatasetParseError(f"{source}:{lineno}: {exc}") from None
        if rid < 0 or any(t < 0 for t in tokens):
            raise DatasetParseError(f"{source}:{lineno}: ids and tokens must be non-negative")
        if rid in seen:
            raise DatasetParseError(f"{source}:{lineno}: duplicate id {rid}")
        seen.add(rid)
        records.append(GeoImage(rid, x, y, tokens))
    return records


def read_dataset(path: str | Path) -> list[GeoImage]:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh, str(path))


def write_dataset(records: Sequence[GeoImage], out: TextIO):
    for r in records:
        out.write(" ".join([str(r.id), repr(float(r.x)), repr(float(r.y)), *map(str, r.tokens)]))
        out.write("\n")


def write_pairs(pairs: PairSet, out: TextIO):
    for a, b in pairs:
        out.write(f"{a} {b}\n")


def _open_out(path):
    return open(path, "w", encoding="utf-8") if path and path != "-" else sys.stdout


def config_from_args(args, algorithm=None) -> JoinConfig:
    return JoinConfig(
        gamma_g=args.gamma_g,
        gamma_v=args.gamma_v,
        weight_scheme=args.weights,
        algorithm=algorithm or args.algo,
        suffix_filter=args.suffix_filter,
        max_dis_override=args.max_dis,
        leaf_capacity=args.leaf_capacity,
        threads=args.threads,
    )


def _stats_line(stats: JoinStats, seconds: float) -> str:
    return (f"# results={stats.results} candidates={stats.candidates} "
            f"verified={stats.verified} index_entries={stats.index_entries} "
            f"seconds={seconds:.3f}")


def cmd_join(args) -> int:
    records = read_dataset(args.input)
    cfg = config_from_args(args)
    stats = JoinStats()
    t0 = time.perf_counter()
    pairs = run(prepare(records, cfg), cfg, stats) if len(records) >= 2 else PairSet()
    elapsed = time.perf_counter() - t0
    out = _open_out(args.output)
    try:
        write_pairs(pairs, out)
    finally:
        if out is not sys.stdout:
            out.close()
    print(_stats_line(stats, elapsed), file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    records = read_dataset(args.input)
    cfg = config_from_args(args)
    work = prepare(records, cfg)
    got = run(work, cfg)
    ref = run(work, replace(cfg, algorithm="oracle"))
    if got != ref:
        missing = sorted(set(ref) - set(got))
        extra = sorted(set(got) - set(ref))
        print(f"MISMATCH algo={cfg.algorithm}: {len(missing)} missing, {len(extra)} extra",
              file=sys.stderr)
        for a, b in missing[:20]:
            print(f"- {a} {b}", file=sys.stderr)
        for a, b in extra[:20]:
            print(f"+ {a} {b}", file=sys.stderr)
        return EXIT_MISMATCH
    print(f"OK algo={cfg.algorithm} pairs={len(got)}", file=sys.stderr)
    return 0


def genspec_from_args(args, **overrides) -> GenSpec:
    spec = GenSpec(
        n_records=args.n_records,
        vocab_size=args.vocab_size,
        tokens_per_record=args.words,
        token_skew=args.skew,
        n_clusters=args.clusters,
        cluster_sigma=args.sigma,
        extent=args.extent,
        seed=args.seed,
        near_dup_rate=args.near_dup_rate,
    )
    return replace(spec, **overrides)


def cmd_generate(args) -> int:
    records = generate(genspec_from_args(args))
    out = _open_out(args.output)
    try:
        write_dataset(records, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


@dataclass
class BenchRow:
    algorithm: str
    axis: str
    value: float
    wall_s: float | None
    candidates: int | None
    verified: int | None
    results: int | None
    index_entries: int | None
    status: str = "ok"

    COLUMNS = ("algorithm", "axis", "value", "wall_s", "candidates", "verified",
               "results", "index_entries", "status")

    def cells(self):
        wall = "-" if self.wall_s is None else f"{self.wall_s:.4f}"
        rest = ["-" if v is None else str(v)
                for v in (self.candidates, self.verified, self.results, self.index_entries)]
        return [self.algorithm, self.axis, f"{self.value:g}", wall, *rest, self.status]


def _timed_run(work, cfg):
    stats = JoinStats()
    t0 = time.perf_counter()
    run(work, cfg, stats)
    return time.perf_counter() - t0, stats


def _child(conn, work, cfg):
    try:
        conn.send(("ok", _timed_run(work, cfg)))
    except Exception as exc:  # reported as a failed row
        conn.send(("error", repr(exc)))
    conn.close()


def run_point(work, cfg, timeout: float | None):
    """(seconds, stats, status); a point over ``timeout`` is killed, not fatal."""
    if timeout is None:
        try:
            secs, stats = _timed_run(work, cfg)
            return secs, stats, "ok"
        except SVSJoinError as exc:
            return None, None, f"error:{type(exc).__name__}"
    ctx = mp.get_context("fork")
    recv, send = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_child, args=(send, work, cfg))
    proc.start()
    send.close()
    if recv.poll(timeout):
        status, payload = recv.recv()
        proc.join()
        if status == "ok":
            return payload[0], payload[1], "ok"
        return None, None, "error"
    proc.terminate()
    proc.join()
    return None, None, "timeout"


def bench(sweep: str, base: GenSpec, algorithms: Sequence[str], scale: float = 0.01,
          timeout: float | None = None, weights: str = "uniform",
          values: Sequence[float] | None = None) -> list[BenchRow]:
    """Run every algorithm at every point of one sweep axis.

    Non-swept parameters sit at the default workload; dataset sizes are
    multiplied by ``scale``.
    """
    if sweep not in SWEEPS:
        raise UsageError(f"unknown sweep axis {sweep!r}; choose from {', '.join(SWEEPS)}")
    rows = []
    for value in values if values is not None else SWEEPS[sweep]:
        params = dict(BASE_POINT, **{sweep: value})
        n = max(2, round(params["size"] * scale))
        spec = replace(base, n_records=n, tokens_per_record=params["words"])
        cfg = JoinConfig(gamma_g=params["gamma_g"], gamma_v=params["gamma_v"],
                         weight_scheme=weights)
        work = prepare(generate(spec), cfg)
        for algo in algorithms:
            secs, stats, status = run_point(work, replace(cfg, algorithm=algo), timeout)
            log.info("%s %s=%s %s", algo, sweep, value, status)
            rows.append(BenchRow(algo, sweep, value, secs,
                                 *(None, None, None, None) if stats is None else
                                 (stats.candidates, stats.verified, stats.results,
                                  stats.index_entries), status=status))
    return rows


def format_report(rows: Sequence[BenchRow]) -> str:
    table = [list(BenchRow.COLUMNS)] + [r.cells() for r in rows]
    widths = [max(len(row[c]) for row in table) for c in range(len(BenchRow.COLUMNS))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                     for row in table) + "\n"


def parse_report(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    return [dict(zip(header, ln.split())) for ln in lines[1:]]


def cmd_bench(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        if a not in ("oracle", "b", "g", "q"):
            raise UsageError(f"unknown algorithm {a!r}")
    sweeps = list(SWEEPS) if args.sweep == "all" else [args.sweep]
    base = genspec_from_args(args)
    rows = []
    for sweep in sweeps:
        rows.extend(bench(sweep, base, algos, args.scale, args.timeout, args.weights))
    out = _open_out(args.output)
    try:
        out.write(format_report(rows))
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _join_flags(p):
    p.add_argument("--gamma-g", type=float, default=0.06)
    p.add_argument("--gamma-v", type=float, default=0.7)
    p.add_argument("--weights", choices=("uniform", "idf"), default="uniform")
    p.add_argument("--suffix-filter", action="store_true")
    p.add_argument("--leaf-capacity", type=int, default=64)
    p.add_argument("--max-dis", type=float, default=None)
    p.add_argument("--threads", type=int, default=1)


def _gen_flags(p, n_records=GenSpec.n_records):
    d = GenSpec()
    p.add_argument("--n-records", type=int, default=n_records)
    p.add_argument("--vocab-size", type=int, default=d.vocab_size)
    p.add_argument("--words", type=float, default=d.tokens_per_record)
    p.add_argument("--skew", type=float, default=d.token_skew)
    p.add_argument("--clusters", type=int, default=d.n_clusters)
    p.add_argument("--sigma", type=float, default=d.cluster_sigma)
    p.add_argument("--extent", type=float, default=d.extent)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--near-dup-rate", type=float, default=d.near_dup_rate)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="svsjoin", description="Spatial visual similarity joins.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _gen_flags(p)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("join", help="join a dataset file")
    p.add_argument("input")
    _join_flags(p)
    p.add_argument("--algo", choices=("oracle", "b", "g", "q"), default="q")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_join)

    p = sub.add_parser("check", help="join and diff against the brute-force oracle")
    p.add_argument("input")
    _join_flags(p)
    p.add_argument("--algo", choices=("b", "g", "q"), default="q")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="run a parameter sweep and write a report table")
    p.add_argument("--sweep", choices=(*SWEEPS, "all"), default="all")
    p.add_argument("--algos", default="b,g,q")
    p.add_argument("--scale", type=float, default=0.01)
    p.add_argument("--timeout", type=float, default=None, help="seconds per point")
    p.add_argument("--weights", choices=("uniform", "idf"), default="uniform")
    _gen_flags(p)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"svsjoin: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if getattr(args, "gamma_v", None) is not None:
            JoinConfig(gamma_g=args.gamma_g, gamma_v=args.gamma_v)
        return args.func(args)
    except (DatasetParseError, UsageError, ValueError) as exc:
        print(f"svsjoin: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SVSJoinError, OSError) as exc:
        print(f"svsjoin: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
