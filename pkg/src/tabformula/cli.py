"""Batch front-end: ``tabformula parse | samples | stats | eval``.

Input tables use the JSON table format (docs/table_format.md). Every command
writes compact UTF-8 JSON; a one-line summary goes to stderr.
Exit codes: 0 ok, 1 runtime error, 2 input schema error.
"""

from __future__ import annotations

import argparse
import gc
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Sequence

from .corpus import RANGE_COUNTINGS, CorpusStats, SizeLimits, analyze_table, process_tables
from .errors import SchemaError, TabFormulaError
from .formula import referenced_cells, sketch, to_prefix
from .metrics import aggregate, eval_prediction
from .samples import OBJECTIVES, GenerationSummary, generate_samples
from .sequence import ALLOWED_MAX_LEN, select_cells
from .table import Table, clear_memo, format_address, parse_address
from .tablefile import load_tables
from .vocab import Vocab

EXIT_OK, EXIT_RUNTIME, EXIT_SCHEMA = 0, 1, 2
SEED_ENV = "FORTAP_SEED"


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _read_all(paths: Sequence[str]) -> list[Table]:
    """Load every table in path order, then in-file order."""
    tables = []
    for path in paths:
        tables.extend(load_tables(path))
    return tables


def _shard(items: list, spec: Optional[str]) -> list:
    """Contiguous chunk ``K/N`` (1-based K) of ``items``; shards concatenate to the whole."""
    if not spec:
        return items
    try:
        k, n = (int(x) for x in spec.split("/"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shard spec {spec!r}, expected K/N") from None
    if not 1 <= k <= n:
        raise argparse.ArgumentTypeError(f"shard {k} outside 1..{n}")
    size = len(items)
    return items[size * (k - 1) // n: size * k // n]


# --------------------------------------------------------------------- parse


def parse_records(tables: Iterable[Table]) -> Iterator[dict]:
    """One record per formula cell, in table then reading order."""
    for item in process_tables(tables, limits=None):
        kept = {addr for addr, _ in item.retained}
        for addr, result in item.analyses:
            rec = {"table_id": item.table.table_id, "cell": format_address(addr), "formula": result.raw,
                   "verdict": result.verdict.reason.value}
            if result.ast is not None:
                prefix = to_prefix(result.ast)
                rec["prefix"] = prefix.texts
                rec["sketch"] = sketch(prefix).texts
                rec["refs"] = [format_address(c) for c in referenced_cells(result.ast)]
                rec["retained"] = addr in kept
            yield rec


def cmd_parse(args, out) -> int:
    tables = _read_all(args.paths)
    n = 0
    for rec in parse_records(tables):
        out.write(_dumps(rec) + "\n")
        n += 1
    print(f"parse: {len(tables)} tables, {n} formula cells", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------- samples


@lru_cache(maxsize=4)
def _vocab(path: Optional[str]) -> Vocab:
    return Vocab.from_file(path) if path else Vocab.default()


def _objectives(name: str) -> tuple[str, ...]:
    return OBJECTIVES if name == "all" else (name,)


def iter_sample_lines(tables: Iterable[Table], objectives: Sequence[str], seed: int, max_len: int = 256,
                      pack: bool = False, vocab_path: Optional[str] = None, size_filter: bool = True,
                      summary: Optional[GenerationSummary] = None) -> Iterator[str]:
    """Serialized sample records, one JSON line each (no newline)."""
    vocab = _vocab(vocab_path)
    summary = summary if summary is not None else GenerationSummary()
    limits = SizeLimits() if size_filter else None
    for item in process_tables(tables, limits=limits):
        summary.tables += 1
        for rec in generate_samples(item.table, item.retained, objectives, seed, vocab, max_len, pack, summary,
                                    sequence_objects=True):
            seq = rec.pop("sequence", None)
            line = _dumps(rec)
            # "sequence" is always the last key; splice its pre-serialized text in.
            yield line if seq is None else f'{line[:-1]},"sequence":{seq.to_json_text()}}}'

        clear_memo(item.table)


def sample_lines(tables: Iterable[Table], objectives: Sequence[str], seed: int, max_len: int = 256,
                 pack: bool = False, vocab_path: Optional[str] = None,
                 size_filter: bool = True) -> tuple[list[str], GenerationSummary]:
    summary = GenerationSummary()
    lines = list(iter_sample_lines(tables, objectives, seed, max_len, pack, vocab_path, size_filter, summary))
    return lines, summary


def _sample_job(job):
    return sample_lines(*job)


def cmd_samples(args, out) -> int:
    tables = _shard(_read_all(args.paths), args.shard)
    # The loaded corpus lives until exit; keep the collector from rescanning it.
    gc.freeze()
    objectives = _objectives(args.objective)
    job = (objectives, args.seed, args.max_len, args.pack, args.vocab, not args.no_size_filter)
    summary = GenerationSummary()
    if args.workers > 1 and len(tables) > 1:
        step = max(1, -(-len(tables) // (args.workers * 4)))
        chunks = [tables[i:i + step] for i in range(0, len(tables), step)]
        with ProcessPoolExecutor(args.workers) as pool:
            # map() yields in submission order, so output matches the serial run.
            for lines, part in pool.map(_sample_job, [(c, *job) for c in chunks]):
                out.writelines(line + "\n" for line in lines)
                summary.merge(part)
    else:
        out.writelines(line + "\n" for line in iter_sample_lines(tables, *job, summary=summary))
    print("samples: " + _dumps(summary.to_json()), file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------- stats


def cmd_stats(args, out) -> int:
    stats = CorpusStats()
    for path in args.paths:
        for table in load_tables(path):
            item = analyze_table(table)
            stats.add_table(table)
            for _, ast in item.retained:
                stats.add_formula(ast)
    out.write(_dumps(stats.report(args.range_counting)) + "\n")
    print(f"stats: {stats.table_count} tables, {stats.formula_count} formulas", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------- eval


def _eval_rows(path: str) -> Iterator[tuple[str, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", where) from None
            if not isinstance(row, dict):
                raise SchemaError("record must be an object", where, "")
            for key in ("gold", "pred"):
                if not isinstance(row.get(key), str):
                    raise SchemaError(f"missing string field {key!r}", where, f"/{key}")
            yield where, row


def cmd_eval(args, out) -> int:
    tables = {}
    for path in args.tables or ():
        for table in load_tables(path):
            tables[table.table_id] = table
    verdicts = []
    for where, row in _eval_rows(args.path):
        cells = row.get("input_cells")
        if cells is not None:
            try:
                cells = [parse_address(c) for c in cells]
            except TabFormulaError as exc:
                raise SchemaError(str(exc), where, "/input_cells") from None
        elif row.get("table_id") in tables and row.get("target_cell"):
            cells = select_cells(tables[row["table_id"]], parse_address(row["target_cell"]))
        verdicts.append(eval_prediction(row["pred"], row["gold"], cells, ordered_ranges=not args.set_ranges))
    report = aggregate(verdicts)
    out.write(_dumps(report.to_json()) + "\n")
    print(f"eval: {report.count} predictions, formula_acc={report.formula_acc:.4f}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------- main


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    try:
        return int(raw) if raw else 0
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tabformula", description=__doc__.splitlines()[0])
    p.add_argument("-o", "--output", help="write here instead of stdout")
    # Also accepted after the subcommand; SUPPRESS keeps a top-level -o from being reset.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", default=argparse.SUPPRESS, help="write here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", parents=[common], help="analyse every formula cell")
    sp.add_argument("paths", nargs="*")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("samples", parents=[common], help="emit pretraining samples as JSONL")
    sp.add_argument("paths", nargs="*")
    sp.add_argument("--objective", choices=[*OBJECTIVES, "all"], default="all")
    sp.add_argument("--seed", type=int, default=None, help=f"global seed (default ${SEED_ENV} or 0)")
    sp.add_argument("--max-len", type=int, choices=ALLOWED_MAX_LEN, default=256)
    sp.add_argument("--pack", action="store_true", help="attach packed sequences to nrp/ncp samples too")
    sp.add_argument("--vocab", help="base vocabulary file, one token per line")
    sp.add_argument("--shard", help="process only contiguous shard K/N of the table list")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--no-size-filter", action="store_true", help="keep tables outside the size limits")
    sp.set_defaults(func=cmd_samples)

    sp = sub.add_parser("stats", parents=[common], help="corpus statistics report")
    sp.add_argument("paths", nargs="*")
    sp.add_argument("--range-counting", choices=RANGE_COUNTINGS, default="cell1")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("eval", parents=[common], help="score predictions against gold formulas")
    sp.add_argument("path", help="JSONL of {table_id, target_cell, gold, pred, input_cells?}")
    sp.add_argument("--tables", nargs="*", help="table files used to derive input cells")
    sp.add_argument("--set-ranges", action="store_true", help="compare referenced cells as sets")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) is None:
        args.seed = _default_seed()
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        return args.func(args, out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (TabFormulaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if out is not sys.stdout:
            out.close()
        else:
            out.flush()


if __name__ == "__main__":
    sys.exit(main())
