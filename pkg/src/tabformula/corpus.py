"""Table size filtering, dragged-formula deduplication and corpus statistics."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

from .formula import Analysis, FormulaAst, analyze, op_func_names, sketch_length, to_prefix
from .table import CellAddress, Table
from .vocab import is_covered

RANGE_COUNTINGS = ("cell1", "cell3")
DRAG_LIMIT = 5


class Axis(str, Enum):
    ROW = "row"
    COLUMN = "column"


@dataclass(frozen=True)
class DedupKey:
    axis: Axis
    axis_index: int
    relative_sketch: tuple[str, ...]


def relative_sketch(cell: CellAddress, ast: FormulaAst) -> tuple[str, ...]:
    """Prefix tokens with every cell rewritten as an R1C1-style offset from ``cell``."""
    out = []
    for tok in to_prefix(ast).tokens:
        if tok.cell is not None:
            out.append(f"R[{tok.cell.row - cell.row}]C[{tok.cell.col - cell.col}]")
        else:
            out.append(tok.text)
    return tuple(out)


def dedup_keys(cell: CellAddress, ast: FormulaAst) -> tuple[DedupKey, DedupKey]:
    rel = relative_sketch(cell, ast)
    return DedupKey(Axis.ROW, cell.row, rel), DedupKey(Axis.COLUMN, cell.col, rel)


def dedup_dragged(formulas: Sequence[tuple[CellAddress, FormulaAst]], limit: int = DRAG_LIMIT):
    """Keep at most ``limit`` copies of a dragged formula per row and per column.

    Copies are ranked in reading order within each (axis, offset-sketch) group;
    a formula survives only if it ranks within ``limit`` in both its row group
    and its column group. Output keeps the input order.
    """
    keyed = [(addr, ast, dedup_keys(addr, ast)) for addr, ast in formulas]
    groups: dict[DedupKey, list[CellAddress]] = defaultdict(list)
    for addr, _, keys in keyed:
        for key in keys:
            groups[key].append(addr)
    allowed: set[tuple[DedupKey, CellAddress]] = set()
    for key, members in groups.items():
        for addr in sorted(members, key=CellAddress.reading_key)[:limit]:
            allowed.add((key, addr))
    return [(addr, ast) for addr, ast, keys in keyed if all((k, addr) in allowed for k in keys)]


@dataclass(frozen=True)
class SizeLimits:
    min_rows: int = 2
    max_rows: int = 512
    min_cols: int = 2
    max_cols: int = 128


def size_filter(table: Table, limits: SizeLimits = SizeLimits()) -> bool:
    """False for tables outside the configured row/column bounds."""
    return (limits.min_rows <= table.n_rows <= limits.max_rows
            and limits.min_cols <= table.n_cols <= limits.max_cols)


@dataclass
class CorpusStats:
    """Mergeable running totals; averages are derived on demand."""

    formula_count: int = 0
    ops_total: int = 0
    covered_count: int = 0
    sketch_length_total: dict = field(default_factory=lambda: {c: 0 for c in RANGE_COUNTINGS})
    sketch_length_histograms: dict = field(default_factory=lambda: {c: Counter() for c in RANGE_COUNTINGS})
    op_frequency: Counter = field(default_factory=Counter)
    table_count: int = 0
    rows_total: int = 0
    cols_total: int = 0
    hierarchical_count: int = 0

    def add_formula(self, ast: FormulaAst) -> None:
        prefix = to_prefix(ast)
        names = op_func_names(ast)
        self.formula_count += 1
        self.ops_total += len(names)
        self.op_frequency.update(names)
        self.covered_count += is_covered(ast)
        for counting in RANGE_COUNTINGS:
            n = sketch_length(prefix, counting)
            self.sketch_length_total[counting] += n
            self.sketch_length_histograms[counting][n] += 1

    def add_table(self, table: Table) -> None:
        self.table_count += 1
        self.rows_total += table.n_rows
        self.cols_total += table.n_cols
        self.hierarchical_count += table.is_hierarchical

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        out = CorpusStats()
        for name in ("formula_count", "ops_total", "covered_count", "table_count", "rows_total",
                     "cols_total", "hierarchical_count"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        for c in RANGE_COUNTINGS:
            out.sketch_length_total[c] = self.sketch_length_total[c] + other.sketch_length_total[c]
            out.sketch_length_histograms[c] = self.sketch_length_histograms[c] + other.sketch_length_histograms[c]
        out.op_frequency = self.op_frequency + other.op_frequency
        return out

    @property
    def empty(self) -> bool:
        return self.formula_count == 0

    def _mean(self, total, count) -> float:
        return total / count if count else 0.0

    def avg_sketch_length(self, range_counting: str = "cell1") -> float:
        return self._mean(self.sketch_length_total[range_counting], self.formula_count)

    @property
    def avg_ops_per_formula(self) -> float:
        return self._mean(self.ops_total, self.formula_count)

    @property
    def coverage_ratio(self) -> float:
        return self._mean(self.covered_count, self.formula_count)

    def sketch_length_histogram(self, range_counting: str = "cell1") -> dict[int, int]:
        return dict(sorted(self.sketch_length_histograms[range_counting].items()))

    def report(self, range_counting: str = "cell1") -> dict:
        """JSON-ready report; averages over an empty corpus are 0 with ``empty`` set."""
        ops_total = sum(self.op_frequency.values())
        return {
            "empty": self.empty,
            "range_counting": range_counting,
            "formula_count": self.formula_count,
            "avg_sketch_length": self.avg_sketch_length(range_counting),
            "avg_sketch_length_by_counting": {c: self.avg_sketch_length(c) for c in RANGE_COUNTINGS},
            "avg_ops_per_formula": self.avg_ops_per_formula,
            "sketch_length_histogram": {str(k): v for k, v in self.sketch_length_histogram(range_counting).items()},
            "op_frequency": dict(sorted(self.op_frequency.items(), key=lambda kv: (-kv[1], kv[0]))),
            "op_share": {k: v / ops_total for k, v in sorted(self.op_frequency.items(), key=lambda kv: (-kv[1], kv[0]))},
            "coverage_ratio": self.coverage_ratio,
            "table_count": self.table_count,
            "avg_rows_per_table": self._mean(self.rows_total, self.table_count),
            "avg_cols_per_table": self._mean(self.cols_total, self.table_count),
            "hierarchical_table_ratio": self._mean(self.hierarchical_count, self.table_count),
        }


def corpus_stats(formulas: Iterable[FormulaAst], tables: Iterable[Table] = ()) -> CorpusStats:
    stats = CorpusStats()
    for ast in formulas:
        stats.add_formula(ast)
    for table in tables:
        stats.add_table(table)
    return stats


@dataclass(frozen=True)
class TableFormulas:
    """A table with its analysed formulas after filtering and deduplication."""

    table: Table
    analyses: tuple[tuple[CellAddress, Analysis], ...]
    retained: tuple[tuple[CellAddress, FormulaAst], ...]


def analyze_table(table: Table, limit: int = DRAG_LIMIT) -> TableFormulas:
    """Analyse every formula cell in reading order and drop excess dragged copies."""
    analyses = tuple((cell.address, analyze(cell.formula)) for cell in table.formula_cells())
    accepted = [(addr, a.ast) for addr, a in analyses if a.verdict.accepted]
    return TableFormulas(table, analyses, tuple(dedup_dragged(accepted, limit)))


def process_tables(tables: Iterable[Table], limits: Optional[SizeLimits] = SizeLimits(),
                   limit: int = DRAG_LIMIT) -> Iterator[TableFormulas]:
    """Stream tables through the size filter and formula analysis."""
    for table in tables:
        if limits is not None and not size_filter(table, limits):
            continue
        yield analyze_table(table, limit)


def stats_for(processed: Iterable[TableFormulas]) -> CorpusStats:
    stats = CorpusStats()
    for item in processed:
        stats.add_table(item.table)
        for _, ast in item.retained:
            stats.add_formula(ast)
    return stats
