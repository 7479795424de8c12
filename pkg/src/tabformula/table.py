"""Tables, A1 cell addresses, header hierarchies and per-cell number features."""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

from .errors import AddressParseError, NotADataCell, NotANumber, TableError

# Padded tree-coordinate width and pad value used in token records.
COORD_DEPTH = 4
COORD_PAD = -1

_A1_RE = re.compile(r"^\$?([A-Za-z]+)\$?([0-9]+)$")


class Direction(str, Enum):
    TOP = "top"
    LEFT = "left"


class ValueKind(str, Enum):
    TEXT = "text"
    NUMBER = "number"
    BOOL = "bool"
    EMPTY = "empty"


class _Position(NamedTuple):
    col: int
    row: int


class CellAddress(_Position):
    """Zero-based (col, row) cell position.

    A tuple underneath so hashing and equality stay cheap in the hot paths.
    """

    __slots__ = ()

    def __new__(cls, col: int, row: int):
        if col < 0 or row < 0:
            raise AddressParseError(f"negative cell index ({col}, {row})")
        return tuple.__new__(cls, (col, row))

    @property
    def a1(self) -> str:
        return format_address(self)

    def reading_key(self) -> tuple[int, int]:
        """Sort key for left-to-right, top-to-bottom order."""
        return (self.row, self.col)

    def __str__(self) -> str:
        return format_address(self)


def column_index(letters: str) -> int:
    """Decode bijective base-26 column letters ("A" -> 0, "AA" -> 26)."""
    n = 0
    for ch in letters.upper():
        n = n * 26 + (ord(ch) - 64)
    return n - 1


@lru_cache(maxsize=4096)
def column_letters(index: int) -> str:
    n = index + 1
    out = []
    while n > 0:
        n, rem = divmod(n - 1, 26)
        out.append(chr(65 + rem))
    return "".join(reversed(out))


def parse_address(a1_text: str) -> CellAddress:
    """Parse ``A1``-style text; ``$`` absolute markers are accepted and dropped."""
    m = _A1_RE.match(a1_text)
    if m is None:
        raise AddressParseError(f"malformed cell address {a1_text!r}")
    row = int(m.group(2))
    if row < 1:
        raise AddressParseError(f"row numbers start at 1: {a1_text!r}")
    return CellAddress(column_index(m.group(1)), row - 1)


@lru_cache(maxsize=1 << 16)
def format_address(addr: CellAddress) -> str:
    return f"{column_letters(addr.col)}{addr.row + 1}"


@dataclass(frozen=True)
class NumericFeatures:
    magnitude: int
    precision: int
    first_digit: int
    last_digit: int

    def as_list(self) -> list[int]:
        return [self.magnitude, self.precision, self.first_digit, self.last_digit]


def parse_number(text: str) -> Optional[Decimal]:
    """Return the finite decimal value of ``text`` or None."""
    try:
        value = Decimal(text.strip())
    except (InvalidOperation, ValueError):
        return None
    if not value.is_finite():
        return None
    return value


def numeric_features(number_text: str) -> NumericFeatures:
    """Magnitude, precision, first and last digit of a decimal string.

    Magnitude counts integer-part digits (at least 1, so "0.5" has magnitude 1),
    precision counts written fractional digits ("1.50" -> 2). The first digit is
    the leading digit of the fixed-point rendering, so "0.5" starts with 0.
    """
    value = parse_number(number_text) if isinstance(number_text, str) else None
    if value is None:
        raise NotANumber(f"not a decimal number: {number_text!r}")
    digits = format(abs(value), "f")
    int_part, _, frac_part = digits.partition(".")
    int_part = int_part.lstrip("0") or "0"
    all_digits = int_part + frac_part
    return NumericFeatures(
        magnitude=len(int_part),
        precision=len(frac_part),
        first_digit=int(all_digits[0]),
        last_digit=int(all_digits[-1]),
    )


@dataclass(frozen=True)
class CellValue:
    kind: ValueKind
    text: str = ""
    number: Optional[Decimal] = None

    def __post_init__(self):
        if (self.number is not None) != (self.kind is ValueKind.NUMBER):
            raise TableError("number must be set iff kind is Number")

    @classmethod
    def infer(cls, raw) -> "CellValue":
        """Build a value from a Python scalar or string, guessing its kind."""
        if raw is None or raw == "":
            return cls(ValueKind.EMPTY)
        if isinstance(raw, bool):
            return cls(ValueKind.BOOL, "TRUE" if raw else "FALSE")
        if isinstance(raw, (int, float, Decimal)):
            text = str(raw)
            return cls(ValueKind.NUMBER, text, Decimal(text))
        text = str(raw)
        number = parse_number(text)
        if number is not None:
            return cls(ValueKind.NUMBER, text, number)
        if text.upper() in ("TRUE", "FALSE"):
            return cls(ValueKind.BOOL, text.upper())
        return cls(ValueKind.TEXT, text)

    @classmethod
    def of_kind(cls, kind: ValueKind | str, text: str) -> "CellValue":
        kind = ValueKind(kind)
        if kind is ValueKind.NUMBER:
            number = parse_number(text)
            if number is None:
                raise NotANumber(f"cell marked numeric but {text!r} is not a number")
            return cls(kind, text, number)
        if kind is ValueKind.EMPTY:
            return cls(kind, "")
        return cls(kind, text)


EMPTY_VALUE = CellValue(ValueKind.EMPTY)


@dataclass(frozen=True)
class Cell:
    address: CellAddress
    value: CellValue = EMPTY_VALUE
    formula: Optional[str] = None
    format: int = 0

    def __post_init__(self):
        if self.formula is not None and not self.formula.strip():
            raise TableError(f"empty formula string at {self.address}")

    @property
    def text(self) -> str:
        return self.value.text

    @property
    def is_numeric(self) -> bool:
        return self.value.kind is ValueKind.NUMBER


@dataclass(frozen=True, eq=False)
class HeaderNode:
    """One header cell in a hierarchy.

    ``start``/``stop`` is the half-open span of absolute column (top tree) or
    row (left tree) indices it owns; ``path`` is its child-index path from the
    virtual root. Identity is the anchor address when known.
    """

    text: str
    address: Optional[CellAddress]
    start: int
    stop: int
    direction: Direction
    path: tuple[int, ...] = ()
    children: tuple["HeaderNode", ...] = ()

    @property
    def key(self):
        if self.address is not None:
            return self.address
        return (self.direction, self.path)

    @property
    def depth(self) -> int:
        return len(self.path)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(self.key))

    def __eq__(self, other):
        return isinstance(other, HeaderNode) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        where = format_address(self.address) if self.address else "-"
        return f"HeaderNode({self.text!r}, {where}, [{self.start},{self.stop}), {self.direction.value})"

    def walk(self) -> Iterator["HeaderNode"]:
        yield self
        for child in self.children:
            yield from child.walk()


def header_node(text, start, stop, address=None, children=()) -> dict:
    """Plain-dict node spec accepted by :meth:`HeaderTree.build`."""
    return {"text": text, "start": start, "stop": stop, "address": address, "children": list(children)}


class HeaderTree:
    """Top or left header hierarchy over the table's data columns/rows."""

    def __init__(self, direction: Direction, roots: Sequence[HeaderNode], start: int, stop: int):
        self.direction = Direction(direction)
        self.roots = tuple(roots)
        self.start = start
        self.stop = stop
        self._chains: dict[int, tuple[HeaderNode, ...]] = {}
        self._nodes: tuple[HeaderNode, ...] = tuple(n for r in self.roots for n in r.walk())
        if self.roots:
            _check_partition(self.roots, start, stop, "root")
            for root in self.roots:
                self._index(root, ())

    def _index(self, node: HeaderNode, prefix: tuple[HeaderNode, ...]):
        chain = prefix + (node,)
        if node.children:
            _check_partition(node.children, node.start, node.stop, node.text)
            for child in node.children:
                self._index(child, chain)
        else:
            for pos in range(node.start, node.stop):
                self._chains[pos] = chain

    @classmethod
    def build(cls, direction, specs: Sequence[dict], start: int, stop: int) -> "HeaderTree":
        """Build from nested dicts with keys text/start/stop/address/children."""
        direction = Direction(direction)

        def make(spec, path):
            addr = spec.get("address")
            if isinstance(addr, str):
                addr = parse_address(addr)
            kids = tuple(make(c, path + (i,)) for i, c in enumerate(spec.get("children") or ()))
            return HeaderNode(str(spec.get("text", "")), addr, int(spec["start"]), int(spec["stop"]),
                              direction, path, kids)

        return cls(direction, [make(s, (i,)) for i, s in enumerate(specs)], start, stop)

    @classmethod
    def empty(cls, direction, start=0, stop=0) -> "HeaderTree":
        return cls(direction, (), start, stop)

    def __bool__(self):
        return bool(self.roots)

    def chain(self, position: int) -> tuple[HeaderNode, ...]:
        """Root-to-leaf header chain owning a data column/row (empty if none)."""
        return self._chains.get(position, ())

    def nodes(self) -> tuple[HeaderNode, ...]:
        return self._nodes

    def leaves(self) -> list[HeaderNode]:
        return [n for n in self._nodes if not n.children]

    @property
    def max_depth(self) -> int:
        return max((n.depth for n in self._nodes), default=0)


def _check_partition(nodes: Sequence[HeaderNode], start: int, stop: int, owner: str):
    cursor = start
    for node in nodes:
        if node.start != cursor or node.stop <= node.start:
            raise TableError(f"header spans under {owner!r} do not partition [{start}, {stop})")
        cursor = node.stop
    if cursor != stop:
        raise TableError(f"header spans under {owner!r} do not cover [{start}, {stop})")


@dataclass(frozen=True, eq=False)
class Table:
    """Rectangular cell grid with header regions and header hierarchies."""

    cells: tuple[tuple[Cell, ...], ...]
    top_header_rows: int
    left_header_cols: int
    top_tree: HeaderTree
    left_tree: HeaderTree
    table_id: str = "table"

    def __post_init__(self):
        if not self.cells or not self.cells[0]:
            raise TableError("table grid is empty")
        width = len(self.cells[0])
        if any(len(row) != width for row in self.cells):
            raise TableError("table grid is not rectangular")
        if not 0 <= self.top_header_rows < len(self.cells):
            raise TableError("top_header_rows must be smaller than the row count")
        if not 0 <= self.left_header_cols < width:
            raise TableError("left_header_cols must be smaller than the column count")
        for r, row in enumerate(self.cells):
            for c, cell in enumerate(row):
                if cell.address != CellAddress(c, r):
                    raise TableError(f"cell at ({c}, {r}) carries address {cell.address}")
        if self.top_tree and (self.top_tree.start, self.top_tree.stop) != (self.left_header_cols, width):
            raise TableError("top header tree must span the data columns")
        if self.left_tree and (self.left_tree.start, self.left_tree.stop) != (self.top_header_rows, len(self.cells)):
            raise TableError("left header tree must span the data rows")
        # Scratch space for derived values (see table_memo); never part of the table's meaning.
        object.__setattr__(self, "_memo", {})

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_memo"] = {}
        return state

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def n_cols(self) -> int:
        return len(self.cells[0])

    def in_bounds(self, addr: CellAddress) -> bool:
        return addr.row < self.n_rows and addr.col < self.n_cols

    def cell(self, addr: CellAddress) -> Cell:
        return self.cells[addr.row][addr.col]

    def is_header_cell(self, addr: CellAddress) -> bool:
        return addr.row < self.top_header_rows or addr.col < self.left_header_cols

    def is_data_cell(self, addr: CellAddress) -> bool:
        return self.in_bounds(addr) and not self.is_header_cell(addr)

    def iter_cells(self) -> Iterator[Cell]:
        for row in self.cells:
            yield from row

    def header_cells(self) -> list[Cell]:
        return [c for c in self.iter_cells() if self.is_header_cell(c.address)]

    def formula_cells(self) -> list[Cell]:
        return [c for c in self.iter_cells() if c.formula is not None]

    @property
    def is_hierarchical(self) -> bool:
        return self.top_tree.max_depth > 1 or self.left_tree.max_depth > 1

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], top_header_rows: int = 1, left_header_cols: int = 1,
                  top_tree: Optional[Sequence[dict]] = None, left_tree: Optional[Sequence[dict]] = None,
                  table_id: str = "table", formats: Optional[Sequence[Sequence[int]]] = None) -> "Table":
        """Build a table from a literal grid.

        Strings starting with ``=`` become formula cells with an empty value.
        Header trees are nested :func:`header_node` dicts; when omitted, a flat
        tree is read off the last header row/column.
        """
        grid = []
        for r, row in enumerate(rows):
            out = []
            for c, raw in enumerate(row):
                fmt = formats[r][c] if formats else 0
                addr = CellAddress(c, r)
                if isinstance(raw, str) and raw.startswith("="):
                    out.append(Cell(addr, EMPTY_VALUE, raw, fmt))
                elif isinstance(raw, Cell):
                    out.append(raw)
                else:
                    out.append(Cell(addr, CellValue.infer(raw), None, fmt))
            grid.append(tuple(out))
        return cls.assemble(grid, top_header_rows, left_header_cols, top_tree, left_tree, table_id)

    @classmethod
    def assemble(cls, grid, top_header_rows, left_header_cols, top_tree=None, left_tree=None,
                 table_id="table") -> "Table":
        grid = tuple(tuple(row) for row in grid)
        if not grid or not grid[0]:
            raise TableError("table grid is empty")
        n_rows, n_cols = len(grid), len(grid[0])
        if top_tree is None:
            top = flat_tree(grid, Direction.TOP, top_header_rows, left_header_cols)
        else:
            top = HeaderTree.build(Direction.TOP, top_tree, left_header_cols, n_cols)
        if left_tree is None:
            left = flat_tree(grid, Direction.LEFT, top_header_rows, left_header_cols)
        else:
            left = HeaderTree.build(Direction.LEFT, left_tree, top_header_rows, n_rows)
        return cls(grid, top_header_rows, left_header_cols, top, left, table_id)


def flat_tree(grid, direction: Direction, top_header_rows: int, left_header_cols: int) -> HeaderTree:
    """One-level tree from the innermost header row (top) or column (left)."""
    n_rows, n_cols = len(grid), len(grid[0])
    if direction is Direction.TOP:
        if top_header_rows == 0:
            return HeaderTree.empty(direction, left_header_cols, n_cols)
        r = top_header_rows - 1
        specs = [header_node(grid[r][c].text, c, c + 1, CellAddress(c, r)) for c in range(left_header_cols, n_cols)]
        return HeaderTree.build(direction, specs, left_header_cols, n_cols)
    if left_header_cols == 0:
        return HeaderTree.empty(direction, top_header_rows, n_rows)
    c = left_header_cols - 1
    specs = [header_node(grid[r][c].text, r, r + 1, CellAddress(c, r)) for r in range(top_header_rows, n_rows)]
    return HeaderTree.build(direction, specs, top_header_rows, n_rows)


def headers_of(table: Table, addr: CellAddress) -> tuple[tuple[HeaderNode, ...], tuple[HeaderNode, ...]]:
    """Root-to-leaf top and left header chains of a data cell."""
    if not table.is_data_cell(addr):
        raise NotADataCell(f"{addr} is not a data cell of table {table.table_id!r}")
    return table.top_tree.chain(addr.col), table.left_tree.chain(addr.row)


def header_set(table: Table, addr: CellAddress) -> tuple[HeaderNode, ...]:
    memo = table_memo(table, "header_set")
    hit = memo.get(addr)
    if hit is None:
        top, left = headers_of(table, addr)
        hit = memo[addr] = top + left
    return hit


def non_shared_headers(table: Table, a: CellAddress, b: CellAddress) -> tuple[list[HeaderNode], list[HeaderNode]]:
    """Headers of ``a`` not on ``b``'s chains, and vice versa (top first, then left)."""
    ha, hb = header_set(table, a), header_set(table, b)
    sa, sb = set(ha), set(hb)
    return [h for h in ha if h not in sb], [h for h in hb if h not in sa]


def _pad(path: Iterable[int]) -> tuple[int, ...]:
    path = tuple(path)[:COORD_DEPTH]
    return path + (COORD_PAD,) * (COORD_DEPTH - len(path))


DEFAULT_COORD = _pad(())


def _header_region_path(chain, row_or_col: int, attr: str) -> tuple[int, ...]:
    best = None
    for depth, node in enumerate(chain):
        if node.address is None:
            if depth <= row_or_col:
                best = node
        elif getattr(node.address, attr) <= row_or_col:
            best = node
    return best.path if best is not None else ()


def clear_memo(table: Table) -> None:
    """Drop cached derived values, e.g. once a table has been fully processed."""
    table._memo.clear()


def table_memo(table: Table, name: str) -> dict:
    """Per-table cache for derived values; lives and dies with the table."""
    memo = table._memo.get(name)
    if memo is None:
        memo = table._memo.setdefault(name, {})
    return memo


def coordinates(table: Table, addr: CellAddress) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Padded (top, left) tree coordinates of any cell.

    Data cells get both leaf paths. A cell inside the top header region gets the
    path of the deepest header on its column chain anchored at or above it, and
    a default left coordinate; the left region is symmetric. Corner cells get
    default coordinates on both axes.
    """
    memo = table_memo(table, "coordinates")
    hit = memo.get(addr)
    if hit is None:
        hit = memo[addr] = _coordinates(table, addr)
    return hit


def _coordinates(table: Table, addr: CellAddress) -> tuple[tuple[int, ...], tuple[int, ...]]:
    top_chain = table.top_tree.chain(addr.col)
    left_chain = table.left_tree.chain(addr.row)
    in_top = addr.row < table.top_header_rows
    in_left = addr.col < table.left_header_cols
    if in_top and in_left:
        return DEFAULT_COORD, DEFAULT_COORD
    if in_top:
        return _pad(_header_region_path(top_chain, addr.row, "row")), DEFAULT_COORD
    if in_left:
        return DEFAULT_COORD, _pad(_header_region_path(left_chain, addr.col, "col"))
    return _pad(top_chain[-1].path if top_chain else ()), _pad(left_chain[-1].path if left_chain else ())
