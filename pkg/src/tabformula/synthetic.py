"""Random hierarchical tables with realistic formula patterns.

Used by the test suite and the demo scripts; nothing here is needed to process
real corpora.
"""

from __future__ import annotations

import numpy as np

from .table import Cell, CellAddress, CellValue, Table, column_letters, header_node

_GROUPS = ["Revenue", "Cost", "Volume", "Price", "Production", "Export", "Import", "Budget", "Actual"]
_LEAVES = ["2016", "2017", "2018", "2019", "2020", "2021", "Q1", "Q2", "Q3", "Q4", "Jan", "Feb", "Mar",
           "North", "South", "East", "West", "Plan", "Forecast"]
_ROW_GROUPS = ["Vegetables", "Fruit", "Grain", "Retail", "Wholesale", "Online"]
_ROW_LEAVES = ["Onion", "Garlic", "Tomato", "Potato", "Carrot", "Apple", "Orange", "Banana", "Rice", "Wheat",
               "Corn", "Belgium", "France", "Germany", "Italy", "Spain"]


def _partition(rng, n: int, max_groups: int) -> list[int]:
    """Random composition of ``n`` into 1..max_groups positive parts."""
    k = int(rng.integers(1, min(max_groups, n) + 1))
    cuts = sorted(rng.choice(np.arange(1, n), size=k - 1, replace=False).tolist()) if k > 1 else []
    bounds = [0] + cuts + [n]
    return [b - a for a, b in zip(bounds, bounds[1:])]


def _header_axis(rng, n_data: int, offset: int, levels: int, groups, leaves, top: bool):
    """Tree specs and header texts for one axis; returns (specs, {(level, pos): text})."""
    texts = {}
    leaf_names = list(rng.choice(leaves, size=n_data, replace=n_data > len(leaves)))
    if levels == 1:
        specs = []
        for i in range(n_data):
            pos = offset + i
            addr = CellAddress(pos, 0) if top else CellAddress(0, pos)
            texts[(0, pos)] = leaf_names[i]
            specs.append(header_node(leaf_names[i], pos, pos + 1, addr))
        return specs, texts
    parts = _partition(rng, n_data, 3)
    names = list(rng.choice(groups, size=len(parts), replace=False))
    specs, cursor = [], offset
    for name, width in zip(names, parts):
        kids = []
        for pos in range(cursor, cursor + width):
            addr = CellAddress(pos, 1) if top else CellAddress(1, pos)
            texts[(1, pos)] = leaf_names[pos - offset]
            kids.append(header_node(leaf_names[pos - offset], pos, pos + 1, addr))
        addr = CellAddress(cursor, 0) if top else CellAddress(0, cursor)
        texts[(0, cursor)] = str(name)
        specs.append(header_node(str(name), cursor, cursor + width, addr, kids))
        cursor += width
    return specs, texts


def _ref(col: int, row: int) -> str:
    return f"{column_letters(col)}{row + 1}"


def random_table(rng: np.random.Generator, table_id: str = "t0", data_rows=(3, 7), data_cols=(3, 5),
                 text_rate: float = 0.04) -> Table:
    """A table with 1-2 header levels per axis, numeric data and formula cells.

    Formula patterns: a derived column dragged down every data row, an
    optional total row, and an occasional one-off formula.
    """
    top_levels = int(rng.integers(1, 3))
    left_levels = int(rng.integers(1, 3))
    n_dr = int(rng.integers(data_rows[0], data_rows[1] + 1))
    n_dc = int(rng.integers(data_cols[0], data_cols[1] + 1))
    n_rows, n_cols = top_levels + n_dr, left_levels + n_dc
    top_specs, top_texts = _header_axis(rng, n_dc, left_levels, top_levels, _GROUPS, _LEAVES, True)
    left_specs, left_texts = _header_axis(rng, n_dr, top_levels, left_levels, _ROW_GROUPS, _ROW_LEAVES, False)

    grid = [[None] * n_cols for _ in range(n_rows)]
    for (level, pos), text in top_texts.items():
        grid[level][pos] = text
    for (level, pos), text in left_texts.items():
        grid[pos][level] = text
    for r in range(top_levels, n_rows):
        for c in range(left_levels, n_cols):
            if rng.random() < text_rate:
                grid[r][c] = "n/a"
            else:
                decimals = int(rng.integers(0, 3))
                grid[r][c] = f"{rng.uniform(0, 1000):.{decimals}f}"

    first_dc, last_dc = left_levels, n_cols - 1
    first_dr, last_dr = top_levels, n_rows - 1
    formulas = {}
    # Derived column, dragged down every data row.
    fc = last_dc
    a, b = int(rng.integers(first_dc, fc)), int(rng.integers(first_dc, fc))
    pattern = int(rng.integers(0, 4))
    for r in range(first_dr, n_rows):
        if pattern == 0:
            f = f"=({_ref(b, r)}-{_ref(a, r)})/{_ref(a, r)}"
        elif pattern == 1:
            f = f"=SUM({_ref(first_dc, r)}:{_ref(fc - 1, r)})"
        elif pattern == 2:
            f = f"={_ref(a, r)}+{_ref(b, r)}"
        else:
            f = f"=ROUND({_ref(a, r)}*{_ref(b, r)},2)"
        formulas[(r, fc)] = f
    # Total row.
    if n_dr >= 3 and rng.random() < 0.5:
        for c in range(first_dc, fc):
            formulas[(last_dr, c)] = f"=SUM({_ref(c, first_dr)}:{_ref(c, last_dr - 1)})"
    # One-off formula.
    if rng.random() < 0.5:
        r = int(rng.integers(first_dr, n_rows))
        c = int(rng.integers(first_dc, fc))
        if (r, c) not in formulas:
            x, y = int(rng.integers(first_dc, n_cols)), int(rng.integers(first_dr, n_rows))
            op = str(rng.choice(["+", "-", "*", "/", ">", "&"]))
            formulas[(r, c)] = f"=MAX({_ref(x, r)},{_ref(c, y)}){op}{_ref(x, y)}"

    cells = []
    for r in range(n_rows):
        row = []
        for c in range(n_cols):
            addr = CellAddress(c, r)
            if (r, c) in formulas:
                row.append(Cell(addr, CellValue.infer(f"{rng.uniform(0, 100):.2f}"), formulas[(r, c)]))
            else:
                row.append(Cell(addr, CellValue.infer(grid[r][c])))
        cells.append(row)
    return Table.assemble(cells, top_levels, left_levels, top_specs, left_specs, table_id)


def random_corpus(seed: int, n_tables: int, **kwargs) -> list[Table]:
    rng = np.random.default_rng(seed)
    return [random_table(rng, f"t{i:05d}", **kwargs) for i in range(n_tables)]
