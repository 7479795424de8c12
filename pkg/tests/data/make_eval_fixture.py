"""Regenerate eval_fixture.jsonl: 200 gold/pred pairs with assorted corruptions.

Run from the repository root: python3 tests/data/make_eval_fixture.py
"""

import json
import re
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from helpers import random_ast  # noqa: E402
from tabformula import CellAddress, referenced_cells, render  # noqa: E402
from tabformula.formula import CellRef, Func, Op, iter_nodes  # noqa: E402
from tabformula.table import format_address  # noqa: E402

OUT = Path(__file__).with_name("eval_fixture.jsonl")


def _dollar(text: str) -> str:
    """Absolute-reference spelling of every cell reference."""
    return re.sub(r'(?<![A-Za-z"$])([A-Z]{1,3})([0-9]+)(?![A-Za-z(])', r"$\1$\2", text)


def _shift_cell(ast, rng):
    cells = [n for n in iter_nodes(ast) if isinstance(n, CellRef)]
    if not cells:
        return None
    victim = cells[int(rng.integers(len(cells)))]

    def walk(node):
        if node is victim:
            a = node.address
            return CellRef(CellAddress(a.col, a.row + 1))
        if isinstance(node, Op):
            return Op(node.symbol, tuple(walk(c) for c in node.children))
        if isinstance(node, Func):
            return Func(node.name, tuple(walk(c) for c in node.children))
        return node

    return walk(ast)


def _swap_op(ast):
    if isinstance(ast, Op) and len(ast.children) == 2:
        return Op("*" if ast.symbol != "*" else "+", ast.children)
    if isinstance(ast, Func):
        return Func("MIN" if ast.name != "MIN" else "MAX", ast.children)
    return Op("+", (ast, CellRef(CellAddress(0, 0))))


def main():
    rng = np.random.default_rng(2024)
    rows = []
    while len(rows) < 200:
        gold = random_ast(rng, 4)
        gold_text = "=" + render(gold)
        refs = referenced_cells(gold)
        kind = ["same", "dollar", "lower", "shift", "swap", "garbage"][len(rows) % 6]
        if kind == "same":
            pred = gold_text
        elif kind == "dollar":
            pred = "=" + _dollar(render(gold))
        elif kind == "lower":
            pred = gold_text.lower() if '"' not in gold_text else gold_text
        elif kind == "shift":
            shifted = _shift_cell(gold, rng)
            if shifted is None:
                continue
            pred = "=" + render(shifted)
        elif kind == "swap":
            pred = "=" + render(_swap_op(gold))
        else:
            pred = gold_text + ")("
        cells = sorted(set(refs), key=lambda a: (a.row, a.col))
        if cells and rng.random() < 0.3:
            cells = cells[1:]
        rows.append({"table_id": f"e{len(rows):03d}", "target_cell": "ZZ999", "gold": gold_text, "pred": pred,
                     "kind": kind, "input_cells": [format_address(c) for c in cells]})
    with OUT.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


if __name__ == "__main__":
    main()
