"""Shared builders for the test suite: random formula ASTs and small tables."""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from tabformula import CellAddress, Table, load_tables
from tabformula.formula import CellRef, Const, ConstKind, Func, Op, RangeRef, make_range

DATA = Path(__file__).parent / "data"

BINARY_OPS = ("+", "-", "*", "/", "^", "&", "=", "<>", ">", "<", ">=", "<=")
# Function names of the added vocabulary, with the argument counts we generate.
FUNCS = {"SUM": (1, 3), "IF": (3, 3), "ROUND": (2, 2), "AVERAGE": (1, 3), "VLOOKUP": (3, 4), "ABS": (1, 1),
         "OFFSET": (3, 5), "SUBTOTAL": (2, 3), "MAX": (1, 3), "LN": (1, 1), "COUNTA": (1, 3), "SQRT": (1, 1),
         "MIN": (1, 3), "ISERROR": (1, 1), "EOMONTH": (2, 2), "COUNT": (1, 3), "AND": (1, 3), "INDEX": (2, 3),
         "YEAR": (1, 1), "MONTH": (1, 1), "MATCH": (2, 3)}


def production_table() -> Table:
    return next(load_tables(DATA / "production.json"))


def countries_table() -> Table:
    """Small sheet with a growth column: D4 = (C4-B4)/B4."""
    rows = [
        ["Country", "2019", "2020", "Growth"],
        ["Belgium", 10, 12, "=(C2-B2)/B2"],
        ["France", 20, 25, "=(C3-B3)/B3"],
        ["Germany", 40, 30, "=(C4-B4)/B4"],
        ["Italy", 15, 18, 0.2],
    ]
    return Table.from_rows(rows, table_id="countries")


def _leaf(rng: np.random.Generator):
    kind = rng.integers(6)
    if kind <= 2:
        return CellRef(CellAddress(int(rng.integers(0, 30)), int(rng.integers(0, 60))))
    if kind == 3:
        a = CellAddress(int(rng.integers(0, 30)), int(rng.integers(0, 60)))
        b = CellAddress(int(rng.integers(0, 30)), int(rng.integers(0, 60)))
        return make_range(a, b)
    if kind == 4:
        text = str(int(rng.integers(0, 1000))) if rng.random() < 0.6 else f"{rng.uniform(0, 100):.2f}"
        return Const(ConstKind.NUM, text)
    if rng.random() < 0.5:
        return Const(ConstKind.BOOL, "TRUE" if rng.random() < 0.5 else "FALSE")
    return Const(ConstKind.STR, '"' + str(rng.choice(["a", "x y", 'say ""hi""', ""])) + '"')


def random_ast(rng: np.random.Generator, depth: int = 5):
    """Random AST of at most ``depth`` levels (a leaf is one level)."""
    if depth <= 1 or rng.random() < 0.25:
        return _leaf(rng)
    kind = rng.integers(10)
    if kind < 5:
        op = str(rng.choice(BINARY_OPS))
        return Op(op, (random_ast(rng, depth - 1), random_ast(rng, depth - 1)))
    if kind == 5:
        return Op("-", (random_ast(rng, depth - 1),))
    if kind == 6:
        return Op("%", (random_ast(rng, depth - 1),))
    name = str(rng.choice(sorted(FUNCS)))
    lo, hi = FUNCS[name]
    n = int(rng.integers(lo, hi + 1))
    return Func(name, tuple(random_ast(rng, depth - 1) for _ in range(n)))


def ast_depth(ast) -> int:
    return 1 + max((ast_depth(c) for c in ast.children), default=0)


def all_small_asts(depth: int, leaves, ops=("+", "-", "*", "/"), funcs=("SUM", "MAX")):
    """Every AST of at most ``depth`` levels: binary ``ops``, 1- and 2-argument ``funcs``."""
    trees = list(leaves)
    for _ in range(depth - 1):
        smaller = list(trees)
        grown = list(leaves)
        for op in ops:
            grown.extend(Op(op, (a, b)) for a, b in itertools.product(smaller, repeat=2))
        for name in funcs:
            grown.extend(Func(name, (a,)) for a in smaller)
            grown.extend(Func(name, (a, b)) for a, b in itertools.product(smaller, repeat=2))
        trees = grown
    return trees
