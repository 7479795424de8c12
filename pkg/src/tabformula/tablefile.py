"""Reading and writing the JSON table file format.

A file holds one table object, a JSON array of them, or (``.jsonl``) one table
per line. See ``TABLE_SCHEMA`` and docs/table_format.md.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, Union

import fastjsonschema

from .errors import SchemaError, TabFormulaError
from .table import Cell, CellAddress, CellValue, EMPTY_VALUE, HeaderNode, HeaderTree, Table, ValueKind

_NODE = {
    "type": "object",
    "required": ["text", "span"],
    "properties": {
        "text": {"type": "string"},
        "row": {"type": "integer", "minimum": 0},
        "col": {"type": "integer", "minimum": 0},
        "span": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "children": {"type": "array", "items": {"$ref": "#/definitions/node"}},
    },
}

_TREE = {
    # if/then rather than oneOf so a bad node is reported at its own path.
    "if": {"type": "array"},
    "then": {"items": {"$ref": "#/definitions/node"}},
    "else": {"type": "object", "required": ["children"],
             "properties": {"children": {"type": "array", "items": {"$ref": "#/definitions/node"}}}},
}

TABLE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "table file",
    "type": "object",
    "required": ["table_id", "n_rows", "n_cols", "top_header_rows", "left_header_cols", "cells"],
    "properties": {
        "table_id": {"type": "string"},
        "n_rows": {"type": "integer", "minimum": 1},
        "n_cols": {"type": "integer", "minimum": 1},
        "top_header_rows": {"type": "integer", "minimum": 0},
        "left_header_cols": {"type": "integer", "minimum": 0},
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["row", "col"],
                "properties": {
                    "row": {"type": "integer", "minimum": 0},
                    "col": {"type": "integer", "minimum": 0},
                    "value": {"type": ["string", "number", "boolean", "null"]},
                    "value_kind": {"enum": [k.value for k in ValueKind]},
                    "formula": {"type": "string", "minLength": 1},
                    "format": {"type": "integer"},
                },
            },
        },
        "top_tree": _TREE,
        "left_tree": _TREE,
    },
    "definitions": {"node": _NODE},
}

_VALIDATE = fastjsonschema.compile(TABLE_SCHEMA)


def _pointer(path) -> str:
    # fastjsonschema paths start with the root name "data".
    return "".join(f"/{p}" for p in path[1:])


def _value(spec: dict) -> CellValue:
    raw = spec.get("value")
    kind = spec.get("value_kind")
    if kind is None:
        return CellValue.infer(raw)
    if raw is None:
        raw = ""
    elif isinstance(raw, bool):
        raw = "TRUE" if raw else "FALSE"
    return CellValue.of_kind(kind, str(raw))


def _tree_specs(tree) -> list:
    nodes = tree if isinstance(tree, list) else tree.get("children", [])

    def convert(node):
        addr = None
        if "row" in node and "col" in node:
            addr = CellAddress(node["col"], node["row"])
        return {"text": node["text"], "start": node["span"][0], "stop": node["span"][1], "address": addr,
                "children": [convert(c) for c in node.get("children", [])]}

    return [convert(n) for n in nodes]


def table_from_json(doc: dict, source: str = "") -> Table:
    """Validate a table document and build a :class:`Table`; raises SchemaError."""
    try:
        _VALIDATE(doc)
    except fastjsonschema.JsonSchemaValueException as err:
        raise SchemaError(err.message, source, _pointer(err.path)) from None
    n_rows, n_cols = doc["n_rows"], doc["n_cols"]
    grid = [[Cell(CellAddress(c, r)) for c in range(n_cols)] for r in range(n_rows)]
    seen = set()
    for i, spec in enumerate(doc["cells"]):
        r, c = spec["row"], spec["col"]
        if r >= n_rows or c >= n_cols:
            raise SchemaError(f"cell ({r}, {c}) outside {n_rows}x{n_cols} grid", source, f"/cells/{i}")
        if (r, c) in seen:
            raise SchemaError(f"duplicate cell ({r}, {c})", source, f"/cells/{i}")
        seen.add((r, c))
        try:
            grid[r][c] = Cell(CellAddress(c, r), _value(spec), spec.get("formula"), spec.get("format", 0))
        except TabFormulaError as exc:
            raise SchemaError(str(exc), source, f"/cells/{i}") from None
    top = _tree_specs(doc["top_tree"]) if "top_tree" in doc else None
    left = _tree_specs(doc["left_tree"]) if "left_tree" in doc else None
    try:
        return Table.assemble(grid, doc["top_header_rows"], doc["left_header_cols"], top, left, doc["table_id"])
    except TabFormulaError as exc:
        raise SchemaError(str(exc), source, "") from None


def _node_json(node: HeaderNode) -> dict:
    out = {"text": node.text, "span": [node.start, node.stop]}
    if node.address is not None:
        out["row"], out["col"] = node.address.row, node.address.col
    if node.children:
        out["children"] = [_node_json(c) for c in node.children]
    return out


def table_to_json(table: Table) -> dict:
    cells = []
    for cell in table.iter_cells():
        if cell.value == EMPTY_VALUE and cell.formula is None and cell.format == 0:
            continue
        spec = {"row": cell.address.row, "col": cell.address.col, "value": cell.value.text,
                "value_kind": cell.value.kind.value}
        if cell.formula is not None:
            spec["formula"] = cell.formula
        if cell.format:
            spec["format"] = cell.format
        cells.append(spec)
    return {
        "table_id": table.table_id, "n_rows": table.n_rows, "n_cols": table.n_cols,
        "top_header_rows": table.top_header_rows, "left_header_cols": table.left_header_cols,
        "cells": cells,
        "top_tree": {"children": [_node_json(n) for n in table.top_tree.roots]},
        "left_tree": {"children": [_node_json(n) for n in table.left_tree.roots]},
    }


def load_tables(path: Union[str, Path]) -> Iterator[Table]:
    """Yield tables from a .json (object or array) or .jsonl file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", f"{path}:{lineno}") from None
            yield table_from_json(doc, f"{path}:{lineno}")
        return
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", str(path)) from None
    if isinstance(doc, list):
        for i, item in enumerate(doc):
            yield table_from_json(item, f"{path}[{i}]")
    else:
        yield table_from_json(doc, str(path))


def dump_tables(tables, path: Union[str, Path]) -> None:
    """Write tables as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for table in tables:
            fh.write(json.dumps(table_to_json(table), ensure_ascii=False) + "\n")
