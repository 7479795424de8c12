"""Model-input packing: cell selection, input-mode mixing and token records."""

from __future__ import annotations

import json
from json.encoder import encode_basestring
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from itertools import chain
from operator import itemgetter
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import NotADataCell, TextTooLong
from .formula import PrefixSequence, analyze, to_prefix
from .table import (DEFAULT_COORD, CellAddress, NumericFeatures, Table, coordinates, format_address,
                    numeric_features, parse_number, table_memo)
from .vocab import Vocab, formula_token_text, tokenize_text

MASK = "[MASK]"


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


# Per-column JSON encoders for the value types each column can hold; they
# produce exactly what json.dumps(..., separators=(",", ":")) would.
_encode_str = encode_basestring


def _encode_opt_str(v) -> str:
    return "null" if v is None else _encode_str(v)


@lru_cache(maxsize=4096)
def _encode_ints(v) -> str:
    return "null" if v is None else "[" + ",".join(map(str, v)) + "]"


def _encode_number(v) -> str:
    return "null" if v is None else _encode_ints(tuple(v))


_ENCODERS = (str, _encode_str, _encode_str, _encode_opt_str, _encode_number, _encode_ints, _encode_ints, str,
             _encode_opt_str)


ALLOWED_MAX_LEN = (256, 512)


class InputMode(str, Enum):
    FORMULA_TOKENS = "FormulaTokens"
    FORMULA_TAG = "FormulaTag"
    LITERAL = "Literal"


MODE_PROBABILITIES = {InputMode.FORMULA_TOKENS: 0.4, InputMode.FORMULA_TAG: 0.3, InputMode.LITERAL: 0.3}


class Segment(str, Enum):
    TEXT = "text"
    TABLE = "table"


class TokenRecord(NamedTuple):
    token_id: int
    text: str
    segment: Segment
    formula_kind: Optional[str] = None
    number: Optional[NumericFeatures] = None
    top_coord: tuple[int, ...] = DEFAULT_COORD
    left_coord: tuple[int, ...] = DEFAULT_COORD
    format: int = 0
    source_cell: Optional[CellAddress] = None


_COLUMNS = ("token_ids", "tokens", "segment", "formula_kind", "number", "top_coord", "left_coord", "format",
            "source_cell")


def _columns(records: Sequence[TokenRecord]) -> tuple[tuple, ...]:
    """JSON-ready column fragments for a run of records, in ``_COLUMNS`` order."""
    rows = [(r.token_id, r.text, "text" if r.segment is Segment.TEXT else "table", r.formula_kind,
             r.number.as_list() if r.number is not None else None, r.top_coord, r.left_coord, r.format,
             format_address(r.source_cell) if r.source_cell is not None else None) for r in records]
    return tuple(zip(*rows)) if rows else ((),) * len(_COLUMNS)


class _Block:
    """A run of token records with precomputed JSON columns.

    ``records`` may be deferred: packing and serialization only need the
    columns and the length.
    """

    __slots__ = ("columns", "size", "_records", "_recipe", "_fragments")

    def __init__(self, columns: tuple[tuple, ...], records=None, recipe=None):
        self.columns = columns
        self.size = len(columns[0])
        self._records = records
        self._recipe = recipe
        self._fragments = None

    @property
    def fragments(self) -> tuple[str, ...]:
        """Each column serialized as JSON array items, without the brackets."""
        if self._fragments is None:
            self._fragments = tuple(",".join(map(enc, col)) for enc, col in zip(_ENCODERS, self.columns))
        return self._fragments

    @property
    def records(self) -> tuple[TokenRecord, ...]:
        if self._records is None:
            self._records = _plain_records(*self._recipe)
        return self._records


def _block(records: Sequence[TokenRecord]) -> _Block:
    records = tuple(records)
    return _Block(_columns(records), records)


@dataclass(frozen=True)
class PackedSequence:
    """A packed model input.

    ``blocks`` holds the text segment followed by one block per kept cell;
    ``records`` is their concatenation.
    """

    blocks: tuple[_Block, ...] = field(repr=False)
    max_len: int
    truncated: bool
    cells: tuple[CellAddress, ...]
    target: CellAddress
    mode: InputMode

    @cached_property
    def records(self) -> tuple[TokenRecord, ...]:
        return tuple(chain.from_iterable(b.records for b in self.blocks))

    def __len__(self):
        return sum(b.size for b in self.blocks)

    @property
    def token_ids(self) -> list[int]:
        return [r.token_id for r in self.records]

    def to_json(self) -> dict:
        """Column-oriented record; number features are ``null`` when defaulted.

        Coordinates stay tuples (they serialize as JSON arrays).
        """
        out = {"max_len": self.max_len, "truncated": self.truncated, "mode": self.mode.value,
               "target": format_address(self.target), "cells": [format_address(c) for c in self.cells]}
        columns = [b.columns for b in self.blocks]
        for i, name in enumerate(_COLUMNS):
            out[name] = list(chain.from_iterable(map(itemgetter(i), columns)))
        return out

    def to_json_text(self) -> str:
        """Compact JSON of :meth:`to_json`, assembled from per-block cached fragments."""
        head = _dumps({"max_len": self.max_len, "truncated": self.truncated, "mode": self.mode.value,
                       "target": format_address(self.target), "cells": [format_address(c) for c in self.cells]})
        parts = [head[:-1]]
        fragments = [b.fragments for b in self.blocks]
        for i, name in enumerate(_COLUMNS):
            parts.append(f',"{name}":[{",".join(map(itemgetter(i), fragments))}]')
        parts.append("}")
        return "".join(parts)


def select_cells(table: Table, target: CellAddress) -> list[CellAddress]:
    """Header cells plus data cells on the target's row or column, in reading order."""
    if not table.is_data_cell(target):
        raise NotADataCell(f"{target} is not a data cell")
    return list(_selected(table, target))


def _selected(table: Table, target: CellAddress) -> tuple[CellAddress, ...]:
    memo = table_memo(table, "selected")
    hit = memo.get(target)
    if hit is None:
        thr, lhc = table.top_header_rows, table.left_header_cols
        hit = memo[target] = tuple(cell.address for r, row in enumerate(table.cells) for c, cell in enumerate(row)
                                   if r < thr or c < lhc or r == target.row or c == target.col)
    return hit


def choose_input_mode(rng: np.random.Generator) -> InputMode:
    """Draw FormulaTokens / FormulaTag / Literal with probability 0.4 / 0.3 / 0.3."""
    u = rng.random()
    if u < 0.4:
        return InputMode.FORMULA_TOKENS
    if u < 0.7:
        return InputMode.FORMULA_TAG
    return InputMode.LITERAL


def _number_or_none(text: str) -> Optional[NumericFeatures]:
    if not text or not (text[0].isdigit() or text[0] == "."):
        return None
    cleaned = text.replace(",", "")
    if parse_number(cleaned) is None:
        return None
    return numeric_features(cleaned)


@lru_cache(maxsize=1 << 16)
def _text_tokens(vocab: Vocab, text: str) -> tuple[tuple[int, str, Optional[NumericFeatures]], ...]:
    return tuple((vocab.text_id(w), w, _number_or_none(w)) for w in tokenize_text(text))


@lru_cache(maxsize=1 << 16)
def _text_columns(vocab: Vocab, text: str) -> tuple[tuple, tuple, tuple]:
    """Token id, text and number columns of a cell string, closing [SEP] included."""
    toks = _text_tokens(vocab, text)
    return (tuple(t[0] for t in toks) + (vocab.sep_id,), tuple(t[1] for t in toks) + ("[SEP]",),
            tuple(tuple(t[2].as_list()) if t[2] is not None else None for t in toks) + (None,))


def _plain_block(table: Table, vocab: Vocab, addr: CellAddress) -> _Block:
    """A cell's literal tokens followed by its closing [SEP]."""
    memo = table_memo(table, "plain_block")
    key = (vocab, addr)
    hit = memo.get(key)
    if hit is None:
        hit = memo[key] = _make_plain_block(table, vocab, addr)
    return hit


def _make_plain_block(table: Table, vocab: Vocab, addr: CellAddress) -> _Block:
    cell = table.cell(addr)
    top, left = coordinates(table, addr)
    fmt = cell.format
    ids, words, nums = _text_columns(vocab, cell.text)
    # Columns built directly: within one cell most fields are constant.
    n, src = len(ids) - 1, format_address(addr)
    columns = (
        ids,
        words,
        ("table",) * (n + 1),
        (None,) * (n + 1),
        nums,
        (top,) * n + (DEFAULT_COORD,),
        (left,) * n + (DEFAULT_COORD,),
        (fmt,) * n + (0,),
        (src,) * n + (None,),
    )
    return _Block(columns, recipe=(_text_tokens(vocab, cell.text), top, left, fmt, addr, vocab.sep_id))


def _plain_records(toks, top, left, fmt, addr, sep_id) -> tuple[TokenRecord, ...]:
    records = tuple(TokenRecord(tid, w, Segment.TABLE, None, num, top, left, fmt, addr) for tid, w, num in toks)
    return records + (TokenRecord(sep_id, "[SEP]", Segment.TABLE),)


def _cell_features(table: Table, addr: CellAddress):
    """(number, top, left, format) copied onto formula tokens that reference ``addr``."""
    memo = table_memo(table, "cell_features")
    hit = memo.get(addr)
    if hit is None:
        ref = table.cell(addr)
        num = numeric_features(ref.value.text) if ref.is_numeric else None
        hit = memo[addr] = (num, *coordinates(table, addr), ref.format)
    return hit


class _Builder:
    def __init__(self, table: Table, vocab: Vocab):
        self.table = table
        self.vocab = vocab

    def plain_cell(self, addr: CellAddress) -> list[TokenRecord]:
        return list(_plain_block(self.table, self.vocab, addr).records[:-1])

    def formula_cell(self, addr: CellAddress, prefix: PrefixSequence) -> list[TokenRecord]:
        table, vocab = self.table, self.vocab
        cell = table.cell(addr)
        top, left = coordinates(table, addr)
        out = []
        for tok in prefix.tokens:
            kind = tok.kind if tok.kind in ("OP", "FUNC", "CELL", "CONST") else None
            if tok.text == MASK:
                # Masked tokens borrow the formula cell's position and format, default number.
                out.append(TokenRecord(vocab.mask_id, MASK, Segment.TABLE, kind, None, top, left, cell.format, addr))
            elif tok.kind == "CELL" and tok.cell is not None and table.in_bounds(tok.cell):
                num, rtop, rleft, fmt = _cell_features(table, tok.cell)
                out.append(TokenRecord(vocab.id("[RANGE]"), tok.text, Segment.TABLE, kind, num, rtop, rleft,
                                       fmt, tok.cell))
            elif tok.kind == "CELL":
                # Outside the table: nothing to copy from.
                out.append(TokenRecord(vocab.id("[RANGE]"), tok.text, Segment.TABLE, kind, None,
                                       DEFAULT_COORD, DEFAULT_COORD, 0, tok.cell))
            else:
                num = None
                if tok.kind == "CONST" and tok.const_kind is not None and tok.const_kind.value == "num":
                    num = numeric_features(tok.text)
                out.append(TokenRecord(vocab.id(formula_token_text(tok)), tok.text, Segment.TABLE, kind, num,
                                       top, left, cell.format, addr))
        return out

    def tag_cell(self, addr: CellAddress) -> list[TokenRecord]:
        cell = self.table.cell(addr)
        top, left = coordinates(self.table, addr)
        return [TokenRecord(self.vocab.formula_id, "[FORMULA]", Segment.TABLE, None, None, top, left,
                            cell.format, addr)]


def _target_prefix(table: Table, target: CellAddress) -> Optional[PrefixSequence]:
    formula = table.cell(target).formula
    if formula is None:
        return None
    result = analyze(formula)
    return to_prefix(result.ast) if result.ast is not None else None


def build_sequence(table: Table, text_tokens: Sequence[str], target: CellAddress, mode: InputMode,
                   max_len: int = 512, vocab: Optional[Vocab] = None,
                   prefix: Optional[PrefixSequence] = None) -> PackedSequence:
    """Pack ``[CLS] text [SEP]`` followed by each selected cell and a ``[SEP]``.

    The target renders per ``mode``: prefix formula tokens, a single [FORMULA]
    tag, or its literal value. ``prefix`` overrides the target's own formula
    (pass a masked prefix for formula MLM); a target without a usable formula
    renders as its literal value. Trailing whole cells are dropped on overflow;
    a target that would be dropped takes the place of the last surviving cells.
    """
    if max_len not in ALLOWED_MAX_LEN:
        raise ValueError(f"max_len must be one of {ALLOWED_MAX_LEN}")
    vocab = vocab or default_vocab()
    if not table.is_data_cell(target):
        raise NotADataCell(f"{target} is not a data cell")
    builder = _Builder(table, vocab)

    head = [TokenRecord(vocab.cls_id, "[CLS]", Segment.TEXT)]
    for word in text_tokens:
        head.append(TokenRecord(vocab.text_id(word), word, Segment.TEXT, None, _number_or_none(word)))
    head.append(TokenRecord(vocab.sep_id, "[SEP]", Segment.TEXT))
    if len(head) > max_len:
        raise TextTooLong(f"text segment needs {len(head)} tokens, max_len is {max_len}")

    if mode is InputMode.FORMULA_TOKENS and prefix is None:
        prefix = _target_prefix(table, target)
    if mode is InputMode.FORMULA_TAG:
        body = builder.tag_cell(target)
    elif mode is InputMode.FORMULA_TOKENS and prefix is not None:
        body = builder.formula_cell(target, prefix)
    else:
        body = builder.plain_cell(target)
    body.append(TokenRecord(vocab.sep_id, "[SEP]", Segment.TABLE))
    target_block = _block(body)

    addrs, context, at, others_len = _context_blocks(table, vocab, target)
    budget = max_len - len(head)
    if others_len + target_block.size <= budget:
        kept = list(context)
        kept[at] = target_block
        return PackedSequence((_block(head), *kept), max_len, False, addrs, target, mode)

    kept_addrs, kept, used = [], [], 0
    for addr, block in zip(addrs, context):
        if block is None:
            block = target_block
        if used + block.size > budget:
            break
        kept_addrs.append(addr)
        kept.append(block)
        used += block.size
    if target not in kept_addrs:
        need = target_block.size
        while kept and used + need > budget:
            kept_addrs.pop()
            used -= kept.pop().size
        if used + need <= budget:
            kept_addrs.append(target)
            kept.append(target_block)
    return PackedSequence((_block(head), *kept), max_len, True, tuple(kept_addrs), target, mode)


def _context_blocks(table: Table, vocab: Vocab, target: CellAddress):
    """Selected cells, their literal blocks (None at the target), the target's index and the non-target length."""
    memo = table_memo(table, "context")
    key = (vocab, target)
    hit = memo.get(key)
    if hit is None:
        plain = table_memo(table, "plain_block")
        addrs = tuple(select_cells(table, target))
        blocks, total = [], 0
        for addr in addrs:
            if addr == target:
                blocks.append(None)
                continue
            block = plain.get((vocab, addr))
            if block is None:
                block = plain[(vocab, addr)] = _make_plain_block(table, vocab, addr)
            blocks.append(block)
            total += block.size
        hit = memo[key] = (addrs, tuple(blocks), addrs.index(target), total)
    return hit


@lru_cache(maxsize=1)
def default_vocab() -> Vocab:
    return Vocab.default()
