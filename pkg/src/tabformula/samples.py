"""Labelled samples for numerical reference, numerical calculation and formula MLM."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import DanglingReference, MissingHeader, NotADataCell, UnreachableReference
from .formula import (CellRef, FormulaAst, Func, Op, PrefixSequence, PrefixToken, RangeRef, iter_nodes,
                      referenced_cells, to_prefix)
from .table import CellAddress, Direction, HeaderNode, Table, format_address, header_set, headers_of, table_memo
from .sequence import MASK, InputMode, PackedSequence, build_sequence, choose_input_mode, select_cells
from .vocab import Vocab, op_func_token, tokenize_text

NCP_OPERATORS = ("+", "-", "*", "/", "^", "%", "&", "=", "<>", ">", "<", ">=", "<=",
                 "SUM", "AVERAGE", "MAX", "MIN")
_NCP_SET = frozenset(NCP_OPERATORS)
NEGATIVE_RATIO = 3
OBJECTIVES = ("nrp", "nrp-prompt", "ncp", "fmlm")


def derive_seed(global_seed: int, table_id: str, cell: CellAddress, objective: str = "") -> int:
    """Stable 256-bit per-sample seed: blake2b over (global seed, table id, formula cell, objective)."""
    key = f"{global_seed}\x1f{table_id}\x1f{format_address(cell)}\x1f{objective}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=32).digest(), "little")


def _pcg_state(seed: int) -> dict:
    # The hash already mixes the key well, so it fills PCG64 state and stream directly;
    # going through SeedSequence costs ~8x more per sample.
    state, inc = seed & ((1 << 128) - 1), (seed >> 128) | 1
    return {"bit_generator": "PCG64", "state": {"state": state, "inc": inc}, "has_uint32": 0, "uinteger": 0}


def sample_rng(global_seed: int, table_id: str, cell: CellAddress, objective: str = "") -> np.random.Generator:
    """Independent generator for one (formula, objective) sample."""
    bits = np.random.PCG64(0)
    bits.state = _pcg_state(derive_seed(global_seed, table_id, cell, objective))
    return np.random.Generator(bits)


def _header_json(h: HeaderNode) -> dict:
    return {"text": h.text, "cell": format_address(h.address) if h.address else None,
            "path": list(h.path), "direction": h.direction.value}


# ----------------------------------------------------------------------- NRP


class Label(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class NrpPairSample:
    formula_cell: CellAddress
    formula_header: HeaderNode
    candidate_header: HeaderNode
    label: Label
    direction: Direction
    table_id: str = ""

    def to_json(self) -> dict:
        return {"objective": "nrp", "table_id": self.table_id, "formula_cell": format_address(self.formula_cell),
                "formula_header": _header_json(self.formula_header),
                "candidate_header": _header_json(self.candidate_header),
                "label": self.label.value, "direction": self.direction.value}


def _data_refs(table: Table, ast: FormulaAst) -> list[CellAddress]:
    refs = list(dict.fromkeys(referenced_cells(ast)))
    for r in refs:
        if not table.in_bounds(r):
            raise DanglingReference(f"{format_address(r)} lies outside table {table.table_id!r}")
    # References into header regions carry no header chain; they are ignored.
    return [r for r in refs if table.is_data_cell(r)]


def reference_headers(table: Table, formula_cell: CellAddress, ast: FormulaAst):
    """Split headers into (formula-side non-shared, reference-side non-shared, all referenced).

    A formula-cell header shared with any referenced cell is dropped from the
    formula side; reference-side headers exclude everything on the formula
    cell's own chains.
    """
    memo = table_memo(table, "reference_headers")
    hit = memo.get(formula_cell)
    if hit is None or hit[0] is not ast:
        hit = memo[formula_cell] = (ast, _reference_headers(table, formula_cell, ast))
    formula_side, ref_side, referenced = hit[1]
    return list(formula_side), list(ref_side), set(referenced)


def _reference_headers(table, formula_cell, ast):
    f_chain = header_set(table, formula_cell)
    f_keys = set(f_chain)
    ref_chains = [header_set(table, r) for r in _data_refs(table, ast)]
    shared = set()
    for chain in ref_chains:
        shared |= f_keys & set(chain)
    formula_side = [h for h in f_chain if h not in shared]
    ref_side = list(dict.fromkeys(h for chain in ref_chains for h in chain if h not in f_keys))
    referenced = frozenset(h for chain in ref_chains for h in chain)
    return tuple(formula_side), tuple(ref_side), referenced


def nrp_pairs(table: Table, formula_cell: CellAddress, ast: FormulaAst,
              rng: np.random.Generator) -> list[NrpPairSample]:
    """Positive header-reference pairs plus up to three sampled negatives per positive.

    Pairs are direction-homogeneous; negatives for a formula header come from
    the same header tree, excluding every header of the formula cell and of the
    referenced cells. No positives means no samples.
    """
    formula_side, ref_side, referenced = reference_headers(table, formula_cell, ast)
    own = set(header_set(table, formula_cell))
    out: list[NrpPairSample] = []
    tid = table.table_id
    for hf in formula_side:
        positives = [hp for hp in ref_side if hp.direction is hf.direction]
        if not positives:
            continue
        out.extend(NrpPairSample(formula_cell, hf, hp, Label.POSITIVE, hf.direction, tid) for hp in positives)
        tree = table.top_tree if hf.direction is Direction.TOP else table.left_tree
        candidates = [h for h in tree.nodes() if h not in referenced and h not in own]
        k = min(NEGATIVE_RATIO * len(positives), len(candidates))
        if k:
            picks = np.sort(rng.choice(len(candidates), size=k, replace=False))
            out.extend(NrpPairSample(formula_cell, hf, candidates[i], Label.NEGATIVE, hf.direction, tid)
                       for i in picks)
    return out


class CellClass(str, Enum):
    FORMULA_HEADER = "FormulaHeader"
    FORMULA_CELL = "FormulaCell"
    REFERENCE_HEADER = "ReferenceHeader"
    OTHER = "Other"


_CLASS_TEXT = {c: c.value for c in CellClass}


@dataclass(frozen=True)
class NrpPromptSample:
    formula_cell: CellAddress
    prompt_tokens: tuple[str, ...]
    noise_count: int
    cell_labels: dict
    table_id: str = ""

    def labels_for(self, cells: Iterable[CellAddress]) -> list[tuple[CellAddress, CellClass]]:
        return [(c, self.cell_labels.get(c, CellClass.OTHER)) for c in cells]

    def to_json(self, cells: Optional[Iterable[CellAddress]] = None) -> dict:
        """``cells`` defaults to the labelled (non-Other) cells."""
        cells = list(self.cell_labels) if cells is None else list(cells)
        return {"objective": "nrp-prompt", "table_id": self.table_id,
                "formula_cell": format_address(self.formula_cell),
                "prompt_tokens": list(self.prompt_tokens), "noise_count": self.noise_count,
                "cell_labels": [[format_address(c), _CLASS_TEXT[k]] for c, k in self.labels_for(cells)]}


def nrp_prompt(table: Table, formula_cell: CellAddress, ast: FormulaAst, vocab: Vocab,
               rng: np.random.Generator, full_vocab_noise: bool = False) -> NrpPromptSample:
    """Noisy prompt of 1 to 10 vocabulary tokens with the formula cell's headers inserted.

    The row header and column header land at two distinct uniformly drawn slots.
    Every table cell gets a class; precedence is FormulaCell > FormulaHeader >
    ReferenceHeader > Other. Only non-Other cells are stored in ``cell_labels``.
    """
    top, left = headers_of(table, formula_cell)
    if not top or not left:
        raise MissingHeader(f"{format_address(formula_cell)} lacks a top or left header")
    col_header, row_header = top[-1], left[-1]
    pool = vocab.noise_pool(full_vocab_noise)
    k = int(rng.integers(1, 11))
    noise = [pool[i] for i in rng.integers(0, len(pool), size=k)]
    # Two distinct slots out of k + 2, uniform over ordered pairs.
    row_slot = int(rng.integers(k + 2))
    col_slot = int(rng.integers(k + 1))
    col_slot += col_slot >= row_slot
    slots: list[list[str]] = []
    it = iter(noise)
    for i in range(k + 2):
        if i == row_slot:
            slots.append(tokenize_text(row_header.text))
        elif i == col_slot:
            slots.append(tokenize_text(col_header.text))
        else:
            slots.append([next(it)])
    prompt = tuple(t for slot in slots for t in slot)

    _, ref_side, _ = reference_headers(table, formula_cell, ast)
    labels = {}
    for h in ref_side:
        if h.address is not None:
            labels[h.address] = CellClass.REFERENCE_HEADER
    for h in (row_header, col_header):
        if h.address is not None:
            labels[h.address] = CellClass.FORMULA_HEADER
    labels[formula_cell] = CellClass.FORMULA_CELL
    return NrpPromptSample(formula_cell, prompt, k, labels, table.table_id)


# ----------------------------------------------------------------------- NCP


@dataclass(frozen=True)
class NcpSample:
    operator: str
    operand_cells: tuple[CellAddress, ...]
    formula_cell: Optional[CellAddress] = None
    table_id: str = ""

    def to_json(self) -> dict:
        return {"objective": "ncp", "table_id": self.table_id,
                "formula_cell": format_address(self.formula_cell) if self.formula_cell else None,
                "operator": self.operator, "operand_cells": [format_address(c) for c in self.operand_cells]}


def ncp_samples(ast: FormulaAst, table: Table, formula_cell: Optional[CellAddress] = None) -> list[NcpSample]:
    """One sample per listed operator/function whose direct children are all numeric cells.

    Range children expand to their member cells; unary minus is negation, not
    one of the calculation targets, and is skipped.
    """
    out = []
    for node in iter_nodes(ast):
        if isinstance(node, Op):
            if node.symbol == "-" and node.is_unary:
                continue
            name = node.symbol
        elif isinstance(node, Func):
            name = node.name
        else:
            continue
        if name not in _NCP_SET or not node.children:
            continue
        operands: list[CellAddress] = []
        for child in node.children:
            if isinstance(child, CellRef):
                operands.append(child.address)
            elif isinstance(child, RangeRef):
                operands.extend(child.cells())
            else:
                break
        else:
            if all(table.in_bounds(a) and table.is_data_cell(a) and table.cell(a).is_numeric for a in operands):
                out.append(NcpSample(name, tuple(operands), formula_cell, table.table_id))
    return out


# ---------------------------------------------------------------------- FMLM


class MaskMode(str, Enum):
    MASK_OPS = "MaskOps"
    MASK_CELLS = "MaskCells"


_MASKED_KINDS = {MaskMode.MASK_OPS: ("OP", "FUNC"), MaskMode.MASK_CELLS: ("CELL",)}


@dataclass(frozen=True)
class MaskedCellFeatureRule:
    """How masked referenced cells are embedded: default number, formula cell's position and format."""

    formula_cell: CellAddress
    number: str = "default"
    position: str = "formula_cell"
    format: str = "formula_cell"

    def to_json(self) -> dict:
        return {"number": self.number, "position": self.position, "format": self.format,
                "formula_cell": format_address(self.formula_cell)}


@dataclass(frozen=True)
class FmlmSample:
    tokens: PrefixSequence
    mode: MaskMode
    labels: tuple[tuple[int, object], ...]
    masked_cell_feature_rule: MaskedCellFeatureRule
    input_cells: tuple[CellAddress, ...] = field(default=(), repr=False)
    table_id: str = ""

    def restore(self) -> list[str]:
        """Token texts with every label written back into its masked position."""
        texts = self.tokens.texts
        for pos, target in self.labels:
            texts[pos] = format_address(self.input_cells[target]) if self.mode is MaskMode.MASK_CELLS else target
        return texts

    def to_json(self, vocab: Optional[Vocab] = None) -> dict:
        labels = []
        for pos, target in self.labels:
            item = {"position": pos, "target": target}
            if vocab is not None and self.mode is MaskMode.MASK_OPS:
                item["target_id"] = vocab.id(op_func_token(target))
            labels.append(item)
        return {"objective": "fmlm", "table_id": self.table_id,
                "formula_cell": format_address(self.masked_cell_feature_rule.formula_cell),
                "mode": self.mode.value, "tokens": self.tokens.texts,
                "token_kinds": [t.kind for t in self.tokens.tokens], "labels": labels,
                "masked_cell_feature_rule": self.masked_cell_feature_rule.to_json()}


def fmlm_mask(prefix: PrefixSequence, mode: MaskMode, formula_cell: CellAddress,
              input_cells: Sequence[CellAddress]) -> FmlmSample:
    """Mask every OP/FUNC token or every referenced-cell token of a prefix sequence.

    Cell labels are indices into ``input_cells``; a referenced cell missing
    from the input raises UnreachableReference.
    """
    mode = MaskMode(mode)
    kinds = _MASKED_KINDS[mode]
    index = {}
    for i, c in enumerate(input_cells):
        index.setdefault(c, i)
    tokens, labels = [], []
    for pos, tok in enumerate(prefix.tokens):
        if tok.kind not in kinds:
            tokens.append(tok)
            continue
        if mode is MaskMode.MASK_CELLS:
            if tok.cell not in index:
                raise UnreachableReference(f"{tok.text} is not among the input cells")
            labels.append((pos, index[tok.cell]))
        else:
            labels.append((pos, tok.text))
        tokens.append(PrefixToken(MASK, tok.kind))
    return FmlmSample(PrefixSequence(tuple(tokens)), mode, tuple(labels),
                      MaskedCellFeatureRule(formula_cell), tuple(input_cells))


# ---------------------------------------------------------------- generation


@dataclass
class GenerationSummary:
    tables: int = 0
    formulas: int = 0
    samples: int = 0
    dangling_references: int = 0
    missing_headers: int = 0
    unreachable_references: int = 0
    not_data_cells: int = 0

    def merge(self, other: "GenerationSummary") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def generate_samples(table: Table, formulas: Iterable[tuple[CellAddress, FormulaAst]],
                     objectives: Sequence[str], seed: int, vocab: Vocab, max_len: int = 256,
                     pack: bool = False, summary: Optional[GenerationSummary] = None,
                     sequence_objects: bool = False) -> Iterator[dict]:
    """Yield JSON-ready sample records for each retained formula of one table.

    Each (formula, objective) pair draws from its own derived generator, so the
    output does not depend on which other objectives or tables are processed.
    NRP-prompt and FMLM samples always embed a packed sequence under the last
    key, ``sequence``; NRP and NCP samples carry one when ``pack`` is set. With
    ``sequence_objects`` that value stays a :class:`PackedSequence` (the CLI
    serializes it with ``to_json_text``).
    """
    summary = summary if summary is not None else GenerationSummary()
    tid = table.table_id
    # One bit generator reseeded per sample: same stream as sample_rng(), and
    # safe because each sample's records are fully built before the next reseed.
    bits = np.random.PCG64(0)
    rng = np.random.Generator(bits)
    for cell, ast in formulas:
        summary.formulas += 1
        if not _refs_in_bounds(table, ast):
            summary.dangling_references += 1
            continue
        for objective in objectives:
            bits.state = _pcg_state(derive_seed(seed, tid, cell, objective))
            try:
                records = list(_objective_records(table, cell, ast, objective, rng, vocab, max_len, pack))
            except DanglingReference:
                summary.dangling_references += 1
                break
            except MissingHeader:
                summary.missing_headers += 1
                continue
            except UnreachableReference:
                summary.unreachable_references += 1
                continue
            except NotADataCell:
                summary.not_data_cells += 1
                break
            summary.samples += len(records)
            if not sequence_objects:
                last = last_json = None
                for rec in records:
                    seq = rec.get("sequence")
                    if seq is not None:
                        if seq is not last:
                            last, last_json = seq, seq.to_json()
                        rec["sequence"] = last_json
            yield from records


def _refs_in_bounds(table: Table, ast: FormulaAst) -> bool:
    for node in iter_nodes(ast):
        if isinstance(node, CellRef):
            if not table.in_bounds(node.address):
                return False
        elif isinstance(node, RangeRef) and not table.in_bounds(node.end):
            return False
    return True


def _context(table, cell, ast, rng, vocab, max_len, text=()) -> PackedSequence:
    mode = choose_input_mode(rng)
    prefix = to_prefix(ast) if mode is InputMode.FORMULA_TOKENS else None
    return build_sequence(table, list(text), cell, mode, max_len, vocab, prefix)


def _objective_records(table, cell, ast, objective, rng, vocab, max_len, pack):
    if objective == "nrp":
        pairs = nrp_pairs(table, cell, ast, rng)
        if pairs and pack:
            seq = _context(table, cell, ast, rng, vocab, max_len)
            for p in pairs:
                yield {**p.to_json(), "sequence": seq}
        else:
            for p in pairs:
                yield p.to_json()
    elif objective == "nrp-prompt":
        sample = nrp_prompt(table, cell, ast, vocab, rng)
        seq = _context(table, cell, ast, rng, vocab, max_len, sample.prompt_tokens)
        yield {**sample.to_json(seq.cells), "sequence": seq}
    elif objective == "ncp":
        samples = ncp_samples(ast, table, cell)
        seq = _context(table, cell, ast, rng, vocab, max_len) if samples and pack else None
        for s in samples:
            yield s.to_json() if seq is None else {**s.to_json(), "sequence": seq}
    elif objective == "fmlm":
        prefix = to_prefix(ast)
        mode = MaskMode.MASK_OPS if rng.random() < 0.5 else MaskMode.MASK_CELLS
        # Masking keeps the token count, so packing the masked prefix keeps the
        # same cells as packing the plain one; labels are indexed against those.
        draft = fmlm_mask(prefix, mode, cell, select_cells(table, cell))
        seq = build_sequence(table, [], cell, InputMode.FORMULA_TOKENS, max_len, vocab, draft.tokens)
        sample = fmlm_mask(prefix, mode, cell, seq.cells)
        sample = FmlmSample(sample.tokens, sample.mode, sample.labels, sample.masked_cell_feature_rule,
                            sample.input_cells, table.table_id)
        yield {**sample.to_json(vocab), "input_cells": [format_address(c) for c in seq.cells], "sequence": seq}
    else:
        raise ValueError(f"unknown objective {objective!r}")
