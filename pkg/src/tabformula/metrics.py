"""Formula, sketch and range accuracy with error classification."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .errors import EmptyEvalSet, GoldParseError, ParseError
from .formula import FormulaAst, parse_lenient, referenced_cells, sketch, to_prefix
from .table import CellAddress


class ErrorClass(str, Enum):
    SKETCH_FAILURE = "SketchFailure"
    REFERENCE_UNREACHABLE = "ReferenceUnreachable"
    REFERENCE_FAILURE = "ReferenceFailure"


@dataclass(frozen=True)
class EvalVerdict:
    formula_correct: bool
    sketch_correct: bool
    range_correct: bool
    error_class: Optional[ErrorClass] = None

    def __post_init__(self):
        if self.formula_correct and not (self.sketch_correct and self.range_correct):
            raise ValueError("a correct formula implies correct sketch and range")
        if (self.error_class is None) != self.formula_correct:
            raise ValueError("error_class is set iff the formula is wrong")


def _prepare(formula: str) -> FormulaAst:
    return parse_lenient(formula)


def _key(ast: FormulaAst) -> str:
    return " ".join(t.text.strip() for t in to_prefix(ast).tokens)


def canonicalize(formula: str) -> str:
    """Comparison key: ``$``/case-normalized formula rendered as prefix text.

    ParseError propagates for unparseable input.
    """
    return _key(_prepare(formula))


def eval_prediction(pred: str, gold: str, input_cells: Optional[Iterable[CellAddress]] = None,
                    ordered_ranges: bool = True) -> EvalVerdict:
    """Score one predicted formula against gold.

    ``input_cells`` are the cells present in the model input; a gold reference
    outside them classifies a range miss as ReferenceUnreachable. ``None``
    skips that check. ``ordered_ranges=False`` compares referenced cells as sets.
    """
    try:
        gold_ast = _prepare(gold)
    except ParseError as exc:
        raise GoldParseError(f"gold formula {gold!r} does not parse: {exc}") from exc
    try:
        pred_ast = _prepare(pred)
    except ParseError:
        return EvalVerdict(False, False, False, ErrorClass.SKETCH_FAILURE)

    gold_prefix, pred_prefix = to_prefix(gold_ast), to_prefix(pred_ast)
    formula_ok = _key(pred_ast) == _key(gold_ast)
    sketch_ok = [t.text.strip() for t in sketch(pred_prefix)] == [t.text.strip() for t in sketch(gold_prefix)]
    gold_refs, pred_refs = referenced_cells(gold_ast), referenced_cells(pred_ast)
    range_ok = gold_refs == pred_refs if ordered_ranges else set(gold_refs) == set(pred_refs)
    if formula_ok:
        return EvalVerdict(True, True, True)
    if not sketch_ok:
        error = ErrorClass.SKETCH_FAILURE
    elif input_cells is not None and not set(gold_refs) <= set(input_cells):
        error = ErrorClass.REFERENCE_UNREACHABLE
    else:
        error = ErrorClass.REFERENCE_FAILURE
    return EvalVerdict(False, sketch_ok, range_ok, error)


@dataclass(frozen=True)
class EvalReport:
    count: int
    formula_acc: float
    sketch_acc: float
    range_acc: float
    error_histogram: dict

    def to_json(self) -> dict:
        return {"count": self.count, "formula_acc": self.formula_acc, "sketch_acc": self.sketch_acc,
                "range_acc": self.range_acc,
                "error_histogram": {k.value: v for k, v in self.error_histogram.items()}}


def aggregate(verdicts: Iterable[EvalVerdict]) -> EvalReport:
    verdicts = list(verdicts)
    if not verdicts:
        raise EmptyEvalSet("no verdicts to aggregate")
    n = len(verdicts)
    hist = Counter(v.error_class for v in verdicts if v.error_class is not None)
    return EvalReport(
        n,
        sum(v.formula_correct for v in verdicts) / n,
        sum(v.sketch_correct for v in verdicts) / n,
        sum(v.range_correct for v in verdicts) / n,
        {k: hist[k] for k in ErrorClass if hist[k]},
    )
