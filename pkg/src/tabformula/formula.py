"""Spreadsheet formula lexing, parsing, filtering and linearization.

Precedence, tightest first::

    :   %(postfix)   ^   unary -   * /   + -   &   = <> < > <= >=

All binary operators are left-associative.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Union

from .errors import AddressParseError, ParseError
from .functions import canonical_function_name, is_builtin
from .table import CellAddress, format_address, parse_address

OPERATORS = ("+", "-", "*", "/", "^", "%", "&", "=", "<>", ">", "<", ">=", "<=")
COMPARISONS = frozenset(("=", "<>", "<", ">", "<=", ">="))

START = "[START]"
END = "[END]"
RANGE = "[RANGE]"


class TokenKind(str, Enum):
    OP = "OP"
    FUNC = "FUNC"
    CELL = "CELL"
    CONST = "CONST"
    LPAREN = "LPAREN"
    RPAREN = "RPAREN"
    COMMA = "COMMA"
    RANGESEP = "RANGESEP"


class ConstKind(str, Enum):
    STR = "str"
    NUM = "num"
    BOOL = "bool"


class Reason(str, Enum):
    OK = "Ok"
    CROSS_SHEET = "CrossSheet"
    CROSS_FILE = "CrossFile"
    ARRAY_FORMULA = "ArrayFormula"
    USER_DEFINED_FUNCTION = "UserDefinedFunction"
    PARSE_ERROR = "ParseError"


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    reason: Reason
    detail: str = ""

    def __post_init__(self):
        if self.accepted != (self.reason is Reason.OK):
            raise ValueError("a verdict is accepted iff its reason is Ok")


OK = FilterVerdict(True, Reason.OK)


@dataclass(frozen=True)
class FormulaToken:
    kind: TokenKind
    lexeme: str
    span: tuple[int, int]


# --------------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Op:
    symbol: str
    children: tuple
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)

    @property
    def is_unary(self) -> bool:
        return len(self.children) == 1


@dataclass(frozen=True)
class Func:
    name: str
    children: tuple
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CellRef:
    address: CellAddress
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)

    children = ()


@dataclass(frozen=True)
class RangeRef:
    start: CellAddress
    end: CellAddress
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)

    children = ()

    def cells(self) -> list[CellAddress]:
        """Member cells in row-major order."""
        return [CellAddress(c, r)
                for r in range(self.start.row, self.end.row + 1)
                for c in range(self.start.col, self.end.col + 1)]


@dataclass(frozen=True)
class Const:
    kind: ConstKind
    text: str
    span: Optional[tuple[int, int]] = field(default=None, compare=False, repr=False)

    children = ()


FormulaAst = Union[Op, Func, CellRef, RangeRef, Const]


def make_range(start: CellAddress, end: CellAddress, span=None) -> RangeRef:
    """Range with corners normalized so start <= end on both axes."""
    return RangeRef(CellAddress(min(start.col, end.col), min(start.row, end.row)),
                    CellAddress(max(start.col, end.col), max(start.row, end.row)), span)


def node_count(ast: FormulaAst) -> int:
    """Node count with a range counting as three (``:`` and two corners)."""
    if isinstance(ast, RangeRef):
        return 3
    return 1 + sum(node_count(c) for c in ast.children)


def iter_nodes(ast: FormulaAst) -> Iterator[FormulaAst]:
    """Pre-order walk."""
    stack = [ast]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


# ------------------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<str>"(?:[^"]|"")*")
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<cell>\$?[A-Za-z]{1,3}\$?[0-9]+)(?![A-Za-z0-9_.(!\[])
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<op><>|>=|<=|[-+*/^&=<>%])
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
  | (?P<colon>:)
""", re.VERBOSE)

_SIMPLE = {"op": TokenKind.OP, "lparen": TokenKind.LPAREN, "rparen": TokenKind.RPAREN,
           "comma": TokenKind.COMMA, "colon": TokenKind.RANGESEP, "str": TokenKind.CONST,
           "num": TokenKind.CONST, "cell": TokenKind.CELL}


def _byte_span(text: str, start: int, end: int) -> tuple[int, int]:
    if text.isascii():
        return (start, end)
    return (len(text[:start].encode()), len(text[:end].encode()))


def tokenize(text: str) -> list[FormulaToken]:
    """Split formula text (no leading ``=``) into typed tokens.

    Names followed by ``(`` are functions; TRUE/FALSE are boolean constants;
    any other bare name (named ranges, sheet names) is a parse error.
    """
    tokens: list[FormulaToken] = []
    pos, n = 0, len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_span(text, pos, pos + 1))
        group, lexeme, end = m.lastgroup, m.group(), m.end()
        span = (pos, end)
        if group == "ws":
            pass
        elif group == "name":
            rest = end
            while rest < n and text[rest].isspace():
                rest += 1
            if rest < n and text[rest] == "(":
                tokens.append(FormulaToken(TokenKind.FUNC, lexeme, span))
            elif lexeme.upper() in ("TRUE", "FALSE"):
                tokens.append(FormulaToken(TokenKind.CONST, lexeme, span))
            else:
                raise ParseError(f"unsupported name {lexeme!r}", _byte_span(text, pos, end))
        else:
            if group == "cell":
                try:
                    parse_address(lexeme)
                except AddressParseError as exc:
                    raise ParseError(str(exc), _byte_span(text, pos, end)) from None
            tokens.append(FormulaToken(_SIMPLE[group], lexeme, span))
        pos = end
    return tokens


def const_kind(lexeme: str) -> ConstKind:
    if lexeme.startswith('"'):
        return ConstKind.STR
    if lexeme.upper() in ("TRUE", "FALSE"):
        return ConstKind.BOOL
    return ConstKind.NUM


# ------------------------------------------------------------------------ parser

_BINARY_LEVELS = (
    COMPARISONS,
    frozenset("&"),
    frozenset("+-"),
    frozenset("*/"),
)


class _Parser:
    def __init__(self, tokens: list[FormulaToken], text: str):
        self.tokens = tokens
        self.text = text
        self.i = 0

    def error(self, message: str, token: Optional[FormulaToken] = None) -> ParseError:
        if token is None:
            end = len(self.text)
            return ParseError(message, _byte_span(self.text, end, end))
        return ParseError(message, _byte_span(self.text, *token.span))

    def peek(self) -> Optional[FormulaToken]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self) -> FormulaToken:
        tok = self.peek()
        if tok is None:
            raise self.error("unexpected end of formula")
        self.i += 1
        return tok

    def at_op(self, symbols) -> Optional[FormulaToken]:
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.OP and tok.lexeme in symbols:
            return tok
        return None

    def expect(self, kind: TokenKind) -> FormulaToken:
        tok = self.take()
        if tok.kind is not kind:
            raise self.error(f"expected {kind.value}, found {tok.lexeme!r}", tok)
        return tok

    def parse(self) -> FormulaAst:
        if not self.tokens:
            raise self.error("empty formula")
        node = self.binary(0)
        tok = self.peek()
        if tok is not None:
            raise self.error(f"unexpected {tok.lexeme!r}", tok)
        return node

    def binary(self, level: int) -> FormulaAst:
        if level == len(_BINARY_LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while (tok := self.at_op(_BINARY_LEVELS[level])) is not None:
            self.i += 1
            right = self.binary(level + 1)
            left = Op(tok.lexeme, (left, right), _join(left.span, right.span))
        return left

    def unary(self) -> FormulaAst:
        tok = self.at_op("+-")
        if tok is None:
            return self.power()
        self.i += 1
        operand = self.unary()
        if tok.lexeme == "+":
            return operand
        return Op("-", (operand,), _join(tok.span, operand.span))

    def power(self) -> FormulaAst:
        left = self.postfix()
        while self.at_op("^") is not None:
            self.i += 1
            right = self.power_operand()
            left = Op("^", (left, right), _join(left.span, right.span))
        return left

    def power_operand(self) -> FormulaAst:
        # Accepts 2^-1 although the renderer writes 2^(-1).
        tok = self.at_op("+-")
        if tok is None:
            return self.postfix()
        self.i += 1
        operand = self.power_operand()
        if tok.lexeme == "+":
            return operand
        return Op("-", (operand,), _join(tok.span, operand.span))

    def postfix(self) -> FormulaAst:
        node = self.primary()
        while (tok := self.at_op("%")) is not None:
            self.i += 1
            node = Op("%", (node,), _join(node.span, tok.span))
        return node

    def primary(self) -> FormulaAst:
        tok = self.take()
        if tok.kind is TokenKind.CELL:
            start = parse_address(tok.lexeme)
            nxt = self.peek()
            if nxt is not None and nxt.kind is TokenKind.RANGESEP:
                self.i += 1
                end_tok = self.expect(TokenKind.CELL)
                return make_range(start, parse_address(end_tok.lexeme), _join(tok.span, end_tok.span))
            return CellRef(start, tok.span)
        if tok.kind is TokenKind.CONST:
            kind = const_kind(tok.lexeme)
            text = tok.lexeme.upper() if kind is ConstKind.BOOL else tok.lexeme
            return Const(kind, text, tok.span)
        if tok.kind is TokenKind.FUNC:
            self.expect(TokenKind.LPAREN)
            args = []
            nxt = self.peek()
            if nxt is not None and nxt.kind is TokenKind.RPAREN:
                close = self.take()
            else:
                args.append(self.binary(0))
                while (nxt := self.peek()) is not None and nxt.kind is TokenKind.COMMA:
                    self.i += 1
                    args.append(self.binary(0))
                close = self.expect(TokenKind.RPAREN)
            return Func(tok.lexeme.upper(), tuple(args), (tok.span[0], close.span[1]))
        if tok.kind is TokenKind.LPAREN:
            inner = self.binary(0)
            self.expect(TokenKind.RPAREN)
            return inner
        raise self.error(f"unexpected {tok.lexeme!r}", tok)


def _join(a, b):
    if a is None or b is None:
        return None
    return (min(a[0], b[0]), max(a[1], b[1]))


def parse(normalized: str) -> FormulaAst:
    """Parse normalized formula text into an AST; raises ParseError with a byte span."""
    text = normalized[1:] if normalized.startswith("=") else normalized
    return _Parser(tokenize(text), text).parse()


# --------------------------------------------------------------------- normalize


def _outside_strings(text: str) -> str:
    """Text with string-literal contents blanked out (same length)."""
    return re.sub(r'"(?:[^"]|"")*"?', lambda m: '"' + " " * (len(m.group()) - 1), text)


@dataclass(frozen=True)
class Analysis:
    """Result of filtering + parsing one raw formula."""

    raw: str
    normalized: str
    verdict: FilterVerdict
    ast: Optional[FormulaAst] = None


def analyze(raw: str) -> Analysis:
    """Normalize, filter and parse one raw formula string."""
    text = raw.strip()
    if text.startswith("="):
        text = text[1:].strip()
    bare = _outside_strings(text)
    if "{" in bare or "}" in bare:
        return Analysis(raw, text, FilterVerdict(False, Reason.ARRAY_FORMULA))
    if "!" in bare:
        cut = bare.index("!")
        reason = Reason.CROSS_FILE if "[" in bare[:cut] else Reason.CROSS_SHEET
        return Analysis(raw, text, FilterVerdict(False, reason))
    if "[" in bare:
        return Analysis(raw, text, FilterVerdict(False, Reason.CROSS_FILE, "bracketed external or structured reference"))
    try:
        tokens = tokenize(text)
    except ParseError as exc:
        return Analysis(raw, text, FilterVerdict(False, Reason.PARSE_ERROR, str(exc)))
    # Rewrite lexemes into normalized form and re-span them against the
    # normalized text, so the parser can run without lexing twice.
    norm_tokens, pos = [], 0
    for tok in tokens:
        lexeme = tok.lexeme
        if tok.kind is TokenKind.FUNC:
            if not is_builtin(lexeme):
                return Analysis(raw, text, FilterVerdict(False, Reason.USER_DEFINED_FUNCTION, lexeme))
            lexeme = canonical_function_name(lexeme)
        elif tok.kind is TokenKind.CELL:
            lexeme = format_address(parse_address(lexeme))
        elif tok.kind is TokenKind.CONST and const_kind(lexeme) is ConstKind.BOOL:
            lexeme = lexeme.upper()
        norm_tokens.append(FormulaToken(tok.kind, lexeme, (pos, pos + len(lexeme))))
        pos += len(lexeme)
    normalized = "".join(t.lexeme for t in norm_tokens)
    try:
        ast = _Parser(norm_tokens, normalized).parse()
    except ParseError as exc:
        return Analysis(raw, normalized, FilterVerdict(False, Reason.PARSE_ERROR, str(exc)))
    return Analysis(raw, normalized, OK, ast)


def normalize(raw: str) -> tuple[str, FilterVerdict]:
    """Strip ``=`` and ``$``, uppercase names and cells, and filter the formula.

    Rejections (cross-sheet, cross-file, array, user-defined function, parse
    error) come back as a verdict, never as an exception.
    """
    result = analyze(raw)
    return result.normalized, result.verdict


def parse_lenient(formula: str) -> FormulaAst:
    """Parse after ``$``/case normalization but without the corpus filters."""
    text = formula.strip()
    if text.startswith("="):
        text = text[1:]
    parts = []
    for tok in tokenize(text):
        if tok.kind is TokenKind.FUNC:
            parts.append(canonical_function_name(tok.lexeme))
        elif tok.kind is TokenKind.CELL:
            parts.append(format_address(parse_address(tok.lexeme)))
        else:
            parts.append(tok.lexeme)
    return parse("".join(parts))


# ------------------------------------------------------------------------ render

_ATOM = 8
_PREC = {"&": 2, "+": 3, "-": 3, "*": 4, "/": 4, "^": 6}
_NEG, _PERCENT = 5, 7


def _prec(node: FormulaAst) -> int:
    if isinstance(node, Op):
        if node.symbol == "%":
            return _PERCENT
        if node.is_unary:
            return _NEG
        return 1 if node.symbol in COMPARISONS else _PREC[node.symbol]
    return _ATOM


def render(ast: FormulaAst) -> str:
    """Infix text with the minimum parentheses needed to reparse to ``ast``."""
    if isinstance(ast, CellRef):
        return format_address(ast.address)
    if isinstance(ast, RangeRef):
        return f"{format_address(ast.start)}:{format_address(ast.end)}"
    if isinstance(ast, Const):
        return ast.text
    if isinstance(ast, Func):
        return f"{ast.name}({','.join(render(c) for c in ast.children)})"
    if ast.symbol == "%":
        inner = ast.children[0]
        return _wrap(inner, _prec(inner) < _PERCENT) + "%"
    if ast.is_unary:
        inner = ast.children[0]
        return "-" + _wrap(inner, _prec(inner) < _NEG)
    p = _prec(ast)
    left, right = ast.children
    return _wrap(left, _prec(left) < p) + ast.symbol + _wrap(right, _prec(right) <= p)


def _wrap(node: FormulaAst, paren: bool) -> str:
    text = render(node)
    return f"({text})" if paren else text


# ----------------------------------------------------------------------- prefix


@dataclass(frozen=True)
class PrefixToken:
    """One prefix-sequence token.

    ``kind`` is OP/FUNC/CELL/CONST for formula tokens, RANGESEP for ``:`` and
    SPECIAL for [START]/[END]. ``arity`` disambiguates unary from binary minus.
    A [RANGE] placeholder records in ``width`` how many raw tokens it replaced.
    """

    text: str
    kind: str
    arity: int = 0
    cell: Optional[CellAddress] = None
    const_kind: Optional[ConstKind] = None
    width: int = 1


START_TOKEN = PrefixToken(START, "SPECIAL")
END_TOKEN = PrefixToken(END, "SPECIAL")


@dataclass(frozen=True)
class PrefixSequence:
    tokens: tuple[PrefixToken, ...]

    def __post_init__(self):
        if len(self.tokens) < 2 or self.tokens[0].text != START or self.tokens[-1].text != END:
            raise ValueError("prefix sequence must be wrapped in [START]/[END]")

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __str__(self):
        return " ".join(self.texts)


def _cell_token(addr: CellAddress) -> PrefixToken:
    return PrefixToken(format_address(addr), "CELL", cell=addr)


def to_prefix(ast: FormulaAst) -> PrefixSequence:
    """Pre-order linearization wrapped in [START]/[END]; ranges emit ``: start end``."""
    out = [START_TOKEN]
    stack: list[FormulaAst] = [ast]
    while stack:
        node = stack.pop()
        if isinstance(node, Op):
            out.append(PrefixToken(node.symbol, "OP", arity=len(node.children)))
            stack.extend(reversed(node.children))
        elif isinstance(node, Func):
            out.append(PrefixToken(node.name, "FUNC", arity=len(node.children)))
            stack.extend(reversed(node.children))
        elif isinstance(node, CellRef):
            out.append(_cell_token(node.address))
        elif isinstance(node, RangeRef):
            out.append(PrefixToken(":", "RANGESEP", arity=2))
            out.append(_cell_token(node.start))
            out.append(_cell_token(node.end))
        else:
            out.append(PrefixToken(node.text, "CONST", const_kind=node.kind))
    out.append(END_TOKEN)
    return PrefixSequence(tuple(out))


def sketch(prefix: PrefixSequence) -> PrefixSequence:
    """Replace every cell and every ``: start end`` triple with one [RANGE]."""
    toks = prefix.tokens
    out = []
    i = 0
    while i < len(toks):
        tok = toks[i]
        if tok.kind == "RANGESEP":
            out.append(PrefixToken(RANGE, "CELL", width=3))
            i += 3
            continue
        if tok.kind == "CELL":
            out.append(tok if tok.text == RANGE else PrefixToken(RANGE, "CELL"))
        else:
            out.append(tok)
        i += 1
    return PrefixSequence(tuple(out))


def sketch_length(prefix: PrefixSequence, range_counting: str = "cell1") -> int:
    """Sketch token count excluding [START]/[END].

    ``cell1`` counts each reference (cell or range) as one [RANGE];
    ``cell3`` counts a range as its three raw tokens (``:`` and two corners).
    """
    if range_counting not in ("cell1", "cell3"):
        raise ValueError(f"unknown range counting {range_counting!r}")
    total = 0
    for tok in sketch(prefix).tokens:
        if tok.kind == "SPECIAL":
            continue
        total += tok.width if range_counting == "cell3" else 1
    return total


def referenced_cells(ast: FormulaAst) -> list[CellAddress]:
    """Cell leaves left to right; ranges expand row-major; duplicates kept."""
    out: list[CellAddress] = []
    for node in iter_nodes(ast):
        if isinstance(node, CellRef):
            out.append(node.address)
        elif isinstance(node, RangeRef):
            out.extend(node.cells())
    return out


def op_func_names(ast: FormulaAst) -> list[str]:
    """OP symbols and FUNC names in pre-order."""
    return [n.symbol if isinstance(n, Op) else n.name
            for n in iter_nodes(ast) if isinstance(n, (Op, Func))]


def parse_many(formulas: Iterable[str]) -> list[FormulaAst]:
    return [parse(f) for f in formulas]
