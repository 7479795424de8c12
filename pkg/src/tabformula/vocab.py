"""Token registry: a pluggable base text vocabulary plus 41 formula tokens."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence, Union

from .formula import (END, RANGE, START, ConstKind, FormulaAst, FormulaToken, PrefixToken,
                      TokenKind, const_kind, op_func_names)

# Base-vocabulary tokens the sequence builder relies on.
REQUIRED_BASE = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[FORMULA]")

CONST_TOKENS = {ConstKind.STR: "[C-STR]", ConstKind.NUM: "[C-NUM]", ConstKind.BOOL: "[C-BOOL]"}

OP_FUNC_TOKENS = (
    "[+]", "[SUM]", "[-]", "[/]", "[IF]", "[ROUND]", "[AVERAGE]", "[VLOOKUP]", "[>]", "[=]",
    "[<]", "[ABS]", "[OFFSET]", "[SUBTOTAL]", "[MAX]", "[<>]", "[^]", "[LN]", "[COUNTA]",
    "[SQRT]", "[MIN]", "[ISERROR]", "[EOMONTH]", "[COUNT]", "[AND]", "[%]", "[INDEX]", "[YEAR]",
    "[MONTH]", "[MATCH]", "[>=]", "[<=]", "[&]", "[UNKOP]",
)
UNKOP = "[UNKOP]"
RANGESEP_TOKEN = "[:]"

# Appended after the base vocabulary in exactly this order.
FORMULA_TOKENS = ("[RANGE]", "[C-STR]", "[C-NUM]", "[C-BOOL]") + OP_FUNC_TOKENS + (START, END, RANGESEP_TOKEN)

KNOWN_OP_FUNCS = frozenset(t[1:-1] for t in OP_FUNC_TOKENS if t != UNKOP)

_WORD_RE = re.compile(r"\d+(?:[.,]\d+)*|[^\W\d_]+|[^\w\s]")


def tokenize_text(text: str) -> list[str]:
    """Lowercased word/number/punctuation split used for cell strings and prompts."""
    return [w.lower() for w in _WORD_RE.findall(text)]


def op_func_token(name: str) -> str:
    """Bracketed vocabulary token for an OP/FUNC name, [UNKOP] when unlisted."""
    upper = name.upper()
    return f"[{upper}]" if upper in KNOWN_OP_FUNCS else UNKOP


def formula_token_text(tok: Union[FormulaToken, PrefixToken]) -> str:
    """Vocabulary token text standing for one formula token."""
    if isinstance(tok, PrefixToken):
        kind = tok.kind
        if kind == "SPECIAL":
            return tok.text
        if kind == "RANGESEP":
            return RANGESEP_TOKEN
        if kind == "CELL":
            return RANGE
        if kind == "CONST":
            return CONST_TOKENS[tok.const_kind or const_kind(tok.text)]
        return op_func_token(tok.text)
    kind = tok.kind
    if kind is TokenKind.CELL:
        return RANGE
    if kind is TokenKind.CONST:
        return CONST_TOKENS[const_kind(tok.lexeme)]
    if kind in (TokenKind.OP, TokenKind.FUNC):
        return op_func_token(tok.lexeme)
    if kind is TokenKind.RANGESEP:
        return RANGESEP_TOKEN
    # Parentheses and commas never reach a prefix sequence.
    return "[UNK]"


class Vocab:
    """Base tokens (id = position) followed by the formula tokens."""

    def __init__(self, base_tokens: Sequence[str]):
        base = list(base_tokens)
        if len(set(base)) != len(base):
            raise ValueError("base vocabulary contains duplicate tokens")
        missing = [t for t in REQUIRED_BASE if t not in base]
        if missing:
            raise ValueError(f"base vocabulary lacks required tokens: {missing}")
        clash = set(base) & set(FORMULA_TOKENS)
        if clash:
            raise ValueError(f"base vocabulary already defines formula tokens: {sorted(clash)}")
        self.base_tokens = tuple(base)
        self.tokens = self.base_tokens + FORMULA_TOKENS
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        self.unk_id = self._ids["[UNK]"]
        self.cls_id = self._ids["[CLS]"]
        self.sep_id = self._ids["[SEP]"]
        self.mask_id = self._ids["[MASK]"]
        self.formula_id = self._ids["[FORMULA]"]
        self.first_formula_id = len(self.base_tokens)
        self._noise = tuple(t for t in base if not (t.startswith("[") and t.endswith("]")))

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "Vocab":
        """Read one token per line; a trailing copy of the formula tokens is tolerated."""
        lines = [ln.rstrip("\n") for ln in Path(path).read_text(encoding="utf-8").splitlines()]
        lines = [ln for ln in lines if ln]
        if tuple(lines[-len(FORMULA_TOKENS):]) == FORMULA_TOKENS:
            lines = lines[:-len(FORMULA_TOKENS)]
        return cls(lines)

    @classmethod
    def default(cls) -> "Vocab":
        text = resources.files("tabformula").joinpath("data/base_vocab.txt").read_text(encoding="utf-8")
        return cls([ln for ln in text.splitlines() if ln])

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids[token]

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def text_id(self, word: str) -> int:
        """Id of a base text token, [UNK] when absent. Never returns a formula token id."""
        i = self._ids.get(word, self.unk_id)
        return i if i < self.first_formula_id else self.unk_id

    def encode_formula_token(self, tok: Union[FormulaToken, PrefixToken]) -> int:
        return self._ids[formula_token_text(tok)]

    def noise_pool(self, full: bool = False) -> tuple[str, ...]:
        """Tokens eligible as prompt noise.

        By default only natural-language base tokens (no bracketed specials);
        ``full=True`` draws from every base token.
        """
        return self.base_tokens if full else self._noise


def is_covered(ast: FormulaAst) -> bool:
    """True when every OP/FUNC of the formula has its own bracketed token."""
    return all(op_func_token(name) != UNKOP for name in op_func_names(ast))


def coverage(formulas: Iterable[FormulaAst]) -> float:
    """Fraction of formulas encodable without [UNKOP]; 0.0 for an empty corpus."""
    total = covered = 0
    for ast in formulas:
        total += 1
        covered += is_covered(ast)
    return covered / total if total else 0.0
