"""
Parsing spreadsheet formulas
============================

From raw cell text to a typed tree, a prefix token sequence and a sketch.
Run with ``python3 demos/01_parse_and_linearize.py``.
"""

from tabformula import normalize, parse, referenced_cells, render, sketch, sketch_length, to_prefix
from tabformula.vocab import formula_token_text

# Raw formulas come straight out of a sheet: leading "=", absolute markers,
# lower-case names. Normalization strips all of that and filters out formulas
# we cannot use (other sheets, other files, array constants, unknown UDFs).
for raw in ["=($C$4-$B$4)/$B$4", "=sum(b4:c5)", "=Sheet2!A1+B1", "={1,2,3}", "=MYUDF(A1)"]:
    text, verdict = normalize(raw)
    print(f"{raw:22s} -> {text!r:16s} {verdict.reason.value}")

# The parser honours the usual precedence: ":" binds tightest, then postfix %,
# then ^, unary minus, * and /, + and -, & and finally comparisons.
ast = parse("(C4-B4)/B4")
print(ast)
print(render(parse("A1+2*B1")), "|", render(parse("((A1+2))*B1")))

# Prefix linearization walks the tree operator-first between [START] and [END].
# A range becomes three tokens: ":" followed by its two corners.
print(to_prefix(ast))
print(to_prefix(parse("SUM(B4:C5)")))

# The sketch hides every reference behind one [RANGE] placeholder. Its length
# depends on whether a range counts as one token or as its three raw tokens.
prefix = to_prefix(parse("SUM(B4:C5)"))
print(sketch(prefix), sketch_length(prefix, "cell1"), sketch_length(prefix, "cell3"))

# Referenced cells are read left to right, with ranges expanded row by row.
print([str(c) for c in referenced_cells(parse("SUM(B4:C5)-B4"))])

# Each prefix token maps onto the formula part of the vocabulary.
print([formula_token_text(t) for t in to_prefix(parse('IF(A1>0,"yes",ROUND(A1,2))'))])
