"""
Pretraining samples from one hierarchical table
===============================================

A production table with two header levels on each axis. The %Increase column
holds a growth formula; we derive every kind of training sample from it.
Run with ``python3 demos/02_pretraining_samples.py``.
"""

from tabformula import (InputMode, MaskMode, Table, Vocab, build_sequence, fmlm_mask, ncp_samples, nrp_pairs,
                        nrp_prompt, parse, parse_address, sample_rng, select_cells, to_prefix)
from tabformula.table import header_node, headers_of

A = parse_address

rows = [
    ["", "", "Production", "", ""],
    ["", "", "2016", "2021", "%Increase"],
    ["Vegetables", "Onion", 120.5, 150.2, "=(D3-C3)/C3"],
    ["", "Garlic", 80, 96, "=(D4-C4)/C4"],
    ["", "Tomato", 300, 270, "=(D5-C5)/C5"],
    ["Fruit", "Apple", 45.5, 50, "=(D6-C6)/C6"],
    ["", "Orange", 60, 66, "=(D7-C7)/C7"],
]
top = [header_node("Production", 2, 5, A("C1"), [header_node("2016", 2, 3, A("C2")),
                                                 header_node("2021", 3, 4, A("D2")),
                                                 header_node("%Increase", 4, 5, A("E2"))])]
left = [header_node("Vegetables", 2, 5, A("A3"), [header_node("Onion", 2, 3, A("B3")),
                                                  header_node("Garlic", 3, 4, A("B4")),
                                                  header_node("Tomato", 4, 5, A("B5"))]),
        header_node("Fruit", 5, 7, A("A6"), [header_node("Apple", 5, 6, A("B6")),
                                             header_node("Orange", 6, 7, A("B7"))])]
table = Table.from_rows(rows, top_header_rows=2, left_header_cols=2, top_tree=top, left_tree=left,
                        table_id="production")
cell, ast = A("E3"), parse("(D3-C3)/C3")

# Every data cell resolves to a chain of headers on each axis.
top_chain, left_chain = headers_of(table, cell)
print("E3 headers:", [h.text for h in top_chain], [h.text for h in left_chain])

# Numerical reference: "%Increase" refers to "2016" and "2021". Onion,
# Vegetables and Production are shared with the referenced cells, so they
# never appear in a pair. Negatives are capped at three per positive.
for pair in nrp_pairs(table, cell, ast, sample_rng(0, table.table_id, cell, "nrp")):
    print("NRP", pair.label.value, pair.formula_header.text, "->", pair.candidate_header.text)

# The prompt variant hides the two formula headers inside 1-10 noise tokens and
# labels the table cells.
vocab = Vocab.default()
prompt = nrp_prompt(table, cell, ast, vocab, sample_rng(0, table.table_id, cell, "nrp-prompt"))
print("prompt:", " ".join(prompt.prompt_tokens))
print("labels:", {str(c): k.value for c, k in prompt.cell_labels.items()})

# Numerical calculation: only "-" has cells for both children; "/" has an
# operator on its left and is skipped.
print("NCP:", [(s.operator, [str(c) for c in s.operand_cells]) for s in ncp_samples(ast, table)])

# Formula MLM masks every operator or every referenced cell. Cell targets are
# positions in the packed input.
inputs = select_cells(table, cell)
for mode in MaskMode:
    sample = fmlm_mask(to_prefix(ast), mode, cell, inputs)
    print(mode.value, sample.tokens, sample.labels)

# Packing: [CLS] text [SEP] then every selected cell followed by [SEP]. In the
# tag mode the target shows a single [FORMULA] token.
seq = build_sequence(table, prompt.prompt_tokens, cell, InputMode.FORMULA_TAG, 256, vocab)
print(len(seq), "tokens over", len(seq.cells), "cells")
print(" ".join(r.text for r in seq.records))
