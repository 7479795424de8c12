"""
Corpus pipeline, statistics and evaluation
==========================================

Generate a synthetic corpus, run it through filtering and deduplication, look
at its statistics, emit samples, and score a few predicted formulas.
Run with ``python3 demos/03_corpus_and_eval.py``.
"""

import time
from collections import Counter

import numpy as np

from tabformula import aggregate, eval_prediction, parse_address, process_tables
from tabformula.cli import iter_sample_lines
from tabformula.corpus import stats_for
from tabformula.synthetic import random_corpus

tables = random_corpus(seed=0, n_tables=500)
print(len(tables), "tables,", int(np.mean([t.n_rows * t.n_cols for t in tables])), "cells on average")

# Dragged copies beyond the fifth in a row or column are dropped.
items = list(process_tables(tables))
analysed = sum(len(i.analyses) for i in items)
kept = sum(len(i.retained) for i in items)
print(f"{analysed} formula cells, {kept} kept after filtering and deduplication")

stats = stats_for(items)
report = stats.report()
print("avg sketch length  cell1 %.2f  cell3 %.2f" % tuple(report["avg_sketch_length_by_counting"].values()))
print("avg ops per formula %.2f, coverage %.3f" % (report["avg_ops_per_formula"], report["coverage_ratio"]))
print("top operators:", list(report["op_frequency"].items())[:5])

# Samples stream as JSON lines; the objective tag tells them apart.
start = time.perf_counter()
lines = list(iter_sample_lines(tables, ("nrp", "nrp-prompt", "ncp", "fmlm"), seed=7))
print(f"{len(lines)} samples in {time.perf_counter() - start:.2f}s")
print(Counter(line.split('"objective":"', 1)[1].split('"', 1)[0] for line in lines))

# Evaluation: formula accuracy needs an exact match; the sketch ignores which
# cells are referenced; the range compares only referenced cells.
inputs = [parse_address(a) for a in ("B4", "C4", "D4")]
cases = [("(C4-B4)/B4", "(C4-B4)/B4"), ("(C4-B4)/C4", "(C4-B4)/B4"), ("SUM(B4:C4)", "(C4-B4)/B4"),
         ("B4+C4", "B4+Z9")]
verdicts = [eval_prediction(pred, gold, inputs) for pred, gold in cases]
for (pred, gold), v in zip(cases, verdicts):
    cls = v.error_class.value if v.error_class else "-"
    print(f"{pred:12s} vs {gold:12s} formula={v.formula_correct!s:5} sketch={v.sketch_correct!s:5} {cls}")
print(aggregate(verdicts).to_json())
