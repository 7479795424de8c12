"""The ten acceptance criteria, each at its stated tolerance.

A pass/fail line per criterion is printed in the terminal summary.
"""

import gc
import json
import time
from collections import Counter

import numpy as np
import pytest

from helpers import DATA, all_small_asts, ast_depth, random_ast
from tabformula import (CellAddress, InputMode, MaskMode, Table, aggregate, analyze, choose_input_mode,
                        eval_prediction, fmlm_mask, ncp_samples, node_count, nrp_pairs, parse, parse_address,
                        process_tables, referenced_cells, render, to_prefix)
from tabformula.cli import iter_sample_lines, main
from tabformula.formula import CellRef, Const, Func, Op, RangeRef
from tabformula.metrics import ErrorClass
from tabformula.samples import sample_rng
from tabformula.synthetic import random_corpus
from tabformula.table import header_set, non_shared_headers
from tabformula.tablefile import dump_tables

NCP_NAMES = {"+", "-", "*", "/", "^", "%", "&", "=", "<>", ">", "<", ">=", "<=", "SUM", "AVERAGE", "MAX", "MIN"}


def _report(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def generated_asts():
    rng = np.random.default_rng(1)
    return [random_ast(rng, 5) for _ in range(1000)]


# ----------------------------------------------------------------------------- 1


@pytest.mark.criterion(1, "parser round-trip on 1,000 generated formulas, < 5 s")
def test_c01_parser_round_trip(generated_asts):
    assert all(ast_depth(a) <= 5 for a in generated_asts)
    t0 = time.perf_counter()
    failures = 0
    for ast in generated_asts:
        text = render(ast)
        reparsed = parse(text)
        if render(reparsed) != text or reparsed != ast or len(to_prefix(reparsed)) != node_count(reparsed) + 2:
            failures += 1
    elapsed = time.perf_counter() - t0
    _report(1, failures == 0 and elapsed < 5, f"{failures} failures, {elapsed:.2f}s")
    assert failures == 0
    assert elapsed < 5.0


# ----------------------------------------------------------------------------- 2


def _walk(node) -> list[str]:
    if isinstance(node, CellRef):
        return [f"{_letters(node.address.col)}{node.address.row + 1}"]
    if isinstance(node, RangeRef):
        return [":"] + _walk(CellRef(node.start)) + _walk(CellRef(node.end))
    if isinstance(node, Const):
        return [node.text]
    head = node.symbol if isinstance(node, Op) else node.name
    return [head] + [t for c in node.children for t in _walk(c)]


def _letters(col: int) -> str:
    out = ""
    col += 1
    while col:
        col, rem = divmod(col - 1, 26)
        out = chr(65 + rem) + out
    return out


@pytest.mark.criterion(2, "prefix linearizer equals a recursive pre-order walk")
def test_c02_prefix_oracle(generated_asts):
    mismatches = sum(to_prefix(a).texts != ["[START]", *_walk(a), "[END]"] for a in generated_asts)
    _report(2, mismatches == 0, f"{mismatches} mismatches over {len(generated_asts)} ASTs")
    assert mismatches == 0


# ----------------------------------------------------------------------------- 3


def _ncp_oracle(ast, numeric):
    found = []

    def visit(node):
        if isinstance(node, (Op, Func)):
            name = node.symbol if isinstance(node, Op) else node.name
            if name in NCP_NAMES and all(isinstance(c, CellRef) and numeric(c.address) for c in node.children):
                found.append((name, tuple(c.address for c in node.children)))
            for c in node.children:
                visit(c)

    visit(ast)
    return found


@pytest.mark.criterion(3, "NCP equals exhaustive node scan on all depth<=3 ASTs")
def test_c03_ncp_exhaustive():
    table = Table.from_rows([["h", "x", "y", "z"], ["r", 1, 2.5, "n/a"]])
    a, b, c = (CellAddress(i, 1) for i in (1, 2, 3))
    trees = all_small_asts(3, [CellRef(a), CellRef(b), CellRef(c)])

    def numeric(addr):
        return table.cell(addr).is_numeric

    mismatches = 0
    for ast in trees:
        got = [(s.operator, s.operand_cells) for s in ncp_samples(ast, table)]
        mismatches += got != _ncp_oracle(ast, numeric)
    _report(3, mismatches == 0, f"{mismatches} mismatches over {len(trees)} ASTs")
    assert len(trees) == 3 + 4 * 63 * 63 + 2 * (63 + 63 * 63)
    assert mismatches == 0


# ----------------------------------------------------------------------------- 4


@pytest.mark.criterion(4, "NRP invariants over 500 synthetic hierarchical tables")
def test_c04_nrp_invariants():
    violations = Counter()
    samples = 0
    for item in process_tables(random_corpus(4, 500)):
        table = item.table
        for cell, ast in item.retained:
            refs = [r for r in referenced_cells(ast) if table.is_data_cell(r)]
            own = set(header_set(table, cell))
            referenced = {h for r in refs for h in header_set(table, r)}
            shared = set()
            for r in refs:
                only_f, _ = non_shared_headers(table, cell, r)
                shared |= own - set(only_f)
            pairs = nrp_pairs(table, cell, ast, sample_rng(4, table.table_id, cell, "nrp"))
            if not pairs:
                continue
            samples += 1
            by_header = Counter()
            for p in pairs:
                if p.formula_header in shared or p.candidate_header in shared:
                    violations["shared header"] += 1
                if not (p.direction is p.formula_header.direction is p.candidate_header.direction):
                    violations["direction"] += 1
                if p.label.value == "negative":
                    by_header[(p.formula_header, "neg")] += 1
                    if p.candidate_header in referenced or p.candidate_header in own:
                        violations["referenced negative"] += 1
                else:
                    by_header[(p.formula_header, "pos")] += 1
            for (h, kind), n in by_header.items():
                if kind == "neg" and n > 3 * by_header[(h, "pos")]:
                    violations["ratio"] += 1
    _report(4, not violations, f"{samples} samples, violations {dict(violations)}")
    assert samples > 500
    assert not violations


# ----------------------------------------------------------------------------- 5


def _check_fmlm(sample, prefix) -> bool:
    kinds = {"MaskOps": ("OP", "FUNC"), "MaskCells": ("CELL",)}[sample.mode.value]
    for orig, tok in zip(prefix.tokens, sample.tokens.tokens):
        if (tok.text == "[MASK]") != (orig.kind in kinds):
            return False
    restored = json.dumps(sample.restore(), ensure_ascii=False)
    return restored == json.dumps(prefix.texts, ensure_ascii=False)


@pytest.mark.criterion(5, "FMLM masks exactly one class and labels restore the sequence")
def test_c05_fmlm_completeness(generated_asts):
    bad = checked = 0
    for ast in generated_asts:
        prefix = to_prefix(ast)
        cells = sorted({t.cell for t in prefix.tokens if t.cell is not None})
        for mode in MaskMode:
            sample = fmlm_mask(prefix, mode, CellAddress(40, 80), cells[::-1])
            checked += 1
            bad += not _check_fmlm(sample, prefix)
    # Samples as emitted by the generator, whose labels index the packed input cells.
    tables = random_corpus(5, 100)
    lines, _ = _sample_records(tables, ("fmlm",))
    for rec in lines:
        checked += 1
        texts = list(rec["tokens"])
        for label in rec["labels"]:
            target = label["target"]
            texts[label["position"]] = rec["input_cells"][target] if rec["mode"] == "MaskCells" else target
        formula = next(t for t in tables if t.table_id == rec["table_id"]).cell(parse_address(rec["formula_cell"]))
        original = to_prefix(analyze(formula.formula).ast).texts
        masked_kinds = {k for k, t in zip(rec["token_kinds"], rec["tokens"]) if t == "[MASK]"}
        expected = {"MaskOps": {"OP", "FUNC"}, "MaskCells": {"CELL"}}[rec["mode"]]
        all_masked = all(t == "[MASK]" for k, t in zip(rec["token_kinds"], rec["tokens"]) if k in expected)
        bad += texts != original or not masked_kinds <= expected or not all_masked
    _report(5, bad == 0, f"{bad} bad of {checked}")
    assert bad == 0


def _sample_records(tables, objectives, seed=0):
    records = [json.loads(line) for line in iter_sample_lines(tables, objectives, seed)]
    return records, len(records)


# ----------------------------------------------------------------------------- 6


@pytest.mark.criterion(6, "metric identities on the 200-case eval fixture")
def test_c06_metric_identities():
    rows = [json.loads(line) for line in (DATA / "eval_fixture.jsonl").read_text().splitlines()]
    assert len(rows) == 200
    verdicts = [eval_prediction(r["pred"], r["gold"], [parse_address(c) for c in r["input_cells"]]) for r in rows]
    report = aggregate(verdicts)
    failures = [v for v in verdicts if not v.formula_correct]
    one_class = all(isinstance(v.error_class, ErrorClass) for v in failures)
    self_eval = all(eval_prediction(r["gold"], r["gold"]) == eval_prediction(r["gold"], r["gold"], []) and
                    eval_prediction(r["gold"], r["gold"]).formula_correct for r in rows)
    ok = (report.sketch_acc >= report.formula_acc and report.range_acc >= report.formula_acc and self_eval
          and one_class and sum(report.error_histogram.values()) == len(failures))
    _report(6, ok, f"formula {report.formula_acc:.3f}, sketch {report.sketch_acc:.3f}, range {report.range_acc:.3f}")
    assert report.sketch_acc >= report.formula_acc
    assert report.range_acc >= report.formula_acc
    assert self_eval
    assert one_class
    assert sum(report.error_histogram.values()) == len(failures)
    # Every failure class shows up in the fixture.
    assert set(report.error_histogram) == set(ErrorClass)


# ----------------------------------------------------------------------------- 7


@pytest.mark.criterion(7, "input-mode mix (0.40, 0.30, 0.30) within +-0.006 over 100k draws")
def test_c07_mode_mixing():
    rng = np.random.default_rng(7)
    n = 100_000
    counts = Counter(choose_input_mode(rng) for _ in range(n))
    freqs = {m: counts[m] / n for m in InputMode}
    expected = {InputMode.FORMULA_TOKENS: 0.4, InputMode.FORMULA_TAG: 0.3, InputMode.LITERAL: 0.3}
    worst = max(abs(freqs[m] - expected[m]) for m in InputMode)
    _report(7, worst <= 0.006, ", ".join(f"{m.value} {freqs[m]:.4f}" for m in InputMode))
    assert worst <= 0.006


# ----------------------------------------------------------------------------- 8


@pytest.mark.criterion(8, "seed 7 over 50 tables: identical across 3 runs and 1 vs 4 shards")
def test_c08_determinism_and_sharding(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    dump_tables(random_corpus(8, 50), corpus)
    runs = []
    for i in range(3):
        out = tmp_path / f"run{i}.jsonl"
        assert main(["samples", str(corpus), "--seed", "7", "-o", str(out)]) == 0
        runs.append(out.read_bytes())
    shards = b""
    for k in range(1, 5):
        out = tmp_path / f"shard{k}.jsonl"
        assert main(["samples", str(corpus), "--seed", "7", "--shard", f"{k}/4", "-o", str(out)]) == 0
        shards += out.read_bytes()
    ok = bool(runs[0]) and runs[0] == runs[1] == runs[2] == shards
    lines = runs[0].count(b"\n")
    _report(8, ok, f"{lines} lines per run")
    assert runs[0]
    assert runs[0] == runs[1] == runs[2]
    assert shards == runs[0]


# ----------------------------------------------------------------------------- 9

HAND_CORPUS = [
    # formula, sketch length (range as 1), sketch length (range as 3), op/func count
    ("=(C4-B4)/B4", 5, 5, 2),
    ("=SUM(B4:C5)", 2, 4, 1),
    ("=A1+1", 3, 3, 1),
    ("=MAX(A1,B2:B9)", 3, 5, 1),
    ("=ROUND(A1*B1,2)", 5, 5, 2),
    ("=IF(A1>0,A1,0)", 6, 6, 2),
    ("=42", 1, 1, 0),
    ("=SUM(A1:A3)/COUNT(A1:A3)", 5, 9, 3),
    ("=-A1%", 3, 3, 2),
    ('=A1&" units"', 3, 3, 1),
]

TABLE1_FIELDS = {"formula_count", "avg_sketch_length", "avg_ops_per_formula", "sketch_length_histogram",
                 "op_frequency", "coverage_ratio", "table_count", "avg_rows_per_table", "avg_cols_per_table",
                 "hierarchical_table_ratio"}


@pytest.mark.criterion(9, "stats on a 10-formula hand corpus under both range countings")
def test_c09_stats_hand_corpus(tmp_path):
    rows = [["item", "a", "b"]] + [[f"r{i}", i, f] for i, (f, *_) in enumerate(HAND_CORPUS)]
    path = tmp_path / "hand.jsonl"
    dump_tables([Table.from_rows(rows, table_id="hand")], path)
    expected = {"cell1": sum(r[1] for r in HAND_CORPUS) / 10, "cell3": sum(r[2] for r in HAND_CORPUS) / 10}
    ops = sum(r[3] for r in HAND_CORPUS) / 10
    assert expected == {"cell1": 3.6, "cell3": 4.4} and ops == 1.5
    results = {}
    for counting in ("cell1", "cell3"):
        out = tmp_path / f"{counting}.json"
        assert main(["stats", str(path), "--range-counting", counting, "-o", str(out)]) == 0
        results[counting] = json.loads(out.read_text())
    ok = all(results[c]["avg_sketch_length"] == expected[c] and results[c]["avg_ops_per_formula"] == ops
             and results[c]["formula_count"] == 10 and TABLE1_FIELDS <= set(results[c]) for c in results)
    _report(9, ok, f"avg sketch {results['cell1']['avg_sketch_length']} / {results['cell3']['avg_sketch_length']},"
                   f" ops {results['cell1']['avg_ops_per_formula']}")
    for c in results:
        assert results[c]["formula_count"] == 10
        assert results[c]["avg_sketch_length"] == expected[c]
        assert results[c]["avg_ops_per_formula"] == ops
        assert TABLE1_FIELDS <= set(results[c])


# ---------------------------------------------------------------------------- 10


@pytest.mark.criterion(10, "full pipeline over 10,000 synthetic tables in < 60 s single-threaded")
def test_c10_throughput():
    tables = random_corpus(10, 10_000, data_rows=(3, 6), data_cols=(3, 4))
    mean_cells = sum(t.n_rows * t.n_cols for t in tables) / len(tables)
    assert 25 <= mean_cells <= 35
    gc.collect()
    gc.freeze()
    try:
        t0 = time.perf_counter()
        n = sum(1 for _ in iter_sample_lines(tables, ("nrp", "nrp-prompt", "ncp", "fmlm"), 0))
        elapsed = time.perf_counter() - t0
    finally:
        gc.unfreeze()
    _report(10, elapsed < 60, f"{elapsed:.1f}s for {n} samples, {mean_cells:.1f} cells/table")
    assert n > 0
    assert elapsed < 60.0
