"""Formula-driven preprocessing for table pretraining.

Parse spreadsheet formulas, deduplicate dragged copies, generate numerical
reference / calculation / formula-MLM samples, pack model inputs and score
predicted formulas.
"""

from .corpus import CorpusStats, SizeLimits, analyze_table, corpus_stats, dedup_dragged, process_tables, size_filter
from .errors import (AddressParseError, DanglingReference, EmptyEvalSet, GoldParseError, MissingHeader,
                     NotADataCell, NotANumber, ParseError, SchemaError, TabFormulaError, TableError, TextTooLong,
                     UnreachableReference)
from .formula import (Analysis, CellRef, Const, FilterVerdict, Func, Op, PrefixSequence, RangeRef, Reason,
                      analyze, node_count, normalize, parse, parse_lenient, referenced_cells, render, sketch,
                      sketch_length, to_prefix, tokenize)
from .metrics import ErrorClass, EvalReport, EvalVerdict, aggregate, canonicalize, eval_prediction
from .samples import (FmlmSample, MaskMode, NcpSample, NrpPairSample, NrpPromptSample, derive_seed, fmlm_mask,
                      generate_samples, ncp_samples, nrp_pairs, nrp_prompt, sample_rng)
from .sequence import InputMode, PackedSequence, build_sequence, choose_input_mode, select_cells
from .table import (Cell, CellAddress, CellValue, Direction, HeaderNode, HeaderTree, Table, ValueKind,
                    numeric_features, parse_address)
from .tablefile import dump_tables, load_tables, table_from_json, table_to_json
from .vocab import Vocab, coverage

__version__ = "0.1.0"
