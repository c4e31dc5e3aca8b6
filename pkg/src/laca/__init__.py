"""laca: a cross-lingual ABSA data-pipeline toolkit.

Corpus ingestion, BIO/tuple codecs, backend wire protocol with deterministic
mocks, prompt construction with rotated demonstrations, quality filters,
span-exact micro-F1 evaluation, and a resumable pipeline CLI.
"""

from .corpus import (
    DatasetStats,
    LabeledDataset,
    LabeledExample,
    Polarity,
    SentimentTuple,
    dataset_stats,
    parse_semeval_xml,
    read_jsonl,
    write_jsonl,
)
from .evaluation import AggregateReport, ErrorTaxonomy, EvalReport, aggregate_runs, classify_errors, micro_f1
from .genformat import parse_tuples, serialize_tuples
from .tagging import Token, decode_bio, encode_bio, repair_tags, tokenize

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "DatasetStats",
    "ErrorTaxonomy",
    "EvalReport",
    "LabeledDataset",
    "LabeledExample",
    "Polarity",
    "SentimentTuple",
    "Token",
    "aggregate_runs",
    "classify_errors",
    "dataset_stats",
    "decode_bio",
    "encode_bio",
    "micro_f1",
    "parse_semeval_xml",
    "parse_tuples",
    "read_jsonl",
    "repair_tags",
    "serialize_tuples",
    "tokenize",
    "write_jsonl",
]
