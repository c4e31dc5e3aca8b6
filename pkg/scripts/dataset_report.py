#!/usr/bin/env python3
"""Print sentence/aspect statistics for SemEval XML or toolkit JSONL files.

Usage:
    python3 scripts/dataset_report.py --lang en train.xml dev.xml
    python3 scripts/dataset_report.py dataset.jsonl
"""

import argparse
import json
import sys
from pathlib import Path

from laca.corpus import dataset_stats, parse_semeval_xml, read_jsonl


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("files", nargs="+")
    parser.add_argument("--lang", default="en", help="language code for XML inputs")
    parser.add_argument("--allow-any-lang", action="store_true")
    args = parser.parse_args()

    for name in args.files:
        path = Path(name)
        if path.suffix.lower() == ".xml":
            result = parse_semeval_xml(path.read_bytes(), args.lang, args.allow_any_lang)
            stats = dataset_stats(result.dataset)
            extra = {"skipped_sentences": len(result.issues),
                     "null_targets_skipped": result.null_targets_skipped}
        else:
            stats = dataset_stats(read_jsonl(path))
            extra = {}
        print(json.dumps({"file": name, **stats.to_json(), **extra}, ensure_ascii=False))
    return 0


if __name__ == "__main__":
    sys.exit(main())
