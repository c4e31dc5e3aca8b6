#!/usr/bin/env python3
"""End-to-end demo on synthetic data with the in-process mock backends.

Builds a small English source corpus, a Spanish unlabelled corpus and test
set, writes a config, runs the full pipeline, and prints the manifest
summary plus the evaluation report. No network or models required.

Usage:
    python3 scripts/run_mock_pipeline.py [workdir] [--mode laca|self_training|zero_shot]
"""

import argparse
import json
import random
import sys
from pathlib import Path

from laca.cli import main as laca_main
from laca.corpus import LabeledExample, Polarity, SentimentTuple, write_jsonl

LEXICON = {
    "tea": "positive",
    "coffee": "negative",
    "paella": "positive",
    "wifi": "negative",
    "menu": "neutral",
    "staff": "positive",
    "wine list": "positive",
    "parking": "negative",
    "soup": "neutral",
}


def build_sentence(terms):
    text = "we ordered"
    tuples = []
    for k, term in enumerate(terms):
        text += " the " if k == 0 else " and the "
        start = len(text)
        text += term
        tuples.append(SentimentTuple(term, Polarity.from_word(LEXICON[term]), (start, len(text))))
    return text + " here", tuples


def corpus(n, lang, rng, prefix, labelled=True):
    out = []
    for i in range(n):
        terms = rng.sample(sorted(LEXICON), rng.randint(1, 3))
        text, tuples = build_sentence(terms)
        out.append(LabeledExample(f"{prefix}:{i}", lang, text, tuple(tuples) if labelled else (), "gold"))
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workdir", nargs="?", default="runs/mock_demo")
    parser.add_argument("--mode", default="laca", choices=("laca", "self_training", "zero_shot"))
    parser.add_argument("--n-target", type=int, default=100)
    args = parser.parse_args()

    root = Path(args.workdir)
    data = root / "data"
    rng = random.Random(13)
    write_jsonl(corpus(120, "en", rng, "src"), data / "en_train.jsonl")
    write_jsonl(corpus(args.n_target, "es", rng, "tgt", labelled=False), data / "es_unlabeled.jsonl")
    write_jsonl(corpus(40, "es", rng, "test"), data / "es_test.jsonl")
    (data / "lexicon.json").write_text(json.dumps(LEXICON), encoding="utf-8")

    config = {
        "source_lang": "en",
        "target_lang": "es",
        "source_train": str(data / "en_train.jsonl"),
        "target_unlabeled": str(data / "es_unlabeled.jsonl"),
        "target_test": str(data / "es_test.jsonl"),
        "workdir": str(root / "run"),
        "mode": args.mode,
        "seed": 7,
        "seeds": [1, 2, 3, 4, 5],
        "backend": {"mode": "mock", "lexicon": str(data / "lexicon.json")},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")

    code = laca_main(["run", "--config", str(config_path)])
    if code == 0:
        report = json.loads((root / "run" / "evaluation.json").read_text())
        print(json.dumps(report["aggregate"], indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
