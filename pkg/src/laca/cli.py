"""Command-line interface.

Exit codes: 0 ok, 2 config error, 3 backend error, 4 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import random
import sys
from pathlib import Path

from . import pipeline as pl
from .backend import generate_batch, predict_batch
from .corpus import (
    LabeledDataset,
    LabeledExample,
    canonical_tuple_order,
    check_language,
    dataset_stats,
    parse_semeval_xml,
    read_jsonl,
    strip_spans,
    write_jsonl,
)
from .errors import BackendError, ConfigError, ConfigInvalid, DataError, StageFailure
from .evaluation import classify_errors_dataset, micro_f1
from .filtering import RejectionRecord, filter_generated, write_rejections
from .promptgen import build_generation_jobs, stable_seed

logger = logging.getLogger(__name__)


def _standalone_run(config: pl.RunConfig) -> pl.PipelineRun:
    """A PipelineRun used only for its backend clients."""
    return pl.PipelineRun(config)


def _require_model(config: pl.RunConfig) -> str:
    if config.backend.model:
        return config.backend.model
    if config.backend.mode == "mock":
        return "mock"
    raise ConfigInvalid("backend.model must be set for standalone predict/filter commands")


def cmd_ingest(args) -> int:
    check_language(args.lang, allow_any=args.allow_any_lang)
    data = Path(args.input).read_bytes()
    result = parse_semeval_xml(data, args.lang, allow_any_lang=args.allow_any_lang)
    write_jsonl(result.dataset, args.output)
    for issue in result.issues:
        logger.warning("sentence %s skipped: %s %s", issue.sentence_id, issue.kind, issue.detail)
    summary = {
        "stats": dataset_stats(result.dataset).to_json(),
        "skipped_sentences": len(result.issues),
        "null_targets_skipped": result.null_targets_skipped,
    }
    print(json.dumps(summary, ensure_ascii=False))
    return 0


def cmd_predict(args) -> int:
    config = pl.load_config(args.config)
    run = _standalone_run(config)
    absa, _ = run._clients()
    model = _require_model(config)
    dataset = read_jsonl(args.input)
    preds = predict_batch(absa, config.target_lang, [(ex.id, ex.text) for ex in dataset], model)
    out = [
        LabeledExample(ex.id, config.target_lang, ex.text, canonical_tuple_order(preds[ex.id]), "predicted")
        for ex in dataset
    ]
    write_jsonl(out, args.output)
    print(json.dumps({"predicted": len(out), "model": model}, ensure_ascii=False))
    return 0


def cmd_generate(args) -> int:
    config = pl.load_config(args.config)
    run = _standalone_run(config)
    _, llm = run._clients()
    template = Path(args.prompt_template).read_text(encoding="utf-8") if args.prompt_template else None
    labels = [ex for ex in read_jsonl(args.preds)]
    nonempty = [ex for ex in labels if ex.tuples]
    if len(nonempty) < len(labels):
        logger.warning("dropping %d empty-label records (run `laca run` for the managed pipeline)",
                       len(labels) - len(nonempty))
    source = list(read_jsonl(config.source_train))
    jobs = build_generation_jobs(
        nonempty, source, config.target_lang,
        k_shot=config.k_shot, sampling=config.sampling, run_seed=config.seed, template=template,
    )
    results = generate_batch(llm, jobs)
    generated, failures = [], []
    for job in jobs:
        result = results[job.id]
        text = result.strip() if isinstance(result, str) else ""
        if text:
            generated.append(
                LabeledExample(job.id, config.target_lang, text, strip_spans(job.label), "generated")
            )
        else:
            error = result.error if not isinstance(result, str) else "empty output"
            failures.append(RejectionRecord(job.id, "generation_failed", {"error": error}))
    write_jsonl(generated, args.output)
    print(json.dumps({"generated": len(generated), "failed": len(failures)}, ensure_ascii=False))
    return 0


def cmd_filter(args) -> int:
    config = pl.load_config(args.config)
    run = _standalone_run(config)
    absa, _ = run._clients()
    model = _require_model(config)
    pairs = list(read_jsonl(args.input))
    kept, rejections = filter_generated(pairs, absa, model)
    write_jsonl(kept, args.output)
    write_rejections(rejections, args.report)
    print(json.dumps({"kept": len(kept), "rejected": len(rejections)}, ensure_ascii=False))
    return 0


def cmd_merge(args) -> int:
    source = list(read_jsonl(args.source))
    generated = list(read_jsonl(args.generated))
    if args.cap is not None:
        generated = pl.cap_generated(generated, args.cap, random.Random(stable_seed(args.seed, "cap")))
    merged = source + generated
    LabeledDataset(merged)  # id-uniqueness check
    random.Random(stable_seed(args.seed, "merge")).shuffle(merged)
    write_jsonl(merged, args.output)
    print(json.dumps({"source": len(source), "generated": len(generated), "merged": len(merged)},
                     ensure_ascii=False))
    return 0


def cmd_evaluate(args) -> int:
    gold = list(read_jsonl(args.gold))
    pred = list(read_jsonl(args.pred))
    print(json.dumps(micro_f1(gold, pred).to_json(), ensure_ascii=False))
    return 0


def cmd_errors(args) -> int:
    gold = list(read_jsonl(args.gold))
    pred = list(read_jsonl(args.pred))
    print(json.dumps(classify_errors_dataset(gold, pred).to_json(), ensure_ascii=False))
    return 0


def cmd_run(args) -> int:
    config = pl.load_config(args.config)
    if args.prompt_template:
        config = dataclasses.replace(config, prompt_template=args.prompt_template)
    manifest = pl.run_pipeline(config, resume=args.resume)
    summary = {
        "workdir": config.workdir,
        "stages": [
            {"name": rec.name, "output": rec.output_path, "counts": rec.counts}
            for rec in manifest.stages
        ],
    }
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="laca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse SemEval-style XML into JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--allow-any-lang", action="store_true")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("predict", help="run the ABSA backend over a JSONL dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("generate", help="generate target-language sentences for predicted labels")
    p.add_argument("--config", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--prompt-template")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("filter", help="apply aspect-containment and consistency filters")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_filter)

    p = sub.add_parser("merge", help="merge source and pseudo-labelled datasets, shuffled")
    p.add_argument("--source", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cap", type=int, default=None)
    p.set_defaults(fn=cmd_merge)

    p = sub.add_parser("evaluate", help="micro-F1 of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("errors", help="error-taxonomy counts of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(fn=cmd_errors)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--prompt-template")
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StageFailure as e:
        logger.error("%s", e)
        cause = e.cause
        if isinstance(cause, ConfigError):
            return 2
        if isinstance(cause, BackendError):
            return 3
        if isinstance(cause, DataError):
            return 4
        return 1
    except ConfigError as e:
        logger.error("%s", e)
        return 2
    except BackendError as e:
        logger.error("%s", e)
        return 3
    except DataError as e:
        logger.error("%s", e)
        return 4
    except ValueError as e:
        logger.error("%s", e)
        return 2
    except OSError as e:
        logger.error("%s", e)
        return 4


if __name__ == "__main__":
    sys.exit(main())
