"""Two-stage pipeline orchestration: resumable, manifest-tracked stages.

Stage order (full mode): train1 -> predict -> prefilter -> rebalance ->
generate -> postfilter -> merge -> train2 -> evaluate. The self-training
ablation uses the prefiltered predictions directly as the pseudo-labelled
set; zero-shot stops after train1 + evaluate.

Every intermediate dataset is persisted as JSONL and content-hashed
(SHA-256); a stage re-runs only when one of its input hashes changed, which
is what makes `laca run --resume` safe after an interrupted run. Stage
outputs never embed absolute paths, so output hashes are reproducible
across working directories.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

from . import promptgen
from .backend import (
    BackendClient,
    BackendConfig,
    HttpTransport,
    InProcessTransport,
    SamplingParams,
    generate_batch,
    predict_batch,
)
from .corpus import (
    LabeledDataset,
    LabeledExample,
    canonical_tuple_order,
    check_language,
    read_jsonl,
    strip_spans,
    write_jsonl,
)
from .errors import ConfigDrift, ConfigInvalid, LacaError, StageFailure
from .filtering import (
    RejectionRecord,
    filter_generated,
    prefilter_predictions,
    write_rejections,
)
from .evaluation import aggregate_runs, micro_f1
from .mocks import FlakyServer, MockModelServer
from .promptgen import RebalanceConfig, stable_seed

logger = logging.getLogger(__name__)

MODES = ("laca", "self_training", "zero_shot")

STAGE_PLANS = {
    "laca": (
        "train1",
        "predict",
        "prefilter",
        "rebalance",
        "generate",
        "postfilter",
        "merge",
        "train2",
        "evaluate",
    ),
    "self_training": ("train1", "predict", "prefilter", "merge", "train2", "evaluate"),
    "zero_shot": ("train1", "evaluate"),
}


@dataclass(frozen=True)
class BackendSettings:
    mode: str = "mock"  # mock | http
    absa_url: str | None = None
    llm_url: str | None = None
    backbone: str = "tiny-tokenclf"
    model: str | None = None  # standalone predict/filter commands only
    lexicon: str | None = None  # mock mode: path to {term: polarity} JSON
    fail_prob: float = 0.0  # mock mode: injected generation failure rate
    timeout_s: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff_s: float = 1.0

    def __post_init__(self):
        if self.mode not in ("mock", "http"):
            raise ConfigInvalid(f"backend.mode must be 'mock' or 'http', got {self.mode!r}")
        if self.mode == "http" and not (self.absa_url and self.llm_url):
            raise ConfigInvalid("backend.mode http requires absa_url and llm_url")


@dataclass(frozen=True)
class RunConfig:
    source_lang: str
    target_lang: str
    source_train: str
    workdir: str
    mode: str = "laca"
    source_dev: str | None = None
    target_unlabeled: str | None = None
    target_test: str | None = None
    target_dev: str | None = None
    k_shot: int = 10
    seed: int = 1
    seeds: tuple[int, ...] = (1,)
    cap_generated: int | None = None
    train_hyperparams: dict = field(default_factory=dict)
    rebalance: RebalanceConfig = RebalanceConfig()
    sampling: SamplingParams = SamplingParams()
    backend: BackendSettings = BackendSettings()
    prompt_template: str | None = None

    def __post_init__(self):
        try:
            check_language(self.source_lang)
            check_language(self.target_lang)
        except ValueError as e:
            raise ConfigInvalid(str(e)) from e
        if self.source_lang == self.target_lang:
            raise ConfigInvalid("source_lang and target_lang must differ")
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ConfigInvalid("seeds must be non-empty")
        if self.mode == "laca" and self.target_dev is not None:
            raise ConfigInvalid(
                "model selection uses the source-language dev split only; "
                "remove target_dev from the config"
            )
        if self.mode != "zero_shot" and not self.target_unlabeled:
            raise ConfigInvalid(f"mode {self.mode!r} requires target_unlabeled")
        if self.k_shot < 1:
            raise ConfigInvalid("k_shot must be >= 1")
        if self.cap_generated is not None and self.cap_generated < 0:
            raise ConfigInvalid("cap_generated must be >= 0")

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["seeds"] = list(self.seeds)
        obj["rebalance"] = asdict(self.rebalance)
        obj["sampling"] = self.sampling.to_json()
        obj["backend"] = asdict(self.backend)
        return obj


def _build_nested(cls, obj: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigInvalid(f"unknown {where} keys: {sorted(unknown)}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(f"bad {where}: {e}") from e


def config_from_json(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigInvalid("config must be a JSON object")
    obj = dict(obj)
    if "seeds" in obj:
        obj["seeds"] = tuple(obj["seeds"])
    if "rebalance" in obj:
        obj["rebalance"] = _build_nested(RebalanceConfig, obj["rebalance"], "rebalance")
    if "sampling" in obj:
        obj["sampling"] = _build_nested(SamplingParams, obj["sampling"], "sampling")
    if "backend" in obj:
        obj["backend"] = _build_nested(BackendSettings, obj["backend"], "backend")
    return _build_nested(RunConfig, obj, "config")


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as e:
        raise ConfigInvalid(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config {path} is not valid JSON: {e}") from e
    return config_from_json(obj)


def config_hash(config: RunConfig) -> str:
    canon = json.dumps(config.to_json(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _params_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, ensure_ascii=False, default=repr).encode()
    ).hexdigest()


# --- manifest -----------------------------------------------------------------


@dataclass
class StageRecord:
    name: str
    input_hashes: dict
    output_path: str
    output_hash: str
    wall_time_s: float
    counts: dict

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    stages: list[StageRecord] = field(default_factory=list)

    def latest(self, name: str) -> StageRecord | None:
        for rec in reversed(self.stages):
            if rec.name == name:
                return rec
        return None

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        obj = {
            "config_hash": self.config_hash,
            "config": self.config,
            "stages": [rec.to_json() for rec in self.stages],
        }
        path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            config_hash=obj["config_hash"],
            config=obj["config"],
            stages=[StageRecord(**rec) for rec in obj["stages"]],
        )


def cap_generated(
    examples: Sequence[LabeledExample], n: int, rng: random.Random
) -> list[LabeledExample]:
    """Seeded uniform subsample without replacement, preserving input order."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= len(examples):
        return list(examples)
    picked = sorted(rng.sample(range(len(examples)), n))
    return [examples[i] for i in picked]


# --- runner -------------------------------------------------------------------


class PipelineRun:
    """Executes the stage plan for one config, recording a manifest."""

    def __init__(self, config: RunConfig, resume_manifest: RunManifest | None = None):
        self.config = config
        self.workdir = Path(config.workdir)
        self.manifest = resume_manifest or RunManifest(config_hash(config), config.to_json())
        self._absa_client: BackendClient | None = None
        self._llm_client: BackendClient | None = None
        self.mock_server: MockModelServer | None = None

    # -- clients --

    def _clients(self) -> tuple[BackendClient, BackendClient]:
        if self._absa_client is None:
            b = self.config.backend
            if b.mode == "mock":
                lexicon = {}
                if b.lexicon:
                    raw = json.loads(Path(b.lexicon).read_text(encoding="utf-8"))
                    from .corpus import Polarity

                    lexicon = {k: Polarity.from_word(v) for k, v in raw.items()}
                self.mock_server = MockModelServer(lexicon, lang=self.config.target_lang)
                handler = self.mock_server.handle
                if b.fail_prob > 0:
                    handler = FlakyServer(self.mock_server, b.fail_prob, seed=self.config.seed).handle
                cfg = BackendConfig(
                    base_url="mock://in-process",
                    max_retries=b.max_retries,
                    max_in_flight=b.max_in_flight,
                    backoff_base_s=0.0,  # in-process retries gain nothing from waiting
                )
                client = BackendClient(InProcessTransport(handler), cfg)
                self._absa_client = self._llm_client = client
            else:
                common = dict(
                    timeout_s=b.timeout_s,
                    max_retries=b.max_retries,
                    max_in_flight=b.max_in_flight,
                    backoff_base_s=b.backoff_s,
                )
                absa_cfg = BackendConfig(base_url=b.absa_url, **common)
                llm_cfg = BackendConfig(base_url=b.llm_url, **common)
                self._absa_client = BackendClient(HttpTransport(b.absa_url, b.timeout_s), absa_cfg)
                self._llm_client = BackendClient(HttpTransport(b.llm_url, b.timeout_s), llm_cfg)
        return self._absa_client, self._llm_client

    # -- stage bookkeeping --

    def _run_stage(
        self,
        name: str,
        input_hashes: dict,
        output_relpath: str,
        fn: Callable[[Path], dict],
    ) -> Path:
        out_path = self.workdir / output_relpath
        rec = self.manifest.latest(name)
        if (
            rec is not None
            and rec.input_hashes == input_hashes
            and rec.output_path == output_relpath
            and out_path.exists()
            and file_hash(out_path) == rec.output_hash
        ):
            logger.info("stage %s: inputs unchanged, skipping", name)
            return out_path
        logger.info("stage %s: running", name)
        started = time.monotonic()
        try:
            counts = fn(out_path)
        except LacaError:
            raise
        except Exception as e:
            raise StageFailure(name, e) from e
        self.manifest.stages.append(
            StageRecord(
                name=name,
                input_hashes=input_hashes,
                output_path=output_relpath,
                output_hash=file_hash(out_path),
                wall_time_s=round(time.monotonic() - started, 6),
                counts=counts,
            )
        )
        self.manifest.save(self.workdir / "manifest.json")
        return out_path

    def _write_json(self, path: Path, obj) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
        )

    def _train(self, dataset_path: Path, seed: int, init_from: str | None = None) -> str:
        absa, _ = self._clients()
        hyperparams = dict(self.config.train_hyperparams)
        if init_from is not None:
            hyperparams["init_from"] = init_from
        if self.config.source_dev and "dev_uri" not in hyperparams:
            hyperparams["dev_uri"] = self.config.source_dev
        return absa.train(str(dataset_path), self.config.backend.backbone, hyperparams, seed)

    # -- stages --

    def stage_train1(self) -> Path:
        cfg = self.config
        seeds = list(cfg.seeds) if cfg.mode == "zero_shot" else [cfg.seed]
        inputs = {
            "dataset": file_hash(cfg.source_train),
            "params": _params_hash(
                {
                    "backbone": cfg.backend.backbone,
                    "hyperparams": cfg.train_hyperparams,
                    "seeds": seeds,
                    "dev": cfg.source_dev,
                }
            ),
        }

        def fn(out: Path) -> dict:
            models = [
                {"seed": s, "model": self._train(Path(cfg.source_train), s)} for s in seeds
            ]
            self._write_json(out, {"models": models})
            return {"models": len(models), "hyperparams": dict(cfg.train_hyperparams)}

        return self._run_stage("train1", inputs, "stage1_models.json", fn)

    def _stage1_model(self) -> str:
        models = json.loads((self.workdir / "stage1_models.json").read_text(encoding="utf-8"))
        return models["models"][0]["model"]

    def stage_predict(self) -> Path:
        cfg = self.config
        model = self._stage1_model()
        inputs = {"model": model, "dataset": file_hash(cfg.target_unlabeled), "lang": cfg.target_lang}

        def fn(out: Path) -> dict:
            absa, _ = self._clients()
            unlabeled = read_jsonl(cfg.target_unlabeled)
            preds = predict_batch(
                absa, cfg.target_lang, [(ex.id, ex.text) for ex in unlabeled], model
            )
            examples = [
                LabeledExample(
                    ex.id, cfg.target_lang, ex.text, canonical_tuple_order(preds[ex.id]), "predicted"
                )
                for ex in unlabeled
            ]
            write_jsonl(examples, out)
            return {"sentences": len(examples), "model": model}

        return self._run_stage("predict", inputs, "predictions.jsonl", fn)

    def stage_prefilter(self) -> Path:
        pred_path = self.workdir / "predictions.jsonl"
        inputs = {"predictions": file_hash(pred_path)}

        def fn(out: Path) -> dict:
            predicted = read_jsonl(pred_path)
            kept, rejections = prefilter_predictions(list(predicted))
            write_jsonl(kept, out)
            report = self.workdir / "prefilter_rejections.jsonl"
            write_rejections(rejections, report)
            return {
                "kept": len(kept),
                "rejected": len(rejections),
                "report": report.name,
                "report_sha256": file_hash(report),
            }

        return self._run_stage("prefilter", inputs, "prefiltered.jsonl", fn)

    def stage_rebalance(self) -> Path:
        cfg = self.config
        pre_path = self.workdir / "prefiltered.jsonl"
        inputs = {
            "prefiltered": file_hash(pre_path),
            "params": _params_hash({"rebalance": asdict(cfg.rebalance), "seed": cfg.seed}),
        }

        def fn(out: Path) -> dict:
            kept = list(read_jsonl(pre_path))
            rng = random.Random(stable_seed(cfg.seed, "rebalance"))
            additional = promptgen.rebalance(kept, cfg.rebalance, rng)
            write_jsonl(kept + additional, out)
            return {"originals": len(kept), "additional": len(additional)}

        return self._run_stage("rebalance", inputs, "generation_inputs.jsonl", fn)

    def stage_generate(self) -> Path:
        cfg = self.config
        labels_path = self.workdir / "generation_inputs.jsonl"
        template = (
            Path(cfg.prompt_template).read_text(encoding="utf-8") if cfg.prompt_template else None
        )
        inputs = {
            "labels": file_hash(labels_path),
            "source": file_hash(cfg.source_train),
            "params": _params_hash(
                {
                    "k_shot": cfg.k_shot,
                    "sampling": cfg.sampling.to_json(),
                    "seed": cfg.seed,
                    "template": template,
                }
            ),
        }

        def fn(out: Path) -> dict:
            _, llm = self._clients()
            labels = list(read_jsonl(labels_path))
            source = list(read_jsonl(cfg.source_train))
            jobs = promptgen.build_generation_jobs(
                labels,
                source,
                cfg.target_lang,
                k_shot=cfg.k_shot,
                sampling=cfg.sampling,
                run_seed=cfg.seed,
                template=template,
            )
            results = generate_batch(llm, jobs)
            generated: list[LabeledExample] = []
            failures: list[RejectionRecord] = []
            for job in jobs:
                result = results[job.id]
                text = result.strip() if isinstance(result, str) else ""
                if not isinstance(result, str):
                    failures.append(
                        RejectionRecord(job.id, "generation_failed", {"error": result.error})
                    )
                elif not text:
                    failures.append(
                        RejectionRecord(job.id, "generation_failed", {"error": "empty output"})
                    )
                else:
                    # label spans pointed into the predicted sentence, not
                    # this new text; generated pairs are span-less
                    generated.append(
                        LabeledExample(
                            job.id, cfg.target_lang, text, strip_spans(job.label), "generated"
                        )
                    )
            write_jsonl(generated, out)
            report = self.workdir / "generation_failures.jsonl"
            write_rejections(failures, report)
            return {
                "jobs": len(jobs),
                "generated": len(generated),
                "failed": len(failures),
                "report": report.name,
                "report_sha256": file_hash(report),
            }

        return self._run_stage("generate", inputs, "generated.jsonl", fn)

    def stage_postfilter(self) -> Path:
        gen_path = self.workdir / "generated.jsonl"
        model = self._stage1_model()
        inputs = {"generated": file_hash(gen_path), "model": model}

        def fn(out: Path) -> dict:
            absa, _ = self._clients()
            pairs = list(read_jsonl(gen_path))
            kept, rejections = filter_generated(pairs, absa, model)
            write_jsonl(kept, out)
            report = self.workdir / "postfilter_rejections.jsonl"
            write_rejections(rejections, report)
            return {
                "kept": len(kept),
                "rejected": len(rejections),
                "report": report.name,
                "report_sha256": file_hash(report),
            }

        return self._run_stage("postfilter", inputs, "kept.jsonl", fn)

    def stage_merge(self) -> Path:
        cfg = self.config
        pseudo_path = (
            self.workdir / "prefiltered.jsonl"
            if cfg.mode == "self_training"
            else self.workdir / "kept.jsonl"
        )
        inputs = {
            "source": file_hash(cfg.source_train),
            "pseudo": file_hash(pseudo_path),
            "params": _params_hash({"seed": cfg.seed, "cap": cfg.cap_generated}),
        }

        def fn(out: Path) -> dict:
            source = list(read_jsonl(cfg.source_train))
            pseudo = list(read_jsonl(pseudo_path))
            if cfg.cap_generated is not None:
                pseudo = cap_generated(
                    pseudo, cfg.cap_generated, random.Random(stable_seed(cfg.seed, "cap"))
                )
            merged = source + pseudo
            LabeledDataset(merged)  # id-uniqueness check across the union
            random.Random(stable_seed(cfg.seed, "merge")).shuffle(merged)
            write_jsonl(merged, out)
            return {"source": len(source), "pseudo": len(pseudo), "merged": len(merged)}

        return self._run_stage("merge", inputs, "merged.jsonl", fn)

    def stage_train2(self) -> Path:
        cfg = self.config
        merged = self.workdir / "merged.jsonl"
        init_from = self._stage1_model()
        inputs = {
            "dataset": file_hash(merged),
            "init_from": init_from,
            "params": _params_hash(
                {
                    "backbone": cfg.backend.backbone,
                    "hyperparams": cfg.train_hyperparams,
                    "seeds": list(cfg.seeds),
                    "dev": cfg.source_dev,
                }
            ),
        }

        def fn(out: Path) -> dict:
            models = [
                {"seed": s, "model": self._train(merged, s, init_from=init_from)}
                for s in cfg.seeds
            ]
            self._write_json(out, {"models": models, "init_from": init_from})
            hyperparams = dict(cfg.train_hyperparams)
            hyperparams["init_from"] = init_from
            return {"models": len(models), "hyperparams": hyperparams}

        return self._run_stage("train2", inputs, "stage2_models.json", fn)

    def stage_evaluate(self) -> Path:
        cfg = self.config
        models_file = "stage1_models.json" if cfg.mode == "zero_shot" else "stage2_models.json"
        models_path = self.workdir / models_file
        inputs = {"models": file_hash(models_path), "test": file_hash(cfg.target_test)}

        def fn(out: Path) -> dict:
            absa, _ = self._clients()
            gold = list(read_jsonl(cfg.target_test))
            entries = json.loads(models_path.read_text(encoding="utf-8"))["models"]
            runs = []
            reports = []
            for entry in entries:
                preds = predict_batch(
                    absa, cfg.target_lang, [(ex.id, ex.text) for ex in gold], entry["model"]
                )
                pred_examples = [
                    LabeledExample(
                        ex.id, cfg.target_lang, ex.text, canonical_tuple_order(preds[ex.id]), "predicted"
                    )
                    for ex in gold
                ]
                report = micro_f1(gold, pred_examples)
                reports.append(report)
                runs.append({"seed": entry["seed"], "model": entry["model"], **report.to_json()})
            agg = aggregate_runs(reports)
            self._write_json(out, {"runs": runs, "aggregate": agg.to_json()})
            return {"runs": len(runs), "f1_mean": agg.mean, "f1_std": agg.std}

        return self._run_stage("evaluate", inputs, "evaluation.json", fn)

    # -- plan --

    def plan(self) -> list[str]:
        stages = list(STAGE_PLANS[self.config.mode])
        if self.config.target_test is None:
            stages.remove("evaluate")
        return stages

    def execute(self, stop_after: str | None = None) -> RunManifest:
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.manifest.save(self.workdir / "manifest.json")
        stage_fns = {
            "train1": self.stage_train1,
            "predict": self.stage_predict,
            "prefilter": self.stage_prefilter,
            "rebalance": self.stage_rebalance,
            "generate": self.stage_generate,
            "postfilter": self.stage_postfilter,
            "merge": self.stage_merge,
            "train2": self.stage_train2,
            "evaluate": self.stage_evaluate,
        }
        for name in self.plan():
            stage_fns[name]()
            if stop_after == name:
                logger.info("stopping after stage %s as requested", name)
                break
        return self.manifest


def run_pipeline(
    config: RunConfig, resume: bool = False, stop_after: str | None = None
) -> RunManifest:
    """Run (or resume) the pipeline; returns the manifest.

    Without ``resume``, any previous manifest in the workdir is discarded
    and all stages run afresh. With it, completed stages whose input hashes
    still match are skipped.
    """
    manifest_path = Path(config.workdir) / "manifest.json"
    previous = None
    if resume and manifest_path.exists():
        previous = RunManifest.load(manifest_path)
        if previous.config_hash != config_hash(config):
            raise ConfigDrift(
                "config does not match the manifest; refusing to resume "
                f"(manifest {previous.config_hash[:12]}, config {config_hash(config)[:12]})"
            )
    run = PipelineRun(config, resume_manifest=previous)
    return run.execute(stop_after=stop_after)


def resume(manifest_path: str | Path, config: RunConfig | None = None) -> RunManifest:
    """Resume from a manifest; refuses on config drift."""
    manifest_path = Path(manifest_path)
    previous = RunManifest.load(manifest_path)
    if config is None:
        config = config_from_json(previous.config)
    if previous.config_hash != config_hash(config):
        raise ConfigDrift("config does not match the manifest; refusing to resume")
    run = PipelineRun(config, resume_manifest=previous)
    return run.execute()
