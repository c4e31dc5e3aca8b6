import json
import random
from pathlib import Path

import pytest

from laca.corpus import read_jsonl, write_jsonl
from laca.errors import ConfigDrift, ConfigInvalid
from laca.pipeline import (
    BackendSettings,
    RunConfig,
    RunManifest,
    cap_generated,
    config_from_json,
    config_hash,
    file_hash,
    load_config,
    resume,
    run_pipeline,
)

from absa_fixtures import LEXICON_WORDS, synthetic_corpus


def make_workspace(tmp_path: Path, mode: str = "laca", n_target: int = 40, **overrides) -> RunConfig:
    rng = random.Random(101)
    data = tmp_path / "data"
    write_jsonl(synthetic_corpus(60, "en", rng, "src"), data / "en_train.jsonl")
    write_jsonl(synthetic_corpus(12, "en", rng, "dev"), data / "en_dev.jsonl")
    write_jsonl(
        synthetic_corpus(n_target, "es", rng, "tgt", labelled=False, empty_rate=0.15),
        data / "es_unlabeled.jsonl",
    )
    write_jsonl(synthetic_corpus(15, "es", rng, "test"), data / "es_test.jsonl")
    (data / "lexicon.json").write_text(json.dumps(LEXICON_WORDS), encoding="utf-8")
    fields = dict(
        source_lang="en",
        target_lang="es",
        source_train=str(data / "en_train.jsonl"),
        source_dev=str(data / "en_dev.jsonl"),
        target_unlabeled=str(data / "es_unlabeled.jsonl"),
        target_test=str(data / "es_test.jsonl"),
        workdir=str(tmp_path / "run"),
        mode=mode,
        k_shot=5,
        seed=7,
        seeds=(1, 2, 3),
        backend=BackendSettings(mode="mock", lexicon=str(data / "lexicon.json")),
    )
    fields.update(overrides)
    return RunConfig(**fields)


def stage_output_hashes(manifest: RunManifest) -> dict[str, str]:
    hashes = {}
    for rec in manifest.stages:
        hashes[rec.name] = rec.output_hash
        if "report_sha256" in rec.counts:
            hashes[rec.name + ":report"] = rec.counts["report_sha256"]
    return hashes


class TestConfig:
    def test_same_lang_rejected(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            make_workspace(tmp_path, target_lang="en")

    def test_empty_seeds_rejected(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            make_workspace(tmp_path, seeds=())

    def test_target_dev_refused_in_laca_mode(self, tmp_path):
        with pytest.raises(ConfigInvalid, match="source-language dev"):
            make_workspace(tmp_path, target_dev="something.jsonl")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigInvalid, match="unknown config keys"):
            config_from_json({"soruce_lang": "en"})

    def test_load_config_round_trip(self, tmp_path):
        config = make_workspace(tmp_path)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config.to_json()), encoding="utf-8")
        assert load_config(path) == config
        assert config_hash(load_config(path)) == config_hash(config)

    def test_http_mode_requires_urls(self):
        with pytest.raises(ConfigInvalid):
            BackendSettings(mode="http")

    def test_missing_unlabeled_rejected_outside_zero_shot(self, tmp_path):
        with pytest.raises(ConfigInvalid, match="target_unlabeled"):
            make_workspace(tmp_path, target_unlabeled=None)


class TestModes:
    def test_zero_shot_two_stages(self, tmp_path):
        config = make_workspace(tmp_path, mode="zero_shot", target_unlabeled=None)
        manifest = run_pipeline(config)
        assert [rec.name for rec in manifest.stages] == ["train1", "evaluate"]
        evaluation = json.loads((Path(config.workdir) / "evaluation.json").read_text())
        assert len(evaluation["runs"]) == 3  # one per seed

    def test_laca_full_stage_order(self, tmp_path):
        config = make_workspace(tmp_path)
        manifest = run_pipeline(config)
        assert [rec.name for rec in manifest.stages] == [
            "train1", "predict", "prefilter", "rebalance", "generate",
            "postfilter", "merge", "train2", "evaluate",
        ]

    def test_self_training_skips_generation(self, tmp_path):
        config = make_workspace(tmp_path, mode="self_training")
        manifest = run_pipeline(config)
        names = [rec.name for rec in manifest.stages]
        assert "generate" not in names and "rebalance" not in names and "postfilter" not in names
        # pseudo-labelled texts are exactly the unlabelled target texts
        unlabeled = {e.id: e.text for e in read_jsonl(config.target_unlabeled)}
        pseudo = list(read_jsonl(Path(config.workdir) / "prefiltered.jsonl"))
        assert pseudo and all(unlabeled[e.id] == e.text for e in pseudo)
        merged = read_jsonl(Path(config.workdir) / "merged.jsonl")
        assert {e.origin for e in merged} == {"gold", "predicted"}

    def test_laca_merged_origins_and_size(self, tmp_path):
        config = make_workspace(tmp_path)
        run_pipeline(config)
        workdir = Path(config.workdir)
        source = read_jsonl(config.source_train)
        kept = read_jsonl(workdir / "kept.jsonl")
        merged = read_jsonl(workdir / "merged.jsonl")
        assert len(merged) == len(source) + len(kept)
        assert {e.origin for e in merged} == {"gold", "generated"}

    def test_stage2_carries_init_from(self, tmp_path):
        config = make_workspace(tmp_path)
        manifest = run_pipeline(config)
        stage1 = json.loads((Path(config.workdir) / "stage1_models.json").read_text())
        train2 = manifest.latest("train2")
        assert train2.counts["hyperparams"]["init_from"] == stage1["models"][0]["model"]

    def test_rejection_partition(self, tmp_path):
        config = make_workspace(tmp_path)
        manifest = run_pipeline(config)
        workdir = Path(config.workdir)
        n_inputs = len(read_jsonl(workdir / "generation_inputs.jsonl"))
        n_generated = len(read_jsonl(workdir / "generated.jsonl"))
        n_failures = len((workdir / "generation_failures.jsonl").read_text().splitlines())
        assert n_generated + n_failures == n_inputs
        n_kept = len(read_jsonl(workdir / "kept.jsonl"))
        n_rejected = len((workdir / "postfilter_rejections.jsonl").read_text().splitlines())
        assert n_kept + n_rejected == n_generated


class TestDeterminism:
    def test_two_runs_identical_hashes(self, tmp_path):
        config_a = make_workspace(tmp_path, workdir=str(tmp_path / "run_a"))
        config_b = RunConfig(**{**config_a.__dict__, "workdir": str(tmp_path / "run_b")})
        hashes_a = stage_output_hashes(run_pipeline(config_a))
        hashes_b = stage_output_hashes(run_pipeline(config_b))
        assert hashes_a == hashes_b

    def test_different_seed_changes_generation(self, tmp_path):
        config_a = make_workspace(tmp_path, workdir=str(tmp_path / "run_a"))
        config_b = RunConfig(**{**config_a.__dict__, "workdir": str(tmp_path / "run_b"), "seed": 8})
        a = stage_output_hashes(run_pipeline(config_a))
        b = stage_output_hashes(run_pipeline(config_b))
        assert a["merge"] != b["merge"]  # different shuffle at minimum


class TestResume:
    def test_fully_complete_manifest_noop(self, tmp_path):
        config = make_workspace(tmp_path)
        first = run_pipeline(config)
        again = run_pipeline(config, resume=True)
        assert stage_output_hashes(first) == stage_output_hashes(again)
        assert len(again.stages) == len(first.stages)  # no stage re-ran

    def test_kill_after_predict_then_resume(self, tmp_path):
        config_full = make_workspace(tmp_path, workdir=str(tmp_path / "uninterrupted"))
        full_hashes = stage_output_hashes(run_pipeline(config_full))

        config_killed = RunConfig(**{**config_full.__dict__, "workdir": str(tmp_path / "killed")})
        partial = run_pipeline(config_killed, stop_after="predict")
        assert [rec.name for rec in partial.stages] == ["train1", "predict"]

        resumed = run_pipeline(config_killed, resume=True)
        assert stage_output_hashes(resumed) == full_hashes

    def test_resume_skips_completed_stages(self, tmp_path):
        config = make_workspace(tmp_path)
        run_pipeline(config, stop_after="predict")
        t1_hash = file_hash(Path(config.workdir) / "stage1_models.json")
        manifest = run_pipeline(config, resume=True)
        # still only one record per completed stage: they were skipped, not re-run
        assert [rec.name for rec in manifest.stages].count("train1") == 1
        assert file_hash(Path(config.workdir) / "stage1_models.json") == t1_hash

    def test_config_drift_refused(self, tmp_path):
        config = make_workspace(tmp_path)
        run_pipeline(config, stop_after="predict")
        drifted = RunConfig(**{**config.__dict__, "k_shot": 9})
        with pytest.raises(ConfigDrift):
            run_pipeline(drifted, resume=True)

    def test_resume_from_manifest_path(self, tmp_path):
        config = make_workspace(tmp_path)
        run_pipeline(config, stop_after="prefilter")
        manifest = resume(Path(config.workdir) / "manifest.json")
        assert manifest.latest("evaluate") is not None

    def test_changed_input_reruns_downstream(self, tmp_path):
        config = make_workspace(tmp_path)
        run_pipeline(config)
        evaluation_before = file_hash(Path(config.workdir) / "evaluation.json")
        # enlarge the test set: evaluate must re-run, earlier stages must not
        extra = synthetic_corpus(25, "es", random.Random(999), "test2")
        write_jsonl(list(read_jsonl(config.target_test)) + extra, config.target_test)
        manifest = run_pipeline(config, resume=True)
        names = [rec.name for rec in manifest.stages]
        assert names.count("evaluate") == 2 and names.count("train1") == 1
        assert file_hash(Path(config.workdir) / "evaluation.json") != evaluation_before


class TestCapGenerated:
    def test_zero(self):
        data = synthetic_corpus(10, "en", random.Random(0), "c")
        assert cap_generated(data, 0, random.Random(1)) == []

    def test_identity_when_large(self):
        data = synthetic_corpus(10, "en", random.Random(0), "c")
        assert cap_generated(data, 10, random.Random(1)) == data
        assert cap_generated(data, 99, random.Random(1)) == data

    def test_seeded_subsample(self):
        data = synthetic_corpus(500, "en", random.Random(0), "c")
        a = cap_generated(data, 100, random.Random(42))
        b = cap_generated(data, 100, random.Random(42))
        c = cap_generated(data, 100, random.Random(43))
        assert len(a) == 100 and a == b and a != c
        positions = {e.id: i for i, e in enumerate(data)}
        assert [positions[e.id] for e in a] == sorted(positions[e.id] for e in a)

    def test_cap_in_pipeline(self, tmp_path):
        config = make_workspace(tmp_path, cap_generated=3)
        run_pipeline(config)
        merged = read_jsonl(Path(config.workdir) / "merged.jsonl")
        source = read_jsonl(config.source_train)
        assert len(merged) == len(source) + 3
