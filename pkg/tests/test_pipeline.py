"""Staged pipeline: dependency order, manifest caching, CLI behavior."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from patternscope import errors
from patternscope.cli import main as cli_main
from patternscope.config import PipelineConfig
from patternscope.detect import ALL_KINDS
from patternscope.errors import StageDependencyError
from patternscope.pipeline import STAGES, Pipeline


def make_config(corpus_dir: Path, out: Path, **kwargs) -> PipelineConfig:
    defaults = dict(corpus_root=corpus_dir / "apps",
                    metadata=corpus_dir / "metadata.csv",
                    exclusions=corpus_dir / "exclusions.txt",
                    out=out, seed=7, screenshot_ext=".png",
                    bucket_count=10, category_min_count=2)
    defaults.update(kwargs)
    return PipelineConfig(**defaults)


@pytest.fixture(scope="module")
def finished_run(small_corpus, tmp_path_factory):
    corpus_dir, truth, spec = small_corpus
    out = tmp_path_factory.mktemp("pipeline_run")
    cfg = make_config(corpus_dir, out)
    pipe = Pipeline(cfg)
    pipe.run("all")
    return pipe, cfg, truth


class TestDependencies:
    def test_detect_before_ingest(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        pipe = Pipeline(make_config(corpus_dir, tmp_path / "out"))
        with pytest.raises(StageDependencyError, match="patternscope ingest"):
            pipe.run("detect")

    def test_train_names_missing_crop_stage(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        pipe = Pipeline(make_config(corpus_dir, tmp_path / "out"))
        with pytest.raises(StageDependencyError, match="crop"):
            pipe.run("train")

    def test_unknown_stage(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        pipe = Pipeline(make_config(corpus_dir, tmp_path / "out"))
        with pytest.raises(errors.PatternscopeError):
            pipe.run("fit")


class TestArtifacts:
    def test_all_stage_directories_present(self, finished_run):
        pipe, cfg, _ = finished_run
        for stage in STAGES:
            assert (cfg.out / stage).is_dir(), stage

    def test_manifest_covers_all_stages(self, finished_run):
        _, cfg, _ = finished_run
        manifest = json.loads((cfg.out / "manifest.json").read_text())
        assert sorted(manifest["stages"]) == sorted(STAGES)
        for entry in manifest["stages"].values():
            assert entry["fingerprint"]
            assert entry["outputs"]

    def test_ingest_index(self, finished_run):
        _, cfg, _ = finished_run
        index = json.loads((cfg.out / "ingest" / "corpus_index.json")
                           .read_text())
        assert index["summary"]["analyzable"] == 30
        assert len(index["apps"]) == 30

    def test_detections_csv_shape(self, finished_run):
        _, cfg, truth = finished_run
        with open(cfg.out / "detect" / "detections.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert set(rows[0]) == {"package", "screen", "kind", "node_path",
                                "left", "top", "right", "bottom", "via",
                                "keyword"}
        detected = {(r["package"], r["kind"]) for r in rows}
        truthful = {(r.package, r.kind.value)
                    for r in truth.rows if r.uses}
        # detector overshoots (decoys) but never misses a planted app
        assert truthful <= detected

    def test_heatmaps_per_kind(self, finished_run):
        _, cfg, _ = finished_run
        for kind in ALL_KINDS:
            assert (cfg.out / "heatmap" / f"{kind.value}.grid.txt").exists()
            assert (cfg.out / "heatmap" / f"{kind.value}.meta.json").exists()
            assert (cfg.out / "heatmap" / f"{kind.value}.png").exists()

    def test_crop_store_nonempty(self, finished_run):
        _, cfg, _ = finished_run
        with open(cfg.out / "crop" / "crops.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        labels = {r["label"] for r in rows}
        assert labels == {"Candidate", "Negative"}
        for row in rows[:20]:
            assert (cfg.out / "crop" / row["path"]).exists()

    def test_models_saved(self, finished_run):
        _, cfg, _ = finished_run
        reports = json.loads((cfg.out / "train" / "train_reports.json")
                             .read_text())
        for kind in ALL_KINDS:
            assert (cfg.out / "train" / f"{kind.value}.model").exists()
            assert reports[kind.value]["train_size"] > 0

    def test_usage_covers_all_apps_and_kinds(self, finished_run):
        _, cfg, _ = finished_run
        with open(cfg.out / "verify" / "usage.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 30 * len(ALL_KINDS)
        assert {r["uses"] for r in rows} <= {"true", "false"}

    def test_analyze_outputs_parse(self, finished_run):
        _, cfg, _ = finished_run
        with open(cfg.out / "analyze" / "correlations.csv",
                  newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["metric"] for r in rows} == {"AvgRating", "Installs"}
        for row in rows:
            if row["rho"] == "":    # constant curve: no defined correlation
                continue
            assert -1.0 <= float(row["rho"]) <= 1.0
            assert 0.0 <= float(row["p_value"]) <= 1.0

    def test_report_index_files_exist(self, finished_run):
        _, cfg, _ = finished_run
        index = json.loads((cfg.out / "report" / "report_index.json")
                           .read_text())
        assert index["files"]
        for name in index["files"]:
            assert (cfg.out / "report" / name).exists()

    def test_no_tmp_dirs_left_behind(self, finished_run):
        _, cfg, _ = finished_run
        assert not list(cfg.out.glob(".tmp-*"))


class TestCaching:
    def test_rerun_skips(self, finished_run):
        pipe, _, _ = finished_run
        assert pipe.run("ingest") is False
        assert pipe.run("analyze") is False

    def test_force_reruns(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        pipe = Pipeline(make_config(corpus_dir, tmp_path / "out"))
        assert pipe.run("ingest") is True
        assert pipe.run("ingest") is False
        assert pipe.run("ingest", force=True) is True

    def test_config_change_invalidates(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        out = tmp_path / "out"
        pipe = Pipeline(make_config(corpus_dir, out))
        assert pipe.run("ingest") is True
        changed = Pipeline(make_config(corpus_dir, out, seed=8))
        assert changed.run("ingest") is True

    def test_corpus_change_invalidates(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        # copy a corpus subset so mutation cannot affect other tests
        import shutil
        local = tmp_path / "corpus"
        shutil.copytree(corpus_dir, local)
        pipe = Pipeline(make_config(local, tmp_path / "out"))
        assert pipe.run("ingest") is True
        screens = sorted((local / "apps").rglob("*.json"))
        screens[0].write_text(screens[0].read_text())  # same bytes: no-op
        assert pipe.run("ingest") is False
        extra = local / "apps" / "com.extra"
        extra.mkdir()
        (extra / "s0.json").write_text("{}")    # new file changes the tree
        assert pipe.run("ingest") is True

    def test_deleted_output_detected(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        pipe = Pipeline(make_config(corpus_dir, tmp_path / "out"))
        pipe.run("ingest")
        (tmp_path / "out" / "ingest" / "apps.csv").unlink()
        assert pipe.run("ingest") is True


class TestCli:
    def write_conf(self, corpus_dir, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text(
            f"corpus_root = {corpus_dir / 'apps'}\n"
            f"metadata = {corpus_dir / 'metadata.csv'}\n"
            f"exclusions = {corpus_dir / 'exclusions.txt'}\n"
            f"out = {tmp_path / 'out'}\n"
            "screenshot_ext = .png\n"
            "bucket_count = 10\n")
        return conf

    def test_ingest_exit_zero(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        conf = self.write_conf(corpus_dir, tmp_path)
        assert cli_main(["ingest", "--config", str(conf)]) == 0
        assert (tmp_path / "out" / "ingest" / "corpus_index.json").exists()

    def test_dependency_error_exit_code(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        conf = self.write_conf(corpus_dir, tmp_path)
        assert cli_main(["analyze", "--config", str(conf)]) == \
            StageDependencyError.exit_code

    def test_config_error_exit_code(self, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("corpus_root = /nonexistent\n")
        assert cli_main(["ingest", "--config", str(conf)]) == \
            errors.ConfigError.exit_code

    def test_seed_override(self, small_corpus, tmp_path):
        corpus_dir, _, _ = small_corpus
        conf = self.write_conf(corpus_dir, tmp_path)
        assert cli_main(["ingest", "--config", str(conf),
                         "--seed", "99"]) == 0

    def test_synth_subcommand(self, tmp_path):
        spec = tmp_path / "tiny.spec"
        spec.write_text("app_count = 3\nadoption.SnackBar = 1.0\n")
        out = tmp_path / "corpus"
        assert cli_main(["synth", "--spec", str(spec), "--out", str(out),
                         "--no-render"]) == 0
        assert (out / "ground_truth.csv").exists()
        assert not list(out.rglob("*.png"))

    def test_synth_spec_error_exit_code(self, tmp_path):
        spec = tmp_path / "bad.spec"
        spec.write_text("app_count = 0\n")
        assert cli_main(["synth", "--spec", str(spec),
                         "--out", str(tmp_path / "c")]) == \
            errors.SynthSpecError.exit_code


def test_error_classes_map_to_small_distinct_codes():
    classes = [getattr(errors, name) for name in dir(errors)
               if isinstance(getattr(errors, name), type)
               and issubclass(getattr(errors, name), errors.PatternscopeError)]
    codes = {cls.exit_code for cls in classes}
    assert all(isinstance(cls.exit_code, int) and 0 < cls.exit_code < 128
               for cls in classes)
    assert len(codes) >= 7    # error families stay distinguishable
