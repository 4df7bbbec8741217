"""External scorer protocol: exchange layout, stub scorers, fault handling."""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from patternscope import ext_worker
from patternscope.detect import ComponentKind
from patternscope.errors import ExternalScorerError
from patternscope.verify import (VerifierModel, external_verify, read_scores,
                                 run_scorer, save_model, score,
                                 write_exchange)

FAB = ComponentKind.FLOATING_ACTION_BUTTON
TABS = ComponentKind.TAB_LAYOUT


def crop_batch(n=3):
    rng = np.random.default_rng(13)
    out = []
    for i in range(n):
        img = Image.fromarray(rng.integers(0, 256, (20, 20, 3),
                                           dtype=np.uint8))
        kind = FAB if i % 2 == 0 else TABS
        out.append((f"com.a__s0__{i}", kind, img))
    return out


def stub_scorer(tmp_path, body):
    """A scorer executable is any argv string; python3 -c keeps stubs inline."""
    script = tmp_path / "stub.py"
    script.write_text(body, encoding="utf-8")
    return f"{sys.executable} {script}"


ECHO_CONSTANT = """\
import csv, pathlib, sys
exchange = pathlib.Path(sys.argv[1])
rows = list(csv.DictReader(open(exchange / "manifest.csv", newline="")))
with open(exchange / "scores.csv", "w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\\n")
    w.writerow(["id", "score"])
    for row in rows:
        w.writerow([row["id"], "{value}"])
"""


class TestExchange:
    def test_write_layout(self, tmp_path):
        batch = crop_batch()
        write_exchange(batch, tmp_path / "ex")
        names = sorted(p.name for p in (tmp_path / "ex").iterdir())
        assert names == ["com.a__s0__0.png", "com.a__s0__1.png",
                         "com.a__s0__2.png", "manifest.csv"]
        with open(tmp_path / "ex" / "manifest.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["id"] for r in rows] == [cid for cid, _, _ in batch]
        assert rows[0]["kind"] == FAB.value
        assert rows[1]["kind"] == TABS.value

    def test_images_survive_round_trip(self, tmp_path):
        batch = crop_batch(1)
        write_exchange(batch, tmp_path)
        with Image.open(tmp_path / "com.a__s0__0.png") as img:
            assert np.array_equal(np.asarray(img.convert("RGB")),
                                  np.asarray(batch[0][2]))

    def test_read_scores_round_trip(self, tmp_path):
        ids = ["a", "b", "c"]
        with open(tmp_path / "scores.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "score"])
            for i, cid in enumerate(ids):
                w.writerow([cid, repr(i / 4)])
        scores = read_scores(tmp_path, ids)
        assert scores == {"a": 0.0, "b": 0.25, "c": 0.5}

    def test_missing_scores_file(self, tmp_path):
        with pytest.raises(ExternalScorerError, match="no scores.csv"):
            read_scores(tmp_path, ["a"])

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "scores.csv").write_text("id,score\na,0.5\n")
        with pytest.raises(ExternalScorerError, match="mismatch"):
            read_scores(tmp_path, ["a", "b"])

    def test_out_of_range_score(self, tmp_path):
        (tmp_path / "scores.csv").write_text("id,score\na,1.5\n")
        with pytest.raises(ExternalScorerError, match="outside"):
            read_scores(tmp_path, ["a"])

    def test_malformed_row(self, tmp_path):
        (tmp_path / "scores.csv").write_text("id,score\na,not-a-number\n")
        with pytest.raises(ExternalScorerError, match="malformed"):
            read_scores(tmp_path, ["a"])


class TestRunScorer:
    def test_constant_zero(self, tmp_path):
        batch = crop_batch()
        command = stub_scorer(tmp_path, ECHO_CONSTANT.format(value="0.0"))
        scores = external_verify(batch, command, tmp_path / "ex")
        assert set(scores.values()) == {0.0}
        assert set(scores) == {cid for cid, _, _ in batch}

    def test_constant_one(self, tmp_path):
        batch = crop_batch()
        command = stub_scorer(tmp_path, ECHO_CONSTANT.format(value="1.0"))
        scores = external_verify(batch, command, tmp_path / "ex")
        assert set(scores.values()) == {1.0}

    def test_nonzero_exit_surfaces_stderr(self, tmp_path):
        command = stub_scorer(
            tmp_path, "import sys; sys.stderr.write('boom'); sys.exit(3)")
        write_exchange(crop_batch(1), tmp_path / "ex")
        with pytest.raises(ExternalScorerError, match="exited 3.*boom"):
            run_scorer(command, tmp_path / "ex", ["com.a__s0__0"])

    def test_scorer_writing_too_few_rows(self, tmp_path):
        body = ECHO_CONSTANT.format(value="0.5") + "\n"
        command = stub_scorer(tmp_path, body.replace(
            "for row in rows:", "for row in rows[:1]:"))
        with pytest.raises(ExternalScorerError, match="mismatch"):
            external_verify(crop_batch(3), command, tmp_path / "ex")


class TestExtWorker:
    def make_models_dir(self, tmp_path):
        rng = np.random.default_rng(21)
        models_dir = tmp_path / "models"
        models_dir.mkdir()
        models = {}
        for kind in (FAB, TABS):
            model = VerifierModel(kind=kind, weights=rng.normal(size=3072),
                                  bias=0.05, decision_threshold=0.5)
            save_model(model, models_dir / f"{kind.value}.model")
            models[kind] = model
        return models_dir, models

    def test_matches_in_process_scoring(self, tmp_path):
        models_dir, models = self.make_models_dir(tmp_path)
        batch = crop_batch(4)
        command = f"{sys.executable} -m patternscope.ext_worker " \
                  f"--models-dir {models_dir}"
        external = external_verify(batch, command, tmp_path / "ex")
        for cid, kind, img in batch:
            assert external[cid] == score(models[kind], img)

    def test_run_function_directly(self, tmp_path):
        models_dir, models = self.make_models_dir(tmp_path)
        exchange = write_exchange(crop_batch(2), tmp_path / "ex")
        assert ext_worker.run(models_dir, exchange) == 0
        scores = read_scores(exchange, ["com.a__s0__0", "com.a__s0__1"])
        assert len(scores) == 2

    def test_missing_model_fails(self, tmp_path):
        models_dir = tmp_path / "models"
        models_dir.mkdir()
        exchange = write_exchange(crop_batch(1), tmp_path / "ex")
        assert ext_worker.run(models_dir, exchange) != 0

    def test_missing_manifest_fails(self, tmp_path):
        models_dir, _ = self.make_models_dir(tmp_path)
        empty = tmp_path / "empty"
        empty.mkdir()
        assert ext_worker.run(models_dir, empty) != 0

    def test_cli_entry(self, tmp_path):
        models_dir, _ = self.make_models_dir(tmp_path)
        exchange = write_exchange(crop_batch(1), tmp_path / "ex")
        rc = ext_worker.main(["--models-dir", str(models_dir),
                              str(exchange)])
        assert rc == 0
        assert (exchange / "scores.csv").exists()
