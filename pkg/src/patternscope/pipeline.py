"""Staged pipeline: ingest, detect, heatmap, crop, train, verify, analyze,
report.

Each stage writes plain files into ``<out>/<stage>/`` via a temp directory
renamed on success, and records a fingerprint (config + input hashes) plus
output hashes in ``<out>/manifest.json``. Re-running a stage whose
fingerprint and outputs are unchanged is a no-op unless forced. Nothing in
the manifest or the artifacts references absolute paths or wall-clock time,
so runs with the same corpus, config, and seed are byte-identical wherever
the output directory lives.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
from collections import defaultdict
from pathlib import Path

import numpy as np
from PIL import Image

from . import crops as crops_mod
from . import render
from .config import PipelineConfig
from .corpus import (AppMetadata, AppRecord, ImageRef, assemble_corpus,
                     load_exclusions, load_metadata, parse_view_hierarchy)
from .detect import (ALL_KINDS, ComponentKind, Detection, MatchVia,
                     default_rules, detect_in_screen, load_rules)
from .errors import (DegenerateCropError, ScoreError, StageDependencyError,
                     StatsError)
from .heatmap import Heatmap, ScreenGeometry
from .rects import Rect
from .stats import (FiveNumberSummary, Metric, bucket_curve,
                    five_number_summary, material_usage, pearson,
                    rank_categories, split_by_median, split_by_threshold,
                    usage_rate)
from .verify import (TrainConfig, featurize, fit_matrices, load_model,
                     save_model, split_dataset)
from . import verify as verify_mod

logger = logging.getLogger(__name__)

STAGES = ("ingest", "detect", "heatmap", "crop", "train", "verify",
          "analyze", "report")

SHORT_NAMES = {
    ComponentKind.APP_BAR: "AppBar",
    ComponentKind.FLOATING_ACTION_BUTTON: "FAB",
    ComponentKind.BOTTOM_NAVIGATION: "BottomNav",
    ComponentKind.NAVIGATION_DRAWER: "Drawer",
    ComponentKind.SNACK_BAR: "SnackBar",
    ComponentKind.TAB_LAYOUT: "Tabs",
}
ANY_MATERIAL = "AnyMaterial"


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_tree(root: Path) -> str:
    """Content hash of a directory: relative names, sizes, and bytes."""
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        h.update(rel.encode("utf-8"))
        h.update(str(path.stat().st_size).encode("ascii"))
        h.update(_sha256_file(path).encode("ascii"))
    return h.hexdigest()


def _canon_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _read_csv_dicts(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _float(value: float) -> str:
    return repr(float(value))


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)

    # -- manifest -------------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.out / "manifest.json"

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text("utf-8"))
        return {"version": 1, "stages": {}}

    def _store_manifest(self, manifest: dict) -> None:
        tmp = self.out / ".manifest.tmp"
        tmp.write_text(_canon_json(manifest), encoding="utf-8")
        tmp.replace(self.manifest_path)

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def _deps(self, stage: str) -> tuple[str, ...]:
        needs_models = (self.cfg.classifier == "reference"
                        or "{models_dir}" in self.cfg.external_command)
        deps = {
            "ingest": (),
            "detect": ("ingest",),
            "heatmap": ("ingest", "detect"),
            "crop": ("ingest", "detect", "heatmap"),
            "train": ("crop",),
            "verify": ("ingest", "crop") + (("train",) if needs_models else ()),
            "analyze": ("ingest", "verify"),
            "report": ("ingest", "heatmap", "crop", "verify", "analyze"),
        }
        return deps[stage]

    def _source_inputs(self, stage: str) -> dict[str, str]:
        cfg = self.cfg
        inputs: dict[str, str] = {}
        if stage == "ingest":
            inputs["corpus"] = _sha256_tree(Path(cfg.corpus_root))
            inputs["metadata"] = _sha256_file(Path(cfg.metadata))
            inputs["exclusions"] = (_sha256_file(Path(cfg.exclusions))
                                    if cfg.exclusions else "")
        if stage == "detect":
            inputs["keywords"] = (_sha256_file(Path(cfg.keywords))
                                  if cfg.keywords else "builtin")
        return inputs

    def _fingerprint(self, stage: str, manifest: dict) -> str:
        inputs = self._source_inputs(stage)
        for dep in self._deps(stage):
            entry = manifest["stages"].get(dep)
            if entry is None:
                raise StageDependencyError(
                    f"stage {stage!r} needs {dep!r}; run "
                    f"`patternscope {dep}` first")
            inputs[f"stage:{dep}"] = _sha256_bytes(
                _canon_json(entry["outputs"]).encode("utf-8"))
        payload = {"config": self.cfg.fingerprint_payload(), "inputs": inputs}
        return _sha256_bytes(_canon_json(payload).encode("utf-8"))

    def _outputs_intact(self, stage: str, entry: dict) -> bool:
        stage_dir = self.stage_dir(stage)
        for rel, digest in entry["outputs"].items():
            path = stage_dir / rel
            if not path.is_file() or _sha256_file(path) != digest:
                return False
        return True

    # -- stage driver ----------------------------------------------------------

    def run(self, stage: str, force: bool = False) -> bool:
        """Run one stage; returns False when skipped as up to date."""
        if stage == "all":
            for name in STAGES:
                self.run(name, force=force)
            return True
        if stage not in STAGES:
            raise StageDependencyError(f"unknown stage {stage!r}; expected "
                                       f"one of {', '.join(STAGES)} or all")
        self.out.mkdir(parents=True, exist_ok=True)
        manifest = self._load_manifest()
        for dep in self._deps(stage):
            if dep not in manifest["stages"] or \
                    not self.stage_dir(dep).is_dir():
                raise StageDependencyError(
                    f"stage {stage!r} needs {dep!r}; run "
                    f"`patternscope {dep}` first")
        fingerprint = self._fingerprint(stage, manifest)
        entry = manifest["stages"].get(stage)
        if not force and entry and entry["fingerprint"] == fingerprint \
                and self._outputs_intact(stage, entry):
            logger.info("stage %s up to date; skipping", stage)
            return False

        tmp = self.out / f".tmp-{stage}"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        logger.info("running stage %s", stage)
        getattr(self, f"_stage_{stage}")(tmp)

        final = self.stage_dir(stage)
        if final.exists():
            shutil.rmtree(final)
        tmp.replace(final)
        outputs = {
            p.relative_to(final).as_posix(): _sha256_file(p)
            for p in sorted(final.rglob("*")) if p.is_file()
        }
        manifest["stages"][stage] = {"fingerprint": fingerprint,
                                     "outputs": outputs}
        self._store_manifest(manifest)
        return True

    # -- shared readers ---------------------------------------------------------

    def _read_index(self) -> dict:
        return json.loads(
            (self.stage_dir("ingest") / "corpus_index.json").read_text("utf-8"))

    def _geometry(self, index: dict) -> dict[tuple[str, str], ScreenGeometry]:
        geos = {}
        for app in index["apps"]:
            for screen in app["screens"]:
                ref = None
                if screen["screenshot"] is not None:
                    ref = ImageRef(
                        path=Path(self.cfg.corpus_root) / screen["screenshot"],
                        width=screen["width"], height=screen["height"])
                geos[(app["package"], screen["id"])] = ScreenGeometry(
                    screen_id=screen["id"],
                    virtual_extent=(screen["virtual_w"], screen["virtual_h"]),
                    screenshot=ref)
        return geos

    def _read_detections(self) -> list[dict]:
        rows = _read_csv_dicts(self.stage_dir("detect") / "detections.csv")
        for row in rows:
            row["bounds"] = Rect(int(row["left"]), int(row["top"]),
                                 int(row["right"]), int(row["bottom"]))
            row["kind_enum"] = ComponentKind.from_name(row["kind"])
        return rows

    def _analyzable(self, index: dict) -> list[dict]:
        return [app for app in index["apps"]
                if not app["excluded"] and app["metadata"] is not None
                and app["screens"]]

    # -- stages -----------------------------------------------------------------

    def _stage_ingest(self, tmp: Path) -> None:
        cfg = self.cfg
        table = load_metadata(cfg.metadata)
        exclusions = load_exclusions(cfg.exclusions) if cfg.exclusions else set()
        corpus = assemble_corpus(cfg.corpus_root, table, exclusions,
                                 screenshot_ext=cfg.screenshot_ext)
        root = Path(cfg.corpus_root)
        apps_payload = []
        for app in corpus.apps:
            screens = []
            for screen in app.screens:
                shot = screen.screenshot
                screens.append({
                    "id": screen.screen_id,
                    "hierarchy":
                        f"{app.package_id}/{screen.screen_id}.json",
                    "screenshot": (shot.path.relative_to(root).as_posix()
                                   if shot else None),
                    "width": shot.width if shot else None,
                    "height": shot.height if shot else None,
                    "virtual_w": screen.virtual_extent[0],
                    "virtual_h": screen.virtual_extent[1],
                })
            meta = app.metadata
            apps_payload.append({
                "package": app.package_id,
                "excluded": app.excluded,
                "exclusion_reason": app.exclusion_reason,
                "metadata": None if meta is None else {
                    "avg_rating": meta.avg_rating,
                    "installs": meta.installs,
                    "category": meta.category,
                },
                "screens": screens,
            })
        (tmp / "corpus_index.json").write_text(
            _canon_json({"summary": corpus.summary.as_dict(),
                         "apps": apps_payload}), encoding="utf-8")
        _write_csv(tmp / "apps.csv",
                   ["package", "analyzable", "excluded", "screens",
                    "avg_rating", "installs", "category"],
                   [[a.package_id, int(a.analyzable), int(a.excluded),
                     len(a.screens),
                     "" if a.metadata is None else _float(a.metadata.avg_rating),
                     "" if a.metadata is None else a.metadata.installs,
                     "" if a.metadata is None else a.metadata.category]
                    for a in corpus.apps])
        _write_csv(tmp / "rejected_metadata.csv",
                   ["line", "package", "reason"],
                   [[r.line, r.package, r.reason] for r in table.rejected])

    def _stage_detect(self, tmp: Path) -> None:
        cfg = self.cfg
        rules = load_rules(cfg.keywords) if cfg.keywords else default_rules()
        index = self._read_index()
        root = Path(cfg.corpus_root)
        rows = []
        kind_counts = defaultdict(int)
        screens_scanned = 0
        for app in self._analyzable(index):
            for screen_info in app["screens"]:
                screens_scanned += 1
                screen = parse_view_hierarchy(
                    (root / screen_info["hierarchy"]).read_text("utf-8"),
                    screen_id=screen_info["id"])
                detections = detect_in_screen(screen, rules,
                                              package_id=app["package"])
                for det in detections:
                    kind_counts[det.kind.value] += 1
                    rows.append([app["package"], screen_info["id"],
                                 det.kind.value,
                                 ".".join(str(i) for i in det.node_path),
                                 det.bounds.left, det.bounds.top,
                                 det.bounds.right, det.bounds.bottom,
                                 det.matched_via.value, det.matched_keyword])
        rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
        _write_csv(tmp / "detections.csv",
                   ["package", "screen", "kind", "node_path", "left", "top",
                    "right", "bottom", "via", "keyword"], rows)
        (tmp / "detect_summary.json").write_text(
            _canon_json({"screens_scanned": screens_scanned,
                         "detections_by_kind": dict(sorted(kind_counts.items())),
                         "total": len(rows)}), encoding="utf-8")

    def _stage_heatmap(self, tmp: Path) -> None:
        cfg = self.cfg
        index = self._read_index()
        geometry = self._geometry(index)
        maps = {kind: Heatmap(kind=kind, grid_w=cfg.grid_w, grid_h=cfg.grid_h)
                for kind in ALL_KINDS}
        for row in self._read_detections():
            geo = geometry[(row["package"], row["screen"])]
            detection = Detection(
                package_id=row["package"], screen_id=row["screen"],
                kind=row["kind_enum"],
                node_path=tuple(int(i) for i in row["node_path"].split(".")
                                if i != ""),
                bounds=row["bounds"],
                matched_via=MatchVia(row["via"]),
                matched_keyword=row["keyword"])
            maps[detection.kind].accumulate(detection, geo)
        for kind, hm in maps.items():
            hm.save(tmp / kind.value)
            hm.render_png(tmp / f"{kind.value}.png")

    def _stage_crop(self, tmp: Path) -> None:
        cfg = self.cfg
        index = self._read_index()
        geometry = self._geometry(index)
        detections = self._read_detections()
        heatmaps = {kind: Heatmap.load(self.stage_dir("heatmap") / kind.value)
                    for kind in ALL_KINDS}
        writer = crops_mod.CropWriter(tmp)

        by_screen: dict[tuple[str, str], list[dict]] = defaultdict(list)
        for row in detections:
            by_screen[(row["package"], row["screen"])].append(row)

        candidate_counts = {kind: 0 for kind in ALL_KINDS}
        kinds_on_screen: dict[tuple[str, str], set[ComponentKind]] = \
            defaultdict(set)
        for (package, screen_id), rows in sorted(by_screen.items()):
            geo = geometry[(package, screen_id)]
            dets = [Detection(package_id=package, screen_id=screen_id,
                              kind=row["kind_enum"],
                              node_path=tuple(
                                  int(i) for i in row["node_path"].split(".")
                                  if i != ""),
                              bounds=row["bounds"],
                              matched_via=MatchVia(row["via"]),
                              matched_keyword=row["keyword"])
                    for row in rows]
            image = crops_mod.load_screenshot(geo)
            samples = crops_mod.extract_candidates(
                geo, dets, package, image=image,
                margin_fraction=cfg.margin_fraction)
            for sample in samples:
                writer.add(sample)
                candidate_counts[sample.kind] += 1
                kinds_on_screen[(package, screen_id)].add(sample.kind)
            image.close()

        analyzable_screens = [
            (app["package"], s["id"])
            for app in self._analyzable(index) for s in app["screens"]]
        negative_counts = {kind: 0 for kind in ALL_KINDS}
        for kind in ALL_KINDS:
            target = round(cfg.negative_ratio * candidate_counts[kind])
            if heatmaps[kind].total == 0 or target == 0:
                continue
            for key in analyzable_screens:
                if negative_counts[kind] >= target:
                    break
                if kind in kinds_on_screen[key]:
                    continue
                geo = geometry[key]
                if geo.screenshot is None:
                    continue
                try:
                    sample = crops_mod.negative_sample(
                        geo, kind, heatmaps[kind], key[0])
                except DegenerateCropError as exc:
                    logger.warning("skipping negative on %s/%s: %s",
                                   key[0], key[1], exc)
                    continue
                writer.add(sample)
                sample.image.close()
                negative_counts[kind] += 1
        writer.finish()
        (tmp / "crop_summary.json").write_text(
            _canon_json({"candidates": {k.value: candidate_counts[k]
                                        for k in ALL_KINDS},
                         "negatives": {k.value: negative_counts[k]
                                       for k in ALL_KINDS}}),
            encoding="utf-8")

    # train --------------------------------------------------------------------

    def _crop_rows(self) -> list[dict]:
        return crops_mod.read_crop_index(self.stage_dir("crop"))

    def _stage_train(self, tmp: Path) -> None:
        cfg = self.cfg
        rows = self._crop_rows()
        if not rows:
            raise ScoreError("crop stage produced no samples to train on")
        # lightweight split on (package, label) only; features stream later
        placeholder = Image.new("RGB", (1, 1))
        pseudo = [crops_mod.CropSample(
            kind=ComponentKind.from_name(r["kind"]),
            label=crops_mod.CropLabel(r["label"]),
            pixel_rect=r["rect"], image=placeholder,
            package_id=r["package"], screen_id=r["screen"]) for r in rows]
        split = split_dataset(pseudo, cfg.seed)
        partition = split.app_partition

        config = TrainConfig(input_size=cfg.input_size,
                             learning_rate=cfg.learning_rate,
                             max_epochs=cfg.max_epochs, patience=cfg.patience,
                             l2=cfg.l2, seed=cfg.seed,
                             tune_threshold=cfg.tune_threshold)
        crop_dir = self.stage_dir("crop")
        reports = {}
        for kind in ALL_KINDS:
            mats = {}
            for part in ("train", "validation", "test"):
                feats, labels = [], []
                for r in rows:
                    if r["kind"] != kind.value or \
                            partition[r["package"]] != part:
                        continue
                    with Image.open(crop_dir / r["path"]) as img:
                        feats.append(featurize(img.convert("RGB"),
                                               cfg.input_size))
                    labels.append(1.0 if r["label"] == "Candidate" else 0.0)
                dim = cfg.input_size * cfg.input_size * 3
                mats[part] = (np.stack(feats) if feats
                              else np.zeros((0, dim)), np.asarray(labels))
            if mats["train"][0].shape[0] == 0:
                logger.info("no training crops for %s; skipping model",
                            kind.value)
                continue
            model, report = fit_matrices(kind, mats["train"],
                                         mats["validation"], mats["test"],
                                         config)
            if cfg.decision_threshold != 0.5 and not cfg.tune_threshold:
                model.decision_threshold = cfg.decision_threshold
            save_model(model, tmp / f"{kind.value}.model")
            reports[kind.value] = {
                "train_size": report.train_size,
                "validation_size": report.validation_size,
                "test_size": report.test_size,
                "epochs_run": report.epochs_run,
                "val_accuracy": report.val_accuracy,
                "val_balanced_accuracy": report.val_balanced_accuracy,
                "test_accuracy": report.test_accuracy,
                "test_precision": report.test_precision,
                "test_recall": report.test_recall,
                "threshold": model.decision_threshold,
            }
        (tmp / "train_reports.json").write_text(_canon_json(reports),
                                                encoding="utf-8")
        (tmp / "split.json").write_text(
            _canon_json({"seed": cfg.seed,
                         "partition": dict(sorted(partition.items()))}),
            encoding="utf-8")

    # verify --------------------------------------------------------------------

    @staticmethod
    def _crop_exchange_id(row: dict) -> str:
        return Path(row["path"]).as_posix().replace("/", "__")[:-len(".png")]

    def _stage_verify(self, tmp: Path) -> None:
        cfg = self.cfg
        index = self._read_index()
        rows = [r for r in self._crop_rows() if r["label"] == "Candidate"]
        crop_dir = self.stage_dir("crop")
        models = {}
        if self.cfg.classifier == "reference" or \
                "{models_dir}" in cfg.external_command:
            train_dir = self.stage_dir("train")
            for path in sorted(train_dir.glob("*.model")):
                model = load_model(path)
                models[model.kind] = model

        scores: dict[str, float] = {}
        if cfg.classifier == "reference":
            for r in rows:
                kind = ComponentKind.from_name(r["kind"])
                model = models.get(kind)
                if model is None:
                    raise ScoreError(f"no model for kind {kind.value} but "
                                     f"candidates exist")
                with Image.open(crop_dir / r["path"]) as img:
                    scores[self._crop_exchange_id(r)] = verify_mod.score(
                        model, img.convert("RGB"))
        else:
            exchange = tmp / "exchange"
            exchange.mkdir()
            with open(exchange / "manifest.csv", "w", newline="",
                      encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["id", "kind"])
                for r in rows:
                    cid = self._crop_exchange_id(r)
                    shutil.copyfile(crop_dir / r["path"],
                                    exchange / f"{cid}.png")
                    writer.writerow([cid, r["kind"]])
            command = cfg.external_command.replace(
                "{models_dir}", str(self.stage_dir("train").resolve()))
            scores = verify_mod.run_scorer(
                command, exchange, [self._crop_exchange_id(r) for r in rows])
            # exchange files are scratch, not stage outputs
            shutil.rmtree(exchange)

        thresholds = {kind: model.decision_threshold
                      for kind, model in models.items()}
        default_threshold = cfg.decision_threshold

        usage: dict[str, dict[ComponentKind, list[int]]] = {
            app["package"]: {kind: [0, 0] for kind in ALL_KINDS}
            for app in self._analyzable(index)}
        score_rows = []
        for r in rows:
            kind = ComponentKind.from_name(r["kind"])
            cid = self._crop_exchange_id(r)
            value = scores[cid]
            threshold = thresholds.get(kind, default_threshold)
            verified = value >= threshold
            score_rows.append([cid, r["package"], r["screen"], r["kind"],
                               r["path"], _float(value), int(verified)])
            if r["package"] in usage:
                usage[r["package"]][kind][0] += 1
                if verified:
                    usage[r["package"]][kind][1] += 1
        _write_csv(tmp / "crop_scores.csv",
                   ["id", "package", "screen", "kind", "path", "score",
                    "verified"], sorted(score_rows))

        usage_rows = []
        kind_apps = {kind: 0 for kind in ALL_KINDS}
        for package in sorted(usage):
            for kind in ALL_KINDS:
                cand, ver = usage[package][kind]
                uses = ver >= 1
                kind_apps[kind] += int(uses)
                usage_rows.append([package, kind.value, cand, ver,
                                   "true" if uses else "false"])
        _write_csv(tmp / "usage.csv",
                   ["package", "kind", "candidate_count", "verified_count",
                    "uses"], usage_rows)
        (tmp / "usage_summary.json").write_text(
            _canon_json({"apps": len(usage),
                         "users_by_kind": {k.value: kind_apps[k]
                                           for k in ALL_KINDS},
                         "scored_crops": len(rows)}), encoding="utf-8")

    # analyze -------------------------------------------------------------------

    def _read_usage(self) -> dict[str, dict[ComponentKind, bool]]:
        out: dict[str, dict[ComponentKind, bool]] = {}
        for row in _read_csv_dicts(self.stage_dir("verify") / "usage.csv"):
            out.setdefault(row["package"], {})[
                ComponentKind.from_name(row["kind"])] = row["uses"] == "true"
        return out

    def _stage_analyze(self, tmp: Path) -> None:
        cfg = self.cfg
        index = self._read_index()
        usage_map = self._read_usage()
        apps = [AppRecord(package_id=a["package"], screens=[],
                          metadata=AppMetadata(
                              avg_rating=a["metadata"]["avg_rating"],
                              installs=a["metadata"]["installs"],
                              category=a["metadata"]["category"]))
                for a in self._analyzable(index)]
        if not apps:
            raise StatsError("no analyzable apps to analyze")
        by_id = {a.package_id: a for a in apps}

        def predicate(app: AppRecord) -> bool:
            return material_usage(usage_map, app.package_id)

        summary: dict = {
            "analyzable_apps": len(apps),
            "usage": {
                kind.value: usage_rate([a.package_id for a in apps], kind,
                                       usage_map)
                for kind in ALL_KINDS},
        }
        summary["usage"][ANY_MATERIAL] = \
            sum(1 for a in apps if predicate(a)) / len(apps)

        splits = {}
        split_specs = [
            ("rating_median", Metric.AVG_RATING, None),
            ("installs_threshold", Metric.INSTALLS,
             float(cfg.install_threshold)),
        ]
        rate_rows = []
        for name, metric, threshold in split_specs:
            try:
                split = (split_by_median(apps, metric) if threshold is None
                         else split_by_threshold(apps, metric, threshold))
            except StatsError as exc:
                logger.warning("skipping split %s: %s", name, exc)
                splits[name] = None
                continue
            splits[name] = {"threshold": split.threshold,
                            "low": len(split.low_group),
                            "high": len(split.high_group)}
            for group_name, group in (("low", split.low_group),
                                      ("high", split.high_group)):
                members = sorted(group)
                for kind in ALL_KINDS:
                    rate_rows.append([name, metric.value, group_name,
                                      _float(split.threshold), kind.value,
                                      _float(usage_rate(members, kind,
                                                        usage_map)),
                                      len(members)])
                material_rate = sum(
                    1 for pid in members if material_usage(usage_map, pid)
                ) / len(members)
                rate_rows.append([name, metric.value, group_name,
                                  _float(split.threshold), ANY_MATERIAL,
                                  _float(material_rate), len(members)])
        _write_csv(tmp / "usage_rates.csv",
                   ["split", "metric", "group", "threshold", "kind", "rate",
                    "group_size"], rate_rows)

        curve_rows, corr_rows, correlations = [], [], {}
        for metric in (Metric.AVG_RATING, Metric.INSTALLS):
            try:
                curve = bucket_curve(apps, metric, cfg.bucket_count, predicate)
            except StatsError as exc:
                logger.warning("skipping bucket curve for %s: %s",
                               metric.value, exc)
                continue
            for i, (frac, count) in enumerate(zip(curve.fractions,
                                                  curve.counts)):
                curve_rows.append([metric.value, i, _float(frac), count])
            try:
                result = pearson(list(range(curve.k)), list(curve.fractions))
            except StatsError as exc:
                # a constant curve (every bucket fully adopts) has no
                # defined correlation; record the curve, leave rho empty
                logger.warning("no correlation for %s: %s", metric.value, exc)
                correlations[metric.value] = None
                corr_rows.append([metric.value, curve.k, "", ""])
                continue
            correlations[metric.value] = {"rho": result.rho,
                                          "p_value": result.p_value,
                                          "n": result.n}
            corr_rows.append([metric.value, result.n, _float(result.rho),
                              _float(result.p_value)])
        _write_csv(tmp / "bucket_curves.csv",
                   ["metric", "bucket", "fraction", "count"], curve_rows)
        _write_csv(tmp / "correlations.csv",
                   ["metric", "n", "rho", "p_value"], corr_rows)

        box_rows = []
        for metric in (Metric.AVG_RATING, Metric.INSTALLS):
            for kind in ALL_KINDS:
                groups = {"users": [], "nonusers": []}
                for app in apps:
                    bucket = "users" if usage_map.get(app.package_id, {}).get(
                        kind, False) else "nonusers"
                    groups[bucket].append(metric.value_of(app))
                for group_name, values in groups.items():
                    if not values:
                        continue
                    s = five_number_summary(values)
                    box_rows.append([metric.value, kind.value, group_name,
                                     len(values), _float(s.minimum),
                                     _float(s.q1), _float(s.median),
                                     _float(s.q3), _float(s.maximum),
                                     _float(s.whisker_low),
                                     _float(s.whisker_high)])
        _write_csv(tmp / "boxplots.csv",
                   ["metric", "kind", "group", "n", "min", "q1", "median",
                    "q3", "max", "whisker_low", "whisker_high"], box_rows)

        cat_rows = []
        for kind in ALL_KINDS:
            for entry in rank_categories(apps, kind, usage_map,
                                         min_count=cfg.category_min_count):
                cat_rows.append([kind.value, entry.category,
                                 _float(entry.rate), entry.app_count])
        _write_csv(tmp / "category_rates.csv",
                   ["kind", "category", "rate", "app_count"], cat_rows)

        summary["splits"] = splits
        summary["correlations"] = correlations
        summary["corpus"] = index["summary"]
        (tmp / "summary.json").write_text(_canon_json(summary),
                                          encoding="utf-8")

    # report --------------------------------------------------------------------

    def _stage_report(self, tmp: Path) -> None:
        cfg = self.cfg
        analyze_dir = self.stage_dir("analyze")
        files = []

        rate_rows = _read_csv_dicts(analyze_dir / "usage_rates.csv")
        for split_name in sorted({r["split"] for r in rate_rows}):
            subset = [r for r in rate_rows if r["split"] == split_name]
            kinds = [k.value for k in ALL_KINDS] + [ANY_MATERIAL]
            series = []
            for group in ("low", "high"):
                values = []
                for kind in kinds:
                    match = [r for r in subset
                             if r["group"] == group and r["kind"] == kind]
                    values.append(float(match[0]["rate"]) if match else 0.0)
                series.append((group, values))
            labels = [SHORT_NAMES.get(ComponentKind.from_name(k), k)
                      if k != ANY_MATERIAL else "Any" for k in kinds]
            svg = render.grouped_bar_chart(
                f"Usage by {split_name} group", labels, series)
            name = f"usage_rates_{split_name}.svg"
            render.save_svg(svg, tmp / name)
            files.append(name)

        curve_rows = _read_csv_dicts(analyze_dir / "bucket_curves.csv")
        for metric in sorted({r["metric"] for r in curve_rows}):
            ys = [float(r["fraction"]) for r in curve_rows
                  if r["metric"] == metric]
            svg = render.line_chart(
                f"Material usage by {metric} percentile bucket", ys,
                x_label=f"{metric} bucket (low to high)",
                y_label="usage")
            name = f"bucket_curve_{metric}.svg"
            render.save_svg(svg, tmp / name)
            files.append(name)

        box_rows = _read_csv_dicts(analyze_dir / "boxplots.csv")
        for metric in sorted({r["metric"] for r in box_rows}):
            boxes = []
            for kind in ALL_KINDS:
                for group, tag in (("users", "U"), ("nonusers", "N")):
                    match = [r for r in box_rows
                             if r["metric"] == metric
                             and r["kind"] == kind.value
                             and r["group"] == group]
                    if not match:
                        continue
                    r = match[0]
                    boxes.append((f"{SHORT_NAMES[kind]} {tag}",
                                  FiveNumberSummary(
                                      minimum=float(r["min"]),
                                      q1=float(r["q1"]),
                                      median=float(r["median"]),
                                      q3=float(r["q3"]),
                                      maximum=float(r["max"]),
                                      whisker_low=float(r["whisker_low"]),
                                      whisker_high=float(r["whisker_high"]))))
            if not boxes:
                continue
            svg = render.box_plot(f"{metric} by component usage", boxes,
                                  log_scale=(metric == Metric.INSTALLS.value))
            name = f"boxplot_{metric}.svg"
            render.save_svg(svg, tmp / name)
            files.append(name)

        for kind in ALL_KINDS:
            src = self.stage_dir("heatmap") / f"{kind.value}.png"
            dst = tmp / f"heatmap_{kind.value}.png"
            shutil.copyfile(src, dst)
            files.append(dst.name)

        index = self._read_index()
        category_of = {a["package"]: a["metadata"]["category"]
                       for a in self._analyzable(index)}
        score_rows = _read_csv_dicts(
            self.stage_dir("verify") / "crop_scores.csv")
        crop_dir = self.stage_dir("crop")
        for kind in ALL_KINDS:
            verified = [r for r in score_rows
                        if r["kind"] == kind.value and r["verified"] == "1"]
            verified.sort(key=lambda r: (category_of.get(r["package"], ""),
                                         r["package"], r["screen"], r["path"]))
            verified = verified[:cfg.contact_sheet_max]
            if not verified:
                continue
            images = []
            for r in verified:
                with Image.open(crop_dir / r["path"]) as img:
                    images.append(img.convert("RGB").copy())
            sheet = render.contact_sheet(images)
            name = f"contact_{kind.value}.png"
            sheet.save(tmp / name)
            files.append(name)

        (tmp / "report_index.json").write_text(
            _canon_json({"files": sorted(files)}), encoding="utf-8")
