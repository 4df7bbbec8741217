"""Reference scorer speaking the external exchange protocol.

Run as ``python -m patternscope.ext_worker --models-dir DIR EXCHANGE_DIR``.
Reads manifest.csv (id, kind) from the exchange directory, scores each
``<id>.png`` with the per-kind model file ``<kind>.model`` found under
--models-dir, and writes scores.csv (id, score). Exits nonzero on any fault
so the caller's hard-error contract holds.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from PIL import Image

from .detect import ComponentKind
from .verify import VerifierModel, load_model, score


def load_models_dir(models_dir: Path) -> dict[ComponentKind, VerifierModel]:
    models = {}
    for path in sorted(models_dir.glob("*.model")):
        model = load_model(path)
        models[model.kind] = model
    return models


def run(models_dir: Path, exchange_dir: Path) -> int:
    manifest = exchange_dir / "manifest.csv"
    if not manifest.exists():
        print(f"no manifest.csv in {exchange_dir}", file=sys.stderr)
        return 1
    models = load_models_dir(models_dir)
    rows = []
    with open(manifest, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            crop_id = row["id"]
            kind = ComponentKind.from_name(row["kind"])
            model = models.get(kind)
            if model is None:
                print(f"no model for kind {kind.value} in {models_dir}",
                      file=sys.stderr)
                return 1
            with Image.open(exchange_dir / f"{crop_id}.png") as img:
                rows.append((crop_id, score(model, img.convert("RGB"))))
    with open(exchange_dir / "scores.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "score"])
        for crop_id, value in rows:
            writer.writerow([crop_id, repr(value)])
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="patternscope.ext_worker",
        description="score an exchange directory with saved verifier models")
    parser.add_argument("--models-dir", required=True, type=Path)
    parser.add_argument("exchange_dir", type=Path)
    args = parser.parse_args(argv)
    try:
        return run(args.models_dir, args.exchange_dir)
    except Exception as exc:    # protocol demands nonzero exit on any fault
        print(f"ext_worker error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
