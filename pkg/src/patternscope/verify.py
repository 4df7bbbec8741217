"""Second-stage verification of candidate crops, plus app-level aggregation.

The reference classifier is a binary logistic regression over area-averaged
32x32 RGB features, trained by deterministic full-batch gradient descent with
early stopping on the validation split. It is deliberately small: heavier
models plug in behind the external scorer protocol without touching the
pipeline. Aggregation applies the occlusion rule: one positive crop anywhere
in the app is enough to count the app as a user of that kind, because any
single screen may hide the component (keyboard overlays and the like).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import random
import shlex
import struct
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .crops import CropLabel, CropSample
from .detect import ComponentKind
from .errors import (ExternalScorerError, ScoreError, SplitError,
                     TrainingFailure)
from .rects import round_half_up

logger = logging.getLogger(__name__)

MODEL_MAGIC = "patternscope-verifier v1"
MODEL_SEPARATOR = b"\n---BINARY---\n"
DEFAULT_INPUT_SIZE = 32
DEFAULT_THRESHOLD = 0.5
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
MIN_SPLIT_APPS = 10
CHANCE_EPS = 0.05           # validation failure bar: balanced acc <= 0.5 + eps


# -- features -----------------------------------------------------------------

def featurize(image: Image.Image, input_size: int = DEFAULT_INPUT_SIZE) -> np.ndarray:
    """Area-averaged input_size^2 RGB pixels mapped affinely into [-0.5, 0.5].

    Deliberately no per-sample normalization: absolute color is the signal
    that separates a saturated component glyph from a pale background, and
    standardizing a near-constant crop would amplify a faint tint into a
    full-scale pattern indistinguishable from real content.
    """
    if image.mode != "RGB":
        image = image.convert("RGB")
    arr = np.asarray(image, dtype=np.uint8)
    if arr.size == 0:
        raise ScoreError("cannot featurize an empty image")
    small = kernels.resize_area_mean(arr, input_size, input_size)
    flat = np.asarray(small, dtype=np.float64).reshape(-1) / 255.0 - 0.5
    # the averaging kernel can overshoot the byte range by a few ulps
    return np.clip(flat, -0.5, 0.5)


# -- dataset split ------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[CropSample, ...]
    validation: tuple[CropSample, ...]
    test: tuple[CropSample, ...]
    app_partition: dict[str, str]   # package_id -> train|validation|test

    def realized_fractions(self) -> tuple[float, float, float]:
        counts = {"train": 0, "validation": 0, "test": 0}
        for part in self.app_partition.values():
            counts[part] += 1
        n = len(self.app_partition)
        return (counts["train"] / n, counts["validation"] / n,
                counts["test"] / n)


def split_dataset(samples: list[CropSample], seed: int) -> DatasetSplit:
    """App-level 80/10/10 split, deterministic in the seed.

    Every crop of a package lands in exactly one partition. Requires at least
    10 distinct apps and both labels in the input; both labels must survive
    into the train partition.
    """
    apps = sorted({s.package_id for s in samples})
    if len(apps) < MIN_SPLIT_APPS:
        raise SplitError(f"need >= {MIN_SPLIT_APPS} apps to split, "
                         f"got {len(apps)}")
    labels = {s.label for s in samples}
    if len(labels) < 2:
        only = next(iter(labels)).value if labels else "none"
        raise SplitError(f"single-label input ({only}); both labels required")
    rng = random.Random(seed)
    rng.shuffle(apps)
    n = len(apps)
    n_train = round_half_up(SPLIT_FRACTIONS[0] * n)
    n_val = round_half_up(SPLIT_FRACTIONS[1] * n)
    partition = {}
    for i, pid in enumerate(apps):
        if i < n_train:
            partition[pid] = "train"
        elif i < n_train + n_val:
            partition[pid] = "validation"
        else:
            partition[pid] = "test"
    buckets = {"train": [], "validation": [], "test": []}
    for s in samples:
        buckets[partition[s.package_id]].append(s)
    train_labels = {s.label for s in buckets["train"]}
    if len(train_labels) < 2:
        raise SplitError("train partition lost a label; reseed or enlarge "
                         "the corpus")
    return DatasetSplit(train=tuple(buckets["train"]),
                        validation=tuple(buckets["validation"]),
                        test=tuple(buckets["test"]),
                        app_partition=partition)


# -- model --------------------------------------------------------------------

@dataclass
class VerifierModel:
    kind: ComponentKind
    weights: np.ndarray             # (input_size^2 * 3,) float64
    bias: float
    decision_threshold: float = DEFAULT_THRESHOLD
    input_size: int = DEFAULT_INPUT_SIZE
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError("decision_threshold must lie in (0, 1)")

    def score_features(self, features: np.ndarray) -> float:
        z = float(features @ self.weights + self.bias)
        # numerically stable sigmoid
        if z >= 0:
            return float(1.0 / (1.0 + np.exp(-z)))
        e = np.exp(z)
        return float(e / (1.0 + e))


def score(model: VerifierModel, image: Image.Image) -> float:
    """Deterministic score in [0, 1]; decision is score >= threshold."""
    return model.score_features(featurize(image, model.input_size))


def save_model(model: VerifierModel, path: str | Path) -> None:
    header = "\n".join([
        MODEL_MAGIC,
        f"kind: {model.kind.value}",
        f"input_size: {model.input_size}",
        f"threshold: {model.decision_threshold!r}",
        f"seed: {model.seed}",
        f"features: {model.weights.size}",
    ])
    blob = struct.pack("<d", model.bias) + \
        model.weights.astype("<f8").tobytes()
    Path(path).write_bytes(header.encode("utf-8") + MODEL_SEPARATOR + blob)


def load_model(path: str | Path) -> VerifierModel:
    raw = Path(path).read_bytes()
    sep = raw.find(MODEL_SEPARATOR)
    if sep < 0:
        raise ScoreError(f"{path}: not a verifier model (missing separator)")
    header = raw[:sep].decode("utf-8").splitlines()
    if not header or header[0] != MODEL_MAGIC:
        raise ScoreError(f"{path}: unsupported model version or magic")
    fields = dict(line.split(": ", 1) for line in header[1:])
    blob = raw[sep + len(MODEL_SEPARATOR):]
    n_features = int(fields["features"])
    expected = 8 * (1 + n_features)
    if len(blob) != expected:
        raise ScoreError(f"{path}: model blob is {len(blob)} bytes, "
                         f"expected {expected}")
    bias = struct.unpack("<d", blob[:8])[0]
    weights = np.frombuffer(blob[8:], dtype="<f8").copy()
    return VerifierModel(kind=ComponentKind.from_name(fields["kind"]),
                         weights=weights, bias=bias,
                         decision_threshold=float(fields["threshold"]),
                         input_size=int(fields["input_size"]),
                         seed=int(fields["seed"]))


# -- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    input_size: int = DEFAULT_INPUT_SIZE
    learning_rate: float = 0.1
    max_epochs: int = 400
    patience: int = 30
    l2: float = 1e-4
    seed: int = 0
    tune_threshold: bool = False


@dataclass(frozen=True)
class TrainReport:
    kind: ComponentKind
    train_size: int
    validation_size: int
    test_size: int
    epochs_run: int
    val_accuracy: float
    val_balanced_accuracy: float
    test_accuracy: float
    test_precision: float
    test_recall: float
    threshold: float


def _matrix(samples, kind: ComponentKind, input_size: int):
    rows, labels = [], []
    for s in samples:
        if s.kind != kind:
            continue
        rows.append(featurize(s.image, input_size))
        labels.append(1.0 if s.label is CropLabel.CANDIDATE else 0.0)
    if not rows:
        return np.zeros((0, input_size * input_size * 3)), np.zeros(0)
    return np.stack(rows), np.asarray(labels)


def _balanced_accuracy(y: np.ndarray, pred: np.ndarray) -> float:
    accs = []
    for cls in (0.0, 1.0):
        mask = y == cls
        if mask.any():
            accs.append(float((pred[mask] == cls).mean()))
    return float(np.mean(accs)) if accs else 0.0


def _prf(y: np.ndarray, pred: np.ndarray) -> tuple[float, float]:
    tp = float(((pred == 1.0) & (y == 1.0)).sum())
    fp = float(((pred == 1.0) & (y == 0.0)).sum())
    fn = float(((pred == 0.0) & (y == 1.0)).sum())
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return precision, recall


def train(split: DatasetSplit, kind: ComponentKind,
          config: TrainConfig = TrainConfig()) -> tuple[VerifierModel, TrainReport]:
    """Fit the reference classifier for one kind; deterministic given config.

    Class imbalance is handled by weighting the loss, not by resampling, so
    the app-level split stays intact. Raises TrainingFailure when validation
    balanced accuracy never clears chance by CHANCE_EPS.
    """
    x_train, y_train = _matrix(split.train, kind, config.input_size)
    x_val, y_val = _matrix(split.validation, kind, config.input_size)
    x_test, y_test = _matrix(split.test, kind, config.input_size)
    return fit_matrices(kind, (x_train, y_train), (x_val, y_val),
                        (x_test, y_test), config)


def fit_matrices(kind: ComponentKind, train_set, validation_set, test_set,
                 config: TrainConfig = TrainConfig()) -> tuple[VerifierModel, TrainReport]:
    """Matrix-level training entry point; `train` is the CropSample facade.

    Callers that stream features from disk (the pipeline) use this directly
    so decoded crops never accumulate in memory.
    """
    x_train, y_train = train_set
    x_val, y_val = validation_set
    x_test, y_test = test_set
    if x_train.shape[0] == 0 or len(set(y_train.tolist())) < 2:
        raise TrainingFailure(
            f"train partition for {kind} lacks both labels",
            diagnostics={"kind": kind.value, "train_size": int(x_train.shape[0])})
    if x_val.shape[0] == 0:
        raise TrainingFailure(
            f"validation partition for {kind} is empty",
            diagnostics={"kind": kind.value})

    n = x_train.shape[0]
    n_pos = float(y_train.sum())
    n_neg = float(n - n_pos)
    weights_per_class = {1.0: n / (2.0 * n_pos), 0.0: n / (2.0 * n_neg)}
    sample_w = np.where(y_train == 1.0, weights_per_class[1.0],
                        weights_per_class[0.0])

    # The separating direction comes from the class means, not from a fully
    # refit plane: a small minority of mislabeled candidates (decoy keyword
    # matches look nothing like the component) can bend a free decision
    # boundary toward itself but barely moves a class mean. Calibration of
    # scale and offset along that direction is the only fitted part.
    mu_pos = x_train[y_train == 1.0].mean(axis=0)
    mu_neg = x_train[y_train == 0.0].mean(axis=0)
    direction = mu_pos - mu_neg
    norm = float(np.linalg.norm(direction))
    if norm > 1e-12:
        direction = direction / norm
        midpoint = float((mu_pos + mu_neg) @ direction) / 2.0
        half_gap = norm / 2.0
    else:
        direction = np.zeros_like(direction)    # chance guard fires below
        midpoint, half_gap = 0.0, 1.0
    t_train = (x_train @ direction - midpoint) / half_gap
    t_val = (x_val @ direction - midpoint) / half_gap

    # Two fitted scalars cannot overfit, so the calibration runs to train
    # loss convergence; validation only gates the result (chance guard,
    # threshold tuning). Selecting epochs by validation would let a
    # handful of noisy validation crops steer the boundary at small
    # corpus sizes.
    a, c = 1.0, 0.0
    best_loss = math.inf
    stale = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        epochs_run = epoch
        z = a * t_train + c
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
        residual = (p - y_train) * sample_w
        grad_a = float((residual * t_train).mean()) + config.l2 * a
        grad_c = float(residual.mean())
        a -= config.learning_rate * grad_a
        c -= config.learning_rate * grad_c

        train_loss = float((sample_w * (np.logaddexp(0.0, z)
                                        - y_train * z)).mean()) \
            + config.l2 * a * a / 2.0
        if train_loss < best_loss - 1e-9:
            best_loss = train_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    # The decision cut comes from a balanced-accuracy sweep over the train
    # projections, not from the logistic fit: log-loss weighs gross
    # outliers (occluded positives render as blank occluder color, mined
    # negatives can contain foreign content) by their distance, which
    # drags the soft boundary out of an otherwise clean gap between the
    # clusters. The fitted (a, c) still calibrate the score scale.
    order = np.argsort(t_train, kind="stable")
    ts = t_train[order]
    ys_sorted = y_train[order]
    cum_pos = np.concatenate(([0.0], np.cumsum(ys_sorted)))
    cum_neg = np.arange(n + 1) - cum_pos
    balance = 0.5 * (cum_neg / n_neg + (n_pos - cum_pos) / n_pos)
    cut_star, best_key = 0.0, None
    for i in range(n + 1):
        if 0 < i < n:
            if ts[i - 1] == ts[i]:
                continue
            margin = float(ts[i] - ts[i - 1])
            cut = float(ts[i - 1] + ts[i]) / 2.0
        else:
            margin = 0.0
            cut = float(ts[0] - 1.0) if i == 0 else float(ts[-1] + 1.0)
        key = (float(balance[i]), margin, -cut)
        if best_key is None or key > best_key:
            best_key, cut_star = key, cut

    val_bal = _balanced_accuracy(
        y_val, (t_val >= cut_star).astype(np.float64))
    w = (a / half_gap) * direction
    b = c - a * midpoint / half_gap
    if val_bal <= 0.5 + CHANCE_EPS:
        raise TrainingFailure(
            f"training for {kind} stayed at chance "
            f"(validation balanced accuracy {val_bal:.3f})",
            diagnostics={"kind": kind.value, "val_balanced_accuracy": val_bal,
                         "epochs_run": epochs_run,
                         "train_size": n, "val_size": int(x_val.shape[0])})

    z_star = a * cut_star + c
    threshold = float(np.clip(1.0 / (1.0 + np.exp(-np.clip(z_star, -500,
                                                           500))),
                              1e-9, 1.0 - 1e-9))
    if config.tune_threshold:
        scores_val = 1.0 / (1.0 + np.exp(-np.clip(x_val @ w + b, -500, 500)))
        candidates = sorted({threshold,
                             *((scores_val[:-1] + scores_val[1:]) / 2.0
                               ).tolist()})
        threshold = max(
            (c for c in candidates if 0.0 < c < 1.0),
            key=lambda c: (_balanced_accuracy(
                y_val, (scores_val >= c).astype(np.float64)), -abs(c - 0.5)))

    model = VerifierModel(kind=kind, weights=w, bias=b,
                          decision_threshold=threshold,
                          input_size=config.input_size, seed=config.seed)

    def _eval(x, y):
        if x.shape[0] == 0:
            return 1.0, 1.0, 1.0
        s = 1.0 / (1.0 + np.exp(-np.clip(x @ w + b, -500, 500)))
        pred = (s >= threshold).astype(np.float64)
        prec, rec = _prf(y, pred)
        return float((pred == y).mean()), prec, rec

    val_acc, _, _ = _eval(x_val, y_val)
    test_acc, test_prec, test_rec = _eval(x_test, y_test)
    report = TrainReport(kind=kind, train_size=n,
                         validation_size=int(x_val.shape[0]),
                         test_size=int(x_test.shape[0]),
                         epochs_run=epochs_run, val_accuracy=val_acc,
                         val_balanced_accuracy=val_bal,
                         test_accuracy=test_acc, test_precision=test_prec,
                         test_recall=test_rec, threshold=threshold)
    return model, report


# -- app aggregation ----------------------------------------------------------

@dataclass(frozen=True)
class KindUsage:
    candidate_count: int
    verified_count: int

    @property
    def uses(self) -> bool:
        return self.verified_count >= 1


@dataclass(frozen=True)
class AppComponentUsage:
    package_id: str
    per_kind: dict[ComponentKind, KindUsage]

    def bool_map(self) -> dict[ComponentKind, bool]:
        return {kind: usage.uses for kind, usage in self.per_kind.items()}


def verify_app(package_id: str, crops: list[CropSample],
               models: dict[ComponentKind, VerifierModel],
               scores: dict[int, float] | None = None) -> AppComponentUsage:
    """Score this app's candidate crops and fold them into per-kind usage.

    uses is true iff at least one candidate verifies positive (occlusion
    rule). `scores` optionally supplies precomputed scores keyed by index
    into `crops` (the external path); missing keys are scored in-process.
    """
    per_kind = {kind: [0, 0] for kind in ComponentKind}
    for i, sample in enumerate(crops):
        if sample.label is not CropLabel.CANDIDATE:
            continue
        if sample.package_id != package_id:
            raise ValueError(f"crop {i} belongs to {sample.package_id}, "
                             f"not {package_id}")
        model = models.get(sample.kind)
        if model is None:
            raise ScoreError(f"no model for kind {sample.kind} but app "
                             f"{package_id} has candidates")
        value = scores[i] if scores is not None and i in scores \
            else score(model, sample.image)
        per_kind[sample.kind][0] += 1
        if value >= model.decision_threshold:
            per_kind[sample.kind][1] += 1
    return AppComponentUsage(
        package_id=package_id,
        per_kind={kind: KindUsage(candidate_count=c, verified_count=v)
                  for kind, (c, v) in per_kind.items()})


# -- external scorer protocol --------------------------------------------------

def write_exchange(samples: list[tuple[str, ComponentKind, Image.Image]],
                   exchange_dir: str | Path) -> Path:
    """Lay out crops for an external scorer: <id>.png files + manifest.csv."""
    exchange_dir = Path(exchange_dir)
    exchange_dir.mkdir(parents=True, exist_ok=True)
    with open(exchange_dir / "manifest.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "kind"])
        for crop_id, kind, image in samples:
            image.save(exchange_dir / f"{crop_id}.png")
            writer.writerow([crop_id, kind.value])
    return exchange_dir


def read_scores(exchange_dir: str | Path,
                expected_ids: list[str]) -> dict[str, float]:
    path = Path(exchange_dir) / "scores.csv"
    if not path.exists():
        raise ExternalScorerError(f"scorer produced no scores.csv in "
                                  f"{exchange_dir}")
    scores: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                value = float(row["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ExternalScorerError(
                    f"malformed scores.csv row: {row}") from exc
            if not 0.0 <= value <= 1.0:
                raise ExternalScorerError(
                    f"score {value} for id {row.get('id')} outside [0, 1]")
            scores[row["id"]] = value
    missing = [i for i in expected_ids if i not in scores]
    if missing or len(scores) != len(expected_ids):
        raise ExternalScorerError(
            f"score count mismatch: expected {len(expected_ids)} ids, got "
            f"{len(scores)}; first missing: {missing[:3]}")
    return scores


def run_scorer(command: str | list[str], exchange_dir: str | Path,
               expected_ids: list[str]) -> dict[str, float]:
    """Invoke the scorer command on a prepared exchange directory.

    The command gets the exchange directory appended as its last argument
    and must write scores.csv (columns id, score) next to the crops.
    """
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    argv.append(str(exchange_dir))
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ExternalScorerError(
            f"scorer {argv[0]} exited {proc.returncode}: "
            f"{proc.stderr.strip()[:500]}")
    return read_scores(exchange_dir, expected_ids)


def external_verify(samples: list[tuple[str, ComponentKind, Image.Image]],
                    command: str | list[str],
                    exchange_dir: str | Path) -> dict[str, float]:
    """Run the configured scorer over a crop batch; hard error on any fault."""
    write_exchange(samples, exchange_dir)
    return run_scorer(command, exchange_dir, [cid for cid, _, _ in samples])
