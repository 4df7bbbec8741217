"""Plain key=value configuration for the pipeline and the corpus generator.

Format: one ``key = value`` per line, ``#`` comments, blank lines ignored.
Unknown keys are rejected (they are almost always typos of known knobs).
Paths are resolved relative to the current working directory and must exist
at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .detect import ComponentKind
from .errors import ConfigError
from .synth import (DEFAULT_CATEGORIES, DEFAULT_INSTALL_BUCKETS, SynthSpec)


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, "
                              f"got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _to_bool(value: str, key: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


@dataclass
class PipelineConfig:
    corpus_root: Path
    metadata: Path
    out: Path
    exclusions: Path | None = None
    keywords: Path | None = None
    seed: int = 0
    screenshot_ext: str = ".jpg"
    grid_w: int = 36
    grid_h: int = 64
    margin_fraction: float = 0.1
    negative_ratio: float = 1.0
    classifier: str = "reference"           # reference | external
    external_command: str = ""
    input_size: int = 32
    decision_threshold: float = 0.5
    tune_threshold: bool = False
    learning_rate: float = 0.1
    max_epochs: int = 400
    patience: int = 30
    l2: float = 1e-4
    install_threshold: int = 1_000_000
    category_min_count: int = 20
    bucket_count: int = 100
    contact_sheet_max: int = 24

    def fingerprint_payload(self) -> dict:
        """Everything that affects artifact content. The output directory is
        deliberately excluded so runs into different directories compare
        equal."""
        payload = {}
        for f in fields(self):
            if f.name == "out":
                continue
            value = getattr(self, f.name)
            payload[f.name] = str(value) if isinstance(value, Path) else value
        return payload


_PIPELINE_PARSERS = {
    "corpus_root": ("corpus_root", Path),
    "metadata": ("metadata", Path),
    "out": ("out", Path),
    "exclusions": ("exclusions", Path),
    "keywords": ("keywords", Path),
    "seed": ("seed", int),
    "screenshot_ext": ("screenshot_ext", str),
    "grid_w": ("grid_w", int),
    "grid_h": ("grid_h", int),
    "margin_fraction": ("margin_fraction", float),
    "negative_ratio": ("negative_ratio", float),
    "classifier": ("classifier", str),
    "external_command": ("external_command", str),
    "input_size": ("input_size", int),
    "decision_threshold": ("decision_threshold", float),
    "tune_threshold": ("tune_threshold", "bool"),
    "learning_rate": ("learning_rate", float),
    "max_epochs": ("max_epochs", int),
    "patience": ("patience", int),
    "l2": ("l2", float),
    "install_threshold": ("install_threshold", int),
    "category_min_count": ("category_min_count", int),
    "bucket_count": ("bucket_count", int),
    "contact_sheet_max": ("contact_sheet_max", int),
}


def load_pipeline_config(path: str | Path,
                         overrides: dict[str, str] | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    kv = parse_kv(path.read_text(encoding="utf-8"), source=str(path))
    kv.update(overrides or {})

    unknown = sorted(set(kv) - set(_PIPELINE_PARSERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for required in ("corpus_root", "metadata", "out"):
        if required not in kv:
            raise ConfigError(f"missing required config key {required!r}")

    values: dict = {}
    for key, raw in kv.items():
        name, conv = _PIPELINE_PARSERS[key]
        try:
            values[name] = _to_bool(raw, key) if conv == "bool" else conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r}: {exc}") from exc

    cfg = PipelineConfig(**values)
    if cfg.classifier not in ("reference", "external"):
        raise ConfigError(f"classifier must be reference or external, "
                          f"got {cfg.classifier!r}")
    if cfg.classifier == "external" and not cfg.external_command:
        raise ConfigError("classifier = external requires external_command")
    if not 0.0 < cfg.decision_threshold < 1.0:
        raise ConfigError("decision_threshold must lie in (0, 1)")
    if cfg.grid_w < 1 or cfg.grid_h < 1:
        raise ConfigError("grid dimensions must be positive")
    if cfg.margin_fraction < 0:
        raise ConfigError("margin_fraction must be >= 0")
    for name in ("corpus_root", "metadata", "exclusions", "keywords"):
        p = getattr(cfg, name)
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{name} path {p} does not exist")
    return cfg


# -- synthetic corpus specs ----------------------------------------------------

def load_synth_spec(path: str | Path) -> SynthSpec:
    """Corpus generator spec in the same key=value format.

    Adoption keys: ``adoption.<Kind> = 0.4`` for flat probability or
    ``lo:hi`` for a linear ramp over the rating percentile.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"synth spec {path} does not exist")
    kv = parse_kv(path.read_text(encoding="utf-8"), source=str(path))

    adoption: dict[ComponentKind, float | tuple[float, float]] = {}
    plain: dict[str, str] = {}
    for key, value in kv.items():
        if key.startswith("adoption."):
            kind = ComponentKind.from_name(key.split(".", 1)[1])
            try:
                if ":" in value:
                    lo, hi = value.split(":", 1)
                    adoption[kind] = (float(lo), float(hi))
                else:
                    adoption[kind] = float(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {value!r}: "
                                  f"{exc}") from exc
        else:
            plain[key] = value

    known = {"app_count", "screens_min", "screens_max", "decoy_rate",
             "occlusion_rate", "rating_min", "rating_max", "install_buckets",
             "categories", "seed", "image_scale"}
    unknown = sorted(set(plain) - known)
    if unknown:
        raise ConfigError(f"unknown synth spec keys: {', '.join(unknown)}")
    if "app_count" not in plain:
        raise ConfigError("missing required synth key app_count")

    def get(key, conv, default):
        return conv(plain[key]) if key in plain else default

    try:
        spec = SynthSpec(
            app_count=int(plain["app_count"]),
            adoption=adoption,
            screens_per_app=(get("screens_min", int, 2),
                             get("screens_max", int, 4)),
            decoy_rate=get("decoy_rate", float, 0.0),
            occlusion_rate=get("occlusion_rate", float, 0.0),
            rating_range=(get("rating_min", float, 2.0),
                          get("rating_max", float, 5.0)),
            install_buckets=tuple(
                int(v) for v in plain["install_buckets"].split(","))
            if "install_buckets" in plain else DEFAULT_INSTALL_BUCKETS,
            categories=tuple(
                v.strip() for v in plain["categories"].split(","))
            if "categories" in plain else DEFAULT_CATEGORIES,
            seed=get("seed", int, 0),
            image_scale=get("image_scale", float, 0.25),
        )
    except ValueError as exc:
        raise ConfigError(f"bad synth spec value: {exc}") from exc
    spec.validate()
    return spec
