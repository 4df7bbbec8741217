"""Corpus ingestion: hierarchy parsing, metadata joining, exclusion lists.

A corpus on disk is ``<root>/<package_id>/<screen_id>.json`` plus a sibling
screenshot (``.jpg`` by default). Each hierarchy document is a single nested
element object; the five modeled keys are ``class``, ``ancestors``,
``bounds``, ``visible-to-user`` and ``children`` (plus the optional
``resource-id``). Everything else is preserved opaquely but never
interpreted.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from .errors import CorpusError, MetadataError, ParseError, SchemaError
from .rects import Rect, normalize_bounds

logger = logging.getLogger(__name__)

MODELED_KEYS = ("class", "ancestors", "bounds", "visible-to-user",
                "children", "resource-id")
MAX_TREE_DEPTH = 128


@dataclass
class ViewNode:
    class_name: str
    ancestors: tuple[str, ...]          # nearest superclass first
    bounds: Rect                        # normalized: left<=right, top<=bottom
    visible_to_user: bool
    children: list[ViewNode]
    resource_id: str | None = None
    bounds_flipped: bool = False        # raw rectangle arrived inverted
    extra: dict | None = None           # unmodeled keys, kept opaque

    def iter_nodes(self):
        """Pre-order traversal of this subtree (self first)."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True)
class ImageRef:
    path: Path
    width: int
    height: int


@dataclass
class Screen:
    screen_id: str
    root: ViewNode
    screenshot: ImageRef | None = None
    virtual_extent: tuple[int, int] | None = None   # coordinate space of bounds

    def node_at(self, path: tuple[int, ...]) -> ViewNode:
        node = self.root
        for idx in path:
            node = node.children[idx]
        return node

    def node_count(self) -> int:
        return sum(1 for _ in self.root.iter_nodes())


@dataclass(frozen=True)
class AppMetadata:
    avg_rating: float      # in [0, 5]
    installs: int          # lower bound of the marketplace install bucket
    category: str


@dataclass
class AppRecord:
    package_id: str
    screens: list[Screen]
    metadata: AppMetadata | None = None
    excluded: bool = False
    exclusion_reason: str = ""

    @property
    def analyzable(self) -> bool:
        return (not self.excluded and self.metadata is not None
                and len(self.screens) > 0)


@dataclass
class CorpusSummary:
    total_apps: int = 0
    excluded: int = 0
    metadata_missing: int = 0
    no_screens: int = 0
    analyzable: int = 0
    screens_total: int = 0
    screens_dropped: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Corpus:
    apps: list[AppRecord]
    summary: CorpusSummary

    def analyzable_apps(self) -> list[AppRecord]:
        return [a for a in self.apps if a.analyzable]

    def by_package(self) -> dict[str, AppRecord]:
        return {a.package_id: a for a in self.apps}


# --- hierarchy parsing -----------------------------------------------------

def _parse_node(obj, path: str, depth: int) -> ViewNode:
    if depth > MAX_TREE_DEPTH:
        raise SchemaError(f"tree deeper than {MAX_TREE_DEPTH} at {path}", path)
    if not isinstance(obj, dict):
        raise SchemaError(f"element at {path} is not an object", path)

    class_name = obj.get("class")
    if not isinstance(class_name, str) or not class_name:
        raise SchemaError(f"missing class key at {path}", path)

    raw_ancestors = obj.get("ancestors", [])
    if not isinstance(raw_ancestors, list) or \
            any(not isinstance(a, str) for a in raw_ancestors):
        raise SchemaError(f"ancestors at {path} is not a list of strings", path)

    raw_bounds = obj.get("bounds", [0, 0, 0, 0])
    if (not isinstance(raw_bounds, list) or len(raw_bounds) != 4
            or any(not isinstance(v, int) or isinstance(v, bool)
                   for v in raw_bounds)):
        raise SchemaError(f"bounds at {path} is not four integers", path)
    bounds, flipped = normalize_bounds(*raw_bounds)
    if flipped:
        logger.warning("inverted bounds %s normalized at %s", raw_bounds, path)

    visible = obj.get("visible-to-user", False)
    if not isinstance(visible, bool):
        raise SchemaError(f"visible-to-user at {path} is not a boolean", path)

    resource_id = obj.get("resource-id")
    if resource_id is not None and not isinstance(resource_id, str):
        raise SchemaError(f"resource-id at {path} is not a string", path)

    raw_children = obj.get("children", [])
    if not isinstance(raw_children, list):
        raise SchemaError(f"children at {path} is not a list", path)
    children = []
    for i, child in enumerate(raw_children):
        if child is None:
            continue        # null child entries occur in the wild; skip them
        children.append(_parse_node(child, f"{path}.children[{i}]", depth + 1))

    extra = {k: v for k, v in obj.items() if k not in MODELED_KEYS}
    return ViewNode(class_name=class_name,
                    ancestors=tuple(raw_ancestors),
                    bounds=bounds,
                    visible_to_user=visible,
                    children=children,
                    resource_id=resource_id,
                    bounds_flipped=flipped,
                    extra=extra or None)


def parse_view_hierarchy(raw_text: str, screen_id: str = "") -> Screen:
    """Parse one hierarchy document into a Screen.

    Child order is preserved, unknown keys are kept opaquely, and missing
    optional keys default (``visible-to-user`` false, ``ancestors`` empty,
    ``children`` empty). The virtual coordinate extent defaults to the root
    bounds extent when that is positive.
    """
    try:
        doc = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        byte_offset = len(raw_text[:exc.pos].encode("utf-8"))
        raise ParseError(
            f"malformed document at byte {byte_offset}: {exc.msg}",
            byte_offset=byte_offset) from exc
    if not isinstance(doc, dict):
        raise SchemaError("document root is not an element object", "root")
    root = _parse_node(doc, "root", 0)
    extent = (root.bounds.right, root.bounds.bottom)
    virtual_extent = extent if extent[0] > 0 and extent[1] > 0 else None
    return Screen(screen_id=screen_id, root=root, virtual_extent=virtual_extent)


def serialize_node(node: ViewNode) -> dict:
    """Inverse of node parsing; re-parsing the result reproduces the tree."""
    out: dict = {
        "class": node.class_name,
        "ancestors": list(node.ancestors),
        "bounds": list(node.bounds),
        "visible-to-user": node.visible_to_user,
        "children": [serialize_node(c) for c in node.children],
    }
    if node.resource_id is not None:
        out["resource-id"] = node.resource_id
    if node.extra:
        for k, v in node.extra.items():
            out.setdefault(k, v)
    return out


def serialize_screen(screen: Screen) -> str:
    return json.dumps(serialize_node(screen.root), sort_keys=True)


def count_raw_elements(obj) -> int:
    """Element objects reachable in a raw document (null children skipped)."""
    if not isinstance(obj, dict):
        return 0
    return 1 + sum(count_raw_elements(c) for c in obj.get("children") or []
                   if c is not None)


# --- metadata --------------------------------------------------------------

@dataclass(frozen=True)
class RejectedRow:
    line: int
    package: str
    reason: str


@dataclass
class MetadataTable:
    by_package: dict[str, AppMetadata] = field(default_factory=dict)
    rejected: list[RejectedRow] = field(default_factory=list)


def parse_installs(text: str) -> int:
    """Marketplace install bucket to its integer lower bound.

    Accepts plain integers and bucket strings like "1,000,000+".
    """
    cleaned = text.strip().rstrip("+").replace(",", "")
    if not cleaned or not cleaned.isdigit():
        raise ValueError(f"unparseable installs value: {text!r}")
    return int(cleaned)


def load_metadata(path: str | Path) -> MetadataTable:
    """Load the per-app metadata CSV (header: package,avg_rating,installs,category).

    Bad rows (rating out of [0,5], unparseable installs, empty category) are
    rejected with a report entry and the rest of the file is processed.
    Duplicate package ids abort the load.
    """
    import csv

    table = MetadataTable()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"package", "avg_rating", "installs", "category"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise MetadataError(
                f"metadata file {path} must have columns {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            package = (row.get("package") or "").strip()
            if not package:
                table.rejected.append(RejectedRow(lineno, "", "empty package id"))
                continue
            if package in table.by_package:
                raise MetadataError(f"duplicate package id {package!r} "
                                    f"at line {lineno}")
            try:
                rating = float(row["avg_rating"])
            except (TypeError, ValueError):
                table.rejected.append(
                    RejectedRow(lineno, package, "unparseable rating"))
                continue
            if not 0.0 <= rating <= 5.0:
                table.rejected.append(
                    RejectedRow(lineno, package, f"rating {rating} outside [0, 5]"))
                continue
            try:
                installs = parse_installs(row["installs"] or "")
            except ValueError:
                table.rejected.append(
                    RejectedRow(lineno, package, "unparseable installs"))
                continue
            category = (row.get("category") or "").strip()
            if not category:
                table.rejected.append(
                    RejectedRow(lineno, package, "empty category"))
                continue
            table.by_package[package] = AppMetadata(
                avg_rating=rating, installs=installs, category=category)
    return table


def load_exclusions(path: str | Path) -> set[str]:
    """Newline-delimited package ids; blank lines and # comments skipped."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.add(line)
    return out


# --- corpus assembly -------------------------------------------------------

def assemble_corpus(screens_root: str | Path,
                    metadata: MetadataTable | dict[str, AppMetadata],
                    exclusions: set[str] | None = None,
                    hierarchy_ext: str = ".json",
                    screenshot_ext: str = ".jpg") -> Corpus:
    """Walk the corpus layout and join screens with metadata and exclusions.

    Excluded apps are retained (flagged) but skipped by analytics, as are
    apps without metadata or without surviving screens. A screen whose
    screenshot is missing or whose hierarchy fails to parse is dropped with
    a warning; the app is kept.
    """
    root = Path(screens_root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} is not a directory")
    meta_map = metadata.by_package if isinstance(metadata, MetadataTable) else metadata
    exclusions = exclusions or set()

    apps: list[AppRecord] = []
    summary = CorpusSummary()
    package_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    for pkg_dir in package_dirs:
        package_id = pkg_dir.name
        screens: list[Screen] = []
        for hpath in sorted(pkg_dir.glob(f"*{hierarchy_ext}")):
            summary.screens_total += 1
            screen_id = hpath.stem
            try:
                screen = parse_view_hierarchy(
                    hpath.read_text(encoding="utf-8"), screen_id=screen_id)
            except (ParseError, SchemaError) as exc:
                logger.warning("dropping screen %s/%s: %s",
                               package_id, screen_id, exc)
                summary.screens_dropped += 1
                continue
            spath = hpath.with_suffix(screenshot_ext)
            if not spath.is_file():
                logger.warning("dropping screen %s/%s: screenshot %s missing",
                               package_id, screen_id, spath.name)
                summary.screens_dropped += 1
                continue
            try:
                with Image.open(spath) as im:
                    width, height = im.size
            except OSError as exc:
                logger.warning("dropping screen %s/%s: unreadable screenshot (%s)",
                               package_id, screen_id, exc)
                summary.screens_dropped += 1
                continue
            if width <= 0 or height <= 0:
                summary.screens_dropped += 1
                continue
            screen.screenshot = ImageRef(path=spath, width=width, height=height)
            if screen.virtual_extent is None:
                screen.virtual_extent = (width, height)
            screens.append(screen)

        excluded = package_id in exclusions
        record = AppRecord(package_id=package_id,
                           screens=screens,
                           metadata=meta_map.get(package_id),
                           excluded=excluded,
                           exclusion_reason="listed" if excluded else "")
        apps.append(record)

    if not apps:
        raise CorpusError(f"empty corpus under {root}")

    summary.total_apps = len(apps)
    for app in apps:
        if app.excluded:
            summary.excluded += 1
        elif app.metadata is None:
            summary.metadata_missing += 1
        elif not app.screens:
            summary.no_screens += 1
        else:
            summary.analyzable += 1
    return Corpus(apps=apps, summary=summary)
