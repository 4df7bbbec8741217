"""Turn detections into labeled image crops in screenshot pixel space.

Candidates are detection bounds mapped from virtual coordinates to pixels and
expanded by a relative margin. Negatives are mined from the per-kind heatmap:
the argmax cell's screen region at the kind's median detected size, taken only
from screens with no candidate of that kind, so the two classes share the same
location prior and size distribution.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .corpus import Screen
from .detect import ComponentKind, Detection
from .errors import CropIOError, DegenerateCropError
from .heatmap import Heatmap, ScreenGeometry
from .rects import Rect, round_half_up

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.1        # fraction of max(width, height), each side
SCALE_MISMATCH_WARN = 0.02  # relative x/y scale divergence worth flagging


class CropLabel(enum.Enum):
    CANDIDATE = "Candidate"
    NEGATIVE = "Negative"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class CropSample:
    kind: ComponentKind
    label: CropLabel
    pixel_rect: Rect                    # within the screenshot, positive area
    image: Image.Image
    package_id: str
    screen_id: str
    node_path: tuple[int, ...] | None = None


def to_pixel_rect(bounds: Rect, virtual_extent: tuple[int, int],
                  image_dims: tuple[int, int]) -> Rect:
    """Map virtual-space bounds onto the screenshot's pixel grid.

    The x and y scale factors are computed independently (letterboxed captures
    exist); a divergence above 2% is logged. Coordinates round half away from
    zero, then clamp to the image. Raises DegenerateCropError if nothing
    remains.
    """
    virt_w, virt_h = virtual_extent
    img_w, img_h = image_dims
    if min(virt_w, virt_h, img_w, img_h) <= 0:
        raise ValueError("virtual extent and image dims must be positive")
    sx = img_w / virt_w
    sy = img_h / virt_h
    if abs(sx - sy) > SCALE_MISMATCH_WARN * max(sx, sy):
        logger.warning("x/y scale mismatch: sx=%.4f sy=%.4f", sx, sy)
    rect = Rect(round_half_up(bounds.left * sx),
                round_half_up(bounds.top * sy),
                round_half_up(bounds.right * sx),
                round_half_up(bounds.bottom * sy)).clamp(img_w, img_h)
    if rect.width <= 0 or rect.height <= 0:
        raise DegenerateCropError(
            f"bounds {tuple(bounds)} scale to zero area in a "
            f"{img_w}x{img_h} image")
    return rect


def expand_with_margin(pixel_rect: Rect, image_dims: tuple[int, int],
                       margin_fraction: float = DEFAULT_MARGIN) -> Rect:
    """Grow the rect by margin_fraction * max(w, h) on every side, clamped."""
    if margin_fraction < 0:
        raise ValueError("margin_fraction must be >= 0")
    m = margin_fraction * max(pixel_rect.width, pixel_rect.height)
    rect = Rect(math.floor(pixel_rect.left - m),
                math.floor(pixel_rect.top - m),
                math.ceil(pixel_rect.right + m),
                math.ceil(pixel_rect.bottom + m)).clamp(*image_dims)
    if rect.width <= 0 or rect.height <= 0:
        raise DegenerateCropError(
            f"rect {tuple(pixel_rect)} vanished after margin and clamping")
    return rect


def crop_with_margin(screenshot: Image.Image, pixel_rect: Rect,
                     margin_fraction: float = DEFAULT_MARGIN) -> tuple[Rect, Image.Image]:
    rect = expand_with_margin(pixel_rect, screenshot.size, margin_fraction)
    return rect, screenshot.crop(tuple(rect))


def load_screenshot(screen: Screen | ScreenGeometry) -> Image.Image:
    """Decode the screen's image as RGB; I/O failures name the screen."""
    if screen.screenshot is None:
        raise CropIOError(f"screen {screen.screen_id} has no screenshot")
    try:
        with Image.open(screen.screenshot.path) as img:
            return img.convert("RGB")
    except OSError as exc:
        raise CropIOError(
            f"cannot read screenshot for screen {screen.screen_id}: {exc}"
        ) from exc


def extract_candidates(screen: Screen | ScreenGeometry,
                       detections: list[Detection],
                       package_id: str, image: Image.Image | None = None,
                       margin_fraction: float = DEFAULT_MARGIN) -> list[CropSample]:
    """Candidate crops for one screen; degenerate rects are dropped with a
    warning rather than aborting the screen."""
    if not detections:
        return []
    if image is None:
        image = load_screenshot(screen)
    samples = []
    for det in detections:
        try:
            base = to_pixel_rect(det.bounds, screen.virtual_extent, image.size)
            rect, pixels = crop_with_margin(image, base, margin_fraction)
        except DegenerateCropError as exc:
            logger.warning("dropping degenerate crop on %s/%s: %s",
                           package_id, screen.screen_id, exc)
            continue
        samples.append(CropSample(kind=det.kind, label=CropLabel.CANDIDATE,
                                  pixel_rect=rect, image=pixels,
                                  package_id=package_id,
                                  screen_id=screen.screen_id,
                                  node_path=det.node_path))
    return samples


def negative_sample(screen: Screen | ScreenGeometry,
                    kind: ComponentKind, heatmap: Heatmap,
                    package_id: str,
                    image: Image.Image | None = None) -> CropSample:
    """Mine one Negative from the kind's most probable location.

    Only valid on screens without a candidate of this kind; the caller
    enforces that. The crop is centered in the heatmap's argmax cell and
    sized to the kind's median detected pixel size.
    """
    region = heatmap.argmax_region()        # EmptyHeatmapError when unfed
    med_w, med_h = heatmap.median_size()
    if image is None:
        image = load_screenshot(screen)
    img_w, img_h = image.size
    cx = (region.left + region.right) / 2.0 * img_w
    cy = (region.top + region.bottom) / 2.0 * img_h
    left = round_half_up(cx - med_w / 2.0)
    top = round_half_up(cy - med_h / 2.0)
    rect = Rect(left, top, left + med_w, top + med_h).clamp(img_w, img_h)
    if rect.width <= 0 or rect.height <= 0:
        raise DegenerateCropError(
            f"negative region for {kind} vanished on screen {screen.screen_id}")
    return CropSample(kind=kind, label=CropLabel.NEGATIVE, pixel_rect=rect,
                      image=image.crop(tuple(rect)), package_id=package_id,
                      screen_id=screen.screen_id)


def crop_id(sample: CropSample, n: int) -> str:
    return (f"{sample.package_id}__{sample.screen_id}__{sample.kind.value}"
            f"__{sample.label.value}__{n}")


class CropWriter:
    """Writes crops as ``<out>/<kind>/<label>/<package>__<screen>__<n>.png``
    plus a ``crops.csv`` index (columns kind,label,package,screen,rect)."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.rows: list[tuple] = []
        self._seq: dict[tuple, int] = {}

    def add(self, sample: CropSample) -> str:
        """Save one sample; returns its stable crop id."""
        key = (sample.kind.value, sample.label.value, sample.package_id,
               sample.screen_id)
        n = self._seq.get(key, 0)
        self._seq[key] = n + 1
        rel = Path(sample.kind.value) / sample.label.value / \
            f"{sample.package_id}__{sample.screen_id}__{n}.png"
        path = self.out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        sample.image.save(path)
        rect_text = ",".join(str(v) for v in sample.pixel_rect)
        self.rows.append((sample.kind.value, sample.label.value,
                          sample.package_id, sample.screen_id, rect_text,
                          str(rel)))
        return crop_id(sample, n)

    def finish(self) -> Path:
        index = self.out_dir / "crops.csv"
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(index, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["kind", "label", "package", "screen", "rect",
                             "path"])
            for row in sorted(self.rows):
                writer.writerow(row)
        return index


def read_crop_index(out_dir: str | Path) -> list[dict]:
    """Rows of crops.csv with the rect parsed back into a Rect."""
    rows = []
    with open(Path(out_dir) / "crops.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            row["rect"] = Rect(*(int(v) for v in row["rect"].split(",")))
            rows.append(row)
    return rows
