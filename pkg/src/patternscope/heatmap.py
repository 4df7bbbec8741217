"""Spatial frequency grids of detection locations.

Each detection drops one count into the grid cell containing its center (in
normalized screen space, half-open cells), so heatmaps are order-independent
mergeable monoids: build per shard, merge deterministically. The argmax cell
is the "most probable area" used to mine negative crops, and the running
median of detection pixel sizes shapes those negatives.
"""

from __future__ import annotations

import bisect
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from .corpus import ImageRef, Screen
from .detect import ComponentKind, Detection
from .errors import EmptyHeatmapError
from .rects import NormRect, round_half_up

DEFAULT_GRID = (36, 64)     # (cols, rows): preserves a 9:16 phone aspect


class ScreenGeometry(NamedTuple):
    """The slice of Screen that accumulation needs; lets callers replay
    persisted detections without re-parsing hierarchies."""
    screen_id: str
    virtual_extent: tuple[int, int]
    screenshot: ImageRef | None = None


@dataclass
class Heatmap:
    kind: ComponentKind
    grid_w: int = DEFAULT_GRID[0]
    grid_h: int = DEFAULT_GRID[1]
    counts: np.ndarray = field(default=None)        # (grid_h, grid_w) int64
    total: int = 0
    width_samples: list[int] = field(default_factory=list)   # sorted, pixels
    height_samples: list[int] = field(default_factory=list)  # sorted, pixels

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.grid_h, self.grid_w), dtype=np.int64)

    def accumulate(self, detection: Detection,
                   screen: Screen | ScreenGeometry) -> None:
        """Add one detection: bump its center cell, track its pixel size.

        A center exactly on a cell boundary lands in the higher-index cell
        (cells are half-open); centers outside [0, 1) clamp to edge cells.
        Without a screenshot the virtual extent doubles as the pixel scale.
        """
        if detection.kind != self.kind:
            raise ValueError(f"detection kind {detection.kind} does not match "
                             f"heatmap kind {self.kind}")
        virt_w, virt_h = screen.virtual_extent
        b = detection.bounds
        # Exact integer binning: cell = floor(center * grid / extent).
        col = ((b.left + b.right) * self.grid_w) // (2 * virt_w)
        row = ((b.top + b.bottom) * self.grid_h) // (2 * virt_h)
        col = min(max(col, 0), self.grid_w - 1)
        row = min(max(row, 0), self.grid_h - 1)
        self.counts[row, col] += 1
        self.total += 1

        if screen.screenshot is not None:
            px_w, px_h = screen.screenshot.width, screen.screenshot.height
        else:
            px_w, px_h = virt_w, virt_h
        bisect.insort(self.width_samples,
                      max(1, round_half_up(b.width * px_w / virt_w)))
        bisect.insort(self.height_samples,
                      max(1, round_half_up(b.height * px_h / virt_h)))

    def normalized(self) -> np.ndarray:
        """Counts divided by the maximum cell; the output max is exactly 1.0."""
        if self.total == 0:
            raise EmptyHeatmapError(f"heatmap for {self.kind} is empty")
        return self.counts / self.counts.max()

    def argmax_region(self) -> NormRect:
        """Normalized rectangle of the max-count cell, ties to lowest (row, col)."""
        if self.total == 0:
            raise EmptyHeatmapError(f"heatmap for {self.kind} is empty")
        flat = int(np.argmax(self.counts))      # first max in row-major order
        row, col = divmod(flat, self.grid_w)
        return NormRect(col / self.grid_w, row / self.grid_h,
                        (col + 1) / self.grid_w, (row + 1) / self.grid_h)

    def median_size(self) -> tuple[int, int]:
        """Median detection size in pixels (width, height)."""
        if not self.width_samples:
            raise EmptyHeatmapError(f"heatmap for {self.kind} has no sizes")
        return (max(1, round_half_up(statistics.median(self.width_samples))),
                max(1, round_half_up(statistics.median(self.height_samples))))

    def merge(self, other: Heatmap) -> Heatmap:
        """Cell-wise sum; equals accumulating the union of detections."""
        if (other.kind, other.grid_w, other.grid_h) != \
                (self.kind, self.grid_w, self.grid_h):
            raise ValueError("cannot merge heatmaps of different kind or grid")
        return Heatmap(kind=self.kind, grid_w=self.grid_w, grid_h=self.grid_h,
                       counts=self.counts + other.counts,
                       total=self.total + other.total,
                       width_samples=sorted(self.width_samples
                                            + other.width_samples),
                       height_samples=sorted(self.height_samples
                                             + other.height_samples))

    # -- persistence ---------------------------------------------------------

    def save(self, prefix: str | Path) -> None:
        """Write ``<prefix>.grid.txt`` (one integer row per line) and
        ``<prefix>.meta.json`` (kind, totals, size samples)."""
        prefix = Path(prefix)
        lines = [" ".join(str(v) for v in row) for row in self.counts.tolist()]
        prefix.with_suffix(".grid.txt").write_text("\n".join(lines) + "\n",
                                                   encoding="utf-8")
        meta = {
            "kind": self.kind.value,
            "grid_w": self.grid_w,
            "grid_h": self.grid_h,
            "total": self.total,
            "width_samples": self.width_samples,
            "height_samples": self.height_samples,
        }
        prefix.with_suffix(".meta.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, prefix: str | Path) -> Heatmap:
        prefix = Path(prefix)
        meta = json.loads(prefix.with_suffix(".meta.json").read_text("utf-8"))
        rows = [[int(v) for v in line.split()]
                for line in prefix.with_suffix(".grid.txt")
                .read_text("utf-8").splitlines() if line.strip()]
        counts = np.array(rows, dtype=np.int64)
        return cls(kind=ComponentKind.from_name(meta["kind"]),
                   grid_w=meta["grid_w"], grid_h=meta["grid_h"],
                   counts=counts, total=meta["total"],
                   width_samples=list(meta["width_samples"]),
                   height_samples=list(meta["height_samples"]))

    def render_png(self, path: str | Path, scale: int = 8) -> None:
        """Grayscale rendering (frequency / max) for visual inspection."""
        if self.total > 0:
            gray = (self.normalized() * 255.0).astype(np.uint8)
        else:
            gray = np.zeros((self.grid_h, self.grid_w), dtype=np.uint8)
        img = Image.fromarray(gray, mode="L")
        img = img.resize((self.grid_w * scale, self.grid_h * scale),
                         Image.NEAREST)
        img.save(path)


def build_heatmaps(detections_by_screen, grid_w: int = DEFAULT_GRID[0],
                   grid_h: int = DEFAULT_GRID[1]) -> dict[ComponentKind, Heatmap]:
    """Accumulate (screen, detections) pairs into one heatmap per kind."""
    maps = {kind: Heatmap(kind=kind, grid_w=grid_w, grid_h=grid_h)
            for kind in ComponentKind}
    for screen, dets in detections_by_screen:
        for det in dets:
            maps[det.kind].accumulate(det, screen)
    return maps
