"""Integer and normalized rectangles shared across the pipeline.

Rectangles are (left, top, right, bottom) with the right/bottom edges
exclusive, matching both the hierarchy bounds convention and numpy slicing.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class Rect(NamedTuple):
    left: int
    top: int
    right: int
    bottom: int

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def area(self) -> int:
        return max(0, self.width) * max(0, self.height)

    def intersects(self, other: Rect) -> bool:
        return (self.left < other.right and other.left < self.right
                and self.top < other.bottom and other.top < self.bottom)

    def clamp(self, width: int, height: int) -> Rect:
        """Clip to the [0, width) x [0, height) pixel grid."""
        return Rect(min(max(self.left, 0), width),
                    min(max(self.top, 0), height),
                    min(max(self.right, 0), width),
                    min(max(self.bottom, 0), height))


class NormRect(NamedTuple):
    """Rectangle in normalized [0, 1]^2 screen space."""

    left: float
    top: float
    right: float
    bottom: float


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero (not banker's)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def normalize_bounds(left: int, top: int, right: int, bottom: int) -> tuple[Rect, bool]:
    """Order the edges so left <= right, top <= bottom; flag if swapped."""
    flipped = False
    if left > right:
        left, right = right, left
        flipped = True
    if top > bottom:
        top, bottom = bottom, top
        flipped = True
    return Rect(left, top, right, bottom), flipped
