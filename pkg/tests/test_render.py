"""Chart rendering: deterministic SVG strings and PIL contact sheets."""

from __future__ import annotations

import re

import pytest
from PIL import Image

from patternscope.errors import ReportError
from patternscope.render import (box_plot, contact_sheet, grouped_bar_chart,
                                 line_chart, percent_label, save_svg)
from patternscope.stats import FiveNumberSummary


class TestPercentLabel:
    def test_one_decimal(self):
        assert percent_label(0.134) == "13.4%"
        assert percent_label(0.0) == "0.0%"
        assert percent_label(1.0) == "100.0%"
        assert percent_label(0.055) == "5.5%"

    def test_rounding(self):
        assert percent_label(0.12345) == "12.3%"
        assert percent_label(0.9999) == "100.0%"


class TestGroupedBarChart:
    def test_labels_every_bar_with_percentage(self):
        svg = grouped_bar_chart("adoption", ["FAB", "Tabs"],
                                [("low", [0.134, 0.5]),
                                 ("high", [0.25, 0.75])])
        for expected in ("13.4%", "50.0%", "25.0%", "75.0%"):
            assert expected in svg
        assert svg.count("<rect") == 4 + 2    # bars + legend swatches

    def test_categories_and_legend_present(self):
        svg = grouped_bar_chart("t", ["A", "B"], [("users", [0.1, 0.2])])
        assert ">A<" in svg and ">B<" in svg and ">users<" in svg

    def test_empty_inputs(self):
        with pytest.raises(ReportError, match="empty"):
            grouped_bar_chart("t", [], [("s", [])])
        with pytest.raises(ReportError, match="empty"):
            grouped_bar_chart("t", ["A"], [])

    def test_length_mismatch(self):
        with pytest.raises(ReportError, match="length"):
            grouped_bar_chart("t", ["A", "B"], [("s", [0.1])])

    def test_deterministic(self):
        args = ("t", ["A"], [("s", [0.4])])
        assert grouped_bar_chart(*args) == grouped_bar_chart(*args)


class TestLineChart:
    def test_point_count_matches_input(self):
        ys = [i / 10 for i in range(11)]
        svg = line_chart("curve", ys, "bucket", "usage")
        points = re.search(r'points="([^"]+)"', svg).group(1).split()
        assert len(points) == len(ys)

    def test_constant_curve_is_flat(self):
        svg = line_chart("flat", [0.5] * 8, "bucket", "usage")
        points = re.search(r'points="([^"]+)"', svg).group(1).split()
        ys = {p.split(",")[1] for p in points}
        assert len(ys) == 1

    def test_monotone_input_gives_monotone_pixels(self):
        svg = line_chart("rise", [0.1, 0.2, 0.4, 0.8], "x", "y")
        points = re.search(r'points="([^"]+)"', svg).group(1).split()
        pixel_ys = [float(p.split(",")[1]) for p in points]
        assert pixel_ys == sorted(pixel_ys, reverse=True)    # SVG y grows down

    def test_single_point(self):
        assert "points=" in line_chart("one", [0.3], "x", "y")

    def test_empty(self):
        with pytest.raises(ReportError, match="empty"):
            line_chart("t", [], "x", "y")

    def test_axis_labels(self):
        svg = line_chart("t", [0.1, 0.9], "rating bucket", "any usage")
        assert ">rating bucket<" in svg
        assert ">any usage<" in svg


class TestBoxPlot:
    def summary(self, center):
        return FiveNumberSummary(minimum=center - 2, q1=center - 1,
                                 median=center, q3=center + 1,
                                 maximum=center + 2,
                                 whisker_low=center - 2,
                                 whisker_high=center + 2)

    def test_one_box_per_entry(self):
        svg = box_plot("t", [("FAB U", self.summary(10)),
                             ("FAB N", self.summary(20))])
        assert svg.count("<rect") == 2
        assert ">FAB U<" in svg and ">FAB N<" in svg

    def test_median_label_two_decimals(self):
        svg = box_plot("t", [("a", self.summary(3.14159))])
        assert ">3.14<" in svg

    def test_log_scale_accepts_large_spread(self):
        boxes = [("installs", FiveNumberSummary(
            minimum=1000, q1=10_000, median=100_000, q3=1_000_000,
            maximum=100_000_000, whisker_low=1000,
            whisker_high=10_000_000))]
        svg = box_plot("t", boxes, log_scale=True)
        assert "<rect" in svg

    def test_empty(self):
        with pytest.raises(ReportError, match="empty"):
            box_plot("t", [])


class TestContactSheet:
    def make_images(self, n, size=(30, 20)):
        return [Image.new("RGB", size, (10 * i % 255, 40, 60))
                for i in range(n)]

    def test_grid_dimensions(self):
        sheet = contact_sheet(self.make_images(7), columns=3, cell=40, pad=2)
        assert sheet.width == 3 * 42 + 2
        assert sheet.height == 3 * 42 + 2    # ceil(7/3) = 3 rows

    def test_single_image(self):
        sheet = contact_sheet(self.make_images(1), columns=6, cell=50)
        assert sheet.height == 50 + 2 * 4

    def test_preserves_count_visually(self):
        # every pasted thumbnail leaves non-background pixels in its cell
        images = [Image.new("RGB", (40, 40), (200, 0, 0)) for _ in range(5)]
        sheet = contact_sheet(images, columns=2, cell=40, pad=2,
                              background=(255, 255, 255))
        filled = 0
        for i in range(5):
            r, c = divmod(i, 2)
            x = 2 + c * 42 + 20
            y = 2 + r * 42 + 20
            if sheet.getpixel((x, y)) == (200, 0, 0):
                filled += 1
        assert filled == 5

    def test_empty(self):
        with pytest.raises(ReportError, match="empty"):
            contact_sheet([])


def test_save_svg_round_trip(tmp_path):
    svg = line_chart("t", [0.1, 0.5], "x", "y")
    save_svg(svg, tmp_path / "c.svg")
    assert (tmp_path / "c.svg").read_text(encoding="utf-8") == svg
