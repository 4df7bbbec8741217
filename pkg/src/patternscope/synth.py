"""Synthetic corpora with exact ground truth.

Generates app directories in the same layout the ingest stage consumes:
hierarchy JSON per screen, a rendered screenshot, metadata.csv, and
ground_truth.csv. Each planted component kind renders as a distinct
flat-color glyph, decoys carry keyword-bearing class names but render as
plain text strokes, and occluded instances stay in the hierarchy while their
pixels are overdrawn. All randomness is drawn from per-app streams keyed by
(seed, package_id), so generation order and parallelism cannot change output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Iterator

from PIL import Image, ImageDraw

from .corpus import AppMetadata, ViewNode
from .detect import ALL_KINDS, ComponentKind
from .errors import SynthSpecError
from .rects import Rect, round_half_up

VIRTUAL_W, VIRTUAL_H = 1080, 1920

DEFAULT_INSTALL_BUCKETS = (1_000, 10_000, 100_000, 1_000_000,
                           10_000_000, 100_000_000)
DEFAULT_CATEGORIES = ("Tools", "Social", "Games", "Education",
                      "Finance", "Health", "Travel", "Shopping")

# one saturated color per kind; backgrounds and cards stay light so crops
# separate linearly
GLYPH_COLORS = {
    ComponentKind.APP_BAR: (63, 81, 181),
    ComponentKind.FLOATING_ACTION_BUTTON: (255, 64, 129),
    ComponentKind.BOTTOM_NAVIGATION: (0, 150, 136),
    ComponentKind.NAVIGATION_DRAWER: (103, 58, 183),
    ComponentKind.SNACK_BAR: (33, 33, 33),
    ComponentKind.TAB_LAYOUT: (255, 193, 7),
}
OCCLUDER_COLOR = (210, 210, 210)
DECOY_TEXT_COLOR = (70, 70, 70)
BACKGROUNDS = ((250, 250, 250), (245, 240, 235), (240, 245, 250),
               (255, 250, 240))
CARD_COLORS = ((228, 228, 228), (235, 230, 240), (224, 236, 232))

# z-order for rendering: big panels first so small glyphs stay visible
KIND_Z_ORDER = (ComponentKind.NAVIGATION_DRAWER, ComponentKind.APP_BAR,
                ComponentKind.TAB_LAYOUT, ComponentKind.BOTTOM_NAVIGATION,
                ComponentKind.SNACK_BAR, ComponentKind.FLOATING_ACTION_BUTTON)

PLANTED_CLASSES = {
    ComponentKind.APP_BAR: "android.support.v7.widget.Toolbar",
    ComponentKind.FLOATING_ACTION_BUTTON:
        "android.support.design.widget.FloatingActionButton",
    ComponentKind.BOTTOM_NAVIGATION:
        "android.support.design.widget.BottomNavigationView",
    ComponentKind.NAVIGATION_DRAWER: "android.support.v4.widget.DrawerLayout",
    ComponentKind.SNACK_BAR:
        "android.support.design.widget.Snackbar$SnackbarLayout",
    ComponentKind.TAB_LAYOUT: "android.support.design.widget.TabLayout",
}
PLANTED_ANCESTORS = {
    ComponentKind.FLOATING_ACTION_BUTTON: (
        "android.support.design.widget.VisibilityAwareImageButton",
        "android.widget.ImageButton", "android.widget.ImageView",
        "android.view.View", "java.lang.Object"),
}
GENERIC_ANCESTORS = ("android.view.ViewGroup", "android.view.View",
                     "java.lang.Object")
DECOY_CLASSES = {
    ComponentKind.APP_BAR: "com.decoy.widgets.ToolbarTitleText",
    ComponentKind.FLOATING_ACTION_BUTTON: "com.decoy.widgets.FloatingTextView",
    ComponentKind.BOTTOM_NAVIGATION:
        "com.decoy.widgets.BottomNavigationLabel",
    ComponentKind.NAVIGATION_DRAWER: "com.decoy.widgets.DrawerHintText",
    ComponentKind.SNACK_BAR: "com.decoy.widgets.SnackMessageText",
    ComponentKind.TAB_LAYOUT: "com.decoy.widgets.TabLayoutCaption",
}
DECOY_ANCESTORS = ("android.widget.TextView", "android.view.View",
                   "java.lang.Object")


@dataclass(frozen=True)
class SynthSpec:
    app_count: int
    adoption: dict[ComponentKind, float | tuple[float, float]] = field(
        default_factory=dict)
    screens_per_app: tuple[int, int] = (2, 4)
    decoy_rate: float = 0.0
    occlusion_rate: float = 0.0
    rating_range: tuple[float, float] = (2.0, 5.0)
    install_buckets: tuple[int, ...] = DEFAULT_INSTALL_BUCKETS
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    seed: int = 0
    image_scale: float = 0.25

    def validate(self) -> None:
        if self.app_count < 1:
            raise SynthSpecError("app_count must be >= 1")
        lo, hi = self.screens_per_app
        if not 1 <= lo <= hi:
            raise SynthSpecError(f"bad screens_per_app range ({lo}, {hi})")
        for kind, p in self.adoption.items():
            values = p if isinstance(p, tuple) else (p,)
            for v in values:
                if not 0.0 <= v <= 1.0:
                    raise SynthSpecError(
                        f"adoption for {kind} outside [0, 1]: {v}")
        for name in ("decoy_rate", "occlusion_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthSpecError(f"{name} outside [0, 1]: {v}")
        if self.occlusion_rate > 0 and not any(
                (p if isinstance(p, tuple) else (p, p))[1] > 0
                for p in self.adoption.values()):
            raise SynthSpecError(
                "occlusion_rate > 0 is unsatisfiable with zero adoption")
        if not 0.0 < self.image_scale <= 1.0:
            raise SynthSpecError("image_scale must lie in (0, 1]")
        if self.rating_range[0] > self.rating_range[1] or \
                not (0 <= self.rating_range[0] and self.rating_range[1] <= 5):
            raise SynthSpecError(f"bad rating_range {self.rating_range}")
        if not self.categories or not self.install_buckets:
            raise SynthSpecError("categories and install_buckets must be "
                                 "nonempty")


@dataclass(frozen=True)
class PlantedComponent:
    kind: ComponentKind
    bounds: Rect
    class_name: str
    ancestors: tuple[str, ...]
    occluded: bool = False


@dataclass(frozen=True)
class DecoyNode:
    kind: ComponentKind
    bounds: Rect
    class_name: str
    ancestors: tuple[str, ...] = DECOY_ANCESTORS


@dataclass(frozen=True)
class ScreenPlan:
    screen_id: str
    background: tuple[int, int, int]
    cards: tuple[tuple[Rect, tuple[int, int, int]], ...]
    components: tuple[PlantedComponent, ...]
    decoys: tuple[DecoyNode, ...]


@dataclass(frozen=True)
class AppPlan:
    package_id: str
    metadata: AppMetadata
    rating_percentile: float
    screens: tuple[ScreenPlan, ...]
    adopted: frozenset[ComponentKind]
    occluded_counts: dict[ComponentKind, int]
    decoy_counts: dict[ComponentKind, int]


@dataclass(frozen=True)
class GroundTruthRow:
    package: str
    kind: ComponentKind
    uses: bool
    occluded_count: int
    decoy_count: int


@dataclass
class GroundTruth:
    rows: list[GroundTruthRow]

    def usage_map(self) -> dict[str, dict[ComponentKind, bool]]:
        out: dict[str, dict[ComponentKind, bool]] = {}
        for row in self.rows:
            out.setdefault(row.package, {})[row.kind] = row.uses
        return out

    def by_key(self) -> dict[tuple[str, ComponentKind], GroundTruthRow]:
        return {(r.package, r.kind): r for r in self.rows}


def _package_id(index: int) -> str:
    return f"com.synth.app{index:05d}"


def _adoption_probability(p, percentile: float) -> float:
    if isinstance(p, tuple):
        lo, hi = p
        return lo + percentile * (hi - lo)
    return float(p)


def _jitter(rng: Random, amount: int) -> int:
    return rng.randint(-amount, amount)


def _component_bounds(kind: ComponentKind, rng: Random) -> Rect:
    if kind is ComponentKind.APP_BAR:
        return Rect(0, 0, VIRTUAL_W, 154 + _jitter(rng, 20))
    if kind is ComponentKind.TAB_LAYOUT:
        y0 = 170 + _jitter(rng, 20)
        return Rect(0, y0, VIRTUAL_W, y0 + 96)
    if kind is ComponentKind.BOTTOM_NAVIGATION:
        return Rect(0, 1800 + _jitter(rng, 20), VIRTUAL_W, VIRTUAL_H)
    if kind is ComponentKind.SNACK_BAR:
        y0 = 1660 + _jitter(rng, 20)
        return Rect(40, y0, VIRTUAL_W - 40, y0 + 110)
    if kind is ComponentKind.NAVIGATION_DRAWER:
        return Rect(0, 0, 756 + 4 * _jitter(rng, 10), VIRTUAL_H)
    # FloatingActionButton: disc bottom-right
    r = 76 + _jitter(rng, 12)
    cx = 918 + _jitter(rng, 20)
    cy = 1574 + _jitter(rng, 20)
    return Rect(cx - r, cy - r, cx + r, cy + r)


def _plan_screen(rng: Random, package_id: str, index: int,
                 kinds: list[tuple[ComponentKind, bool]],
                 decoy: ComponentKind | None) -> ScreenPlan:
    background = rng.choice(BACKGROUNDS)
    cards = []
    for _ in range(rng.randint(2, 4)):
        x0 = rng.randint(40, 560)
        y0 = rng.randint(300, 1350)
        cards.append((Rect(x0, y0, x0 + rng.randint(300, 480),
                           y0 + rng.randint(120, 260)),
                      rng.choice(CARD_COLORS)))
    components = []
    for kind, via_ancestor in kinds:
        bounds = _component_bounds(kind, rng)
        if via_ancestor:
            class_name = f"com.{package_id}.ui.WidgetV{rng.randint(1, 9)}"
            ancestors = (PLANTED_CLASSES[kind],) + GENERIC_ANCESTORS
        else:
            class_name = PLANTED_CLASSES[kind]
            ancestors = PLANTED_ANCESTORS.get(kind, GENERIC_ANCESTORS)
        components.append(PlantedComponent(kind=kind, bounds=bounds,
                                           class_name=class_name,
                                           ancestors=ancestors))
    decoys = ()
    if decoy is not None:
        x0 = rng.randint(60, 700)
        y0 = rng.randint(350, 1400)
        decoys = (DecoyNode(kind=decoy, bounds=Rect(x0, y0, x0 + 320, y0 + 90),
                            class_name=DECOY_CLASSES[decoy]),)
    return ScreenPlan(screen_id=f"screen_{index:03d}", background=background,
                      cards=tuple(cards), components=tuple(components),
                      decoys=decoys)


def plan_apps(spec: SynthSpec) -> list[AppPlan]:
    """Deterministic per-app plans; all downstream artifacts derive from
    these. Two passes: rating quantiles first (they define the percentile
    each adoption function is evaluated at), then app bodies."""
    spec.validate()
    n = spec.app_count
    quantiles = []
    for i in range(n):
        pid = _package_id(i)
        quantiles.append((Random(f"{spec.seed}:{pid}:rating").random(), pid))
    order = sorted(range(n), key=lambda i: quantiles[i])
    percentile = [0.0] * n
    for rank, i in enumerate(order):
        percentile[i] = rank / (n - 1) if n > 1 else 0.5

    plans = []
    for i in range(n):
        pid = _package_id(i)
        q = quantiles[i][0]
        rng = Random(f"{spec.seed}:{pid}:body")
        rating = round(spec.rating_range[0]
                       + q * (spec.rating_range[1] - spec.rating_range[0]), 2)
        metadata = AppMetadata(avg_rating=rating,
                               installs=rng.choice(spec.install_buckets),
                               category=rng.choice(spec.categories))
        n_screens = rng.randint(*spec.screens_per_app)

        adopted = set()
        via_ancestor = {}
        for kind in ALL_KINDS:
            p = _adoption_probability(spec.adoption.get(kind, 0.0),
                                      percentile[i])
            if rng.random() < p:
                adopted.add(kind)
            via_ancestor[kind] = rng.random() < 0.25

        decoy_kind = None
        decoy_screen = -1
        if rng.random() < spec.decoy_rate:
            decoy_kind = rng.choice(ALL_KINDS)
            decoy_screen = rng.randrange(n_screens)

        occluded_at: dict[ComponentKind, int] = {}
        for kind in ALL_KINDS:
            roll = rng.random()     # drawn unconditionally: stable stream
            if kind in adopted and roll < spec.occlusion_rate \
                    and n_screens >= 2:
                occluded_at[kind] = rng.randrange(n_screens)

        screens = []
        for s in range(n_screens):
            kinds = [(kind, via_ancestor[kind])
                     for kind in KIND_Z_ORDER if kind in adopted]
            plan = _plan_screen(rng, pid, s, kinds,
                                decoy_kind if s == decoy_screen else None)
            if any(occluded_at.get(k) == s for k in adopted):
                plan = ScreenPlan(
                    screen_id=plan.screen_id, background=plan.background,
                    cards=plan.cards,
                    components=tuple(
                        PlantedComponent(kind=c.kind, bounds=c.bounds,
                                         class_name=c.class_name,
                                         ancestors=c.ancestors,
                                         occluded=occluded_at.get(c.kind) == s)
                        for c in plan.components),
                    decoys=plan.decoys)
            screens.append(plan)

        plans.append(AppPlan(
            package_id=pid, metadata=metadata,
            rating_percentile=percentile[i], screens=tuple(screens),
            adopted=frozenset(adopted),
            occluded_counts={k: 1 for k in occluded_at},
            decoy_counts={decoy_kind: 1} if decoy_kind else {}))
    return plans


# -- hierarchy ----------------------------------------------------------------

def _leaf(class_name: str, ancestors: tuple[str, ...], bounds: Rect,
          visible: bool = True, resource_id: str | None = None) -> ViewNode:
    return ViewNode(class_name=class_name, ancestors=ancestors, bounds=bounds,
                    visible_to_user=visible, children=[],
                    resource_id=resource_id)


def build_hierarchy(plan: ScreenPlan) -> ViewNode:
    children = [
        _leaf("android.widget.FrameLayout",
              ("android.view.ViewGroup", "android.view.View",
               "java.lang.Object"), rect, True)
        for rect, _ in plan.cards
    ]
    for comp in plan.components:
        children.append(_leaf(comp.class_name, comp.ancestors, comp.bounds,
                              True, resource_id=f"id/{comp.kind.value.lower()}"))
    for decoy in plan.decoys:
        children.append(_leaf(decoy.class_name, decoy.ancestors, decoy.bounds,
                              True))
    # one invisible overlay per screen: parsers and detectors must keep
    # traversing below invisible nodes without matching them
    children.append(_leaf("android.view.View",
                          ("java.lang.Object",),
                          Rect(0, 0, VIRTUAL_W, VIRTUAL_H), False))
    content = ViewNode(
        class_name="android.widget.FrameLayout",
        ancestors=("android.view.ViewGroup", "android.view.View",
                   "java.lang.Object"),
        bounds=Rect(0, 0, VIRTUAL_W, VIRTUAL_H), visible_to_user=True,
        children=children)
    return ViewNode(
        class_name="com.android.internal.policy.PhoneWindow$DecorView",
        ancestors=("android.widget.FrameLayout", "android.view.ViewGroup",
                   "android.view.View", "java.lang.Object"),
        bounds=Rect(0, 0, VIRTUAL_W, VIRTUAL_H), visible_to_user=True,
        children=[content])


# -- rendering ----------------------------------------------------------------

def _scaled(rect: Rect, scale: float) -> tuple[int, int, int, int]:
    return (round_half_up(rect.left * scale), round_half_up(rect.top * scale),
            round_half_up(rect.right * scale),
            round_half_up(rect.bottom * scale))


def render_screen(plan: ScreenPlan, scale: float) -> Image.Image:
    width = round_half_up(VIRTUAL_W * scale)
    height = round_half_up(VIRTUAL_H * scale)
    img = Image.new("RGB", (width, height), plan.background)
    draw = ImageDraw.Draw(img)
    for rect, color in plan.cards:
        draw.rectangle(_scaled(rect, scale), fill=color)
    for comp in plan.components:     # already in z-order
        color = GLYPH_COLORS[comp.kind]
        box = _scaled(comp.bounds, scale)
        if comp.kind is ComponentKind.FLOATING_ACTION_BUTTON:
            draw.ellipse(box, fill=color)
        else:
            draw.rectangle(box, fill=color)
    for decoy in plan.decoys:       # text-like strokes, not a glyph
        b = decoy.bounds
        for li in range(3):
            y0 = b.top + 12 + li * 30
            x1 = b.right - (40 * (li + 1))
            draw.rectangle(_scaled(Rect(b.left + 10, y0, x1, y0 + 14), scale),
                           fill=DECOY_TEXT_COLOR)
    for comp in plan.components:
        if comp.occluded:
            m_w = comp.bounds.width // 4
            m_h = comp.bounds.height // 4
            occ = Rect(comp.bounds.left - m_w, comp.bounds.top - m_h,
                       comp.bounds.right + m_w,
                       comp.bounds.bottom + m_h).clamp(VIRTUAL_W, VIRTUAL_H)
            draw.rectangle(_scaled(occ, scale), fill=OCCLUDER_COLOR)
    return img


# -- corpus emission ----------------------------------------------------------

def _truth_rows(plans: list[AppPlan]) -> list[GroundTruthRow]:
    rows = []
    for plan in plans:
        for kind in ALL_KINDS:
            rows.append(GroundTruthRow(
                package=plan.package_id, kind=kind,
                uses=kind in plan.adopted,
                occluded_count=plan.occluded_counts.get(kind, 0),
                decoy_count=plan.decoy_counts.get(kind, 0)))
    return rows


def generate(spec: SynthSpec, out_dir: str | Path,
             render: bool = True) -> GroundTruth:
    """Write the corpus to disk; returns the ground-truth index.

    Layout: ``<out>/apps/<package>/<screen>.json`` (+ ``.png`` when
    rendering), ``metadata.csv``, ``exclusions.txt`` (empty),
    ``ground_truth.csv``, and ``synth_spec.json`` echoing the parameters.
    """
    from .corpus import serialize_screen, Screen  # local: avoids cycle at import

    out = Path(out_dir)
    apps_dir = out / "apps"
    apps_dir.mkdir(parents=True, exist_ok=True)
    plans = plan_apps(spec)

    for plan in plans:
        app_dir = apps_dir / plan.package_id
        app_dir.mkdir(parents=True, exist_ok=True)
        for screen_plan in plan.screens:
            root = build_hierarchy(screen_plan)
            screen = Screen(screen_id=screen_plan.screen_id, root=root,
                            virtual_extent=(VIRTUAL_W, VIRTUAL_H))
            (app_dir / f"{screen_plan.screen_id}.json").write_text(
                serialize_screen(screen), encoding="utf-8")
            if render:
                render_screen(screen_plan, spec.image_scale).save(
                    app_dir / f"{screen_plan.screen_id}.png")

    with open(out / "metadata.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["package", "avg_rating", "installs", "category"])
        for plan in plans:
            writer.writerow([plan.package_id,
                             f"{plan.metadata.avg_rating:.2f}",
                             f"{plan.metadata.installs:,}+",
                             plan.metadata.category])
    (out / "exclusions.txt").write_text("", encoding="utf-8")

    truth = GroundTruth(rows=_truth_rows(plans))
    with open(out / "ground_truth.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["package", "kind", "uses", "occluded_count",
                         "decoy_count"])
        for row in truth.rows:
            writer.writerow([row.package, row.kind.value,
                             "true" if row.uses else "false",
                             row.occluded_count, row.decoy_count])

    echo = {
        "app_count": spec.app_count,
        "adoption": {k.value: list(v) if isinstance(v, tuple) else v
                     for k, v in spec.adoption.items()},
        "screens_per_app": list(spec.screens_per_app),
        "decoy_rate": spec.decoy_rate,
        "occlusion_rate": spec.occlusion_rate,
        "rating_range": list(spec.rating_range),
        "install_buckets": list(spec.install_buckets),
        "categories": list(spec.categories),
        "seed": spec.seed,
        "image_scale": spec.image_scale,
        "rendered": render,
    }
    (out / "synth_spec.json").write_text(
        json.dumps(echo, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return truth


def load_ground_truth(path: str | Path) -> GroundTruth:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(GroundTruthRow(
                package=row["package"],
                kind=ComponentKind.from_name(row["kind"]),
                uses=row["uses"] == "true",
                occluded_count=int(row["occluded_count"]),
                decoy_count=int(row["decoy_count"])))
    return GroundTruth(rows=rows)


def iter_hierarchies(spec: SynthSpec) -> Iterator[
        tuple[AppPlan, list[tuple[str, ViewNode]]]]:
    """Hierarchy-only fast path: plans plus in-memory root nodes, no disk or
    rendering. Suited to large corpora where only detection is exercised."""
    for plan in plan_apps(spec):
        yield plan, [(sp.screen_id, build_hierarchy(sp))
                     for sp in plan.screens]
