"""Candidate component detection by relaxed keyword matching over trees.

A rule matches a node when any of its keywords is a case-insensitive
substring of the node's class name, or failing that, of any name in the
node's ancestor chain (developers often subclass the official widgets, so
the official class name survives in ``ancestors``). The screen walk is a
pre-order depth-first search; a rule stops descending below a node it
detected, and invisible nodes cannot be detected themselves but their
subtrees are still searched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import kernels
from .corpus import AppRecord, Screen, ViewNode
from .errors import ConfigError
from .rects import Rect


class ComponentKind(enum.Enum):
    APP_BAR = "AppBar"
    FLOATING_ACTION_BUTTON = "FloatingActionButton"
    BOTTOM_NAVIGATION = "BottomNavigation"
    NAVIGATION_DRAWER = "NavigationDrawer"
    SNACK_BAR = "SnackBar"
    TAB_LAYOUT = "TabLayout"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def from_name(cls, name: str) -> "ComponentKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ConfigError(f"unknown component kind {name!r}; expected one of "
                          f"{[k.value for k in cls]}")


ALL_KINDS = tuple(ComponentKind)


class MatchVia(enum.Enum):
    CLASS_NAME = "ClassName"
    ANCESTOR = "Ancestor"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class KeywordRule:
    kind: ComponentKind
    keywords: tuple[str, ...]    # stored lowercased; matched as substrings

    def __post_init__(self):
        if not self.keywords:
            raise ConfigError(f"rule for {self.kind} has no keywords")
        if any(not kw for kw in self.keywords):
            raise ConfigError(f"rule for {self.kind} has an empty keyword")
        object.__setattr__(self, "keywords",
                           tuple(kw.lower() for kw in self.keywords))


@dataclass(frozen=True)
class Detection:
    package_id: str
    screen_id: str
    kind: ComponentKind
    node_path: tuple[int, ...]     # child indices from the root
    bounds: Rect                   # copied from the matched node
    matched_via: MatchVia
    matched_keyword: str


def match_node(node: ViewNode, rule: KeywordRule):
    """Match one node against one rule, ignoring visibility.

    Returns ``(MatchVia, keyword)`` or None. A class-name match takes
    precedence over an ancestor match; ties break on rule keyword order.
    """
    via, idx = kernels.match_strings(
        node.class_name.lower(),
        tuple(a.lower() for a in node.ancestors),
        rule.keywords)
    if via == 0:
        return None
    return (MatchVia.CLASS_NAME if via == 1 else MatchVia.ANCESTOR,
            rule.keywords[idx])


def detect_in_screen(screen: Screen, rules: list[KeywordRule],
                     package_id: str = "") -> list[Detection]:
    """All detections in one screen, in pre-order traversal order.

    Invisible nodes never yield detections but are traversed through. Once
    a rule detects a node, that rule skips the node's subtree (remaining
    rules keep searching it), so each rule reports the shallowest visible
    match on any root-to-leaf path.
    """
    kinds_seen = set()
    for rule in rules:
        if rule.kind in kinds_seen:
            raise ConfigError(f"duplicate rule for kind {rule.kind}")
        kinds_seen.add(rule.kind)

    detections: list[Detection] = []

    def walk(node: ViewNode, path: tuple[int, ...],
             active: tuple[KeywordRule, ...]):
        class_lower = node.class_name.lower()
        ancestors_lower = tuple(a.lower() for a in node.ancestors)
        surviving = []
        for rule in active:
            via, idx = kernels.match_strings(class_lower, ancestors_lower,
                                             rule.keywords)
            if via != 0 and node.visible_to_user:
                detections.append(Detection(
                    package_id=package_id,
                    screen_id=screen.screen_id,
                    kind=rule.kind,
                    node_path=path,
                    bounds=node.bounds,
                    matched_via=(MatchVia.CLASS_NAME if via == 1
                                 else MatchVia.ANCESTOR),
                    matched_keyword=rule.keywords[idx]))
            else:
                surviving.append(rule)
        if surviving:
            nxt = tuple(surviving)
            for i, child in enumerate(node.children):
                walk(child, path + (i,), nxt)

    walk(screen.root, (), tuple(rules))
    return detections


def detect_in_app(app: AppRecord,
                  rules: list[KeywordRule]) -> dict[ComponentKind, list[Detection]]:
    """Union of per-screen detections grouped by kind.

    Every rule's kind is present in the result; an empty list means no
    candidate anywhere in the app.
    """
    if app.excluded:
        raise ValueError(f"app {app.package_id} is excluded from detection")
    grouped: dict[ComponentKind, list[Detection]] = {r.kind: [] for r in rules}
    for screen in app.screens:
        for det in detect_in_screen(screen, rules, package_id=app.package_id):
            grouped[det.kind].append(det)
    return grouped


# --- keyword registry ------------------------------------------------------

def parse_rules(text: str) -> list[KeywordRule]:
    """Registry format: ``Kind: kw1, kw2`` per line; # starts a comment."""
    rules = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"registry line {lineno} is not `Kind: keywords`")
        kind_name, _, kw_text = line.partition(":")
        kind = ComponentKind.from_name(kind_name.strip())
        if kind in seen:
            raise ConfigError(f"registry line {lineno}: duplicate kind {kind}")
        seen.add(kind)
        keywords = tuple(k.strip() for k in kw_text.split(",") if k.strip())
        rules.append(KeywordRule(kind=kind, keywords=keywords))
    if not rules:
        raise ConfigError("keyword registry defines no rules")
    return rules


def load_rules(path: str | Path) -> list[KeywordRule]:
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def default_rules() -> list[KeywordRule]:
    """The bundled registry (data/keywords.conf)."""
    text = (resources.files("patternscope") / "data" / "keywords.conf") \
        .read_text(encoding="utf-8")
    return parse_rules(text)
