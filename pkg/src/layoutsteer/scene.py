"""Prompts, per-object spatial conditions and the scene file format.

Scene files are JSON documents (RFC 8259 is the grammar)::

    {
      "prompt": "a cat on a sofa",
      "objects": [
        {"category": "cat", "box": [x0, y0, x1, y1]},
        {"category": "lamp", "point": [x, y]}
      ]
    }

Coordinates are normalized to [0, 1] with ``x`` along rows. ``save_scene``
writes the one canonical serialization: keys in the order above, two-space
indent, UTF-8, trailing newline.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

from .grid import NormBox

_WORD = re.compile(r"[^\W_]+")


class SceneFormatError(ValueError):
    """Malformed scene file. The message carries line or field position."""


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; whitespace and punctuation are separators."""
    return _WORD.findall(text.lower())


@dataclass(frozen=True)
class Prompt:
    raw_text: str
    words: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(tokenize(self.raw_text)))

    def find(self, phrase: str) -> int | None:
        """Index of the last word of the first occurrence of ``phrase``."""
        target = tokenize(phrase)
        n = len(target)
        if n == 0:
            return None
        for i in range(len(self.words) - n + 1):
            if list(self.words[i : i + n]) == target:
                return i + n - 1
        return None

    def contains(self, phrase: str) -> bool:
        return self.find(phrase) is not None


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"keypoint ({self.x}, {self.y}) outside the unit square")


Geometry = Union[NormBox, Keypoint]


@dataclass(frozen=True)
class ObjectCondition:
    category: str
    geometry: Geometry

    def __post_init__(self):
        if not self.category.strip():
            raise ValueError("empty category")


@dataclass(frozen=True)
class CategoryGroup:
    category: str
    count: int
    member_indices: tuple[int, ...]


@dataclass(frozen=True)
class Scene:
    prompt: str
    objects: tuple[ObjectCondition, ...]

    def boxes(self) -> list[NormBox]:
        out = []
        for obj in self.objects:
            if not isinstance(obj.geometry, NormBox):
                raise TypeError("scene still holds keypoints; convert them with boxes_from_keypoints")
            out.append(obj.geometry)
        return out


def group_semantics(objects) -> list[CategoryGroup]:
    """One group per distinct category, in order of first appearance."""
    members: dict[str, list[int]] = {}
    for i, obj in enumerate(objects):
        members.setdefault(obj.category, []).append(i)
    return [CategoryGroup(cat, len(idx), tuple(idx)) for cat, idx in members.items()]


def edit_prompt(prompt: Prompt, groups) -> Prompt:
    """Append ``"<count> <category>."`` for every category the prompt lacks."""
    text = prompt.raw_text
    for g in groups:
        if prompt.contains(g.category) or Prompt(text).contains(g.category):
            continue
        sentence = f"{g.count} {g.category.lower()}."
        text = f"{text} {sentence}" if text.strip() else sentence
    return Prompt(text)


class SizeTable:
    """Typical normalized (width, height) of each category.

    Sizes are stored as (extent along columns, extent along rows), which is
    how people usually quote width and height.
    """

    def __init__(self, sizes: dict[str, tuple[float, float]], default: tuple[float, float]):
        for name, (w, h) in [*sizes.items(), ("<default>", default)]:
            if not (0 < w <= 1 and 0 < h <= 1):
                raise ValueError(f"size of {name} must lie in (0, 1], got {(w, h)}")
        self.sizes = dict(sizes)
        self.default = default

    def lookup(self, category: str) -> tuple[float, float]:
        return self.sizes.get(category.lower(), self.default)

    @classmethod
    def load(cls, path=None) -> "SizeTable":
        if path is None:
            text = resources.files("layoutsteer").joinpath("data/sizes.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        data = json.loads(text)
        sizes = {k: tuple(v) for k, v in data["sizes"].items()}
        return cls(sizes, tuple(data["default"]))


def keypoint_to_box(p: Keypoint, category: str, sizes: SizeTable) -> NormBox:
    """Box of the category's typical size centered on ``p``, clipped to the unit square."""
    width, height = sizes.lookup(category)
    x0, x1 = max(0.0, p.x - height / 2), min(1.0, p.x + height / 2)
    y0, y1 = max(0.0, p.y - width / 2), min(1.0, p.y + width / 2)
    return NormBox(x0, y0, x1, y1)


def boxes_from_keypoints(scene: Scene, sizes: SizeTable | None = None) -> Scene:
    sizes = sizes or SizeTable.load()
    objects = []
    for obj in scene.objects:
        if isinstance(obj.geometry, Keypoint):
            obj = ObjectCondition(obj.category, keypoint_to_box(obj.geometry, obj.category, sizes))
        objects.append(obj)
    return Scene(scene.prompt, tuple(objects))


def _coords(value, n: int, where: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise SceneFormatError(f"{where}: expected a list of {n} numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SceneFormatError(f"{where}: {v!r} is not a finite number")
        out.append(float(v))
    return out


def scene_from_dict(data) -> Scene:
    if not isinstance(data, dict):
        raise SceneFormatError("top level: expected an object")
    unknown = set(data) - {"prompt", "objects"}
    if unknown:
        raise SceneFormatError(f"top level: unknown field(s) {sorted(unknown)}")
    prompt = data.get("prompt")
    if not isinstance(prompt, str):
        raise SceneFormatError("prompt: expected a string")
    items = data.get("objects")
    if not isinstance(items, list) or not items:
        raise SceneFormatError("objects: expected a non-empty list")
    objects = []
    for i, item in enumerate(items):
        where = f"objects[{i}]"
        if not isinstance(item, dict):
            raise SceneFormatError(f"{where}: expected an object")
        cat = item.get("category")
        if not isinstance(cat, str) or not cat.strip():
            raise SceneFormatError(f"{where}.category: expected a non-empty string")
        kinds = set(item) - {"category"}
        if kinds == {"box"}:
            try:
                geom = NormBox(*_coords(item["box"], 4, f"{where}.box"))
            except ValueError as exc:
                if isinstance(exc, SceneFormatError):
                    raise
                raise SceneFormatError(f"{where}.box: {exc}") from None
        elif kinds == {"point"}:
            try:
                geom = Keypoint(*_coords(item["point"], 2, f"{where}.point"))
            except ValueError as exc:
                if isinstance(exc, SceneFormatError):
                    raise
                raise SceneFormatError(f"{where}.point: {exc}") from None
        else:
            raise SceneFormatError(
                f"{where}: geometry must be exactly one of 'box' or 'point', got {sorted(kinds)}"
            )
        objects.append(ObjectCondition(cat, geom))
    return Scene(prompt, tuple(objects))


def scene_to_dict(scene: Scene) -> dict:
    items = []
    for obj in scene.objects:
        g = obj.geometry
        if isinstance(g, NormBox):
            items.append({"category": obj.category, "box": g.as_list()})
        else:
            items.append({"category": obj.category, "point": [g.x, g.y]})
    return {"prompt": scene.prompt, "objects": items}


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), indent=2, ensure_ascii=False) + "\n"


def loads_scene(text: str) -> Scene:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scene_from_dict(data)


def load_scene(path) -> Scene:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SceneFormatError(f"{path}: not UTF-8 ({exc.reason})") from None
    try:
        return loads_scene(text)
    except SceneFormatError as exc:
        raise SceneFormatError(f"{path}: {exc}") from None


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dumps_scene(scene), encoding="utf-8")
