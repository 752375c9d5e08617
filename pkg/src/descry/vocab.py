"""Controlled attribute vocabularies and the height-class table.

The engine is vocabulary-agnostic: every label set is configuration, and a
hash of the active vocabulary is stamped into score files and reports so
drift is detected instead of silently tolerated.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .errors import LoadError

DIFFICULTIES = ("very_easy", "easy", "medium", "hard")

# attribute families the cascade understands, in no particular order here;
# the cascade module owns the stage ordering
FAMILY_NAMES = ("torso_color", "torso_type", "torso_pattern", "leg_color", "leg_pattern", "gender")


@dataclass(frozen=True)
class HeightClass:
    label: str
    min_m: float
    max_m: float  # math.inf for the open-ended top class


@dataclass(frozen=True)
class AttributeVocabulary:
    colors: tuple = ()
    torso_types: tuple = ()
    torso_patterns: tuple = ()
    leg_patterns: tuple = ()
    genders: tuple = ()
    height_classes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("colors", "torso_types", "torso_patterns", "leg_patterns", "genders"):
            labels = tuple(getattr(self, name))
            object.__setattr__(self, name, labels)
            if not labels:
                raise ValueError(f"{name} must be non-empty")
            if len(set(labels)) != len(labels):
                raise ValueError(f"duplicate labels in {name}")
        classes = tuple(
            hc if isinstance(hc, HeightClass) else HeightClass(*hc)
            for hc in self.height_classes
        )
        object.__setattr__(self, "height_classes", classes)
        if not classes:
            raise ValueError("height_classes must be non-empty")
        if len({hc.label for hc in classes}) != len(classes):
            raise ValueError("duplicate height class labels")
        if classes[0].min_m != 0:
            raise ValueError("height classes must start at 0")
        for prev, cur in zip(classes, classes[1:]):
            if cur.min_m != prev.max_m:
                raise ValueError("height classes must be sorted, non-overlapping and contiguous")
        if not math.isinf(classes[-1].max_m):
            raise ValueError("last height class must be open-ended")

    def family_labels(self, family: str) -> tuple:
        """Ordered label list for one attribute family."""
        try:
            return {
                "torso_color": self.colors,
                "torso_type": self.torso_types,
                "torso_pattern": self.torso_patterns,
                "leg_color": self.colors,
                "leg_pattern": self.leg_patterns,
                "gender": self.genders,
            }[family]
        except KeyError:
            raise KeyError(f"unknown attribute family '{family}'") from None

    def height_class(self, label: str) -> HeightClass:
        for hc in self.height_classes:
            if hc.label == label:
                return hc
        raise KeyError(f"unknown height class '{label}'")

    def classify_height(self, height_m: float) -> str:
        for hc in self.height_classes:
            if hc.min_m <= height_m < hc.max_m:
                return hc.label
        return self.height_classes[-1].label

    def to_dict(self) -> dict:
        return {
            "colors": list(self.colors),
            "torso_types": list(self.torso_types),
            "torso_patterns": list(self.torso_patterns),
            "leg_patterns": list(self.leg_patterns),
            "genders": list(self.genders),
            "height_classes": [
                {"label": hc.label, "min_m": hc.min_m,
                 "max_m": None if math.isinf(hc.max_m) else hc.max_m}
                for hc in self.height_classes
            ],
        }

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def default_vocabulary() -> AttributeVocabulary:
    patterns = ("solid", "horizontal-stripe", "vertical-stripe", "check",
                "plaid", "spot", "graphic", "other")
    return AttributeVocabulary(
        colors=("black", "white", "grey", "red", "orange", "yellow", "green",
                "blue", "purple", "pink", "brown", "beige", "multicolour"),
        torso_types=("short-sleeve", "long-sleeve", "jacket", "dress"),
        torso_patterns=patterns,
        leg_patterns=patterns,
        genders=("male", "female"),
        height_classes=(
            HeightClass("short", 0.0, 1.50),
            HeightClass("average", 1.50, 1.70),
            HeightClass("tall", 1.70, 1.90),
            HeightClass("very tall", 1.90, math.inf),
        ),
    )


def vocabulary_from_dict(data: dict, path: str = "<vocabulary>") -> AttributeVocabulary:
    try:
        classes = tuple(
            HeightClass(hc["label"], float(hc["min_m"]),
                        math.inf if hc.get("max_m") is None else float(hc["max_m"]))
            for hc in data["height_classes"]
        )
        return AttributeVocabulary(
            colors=tuple(data["colors"]),
            torso_types=tuple(data["torso_types"]),
            torso_patterns=tuple(data["torso_patterns"]),
            leg_patterns=tuple(data["leg_patterns"]),
            genders=tuple(data["genders"]),
            height_classes=classes,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"invalid vocabulary: {exc}", path=path) from exc


def load_vocabulary(path) -> AttributeVocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LoadError(f"invalid JSON: {exc}", path=str(path)) from exc
    return vocabulary_from_dict(data, path=str(path))


def save_vocabulary(vocab: AttributeVocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(vocab.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
