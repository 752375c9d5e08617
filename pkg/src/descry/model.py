"""Query and detection record types: semantic descriptions, boxes,
run-length instance masks, per-frame candidates and sequences."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DescryError
from .geometry import ImagePoint
from .vocab import DIFFICULTIES, AttributeVocabulary


class DescriptionError(DescryError):
    """Semantic description failed validation against the vocabulary."""


# description field -> how its labels are validated
_FIELD_KINDS = {
    "height_class": "height",
    "torso_primary_color": "colors",
    "torso_secondary_color": "colors",
    "torso_type": "torso_types",
    "torso_pattern": "torso_patterns",
    "leg_primary_color": "colors",
    "leg_secondary_color": "colors",
    "leg_pattern": "leg_patterns",
    "gender": "genders",
}


@dataclass(frozen=True)
class SemanticDescription:
    height_class: str | None = None
    torso_primary_color: str | None = None
    torso_secondary_color: str | None = None
    torso_type: str | None = None
    torso_pattern: str | None = None
    leg_primary_color: str | None = None
    leg_secondary_color: str | None = None
    leg_pattern: str | None = None
    gender: str | None = None

    def present_fields(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    def to_dict(self) -> dict:
        return self.present_fields()


def parse_description(source, vocabulary: AttributeVocabulary) -> SemanticDescription:
    """Validate a structured description (dict or JSON text) against the vocabulary.

    Unknown fields and labels are rejected, never coerced; an all-empty
    description is rejected.
    """
    if isinstance(source, (str, bytes)):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as exc:
            raise DescriptionError(f"invalid JSON: {exc}") from exc
    if not isinstance(source, dict):
        raise DescriptionError("description must be a JSON object")
    values = {}
    for key, value in source.items():
        if key not in _FIELD_KINDS:
            raise DescriptionError(f"unknown field '{key}'")
        if value is None:
            continue
        if not isinstance(value, str):
            raise DescriptionError(f"field '{key}' must be a string label")
        kind = _FIELD_KINDS[key]
        if kind == "height":
            known = [hc.label for hc in vocabulary.height_classes]
            if value not in known:
                raise DescriptionError(f"unknown label '{value}' in height_classes")
        else:
            if value not in getattr(vocabulary, kind):
                raise DescriptionError(f"unknown label '{value}' in {kind}")
        values[key] = value
    if not values:
        raise DescriptionError("empty description")
    return SemanticDescription(**values)


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        for name in ("x", "y", "width", "height"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise ValueError(f"bbox {name} must be integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.width < 0 or self.height < 0:
            raise ValueError("bbox width/height must be non-negative")

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list:
        return [self.x, self.y, self.width, self.height]


@dataclass(frozen=True)
class InstanceMask:
    """Canonical run-length encoding, row-major, alternating runs starting
    with background. Only the leading background run may be zero-length."""

    width: int
    height: int
    runs: tuple

    def __post_init__(self):
        runs = tuple(int(r) for r in self.runs)
        object.__setattr__(self, "runs", runs)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("mask dimensions must be positive")
        if not runs:
            raise ValueError("empty run list")
        if any(r < 0 for r in runs):
            raise ValueError("negative run length")
        if any(r == 0 for r in runs[1:]):
            raise ValueError("non-canonical run list: zero-length run after the first")
        if sum(runs) != self.width * self.height:
            raise ValueError(
                f"mask size mismatch: runs sum to {sum(runs)}, "
                f"expected {self.width * self.height}"
            )

    @property
    def foreground_count(self) -> int:
        return sum(self.runs[1::2])


def encode_mask(bitmap: np.ndarray) -> InstanceMask:
    """Canonically RLE-encode a 2-D boolean bitmap (row-major)."""
    bitmap = np.asarray(bitmap)
    if bitmap.ndim != 2 or bitmap.size == 0:
        raise ValueError("bitmap must be 2-D with positive dimensions")
    flat = bitmap.reshape(-1).astype(bool)
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [flat.size]])
    lengths = (ends - starts).tolist()
    if flat[0]:
        lengths = [0] + lengths
    return InstanceMask(width=bitmap.shape[1], height=bitmap.shape[0], runs=tuple(lengths))


def decode_mask(mask: InstanceMask) -> np.ndarray:
    """Decode back to a 2-D boolean bitmap; inverse of encode_mask."""
    flat = np.zeros(mask.width * mask.height, dtype=bool)
    pos = 0
    value = False
    for run in mask.runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(mask.height, mask.width)


def _check_score_vector(scores) -> tuple:
    scores = tuple(float(s) for s in scores)
    for s in scores:
        if not math.isfinite(s) or not (0.0 <= s <= 1.0):
            raise ValueError(f"score {s!r} outside [0, 1]")
    return scores


@dataclass(frozen=True)
class PersonCandidate:
    candidate_id: str
    bbox: BoundingBox
    mask: InstanceMask
    detector_score: float
    head: ImagePoint | None = None
    feet: ImagePoint | None = None
    attribute_scores: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mask.width != self.bbox.width or self.mask.height != self.bbox.height:
            raise ValueError(
                f"candidate '{self.candidate_id}': mask {self.mask.width}x{self.mask.height} "
                f"does not match bbox {self.bbox.width}x{self.bbox.height}"
            )
        if not (0.0 <= self.detector_score <= 1.0):
            raise ValueError("detector_score must be in [0, 1]")
        if self.head is not None and self.feet is not None and self.head.v > self.feet.v:
            raise ValueError("head must not lie below feet in image coordinates")
        object.__setattr__(
            self,
            "attribute_scores",
            {fam: _check_score_vector(vec) for fam, vec in self.attribute_scores.items()},
        )

    def with_scores(self, extra: dict) -> "PersonCandidate":
        merged = dict(self.attribute_scores)
        merged.update(extra)
        return PersonCandidate(
            candidate_id=self.candidate_id,
            bbox=self.bbox,
            mask=self.mask,
            detector_score=self.detector_score,
            head=self.head,
            feet=self.feet,
            attribute_scores=merged,
        )


@dataclass(frozen=True)
class GroundTruth:
    bbox: BoundingBox
    head: ImagePoint
    feet: ImagePoint


@dataclass(frozen=True)
class FrameRecord:
    sequence_id: str
    frame_index: int
    camera_id: str
    candidates: tuple = ()
    ground_truth: GroundTruth | None = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        ids = [c.candidate_id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate candidate ids in frame {self.frame_index}")


@dataclass(frozen=True)
class SequenceRecord:
    sequence_id: str
    camera_id: str
    difficulty: str
    description: SemanticDescription
    frames: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise ValueError("sequence must contain at least one frame")
        if self.difficulty not in DIFFICULTIES:
            raise ValueError(f"unknown difficulty '{self.difficulty}'")
        indices = [f.frame_index for f in self.frames]
        if len(set(indices)) != len(indices):
            raise ValueError("duplicate frame indices in sequence")
