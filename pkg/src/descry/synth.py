"""Synthetic scene generation: rectangle "persons" placed on the ground
plane and projected through a calibrated camera, with pixel-perfect masks,
analytic head/feet points, ground truth and one-hot oracle attribute scores.

These scenes are the end-to-end oracle: the described person's box is known
exactly, so a correct cascade must score IoU 1.0 against the emitted ground
truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset_io import SCHEMA_VERSION, SequencePaths, save_sequence
from .errors import DescryError
from .evaluation import iou
from .geometry import CameraModel, ImagePoint, WorldPoint, format_calibration, project
from .model import (
    BoundingBox,
    FrameRecord,
    GroundTruth,
    InstanceMask,
    PersonCandidate,
    SemanticDescription,
    SequenceRecord,
)
from .vocab import DIFFICULTIES, AttributeVocabulary, default_vocabulary, save_vocabulary

# rendering colors for the shipped vocabulary labels
COLOR_RGB = {
    "black": (20, 20, 20),
    "white": (245, 245, 245),
    "grey": (128, 128, 128),
    "red": (220, 30, 30),
    "orange": (255, 140, 0),
    "yellow": (235, 220, 40),
    "green": (40, 180, 40),
    "blue": (40, 70, 220),
    "purple": (140, 40, 200),
    "pink": (250, 110, 180),
    "brown": (139, 69, 19),
    "beige": (222, 184, 135),
    "multicolour": (220, 30, 30),  # rendered as red/blue halves
}
SKIN_RGB = (224, 172, 105)
BACKGROUND_RGB = (70, 75, 80)

ATTR_FAMILIES = ("torso_color", "torso_type", "torso_pattern",
                 "leg_color", "leg_pattern", "gender")


class SceneSpecError(DescryError):
    """Synthetic scene specification violates its invariants."""


@dataclass(frozen=True)
class SyntheticPerson:
    x: float
    y: float
    height: float
    torso_color: str
    leg_color: str
    torso_type: str = "jacket"
    torso_pattern: str = "solid"
    leg_pattern: str = "solid"
    gender: str = "male"
    width: float = 0.5
    velocity: tuple = (0.0, 0.0)

    def attributes(self) -> dict:
        return {
            "torso_color": self.torso_color,
            "torso_type": self.torso_type,
            "torso_pattern": self.torso_pattern,
            "leg_color": self.leg_color,
            "leg_pattern": self.leg_pattern,
            "gender": self.gender,
        }

    def at_frame(self, k: int) -> "SyntheticPerson":
        vx, vy = self.velocity
        return replace(self, x=self.x + k * vx, y=self.y + k * vy)


@dataclass(frozen=True)
class SyntheticSceneSpec:
    camera: CameraModel
    persons: tuple
    target: int = 0
    n_frames: int = 1
    first_frame: int = 0
    noise_px: float = 0.0
    seed: int = 0
    max_occlusion: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "persons", tuple(self.persons))
        if not self.persons:
            raise SceneSpecError("scene needs at least one person")
        if not (0 <= self.target < len(self.persons)):
            raise SceneSpecError(f"target index {self.target} out of range")
        if self.n_frames < 1:
            raise SceneSpecError("n_frames must be >= 1")
        if self.noise_px < 0:
            raise SceneSpecError("noise_px must be non-negative")
        for i, person in enumerate(self.persons):
            if not (0.5 <= person.height <= 2.5):
                raise SceneSpecError(
                    f"person {i} height {person.height} outside [0.5, 2.5] m")


def _person_geometry(camera: CameraModel, person: SyntheticPerson):
    """(bbox, head, feet) for one person at one position; pixel-perfect box."""
    half = person.width / 2.0
    corners = [
        project(camera, WorldPoint(person.x + dx, person.y, f))
        for dx in (-half, half)
        for f in (0.0, person.height)
    ]
    us = [c.u for c in corners]
    vs = [c.v for c in corners]
    x0, x1 = int(math.floor(min(us))), int(math.ceil(max(us)))
    y0, y1 = int(math.floor(min(vs))), int(math.ceil(max(vs)))
    bbox = BoundingBox(x0, y0, max(x1 - x0, 1), max(y1 - y0, 1))
    head = project(camera, WorldPoint(person.x, person.y, person.height))
    feet = project(camera, WorldPoint(person.x, person.y, 0.0))
    return bbox, head, feet


def _full_mask(bbox: BoundingBox) -> InstanceMask:
    return InstanceMask(width=bbox.width, height=bbox.height,
                        runs=(0, bbox.width * bbox.height))


def _one_hot(vocabulary: AttributeVocabulary, family: str, label: str) -> tuple:
    labels = vocabulary.family_labels(family)
    if label not in labels:
        raise SceneSpecError(f"unknown {family} label '{label}'")
    return tuple(1.0 if l == label else 0.0 for l in labels)


def describe_person(person: SyntheticPerson,
                    vocabulary: AttributeVocabulary) -> SemanticDescription:
    return SemanticDescription(
        height_class=vocabulary.classify_height(person.height),
        torso_primary_color=person.torso_color,
        torso_type=person.torso_type,
        torso_pattern=person.torso_pattern,
        leg_primary_color=person.leg_color,
        leg_pattern=person.leg_pattern,
        gender=person.gender,
    )


def render_frame_image(camera: CameraModel, persons_with_boxes) -> np.ndarray:
    """Flat-background raster with each person drawn as head/torso/leg strips
    of their configured colors, using the same 20/50 band split the engine
    extracts."""
    img = np.zeros((camera.image_height, camera.image_width, 3), dtype=np.uint8)
    img[:] = BACKGROUND_RGB
    for person, bbox in persons_with_boxes:
        x0, y0 = max(bbox.x, 0), max(bbox.y, 0)
        x1 = min(bbox.x + bbox.width, camera.image_width)
        y1 = min(bbox.y + bbox.height, camera.image_height)
        if x0 >= x1 or y0 >= y1:
            continue
        torso_top = bbox.y + int(np.ceil(0.20 * bbox.height))
        torso_bot = bbox.y + int(np.ceil(0.50 * bbox.height))
        for row in range(y0, y1):
            if row < torso_top:
                color = SKIN_RGB
            elif row < torso_bot:
                color = COLOR_RGB.get(person.torso_color, (127, 127, 127))
            else:
                color = COLOR_RGB.get(person.leg_color, (127, 127, 127))
            if person.torso_color == "multicolour" and torso_top <= row < torso_bot:
                mid = (x0 + x1) // 2
                img[row, x0:mid] = (220, 30, 30)
                img[row, mid:x1] = (40, 70, 220)
            else:
                img[row, x0:x1] = color
    return img


def generate_sequence(spec: SyntheticSceneSpec, sequence_id: str,
                      difficulty: str = "easy",
                      vocabulary: AttributeVocabulary | None = None,
                      render_images: bool = True):
    """Build a fully-annotated SequenceRecord plus per-frame images.

    Returns (sequence, images) where images maps frame_index to an RGB array
    (empty when render_images is false).
    """
    vocabulary = vocabulary or default_vocabulary()
    camera = spec.camera
    rng = np.random.default_rng(spec.seed)
    frames = []
    images = {}
    for k in range(spec.n_frames):
        frame_index = spec.first_frame + k
        placed = [person.at_frame(k) for person in spec.persons]
        geoms = [_person_geometry(camera, p) for p in placed]
        for i, (bbox, _, _) in enumerate(geoms):
            if (bbox.x < 0 or bbox.y < 0
                    or bbox.x + bbox.width > camera.image_width
                    or bbox.y + bbox.height > camera.image_height):
                raise SceneSpecError(
                    f"person {i} leaves the image in frame {frame_index}")
        for i in range(len(geoms)):
            for j in range(i + 1, len(geoms)):
                overlap = iou(geoms[i][0], geoms[j][0])
                if overlap > spec.max_occlusion:
                    raise SceneSpecError(
                        f"persons {i} and {j} overlap with IoU {overlap:.2f} "
                        f"(> {spec.max_occlusion}) in frame {frame_index}")
        candidates = []
        for i, (person, (bbox, head, feet)) in enumerate(zip(placed, geoms)):
            if spec.noise_px > 0:
                head = ImagePoint(head.u + rng.normal(0, spec.noise_px),
                                  head.v + rng.normal(0, spec.noise_px))
                feet = ImagePoint(feet.u + rng.normal(0, spec.noise_px),
                                  feet.v + rng.normal(0, spec.noise_px))
            candidates.append(PersonCandidate(
                candidate_id=f"p{i}",
                bbox=bbox,
                mask=_full_mask(bbox),
                detector_score=round(0.9 + 0.0075 * (i % 10), 6),
                head=head,
                feet=feet,
                attribute_scores={
                    family: _one_hot(vocabulary, family, label)
                    for family, label in person.attributes().items()
                },
            ))
        target_bbox, target_head, target_feet = geoms[spec.target]
        frames.append(FrameRecord(
            sequence_id=sequence_id,
            frame_index=frame_index,
            camera_id=camera.camera_id,
            candidates=tuple(candidates),
            ground_truth=GroundTruth(bbox=target_bbox, head=target_head,
                                     feet=target_feet),
        ))
        if render_images:
            images[frame_index] = render_frame_image(
                camera, list(zip(placed, (g[0] for g in geoms))))
    sequence = SequenceRecord(
        sequence_id=sequence_id,
        camera_id=camera.camera_id,
        difficulty=difficulty,
        description=describe_person(spec.persons[spec.target], vocabulary),
        frames=tuple(frames),
    )
    return sequence, images


# height bands that stay clear of the default class boundaries even under
# slack widening and mild noise
_HEIGHT_BANDS = ((1.28, 1.42), (1.56, 1.64), (1.76, 1.84), (1.96, 2.12))


def random_scene_spec(rng, camera: CameraModel, n_persons: int | None = None,
                      n_frames: int = 1, first_frame: int = 0,
                      noise_px: float = 0.0,
                      vocabulary: AttributeVocabulary | None = None,
                      moving: bool = False) -> SyntheticSceneSpec:
    """A scene whose persons carry pairwise-distinct attributes, so every
    person is uniquely retrievable from their own description."""
    vocabulary = vocabulary or default_vocabulary()
    n = n_persons or int(rng.integers(2, 6))
    plain_colors = [c for c in vocabulary.colors if c != "multicolour"]
    torso = [plain_colors[i] for i in rng.permutation(len(plain_colors))[:n]]
    leg = [plain_colors[i] for i in rng.permutation(len(plain_colors))[:n]]
    persons = []
    xs = np.linspace(-2.2, 2.2, n) if n > 1 else np.array([0.0])
    for i in range(n):
        lo, hi = _HEIGHT_BANDS[int(rng.integers(0, len(_HEIGHT_BANDS)))]
        persons.append(SyntheticPerson(
            x=float(xs[i] + rng.uniform(-0.2, 0.2)),
            y=float(rng.uniform(6.0, 10.5)),
            height=float(rng.uniform(lo, hi)),
            torso_color=torso[i],
            leg_color=leg[i],
            torso_type=vocabulary.torso_types[i % len(vocabulary.torso_types)],
            torso_pattern=vocabulary.torso_patterns[i % len(vocabulary.torso_patterns)],
            leg_pattern=vocabulary.leg_patterns[(i + 3) % len(vocabulary.leg_patterns)],
            gender=vocabulary.genders[i % len(vocabulary.genders)],
            velocity=(0.0, float(rng.uniform(0.02, 0.06))) if moving else (0.0, 0.0),
        ))
    return SyntheticSceneSpec(
        camera=camera,
        persons=tuple(persons),
        target=int(rng.integers(0, n)),
        n_frames=n_frames,
        first_frame=first_frame,
        noise_px=noise_px,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def default_synth_camera(camera_id: str = "synth0") -> CameraModel:
    from .geometry import look_at_camera

    return look_at_camera([0.0, -2.0, 3.2], [0.0, 9.0, 0.8], focal=900.0,
                          image_size=(1280, 720), camera_id=camera_id)


def write_images(images: dict, frames_dir) -> None:
    from PIL import Image

    frames_dir = Path(frames_dir)
    frames_dir.mkdir(parents=True, exist_ok=True)
    for frame_index, array in sorted(images.items()):
        Image.fromarray(array, mode="RGB").save(frames_dir / f"{frame_index:06d}.png")


def write_dataset(out_root, scenes, vocabulary: AttributeVocabulary | None = None,
                  render_images: bool = True) -> Path:
    """Write a complete dataset: cameras, vocabulary, sequences and a ready
    config. ``scenes`` is an iterable of (spec, sequence_id, difficulty)."""
    vocabulary = vocabulary or default_vocabulary()
    out_root = Path(out_root)
    (out_root / "cameras").mkdir(parents=True, exist_ok=True)
    cameras = {}
    for spec, sequence_id, difficulty in scenes:
        cameras[spec.camera.camera_id] = spec.camera
        sequence, images = generate_sequence(
            spec, sequence_id, difficulty, vocabulary, render_images=render_images)
        seq_dir = out_root / "sequences" / sequence_id
        save_sequence(seq_dir, sequence, vocabulary)
        if images:
            write_images(images, SequencePaths(seq_dir).frames_dir)
    for camera_id, camera in sorted(cameras.items()):
        (out_root / "cameras" / f"{camera_id}.calib").write_text(
            format_calibration(camera))
    save_vocabulary(vocabulary, out_root / "vocabulary.json")
    config = {
        "backend": "precomputed",
        "skip_initial_frames": 0,
        "height_slack": 0.05,
        "threshold": 0.5,
        "vocabulary": "vocabulary.json",
    }
    (out_root / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out_root


def random_dataset(out_root, n_sequences: int = 5, seed: int = 0,
                   difficulty_split=None, n_frames: int = 3,
                   noise_px: float = 0.0, render_images: bool = True,
                   moving: bool = False) -> Path:
    """Generate a randomized oracle dataset of ``n_sequences`` sequences.

    ``difficulty_split`` maps difficulty label to sequence count and must sum
    to n_sequences; by default all sequences are labeled by crowd size.
    """
    rng = np.random.default_rng(seed)
    camera = default_synth_camera()
    difficulties = []
    if difficulty_split:
        for label, count in difficulty_split.items():
            if label not in DIFFICULTIES:
                raise SceneSpecError(f"unknown difficulty '{label}'")
            difficulties.extend([label] * count)
        if len(difficulties) != n_sequences:
            raise SceneSpecError("difficulty split does not sum to sequence count")
    scenes = []
    for i in range(n_sequences):
        spec = random_scene_spec(rng, camera, n_frames=n_frames,
                                 noise_px=noise_px, moving=moving)
        if difficulties:
            difficulty = difficulties[i]
        else:
            difficulty = DIFFICULTIES[min(len(spec.persons) - 1, 3)]
        scenes.append((spec, f"seq{i:03d}", difficulty))
    return write_dataset(out_root, scenes, render_images=render_images)


def _person_from_dict(data: dict) -> SyntheticPerson:
    try:
        return SyntheticPerson(
            x=float(data["x"]), y=float(data["y"]), height=float(data["height"]),
            torso_color=data["torso_color"], leg_color=data["leg_color"],
            torso_type=data.get("torso_type", "jacket"),
            torso_pattern=data.get("torso_pattern", "solid"),
            leg_pattern=data.get("leg_pattern", "solid"),
            gender=data.get("gender", "male"),
            width=float(data.get("width", 0.5)),
            velocity=tuple(data.get("velocity", (0.0, 0.0))),
        )
    except KeyError as exc:
        raise SceneSpecError(f"person record missing {exc}") from exc


def load_scene_file(path) -> list:
    """Parse a scene spec document into (spec, sequence_id, difficulty) tuples.

    The document holds a camera (calibration field dict) and a list of
    sequences, each with persons, target, frame count, noise and seed.
    """
    from .geometry import parse_calibration

    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneSpecError(f"{path}: invalid JSON: {exc}") from exc
    if doc.get("schema") != "synthetic_dataset" or doc.get("version") != SCHEMA_VERSION:
        raise SceneSpecError(f"{path}: expected a synthetic_dataset/v1 document")
    camera_doc = doc.get("camera")
    if isinstance(camera_doc, str):
        camera = parse_calibration((path.parent / camera_doc).read_text(),
                                   path=camera_doc)
    elif isinstance(camera_doc, dict):
        text = "\n".join(f"{k}: {v if not isinstance(v, list) else ' '.join(map(str, v))}"
                         for k, v in camera_doc.items())
        camera = parse_calibration(text, path=f"{path}#camera")
    else:
        camera = default_synth_camera()
    scenes = []
    for i, seq_doc in enumerate(doc.get("sequences", [])):
        spec = SyntheticSceneSpec(
            camera=camera,
            persons=tuple(_person_from_dict(p) for p in seq_doc.get("persons", [])),
            target=int(seq_doc.get("target", 0)),
            n_frames=int(seq_doc.get("n_frames", 1)),
            first_frame=int(seq_doc.get("first_frame", 0)),
            noise_px=float(seq_doc.get("noise_px", 0.0)),
            seed=int(seq_doc.get("seed", i)),
        )
        scenes.append((spec, seq_doc.get("sequence_id", f"seq{i:03d}"),
                       seq_doc.get("difficulty", "easy")))
    if not scenes:
        raise SceneSpecError(f"{path}: no sequences in scene file")
    return scenes
