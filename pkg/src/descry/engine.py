"""Engine configuration and the retrieval/evaluation orchestration shared by
the command line and the HTTP service (one code path for both)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import build_backend_registry
from .cascade import CascadeConfig, RetrievalResult, run_cascade
from .dataset_io import Dataset, load_dataset
from .errors import DescryError, LoadError
from .evaluation import EvalReport, evaluate_dataset, evaluate_sequence
from .geometry import BiasTable, HeightBias
from .model import SemanticDescription, SequenceRecord
from .regions import RegionBand
from .vocab import load_vocabulary


@dataclass(frozen=True)
class EngineConfig:
    vocabulary: str | None = None       # path, relative to the config file
    backend: str = "precomputed"
    threshold: float = 0.5
    thresholds: dict = field(default_factory=dict)
    height_slack: float = 0.05
    height_bias: float = 0.0
    height_bias_samples: int = 0
    per_camera_bias: dict = field(default_factory=dict)  # camera_id -> [bias, samples]
    skip_initial_frames: int = 30
    match_secondary_colors: bool = False
    torso_band: tuple = (0.20, 0.50)
    leg_band: tuple = (0.50, 0.70)
    band_anchor: str = "bbox"
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must be in [0, 1]")
        for name, value in self.thresholds.items():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"threshold for '{name}' outside [0, 1]")
        if self.skip_initial_frames < 0:
            raise ValueError("skip_initial_frames must be non-negative")

    def to_dict(self) -> dict:
        return {
            "vocabulary": self.vocabulary,
            "backend": self.backend,
            "threshold": self.threshold,
            "thresholds": dict(sorted(self.thresholds.items())),
            "height_slack": self.height_slack,
            "height_bias": self.height_bias,
            "height_bias_samples": self.height_bias_samples,
            "per_camera_bias": {k: list(v) for k, v in sorted(self.per_camera_bias.items())},
            "skip_initial_frames": self.skip_initial_frames,
            "match_secondary_colors": self.match_secondary_colors,
            "torso_band": list(self.torso_band),
            "leg_band": list(self.leg_band),
            "band_anchor": self.band_anchor,
            "seed": self.seed,
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def cascade_config(self) -> CascadeConfig:
        return CascadeConfig(
            threshold=self.threshold,
            thresholds=dict(self.thresholds),
            height_slack=self.height_slack,
            match_secondary_colors=self.match_secondary_colors,
            torso_band=RegionBand(*self.torso_band),
            leg_band=RegionBand(*self.leg_band),
            band_anchor=self.band_anchor,
        )

    def bias_table(self) -> BiasTable:
        return BiasTable(
            global_bias=HeightBias(self.height_bias, self.height_bias_samples),
            per_camera={cid: HeightBias(b, int(n))
                        for cid, (b, n) in self.per_camera_bias.items()},
        )


def config_from_dict(data: dict, base_dir=None) -> EngineConfig:
    known = {f for f in EngineConfig.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise LoadError(f"unknown config fields: {', '.join(sorted(unknown))}")
    kwargs = dict(data)
    if kwargs.get("torso_band"):
        kwargs["torso_band"] = tuple(kwargs["torso_band"])
    if kwargs.get("leg_band"):
        kwargs["leg_band"] = tuple(kwargs["leg_band"])
    if kwargs.get("per_camera_bias"):
        kwargs["per_camera_bias"] = {k: tuple(v) for k, v in kwargs["per_camera_bias"].items()}
    config = EngineConfig(**kwargs)
    if config.vocabulary and base_dir is not None:
        vocab_path = Path(base_dir) / config.vocabulary
        if not vocab_path.exists():
            raise LoadError(f"vocabulary file not found: {vocab_path}")
    return config


def load_config(path) -> EngineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise LoadError("config file not found", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"invalid JSON: {exc}", path=str(path)) from exc
    return config_from_dict(data, base_dir=path.parent)


def _load_frame_image(paths, frame_index: int):
    path = paths.frame_image(frame_index)
    if not path.exists():
        return None
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


class Engine:
    """Immutable-after-startup retrieval engine over a loaded dataset."""

    def __init__(self, dataset: Dataset, config: EngineConfig):
        self.dataset = dataset
        self.config = config
        self.vocabulary = dataset.vocabulary
        self.backends = build_backend_registry(self.vocabulary, config.backend)
        self.cascade_config = config.cascade_config()
        self.bias_table = config.bias_table()
        self._needs_images = any(getattr(b, "needs_patch", False)
                                 for b in self.backends.values())

    @classmethod
    def from_paths(cls, dataset_root, config: EngineConfig | None = None) -> "Engine":
        config = config or EngineConfig()
        vocabulary = None
        if config.vocabulary:
            vocab_path = Path(dataset_root) / config.vocabulary
            if not vocab_path.exists():
                vocab_path = Path(config.vocabulary)
            vocabulary = load_vocabulary(vocab_path)
        dataset = load_dataset(dataset_root, vocabulary)
        return cls(dataset, config)

    def camera_for(self, seq: SequenceRecord):
        try:
            return self.dataset.cameras[seq.camera_id]
        except KeyError:
            raise DescryError(f"no calibration for camera '{seq.camera_id}'") from None

    def run_frame(self, seq: SequenceRecord, frame,
                  description: SemanticDescription | None = None) -> RetrievalResult:
        image = None
        if self._needs_images:
            image = _load_frame_image(self.dataset.sequence_paths(seq.sequence_id),
                                      frame.frame_index)
        return run_cascade(
            frame,
            description or seq.description,
            self.camera_for(seq),
            self.bias_table.for_camera(seq.camera_id),
            self.backends,
            self.cascade_config,
            self.vocabulary,
            frame_image=image,
        )

    def run_sequence(self, seq: SequenceRecord,
                     description: SemanticDescription | None = None,
                     start: int | None = None, stop: int | None = None) -> dict:
        """frame_index -> RetrievalResult over [start, stop] (inclusive)."""
        results = {}
        for frame in seq.frames:
            if start is not None and frame.frame_index < start:
                continue
            if stop is not None and frame.frame_index > stop:
                continue
            results[frame.frame_index] = self.run_frame(seq, frame, description)
        return results

    def evaluate(self) -> tuple[EvalReport, dict]:
        """Run every sequence against its own description and aggregate."""
        summaries = []
        all_results = {}
        for seq in self.dataset.sequences:
            results = self.run_sequence(seq)
            all_results[seq.sequence_id] = results
            summaries.append(evaluate_sequence(
                seq, results, skip_initial_frames=self.config.skip_initial_frames))
        report = evaluate_dataset(
            summaries,
            vocabulary_hash=self.vocabulary.hash(),
            config_digest=self.config.digest(),
        )
        return report, all_results
