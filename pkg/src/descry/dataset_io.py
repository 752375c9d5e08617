"""Line-delimited dataset file schemas and the validating loaders.

A sequence directory contains:

    sequence.json       sequence id, camera id, difficulty, frame range
    detections.jsonl    header line, then one candidate record per line
    annotations.jsonl   header line, then one ground-truth record per line
    description.json    the semantic query
    scores.jsonl        optional precomputed attribute scores
    frames/             optional raster imagery, one file per frame index

A dataset root holds ``cameras/<camera_id>.calib``, an optional
``vocabulary.json`` and ``sequences/<sequence_id>/`` directories.

Every JSONL file starts with a header object carrying ``schema`` and
``version``. Loaders validate all record invariants at read time and report
violations with a file/line locus. Bounding boxes and masks use integer
pixels; head/feet points are decimals (they are sub-pixel centroids).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LoadError
from .geometry import ImagePoint, load_calibration
from .model import (
    BoundingBox,
    FrameRecord,
    GroundTruth,
    InstanceMask,
    PersonCandidate,
    SequenceRecord,
    parse_description,
)
from .vocab import AttributeVocabulary, default_vocabulary, load_vocabulary

SCHEMA_VERSION = 1


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise LoadError("file not found", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"invalid JSON: {exc}", path=str(path)) from exc


def _read_jsonl(path):
    """Yield (line_number, record) pairs; line 1 must be the header."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise LoadError("file not found", path=str(path)) from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                yield lineno, json.loads(raw)
            except json.JSONDecodeError as exc:
                raise LoadError(f"invalid JSON: {exc}", path=str(path), line=lineno) from exc


def _check_header(obj, schema, path):
    if not isinstance(obj, dict) or obj.get("schema") != schema:
        raise LoadError(f"expected '{schema}' header", path=str(path), line=1)
    if obj.get("version") != SCHEMA_VERSION:
        raise LoadError(
            f"unsupported {schema} version {obj.get('version')!r}", path=str(path), line=1
        )
    return obj


def _int_list(value, n, what, path, lineno):
    if (not isinstance(value, list) or len(value) != n
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise LoadError(f"{what} must be a list of {n} integers", path=str(path), line=lineno)
    return value


def _point(value, what, path, lineno):
    if not isinstance(value, list) or len(value) != 2:
        raise LoadError(f"{what} must be [u, v]", path=str(path), line=lineno)
    try:
        return ImagePoint(float(value[0]), float(value[1]))
    except (TypeError, ValueError):
        raise LoadError(f"{what} must be numeric", path=str(path), line=lineno) from None


@dataclass(frozen=True)
class SequencePaths:
    root: Path

    @property
    def meta(self):
        return self.root / "sequence.json"

    @property
    def detections(self):
        return self.root / "detections.jsonl"

    @property
    def annotations(self):
        return self.root / "annotations.jsonl"

    @property
    def description(self):
        return self.root / "description.json"

    @property
    def scores(self):
        return self.root / "scores.jsonl"

    @property
    def frames_dir(self):
        return self.root / "frames"

    def frame_image(self, frame_index: int):
        return self.frames_dir / f"{frame_index:06d}.png"


def load_sequence(seq_dir, vocabulary: AttributeVocabulary) -> SequenceRecord:
    """Load and fully validate one sequence directory."""
    paths = SequencePaths(Path(seq_dir))
    meta = _read_json(paths.meta)
    _check_header(meta, "sequence", paths.meta)
    try:
        sequence_id = meta["sequence_id"]
        camera_id = meta["camera_id"]
        difficulty = meta["difficulty"]
        first_frame = int(meta["first_frame"])
        frame_count = int(meta["frame_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"bad sequence metadata: {exc}", path=str(paths.meta)) from exc
    if frame_count < 1:
        raise LoadError("frame_count must be >= 1", path=str(paths.meta))
    frame_indices = range(first_frame, first_frame + frame_count)

    candidates: dict[int, list] = {idx: [] for idx in frame_indices}
    seen_ids: dict[int, set] = {idx: set() for idx in frame_indices}
    records = _read_jsonl(paths.detections)
    lineno, header = next(records)
    _check_header(header, "detections", paths.detections)
    if header.get("sequence_id") != sequence_id:
        raise LoadError(
            f"sequence_id mismatch: detections say {header.get('sequence_id')!r}, "
            f"metadata says {sequence_id!r}", path=str(paths.detections), line=1,
        )
    for lineno, rec in records:
        try:
            frame_index = rec["frame_index"]
            candidate_id = str(rec["candidate_id"])
            bbox_raw = rec["bbox"]
            score = float(rec["detector_score"])
            runs = rec["mask"]
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"bad detection record: {exc}",
                            path=str(paths.detections), line=lineno) from exc
        if frame_index not in candidates:
            raise LoadError(f"frame_index {frame_index} outside sequence range",
                            path=str(paths.detections), line=lineno)
        if candidate_id in seen_ids[frame_index]:
            raise LoadError(f"duplicate candidate '{candidate_id}' in frame {frame_index}",
                            path=str(paths.detections), line=lineno)
        bbox_vals = _int_list(bbox_raw, 4, "bbox", paths.detections, lineno)
        if not isinstance(runs, list):
            raise LoadError("mask must be a run-length list", path=str(paths.detections),
                            line=lineno)
        head = _point(rec["head"], "head", paths.detections, lineno) if rec.get("head") else None
        feet = _point(rec["feet"], "feet", paths.detections, lineno) if rec.get("feet") else None
        try:
            bbox = BoundingBox(*bbox_vals)
            mask = InstanceMask(width=bbox.width, height=bbox.height, runs=tuple(runs))
            candidate = PersonCandidate(
                candidate_id=candidate_id, bbox=bbox, mask=mask,
                detector_score=score, head=head, feet=feet,
            )
        except ValueError as exc:
            raise LoadError(str(exc), path=str(paths.detections), line=lineno) from exc
        candidates[frame_index].append(candidate)
        seen_ids[frame_index].add(candidate_id)

    ground_truth: dict[int, GroundTruth] = {}
    records = _read_jsonl(paths.annotations)
    lineno, header = next(records)
    _check_header(header, "annotations", paths.annotations)
    for lineno, rec in records:
        try:
            frame_index = rec["frame_index"]
            bbox_vals = _int_list(rec["bbox"], 4, "bbox", paths.annotations, lineno)
            head = _point(rec["head"], "head", paths.annotations, lineno)
            feet = _point(rec["feet"], "feet", paths.annotations, lineno)
        except KeyError as exc:
            raise LoadError(f"bad annotation record: missing {exc}",
                            path=str(paths.annotations), line=lineno) from exc
        if frame_index not in candidates:
            raise LoadError(f"dangling ground truth for frame {frame_index}",
                            path=str(paths.annotations), line=lineno)
        if frame_index in ground_truth:
            raise LoadError(f"duplicate ground truth for frame {frame_index}",
                            path=str(paths.annotations), line=lineno)
        try:
            ground_truth[frame_index] = GroundTruth(
                bbox=BoundingBox(*bbox_vals), head=head, feet=feet)
        except ValueError as exc:
            raise LoadError(str(exc), path=str(paths.annotations), line=lineno) from exc

    desc_doc = _read_json(paths.description)
    _check_header(desc_doc, "description", paths.description)
    try:
        description = parse_description(desc_doc.get("fields", {}), vocabulary)
    except Exception as exc:
        raise LoadError(str(exc), path=str(paths.description)) from exc

    if paths.scores.exists():
        score_map = _load_scores(paths.scores, sequence_id, vocabulary)
        for frame_index, per_candidate in score_map.items():
            if frame_index not in candidates:
                raise LoadError(f"scores reference unknown frame {frame_index}",
                                path=str(paths.scores))
            by_id = {c.candidate_id: i for i, c in enumerate(candidates[frame_index])}
            for candidate_id, fam_scores in per_candidate.items():
                if candidate_id not in by_id:
                    raise LoadError(
                        f"scores reference unknown candidate '{candidate_id}' "
                        f"in frame {frame_index}", path=str(paths.scores))
                i = by_id[candidate_id]
                candidates[frame_index][i] = candidates[frame_index][i].with_scores(fam_scores)

    frames = tuple(
        FrameRecord(
            sequence_id=sequence_id,
            frame_index=idx,
            camera_id=camera_id,
            candidates=tuple(candidates[idx]),
            ground_truth=ground_truth.get(idx),
        )
        for idx in frame_indices
    )
    try:
        return SequenceRecord(
            sequence_id=sequence_id, camera_id=camera_id, difficulty=difficulty,
            description=description, frames=frames,
        )
    except ValueError as exc:
        raise LoadError(str(exc), path=str(paths.meta)) from exc


def _load_scores(path, sequence_id, vocabulary):
    records = _read_jsonl(path)
    _, header = next(records)
    _check_header(header, "attribute_scores", path)
    if header.get("sequence_id") != sequence_id:
        raise LoadError(f"sequence_id mismatch in scores header", path=str(path), line=1)
    file_hash = header.get("vocabulary_hash")
    if file_hash != vocabulary.hash():
        raise LoadError(
            f"vocabulary hash mismatch: scores were generated for {file_hash!r}, "
            f"active vocabulary is {vocabulary.hash()!r}", path=str(path), line=1,
        )
    families = header.get("families", {})
    for family, labels in families.items():
        try:
            expected = list(vocabulary.family_labels(family))
        except KeyError as exc:
            raise LoadError(str(exc), path=str(path), line=1) from exc
        if list(labels) != expected:
            raise LoadError(f"label order mismatch for family '{family}'",
                            path=str(path), line=1)
    score_map: dict[int, dict[str, dict]] = {}
    for lineno, rec in records:
        try:
            frame_index = rec["frame_index"]
            candidate_id = str(rec["candidate_id"])
            family = rec["family"]
            scores = rec["scores"]
        except KeyError as exc:
            raise LoadError(f"bad score record: missing {exc}", path=str(path),
                            line=lineno) from exc
        if family not in families:
            raise LoadError(f"family '{family}' absent from header", path=str(path),
                            line=lineno)
        if len(scores) != len(families[family]):
            raise LoadError(
                f"score vector length {len(scores)} != {len(families[family])} "
                f"labels for '{family}'", path=str(path), line=lineno)
        score_map.setdefault(frame_index, {}).setdefault(candidate_id, {})[family] = tuple(
            float(s) for s in scores)
    return score_map


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


def save_sequence(seq_dir, sequence: SequenceRecord, vocabulary: AttributeVocabulary,
                  write_scores: bool = True) -> None:
    """Write a sequence directory in the documented formats."""
    paths = SequencePaths(Path(seq_dir))
    os.makedirs(paths.root, exist_ok=True)
    first = min(f.frame_index for f in sequence.frames)
    paths.meta.write_text(_dump({
        "schema": "sequence", "version": SCHEMA_VERSION,
        "sequence_id": sequence.sequence_id, "camera_id": sequence.camera_id,
        "difficulty": sequence.difficulty,
        "first_frame": first, "frame_count": len(sequence.frames),
    }) + "\n", encoding="utf-8")

    with open(paths.detections, "w", encoding="utf-8") as fh:
        fh.write(_dump({"schema": "detections", "version": SCHEMA_VERSION,
                        "sequence_id": sequence.sequence_id}) + "\n")
        for frame in sequence.frames:
            for c in frame.candidates:
                rec = {
                    "frame_index": frame.frame_index,
                    "candidate_id": c.candidate_id,
                    "bbox": c.bbox.as_list(),
                    "detector_score": c.detector_score,
                    "mask": list(c.mask.runs),
                }
                if c.head is not None:
                    rec["head"] = [c.head.u, c.head.v]
                if c.feet is not None:
                    rec["feet"] = [c.feet.u, c.feet.v]
                fh.write(_dump(rec) + "\n")

    with open(paths.annotations, "w", encoding="utf-8") as fh:
        fh.write(_dump({"schema": "annotations", "version": SCHEMA_VERSION,
                        "sequence_id": sequence.sequence_id}) + "\n")
        for frame in sequence.frames:
            gt = frame.ground_truth
            if gt is None:
                continue
            fh.write(_dump({
                "frame_index": frame.frame_index,
                "bbox": gt.bbox.as_list(),
                "head": [gt.head.u, gt.head.v],
                "feet": [gt.feet.u, gt.feet.v],
            }) + "\n")

    paths.description.write_text(_dump({
        "schema": "description", "version": SCHEMA_VERSION,
        "sequence_id": sequence.sequence_id,
        "fields": sequence.description.to_dict(),
    }) + "\n", encoding="utf-8")

    if write_scores:
        families = sorted({fam for f in sequence.frames for c in f.candidates
                           for fam in c.attribute_scores})
        if families:
            with open(paths.scores, "w", encoding="utf-8") as fh:
                fh.write(_dump({
                    "schema": "attribute_scores", "version": SCHEMA_VERSION,
                    "sequence_id": sequence.sequence_id,
                    "vocabulary_hash": vocabulary.hash(),
                    "families": {fam: list(vocabulary.family_labels(fam))
                                 for fam in families},
                }) + "\n")
                for frame in sequence.frames:
                    for c in frame.candidates:
                        for fam in families:
                            if fam not in c.attribute_scores:
                                continue
                            fh.write(_dump({
                                "frame_index": frame.frame_index,
                                "candidate_id": c.candidate_id,
                                "family": fam,
                                "scores": list(c.attribute_scores[fam]),
                            }) + "\n")


@dataclass(frozen=True)
class Dataset:
    root: Path
    vocabulary: AttributeVocabulary
    cameras: dict = field(default_factory=dict)
    sequences: tuple = ()

    def sequence(self, sequence_id: str) -> SequenceRecord:
        for seq in self.sequences:
            if seq.sequence_id == sequence_id:
                return seq
        raise KeyError(f"unknown sequence '{sequence_id}'")

    def sequence_paths(self, sequence_id: str) -> SequencePaths:
        return SequencePaths(Path(self.root) / "sequences" / sequence_id)


def load_dataset(root, vocabulary: AttributeVocabulary | None = None) -> Dataset:
    """Load a dataset root: cameras, vocabulary and all sequences."""
    root = Path(root)
    if vocabulary is None:
        vocab_path = root / "vocabulary.json"
        vocabulary = load_vocabulary(vocab_path) if vocab_path.exists() else default_vocabulary()
    cameras = {}
    cam_dir = root / "cameras"
    if cam_dir.is_dir():
        for path in sorted(cam_dir.glob("*.calib")):
            cam = load_calibration(path)
            cameras[cam.camera_id] = cam
    sequences = []
    seq_root = root / "sequences"
    if not seq_root.is_dir():
        raise LoadError("no sequences/ directory", path=str(root))
    for seq_dir in sorted(p for p in seq_root.iterdir() if p.is_dir()):
        seq = load_sequence(seq_dir, vocabulary)
        if seq.camera_id not in cameras:
            raise LoadError(f"sequence '{seq.sequence_id}' references unknown camera "
                            f"'{seq.camera_id}'", path=str(seq_dir / "sequence.json"))
        sequences.append(seq)
    if not sequences:
        raise LoadError("dataset contains no sequences", path=str(root))
    return Dataset(root=root, vocabulary=vocabulary, cameras=cameras,
                   sequences=tuple(sequences))
