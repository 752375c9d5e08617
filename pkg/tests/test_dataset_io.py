import json

import numpy as np
import pytest

from descry.dataset_io import load_dataset, load_sequence, save_sequence
from descry.errors import LoadError
from descry.geometry import ImagePoint, format_calibration, look_at_camera
from descry.model import (
    BoundingBox,
    FrameRecord,
    GroundTruth,
    PersonCandidate,
    SemanticDescription,
    SequenceRecord,
    encode_mask,
)
from descry.vocab import default_vocabulary


def make_candidate(cid, x=0, y=0, w=4, h=10, score=0.9, scores=None):
    return PersonCandidate(
        candidate_id=cid,
        bbox=BoundingBox(x, y, w, h),
        mask=encode_mask(np.ones((h, w), dtype=bool)),
        detector_score=score,
        head=ImagePoint(x + w / 2, y + 0.5),
        feet=ImagePoint(x + w / 2, y + h - 0.5),
        attribute_scores=scores or {},
    )


def make_sequence(seq_id="seq01", n_frames=3, per_frame=2, difficulty="easy"):
    frames = []
    for idx in range(n_frames):
        cands = [
            make_candidate(f"c{j}", x=10 + 30 * j, y=20,
                           scores={"gender": (1.0, 0.0)})
            for j in range(per_frame)
        ]
        frames.append(FrameRecord(
            sequence_id=seq_id, frame_index=idx, camera_id="cam0",
            candidates=tuple(cands),
            ground_truth=GroundTruth(
                bbox=cands[0].bbox, head=cands[0].head, feet=cands[0].feet),
        ))
    return SequenceRecord(
        sequence_id=seq_id, camera_id="cam0", difficulty=difficulty,
        description=SemanticDescription(gender="male"), frames=tuple(frames),
    )


@pytest.fixture
def vocab():
    return default_vocabulary()


class TestSequenceRoundTrip:
    def test_fixture_round_trip(self, tmp_path, vocab):
        seq = make_sequence()
        save_sequence(tmp_path / "seq01", seq, vocab)
        loaded = load_sequence(tmp_path / "seq01", vocab)
        assert len(loaded.frames) == 3
        assert loaded.sequence_id == "seq01"
        assert loaded.difficulty == "easy"
        assert loaded.frames[0].candidates[0].attribute_scores["gender"] == (1.0, 0.0)
        assert loaded.frames[1].ground_truth.bbox == seq.frames[1].ground_truth.bbox
        assert loaded.description == seq.description

    def test_candidate_points_survive_round_trip(self, tmp_path, vocab):
        seq = make_sequence()
        save_sequence(tmp_path / "s", seq, vocab)
        loaded = load_sequence(tmp_path / "s", vocab)
        orig = seq.frames[0].candidates[0]
        back = loaded.frames[0].candidates[0]
        assert back.head == orig.head
        assert back.feet == orig.feet
        assert back.mask == orig.mask


def _mutate_jsonl(path, line_index, fn):
    lines = path.read_text().splitlines()
    record = json.loads(lines[line_index])
    fn(record)
    lines[line_index] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")


class TestLoadErrors:
    def test_mask_size_mismatch_names_candidate(self, tmp_path, vocab):
        save_sequence(tmp_path / "s", make_sequence(), vocab)
        _mutate_jsonl(tmp_path / "s" / "detections.jsonl", 1,
                      lambda rec: rec.update(mask=[rec["bbox"][2] * rec["bbox"][3] - 1]))
        with pytest.raises(LoadError, match="mask size mismatch"):
            load_sequence(tmp_path / "s", vocab)

    def test_dangling_ground_truth(self, tmp_path, vocab):
        save_sequence(tmp_path / "s", make_sequence(), vocab)
        _mutate_jsonl(tmp_path / "s" / "annotations.jsonl", 1,
                      lambda rec: rec.update(frame_index=99))
        with pytest.raises(LoadError, match="dangling ground truth"):
            load_sequence(tmp_path / "s", vocab)

    def test_duplicate_candidate_id(self, tmp_path, vocab):
        save_sequence(tmp_path / "s", make_sequence(), vocab)
        _mutate_jsonl(tmp_path / "s" / "detections.jsonl", 2,
                      lambda rec: rec.update(candidate_id="c0"))
        with pytest.raises(LoadError, match="duplicate candidate"):
            load_sequence(tmp_path / "s", vocab)

    def test_out_of_range_frame_index(self, tmp_path, vocab):
        save_sequence(tmp_path / "s", make_sequence(), vocab)
        _mutate_jsonl(tmp_path / "s" / "detections.jsonl", 1,
                      lambda rec: rec.update(frame_index=50))
        with pytest.raises(LoadError, match="outside sequence range"):
            load_sequence(tmp_path / "s", vocab)

    def test_vocabulary_hash_mismatch_is_hard_error(self, tmp_path, vocab):
        save_sequence(tmp_path / "s", make_sequence(), vocab)
        scores = tmp_path / "s" / "scores.jsonl"
        _mutate_jsonl(scores, 0, lambda rec: rec.update(vocabulary_hash="deadbeef"))
        with pytest.raises(LoadError, match="vocabulary hash mismatch"):
            load_sequence(tmp_path / "s", vocab)

    def test_sequence_id_mismatch(self, tmp_path, vocab):
        save_sequence(tmp_path / "s", make_sequence(), vocab)
        _mutate_jsonl(tmp_path / "s" / "detections.jsonl", 0,
                      lambda rec: rec.update(sequence_id="other"))
        with pytest.raises(LoadError, match="sequence_id mismatch"):
            load_sequence(tmp_path / "s", vocab)

    def test_error_carries_line_number(self, tmp_path, vocab):
        save_sequence(tmp_path / "s", make_sequence(), vocab)
        _mutate_jsonl(tmp_path / "s" / "detections.jsonl", 3,
                      lambda rec: rec.update(bbox=[0, 0, -4, 10]))
        with pytest.raises(LoadError, match="detections.jsonl:4"):
            load_sequence(tmp_path / "s", vocab)


class TestDatasetLoading:
    def test_load_dataset_with_cameras(self, tmp_path, vocab):
        cam = look_at_camera([0, -2, 3], [0, 8, 0], camera_id="cam0")
        (tmp_path / "cameras").mkdir()
        (tmp_path / "cameras" / "cam0.calib").write_text(format_calibration(cam))
        for i in range(2):
            save_sequence(tmp_path / "sequences" / f"seq{i}",
                          make_sequence(seq_id=f"seq{i}"), vocab)
        ds = load_dataset(tmp_path)
        assert set(ds.cameras) == {"cam0"}
        assert [s.sequence_id for s in ds.sequences] == ["seq0", "seq1"]
        assert ds.vocabulary.hash() == vocab.hash()

    def test_unknown_camera_rejected(self, tmp_path, vocab):
        save_sequence(tmp_path / "sequences" / "seq0", make_sequence(), vocab)
        with pytest.raises(LoadError, match="unknown camera"):
            load_dataset(tmp_path)
