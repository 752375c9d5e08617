import json

import numpy as np
import pytest


from descry.engine import Engine, EngineConfig, config_from_dict, load_config
from descry.errors import LoadError
from descry.evaluation import render_report
from descry.geometry import estimate_height
from descry.synth import (
    SceneSpecError,
    SyntheticPerson,
    SyntheticSceneSpec,
    default_synth_camera,
    generate_sequence,
    random_dataset,
    write_dataset,
)
from descry.vocab import default_vocabulary

VOCAB = default_vocabulary()
CAMERA = default_synth_camera()


def person(x=0.0, y=8.0, height=1.60, torso="red", leg="blue", **kw):
    return SyntheticPerson(x=x, y=y, height=height, torso_color=torso,
                           leg_color=leg, **kw)


class TestSceneGeneration:
    def test_emitted_points_recover_height_exactly(self):
        spec = SyntheticSceneSpec(camera=CAMERA, persons=(person(height=1.70),))
        seq, _ = generate_sequence(spec, "s0", "easy", VOCAB, render_images=False)
        cand = seq.frames[0].candidates[0]
        got = estimate_height(CAMERA, cand.head, cand.feet)
        assert abs(got - 1.70) < 1e-6
        gt = seq.frames[0].ground_truth
        assert abs(estimate_height(CAMERA, gt.head, gt.feet) - 1.70) < 1e-6

    def test_ground_truth_is_target_box(self):
        spec = SyntheticSceneSpec(
            camera=CAMERA,
            persons=(person(x=-1.5, torso="red"), person(x=1.5, torso="green")),
            target=1)
        seq, _ = generate_sequence(spec, "s0", "easy", VOCAB, render_images=False)
        frame = seq.frames[0]
        assert frame.ground_truth.bbox == frame.candidates[1].bbox

    def test_mask_covers_whole_box(self):
        spec = SyntheticSceneSpec(camera=CAMERA, persons=(person(),))
        seq, _ = generate_sequence(spec, "s0", "easy", VOCAB, render_images=False)
        cand = seq.frames[0].candidates[0]
        assert cand.mask.foreground_count == cand.bbox.area

    def test_oracle_scores_are_one_hot(self):
        spec = SyntheticSceneSpec(camera=CAMERA, persons=(person(torso="purple"),))
        seq, _ = generate_sequence(spec, "s0", "easy", VOCAB, render_images=False)
        scores = seq.frames[0].candidates[0].attribute_scores["torso_color"]
        assert sum(scores) == 1.0
        assert scores[VOCAB.colors.index("purple")] == 1.0

    def test_rendered_bands_carry_configured_colors(self):
        spec = SyntheticSceneSpec(camera=CAMERA,
                                  persons=(person(torso="green", leg="black"),))
        seq, images = generate_sequence(spec, "s0", "easy", VOCAB)
        frame = seq.frames[0]
        img = images[frame.frame_index]
        bbox = frame.candidates[0].bbox
        torso_row = bbox.y + int(np.ceil(0.35 * bbox.height))
        leg_row = bbox.y + int(np.ceil(0.60 * bbox.height))
        assert tuple(img[torso_row, bbox.x + bbox.width // 2]) == (40, 180, 40)
        assert tuple(img[leg_row, bbox.x + bbox.width // 2]) == (20, 20, 20)

    def test_moving_person_advances(self):
        spec = SyntheticSceneSpec(
            camera=CAMERA, persons=(person(velocity=(0.0, 0.05)),), n_frames=4)
        seq, _ = generate_sequence(spec, "s0", "easy", VOCAB, render_images=False)
        heights_px = [f.candidates[0].bbox.height for f in seq.frames]
        assert heights_px[0] > heights_px[-1]  # walking away shrinks the box

    def test_height_bounds_enforced(self):
        with pytest.raises(SceneSpecError, match="outside"):
            SyntheticSceneSpec(camera=CAMERA, persons=(person(height=3.0),))

    def test_occlusion_limit_enforced(self):
        spec = SyntheticSceneSpec(
            camera=CAMERA,
            persons=(person(x=0.0), person(x=0.05, torso="green")))
        with pytest.raises(SceneSpecError, match="overlap"):
            generate_sequence(spec, "s0", "easy", VOCAB, render_images=False)

    def test_person_must_stay_in_frame(self):
        spec = SyntheticSceneSpec(camera=CAMERA, persons=(person(x=8.0),))
        with pytest.raises(SceneSpecError, match="leaves the image"):
            generate_sequence(spec, "s0", "easy", VOCAB, render_images=False)


class TestEngineEvaluation:
    def test_five_sequence_dataset_scores_one(self, tmp_path):
        root = random_dataset(tmp_path / "ds", n_sequences=5, seed=11,
                              n_frames=3, render_images=False)
        engine = Engine.from_paths(root, EngineConfig(skip_initial_frames=0))
        report, _ = engine.evaluate()
        assert report.dataset_average_iou == 1.0
        assert report.percent_over == 1.0

    def test_noise_does_not_break_retrieval(self, tmp_path):
        root = random_dataset(tmp_path / "ds", n_sequences=3, seed=3,
                              n_frames=3, noise_px=1.0, render_images=False)
        engine = Engine.from_paths(root, EngineConfig(skip_initial_frames=0))
        report, _ = engine.evaluate()
        assert report.dataset_average_iou == 1.0

    def test_corrupted_target_scores_drop_only_that_sequence(self, tmp_path):
        rng = np.random.default_rng(5)
        camera = default_synth_camera()
        # two same-height-class persons: color is the only separator, so
        # corrupting the target's color scores must lose the retrieval
        persons = (person(x=-1.5, height=1.60, torso="red", leg="black"),
                   person(x=1.5, height=1.62, torso="green", leg="white",
                          gender="female"))
        clean_spec = SyntheticSceneSpec(camera=camera, persons=persons, target=1)
        scenes = [(clean_spec, "seq000", "easy"),
                  (SyntheticSceneSpec(camera=camera, persons=persons, target=1),
                   "seq001", "easy")]
        root = write_dataset(tmp_path / "ds", scenes, VOCAB, render_images=False)

        # corrupt seq001: rewrite the target candidate's torso_color vector
        seq_dir = root / "sequences" / "seq001"
        lines = (seq_dir / "scores.jsonl").read_text().splitlines()
        out = []
        wrong = ["1.0" if c == "red" else "0.0" for c in VOCAB.colors]
        for line in lines:
            rec = json.loads(line)
            if rec.get("candidate_id") == "p1" and rec.get("family") == "torso_color":
                rec["scores"] = [float(v) for v in wrong]
            out.append(json.dumps(rec, sort_keys=True))
        (seq_dir / "scores.jsonl").write_text("\n".join(out) + "\n")

        engine = Engine.from_paths(root, EngineConfig(skip_initial_frames=0))
        report, _ = engine.evaluate()
        by_id = {s.sequence_id: s for s in report.summaries}
        assert by_id["seq000"].average_iou == 1.0
        assert by_id["seq001"].average_iou < 1.0

    def test_report_rendering_is_reproducible(self, tmp_path):
        root = random_dataset(tmp_path / "ds", n_sequences=3, seed=7,
                              n_frames=2, render_images=False)
        texts = []
        for _ in range(2):
            engine = Engine.from_paths(root, EngineConfig(skip_initial_frames=0))
            report, _ = engine.evaluate()
            texts.append(render_report(report, "text"))
        assert texts[0] == texts[1]

    def test_histogram_backend_end_to_end(self, tmp_path):
        # only color descriptors, scored from rendered imagery
        persons = (person(x=-1.8, height=1.30, torso="red", leg="blue"),
                   person(x=0.0, height=1.60, torso="green", leg="white"),
                   person(x=1.8, height=1.97, torso="blue", leg="yellow"))
        spec = SyntheticSceneSpec(camera=CAMERA, persons=persons, target=1)
        root = write_dataset(tmp_path / "ds", [(spec, "seq000", "easy")], VOCAB)
        engine = Engine.from_paths(
            root, EngineConfig(skip_initial_frames=0, backend="histogram"))
        report, results = engine.evaluate()
        assert report.dataset_average_iou == 1.0
        trace = results["seq000"][0].trace
        torso_stage = [s for s in trace.stages if s.name == "torso_color"][0]
        assert torso_stage.kind in ("applied", "skipped_early_exit")

    def test_difficulty_split_flows_to_report(self, tmp_path):
        root = random_dataset(
            tmp_path / "ds", n_sequences=6, seed=2, n_frames=1,
            difficulty_split={"very_easy": 2, "easy": 2, "medium": 1, "hard": 1},
            render_images=False)
        engine = Engine.from_paths(root, EngineConfig(skip_initial_frames=0))
        report, _ = engine.evaluate()
        sizes = {g.difficulty: g.sequence_count for g in report.difficulty_groups}
        assert sizes == {"very_easy": 2, "easy": 2, "medium": 1, "hard": 1}


class TestEngineConfig:
    def test_digest_stable_and_sensitive(self):
        a = EngineConfig()
        b = EngineConfig()
        c = EngineConfig(threshold=0.6)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()

    def test_unknown_field_rejected(self):
        with pytest.raises(LoadError, match="unknown config fields"):
            config_from_dict({"thresold": 0.5})

    def test_load_config_checks_vocabulary_exists(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"vocabulary": "nope.json"}))
        with pytest.raises(LoadError, match="vocabulary file not found"):
            load_config(cfg)

    def test_bias_table_from_config(self):
        config = EngineConfig(height_bias=0.05, height_bias_samples=20,
                              per_camera_bias={"cam0": (0.08, 12)})
        table = config.bias_table()
        assert table.for_camera("cam0").bias == 0.08
        assert table.for_camera("other").bias == 0.05

    def test_description_override_round_trip(self, tmp_path):
        root = random_dataset(tmp_path / "ds", n_sequences=1, seed=4,
                              n_frames=1, render_images=False)
        engine = Engine.from_paths(root, EngineConfig(skip_initial_frames=0))
        seq = engine.dataset.sequences[0]
        own = engine.run_sequence(seq)
        override = engine.run_sequence(seq, description=seq.description)
        assert {k: v.to_dict() for k, v in own.items()} == \
               {k: v.to_dict() for k, v in override.items()}
