"""Command-line entry points: retrieve, eval, height-debug, augment, synth
and serve. ``eval`` writes the text report, the delimited series and the
rendered figures side by side in the output directory."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .dataset_io import SCHEMA_VERSION, _read_jsonl
from .engine import Engine, EngineConfig, load_config
from .errors import DescryError
from .evaluation import (
    render_difficulty_csv,
    render_frames_csv,
    render_sequences_csv,
    render_text,
)
from .model import parse_description
from .regions import AugmentConfig, augment_patch_named, load_patch_image, save_patch_image
from .synth import load_scene_file, random_dataset, write_dataset
from .vocab import DIFFICULTIES

DEFAULT_PORT = 8008


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="descry",
        description="Person retrieval from semantic descriptions in calibrated "
                    "surveillance video.")
    parser.add_argument("--config", help="engine config JSON")
    parser.add_argument("--vocab", help="vocabulary JSON (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override for synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrieve", help="run the cascade over one sequence")
    p.add_argument("--dataset", default=os.environ.get("DESCRY_DATASET_ROOT"),
                   required="DESCRY_DATASET_ROOT" not in os.environ)
    p.add_argument("--sequence", required=True)
    p.add_argument("--description", help="description JSON file "
                                         "(defaults to the sequence's own)")
    p.add_argument("--out", help="output JSONL (default stdout)")

    p = sub.add_parser("eval", help="evaluate the whole dataset and write reports")
    p.add_argument("--dataset", default=os.environ.get("DESCRY_DATASET_ROOT"),
                   required="DESCRY_DATASET_ROOT" not in os.environ)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("height-debug", help="per-candidate height estimates")
    p.add_argument("--dataset", default=os.environ.get("DESCRY_DATASET_ROOT"),
                   required="DESCRY_DATASET_ROOT" not in os.environ)
    p.add_argument("--sequence", required=True)
    p.add_argument("--frame", type=int, help="single frame index")

    p = sub.add_parser("augment", help="expand a patch directory")
    p.add_argument("--input", required=True, help="directory with manifest.jsonl")
    p.add_argument("--output", required=True)
    p.add_argument("--augment-config", help="JSON with angles/gamma/flips/resample")

    p = sub.add_parser("synth", help="generate a synthetic oracle dataset")
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--spec", help="synthetic_dataset JSON document")
    group.add_argument("--sequences", type=int, default=5,
                       help="number of random sequences")
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0, help="pixel std-dev")
    p.add_argument("--difficulty-split",
                   help="counts for very_easy,easy,medium,hard (e.g. 6,13,12,10)")
    p.add_argument("--no-images", action="store_true")
    p.add_argument("--moving", action="store_true")

    p = sub.add_parser("serve", help="HTTP service for the operator console")
    p.add_argument("--dataset", default=os.environ.get("DESCRY_DATASET_ROOT"),
                   required="DESCRY_DATASET_ROOT" not in os.environ)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("DESCRY_PORT", DEFAULT_PORT)))
    p.add_argument("--cors-origin", action="append", default=None)
    return parser


def _engine_config(args) -> EngineConfig:
    config = load_config(args.config) if args.config else EngineConfig()
    overrides = {}
    if args.vocab:
        overrides["vocabulary"] = args.vocab
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        data = config.to_dict()
        data.update(overrides)
        from .engine import config_from_dict

        config = config_from_dict(data)
    return config


def _load_engine(args) -> Engine:
    return Engine.from_paths(args.dataset, _engine_config(args))


def cmd_retrieve(args) -> int:
    engine = _load_engine(args)
    try:
        seq = engine.dataset.sequence(args.sequence)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    description = None
    if args.description:
        doc = json.loads(Path(args.description).read_text(encoding="utf-8"))
        description = parse_description(doc.get("fields", doc), engine.vocabulary)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    failures = 0
    try:
        header = {"schema": "retrieval_results", "version": SCHEMA_VERSION,
                  "sequence_id": seq.sequence_id,
                  "config_digest": engine.config.digest(),
                  "vocabulary_hash": engine.vocabulary.hash()}
        out.write(json.dumps(header, sort_keys=True) + "\n")
        for frame in seq.frames:
            try:
                result = engine.run_frame(seq, frame, description)
            except DescryError as exc:
                failures += 1
                out.write(json.dumps({"frame_index": frame.frame_index,
                                      "error": str(exc)}, sort_keys=True) + "\n")
                continue
            out.write(result.to_json() + "\n")
    finally:
        if args.out:
            out.close()
    return 2 if failures else 0


def cmd_eval(args) -> int:
    engine = _load_engine(args)
    report, _ = engine.evaluate()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.txt").write_text(render_text(report), encoding="utf-8")
    (outdir / "sequences.csv").write_text(render_sequences_csv(report), encoding="utf-8")
    (outdir / "difficulty.csv").write_text(render_difficulty_csv(report), encoding="utf-8")
    (outdir / "frames.csv").write_text(render_frames_csv(report), encoding="utf-8")
    if not args.no_figures:
        from .figures import write_report_figures

        write_report_figures(report, outdir / "figures")
    print(render_text(report), end="")
    return 0


def cmd_height_debug(args) -> int:
    engine = _load_engine(args)
    try:
        seq = engine.dataset.sequence(args.sequence)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    from .cascade import candidate_height

    camera = engine.camera_for(seq)
    bias = engine.bias_table.for_camera(seq.camera_id)
    print(f"{'frame':>6} {'candidate':<12} {'measured':>10} {'corrected':>10}  note")
    for frame in seq.frames:
        if args.frame is not None and frame.frame_index != args.frame:
            continue
        for cand in frame.candidates:
            try:
                measured, corrected = candidate_height(cand, camera, bias)
                print(f"{frame.frame_index:>6} {cand.candidate_id:<12} "
                      f"{measured:>10.4f} {corrected:>10.4f}")
            except DescryError as exc:
                print(f"{frame.frame_index:>6} {cand.candidate_id:<12} "
                      f"{'-':>10} {'-':>10}  {exc}")
    return 0


def _load_augment_config(path) -> AugmentConfig:
    if not path:
        return AugmentConfig()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return AugmentConfig(
        angles=tuple(data.get("angles", AugmentConfig.angles)),
        gamma=float(data.get("gamma", AugmentConfig.gamma)),
        horizontal_flip=bool(data.get("horizontal_flip", True)),
        vertical_flip=bool(data.get("vertical_flip", True)),
        resample=data.get("resample", "bilinear"),
    )


def cmd_augment(args) -> int:
    indir = Path(args.input)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    config = _load_augment_config(args.augment_config)
    records = _read_jsonl(indir / "manifest.jsonl")
    _, header = next(records)
    if header.get("schema") != "patches":
        print("error: manifest must start with a 'patches' header", file=sys.stderr)
        return 1
    count_in = count_out = 0
    with open(outdir / "manifest.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": "patches", "version": SCHEMA_VERSION,
                             "augmented_from": str(indir)}, sort_keys=True) + "\n")
        for _, rec in records:
            source = rec["file"]
            patch = load_patch_image(indir / source)
            count_in += 1
            stem = Path(source).stem
            for name, out_patch in augment_patch_named(patch, config):
                out_name = f"{stem}__{name}.png"
                save_patch_image(out_patch, outdir / out_name)
                out_rec = dict(rec)
                out_rec.update(file=out_name, source=source, transform=name)
                fh.write(json.dumps(out_rec, sort_keys=True) + "\n")
                count_out += 1
    print(f"augmented {count_in} patches into {count_out} images "
          f"({config.outputs_per_patch()} per input)")
    return 0


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.spec:
        scenes = load_scene_file(args.spec)
        root = write_dataset(args.out, scenes, render_images=not args.no_images)
    else:
        split = None
        if args.difficulty_split:
            counts = [int(tok) for tok in args.difficulty_split.split(",")]
            if len(counts) != len(DIFFICULTIES):
                print(f"error: --difficulty-split needs {len(DIFFICULTIES)} counts",
                      file=sys.stderr)
                return 1
            split = dict(zip(DIFFICULTIES, counts))
            if sum(counts) != args.sequences:
                args.sequences = sum(counts)
        root = random_dataset(
            args.out, n_sequences=args.sequences, seed=seed,
            difficulty_split=split, n_frames=args.frames, noise_px=args.noise,
            render_images=not args.no_images, moving=args.moving)
    print(f"wrote synthetic dataset to {root}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    engine = _load_engine(args)
    app = create_app(engine, cors_origins=args.cors_origin or ("*",))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
    "height-debug": cmd_height_debug,
    "augment": cmd_augment,
    "synth": cmd_synth,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DescryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
