"""Read-only HTTP service over a preloaded dataset: the operator console's
backend. The engine is immutable after startup, so request handling needs no
locks and identical queries return identical bodies."""

from __future__ import annotations

from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, PlainTextResponse

from .engine import Engine
from .model import DescriptionError, parse_description


def create_app(engine: Engine, cors_origins=("*",)) -> FastAPI:
    app = FastAPI(title="descry", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    def get_sequence(sequence_id: str):
        try:
            return engine.dataset.sequence(sequence_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"unknown sequence '{sequence_id}'") from None

    @app.get("/api/sequences")
    def list_sequences():
        return {
            "sequences": [
                {
                    "sequence_id": seq.sequence_id,
                    "camera_id": seq.camera_id,
                    "difficulty": seq.difficulty,
                    "frame_count": len(seq.frames),
                    "first_frame": min(f.frame_index for f in seq.frames),
                    "description": seq.description.to_dict(),
                }
                for seq in engine.dataset.sequences
            ]
        }

    @app.get("/api/vocabulary")
    def vocabulary():
        vocab = engine.vocabulary
        return {
            "vocabulary": vocab.to_dict(),
            "hash": vocab.hash(),
            "families": {
                family: list(vocab.family_labels(family))
                for family in ("torso_color", "torso_type", "torso_pattern",
                               "leg_color", "leg_pattern", "gender")
            },
        }

    def find_frame(seq, frame_index: int):
        for frame in seq.frames:
            if frame.frame_index == frame_index:
                return frame
        raise HTTPException(status_code=404,
                            detail=f"unknown frame {frame_index} "
                                   f"in '{seq.sequence_id}'")

    @app.get("/api/sequences/{sequence_id}/frames/{frame_index}")
    def frame_detail(sequence_id: str, frame_index: int):
        seq = get_sequence(sequence_id)
        frame = find_frame(seq, frame_index)
        image_path = engine.dataset.sequence_paths(sequence_id).frame_image(frame_index)
        gt = frame.ground_truth
        return {
            "sequence_id": sequence_id,
            "frame_index": frame_index,
            "camera_id": frame.camera_id,
            "candidates": [
                {
                    "candidate_id": c.candidate_id,
                    "bbox": c.bbox.as_list(),
                    "detector_score": c.detector_score,
                }
                for c in frame.candidates
            ],
            "ground_truth": {"bbox": gt.bbox.as_list()} if gt else None,
            "image_url": (f"/api/sequences/{sequence_id}/frames/{frame_index}/image"
                          if image_path.exists() else None),
        }

    @app.get("/api/sequences/{sequence_id}/frames/{frame_index}/image")
    def frame_image(sequence_id: str, frame_index: int):
        seq = get_sequence(sequence_id)
        find_frame(seq, frame_index)
        path = engine.dataset.sequence_paths(sequence_id).frame_image(frame_index)
        if not path.exists():
            raise HTTPException(status_code=404, detail="no imagery for this frame")
        return FileResponse(path, media_type="image/png")

    @app.post("/api/query")
    def query(payload: dict = Body(...)):
        sequence_id = payload.get("sequence_id")
        if not isinstance(sequence_id, str):
            raise HTTPException(status_code=422, detail="sequence_id is required")
        seq = get_sequence(sequence_id)
        try:
            description = parse_description(payload.get("description", {}),
                                            engine.vocabulary)
        except DescriptionError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        start = payload.get("start_frame")
        stop = payload.get("end_frame")
        results = engine.run_sequence(seq, description=description,
                                      start=start, stop=stop)
        return {
            "sequence_id": sequence_id,
            "description": description.to_dict(),
            "results": [results[idx].to_dict() for idx in sorted(results)],
        }

    @app.get("/api/health", response_class=PlainTextResponse)
    def health():
        return "ok"

    return app
