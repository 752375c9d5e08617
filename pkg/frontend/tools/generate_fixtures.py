"""Record real service responses as JSON fixtures for the console tests.

Run from the repository root:

    python3 frontend/tools/generate_fixtures.py

Regenerates frontend/tests/fixtures/*.json from a deterministic synthetic
dataset served by the actual API, so the console tests exercise genuine
trace payloads.
"""

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from descry.engine import Engine, EngineConfig
from descry.service import create_app
from descry.synth import SyntheticPerson, SyntheticSceneSpec, default_synth_camera, write_dataset
from descry.vocab import default_vocabulary

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def build_dataset(root: Path) -> None:
    camera = default_synth_camera()
    vocab = default_vocabulary()
    distinct = SyntheticSceneSpec(
        camera=camera,
        persons=(
            SyntheticPerson(x=-1.8, y=7.0, height=1.30, torso_color="red",
                            leg_color="black", gender="male"),
            SyntheticPerson(x=0.0, y=8.0, height=1.60, torso_color="green",
                            leg_color="white", gender="female",
                            torso_type="dress", torso_pattern="spot"),
            SyntheticPerson(x=1.8, y=9.0, height=1.97, torso_color="blue",
                            leg_color="yellow", gender="male",
                            torso_type="long-sleeve"),
        ),
        target=1,
        n_frames=2,
    )
    twins = SyntheticSceneSpec(
        camera=camera,
        persons=(
            SyntheticPerson(x=-1.5, y=8.0, height=1.60, torso_color="red",
                            leg_color="blue"),
            SyntheticPerson(x=1.5, y=8.0, height=1.62, torso_color="red",
                            leg_color="blue"),
        ),
        target=0,
        n_frames=1,
    )
    write_dataset(root, [(distinct, "distinct", "easy"), (twins, "twins", "medium")],
                  vocab, render_images=True)


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "ds"
        build_dataset(root)
        engine = Engine.from_paths(root, EngineConfig(skip_initial_frames=0))
        client = TestClient(create_app(engine))

        def save(name, payload):
            (FIXTURES / name).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n",
                encoding="utf-8")

        save("vocabulary.json", client.get("/api/vocabulary").json())
        save("sequences.json", client.get("/api/sequences").json())
        save("frame.json", client.get("/api/sequences/distinct/frames/0").json())

        retrieved = client.post("/api/query", json={
            "sequence_id": "distinct",
            "description": {"height_class": "average", "torso_primary_color": "green",
                            "torso_type": "dress", "torso_pattern": "spot",
                            "leg_primary_color": "white", "gender": "female"},
        })
        assert retrieved.status_code == 200, retrieved.text
        save("query_retrieved.json", retrieved.json())

        ambiguous = client.post("/api/query", json={
            "sequence_id": "twins",
            "description": {"height_class": "average", "torso_primary_color": "red",
                            "leg_primary_color": "blue", "gender": "male"},
        })
        assert ambiguous.status_code == 200, ambiguous.text
        body = ambiguous.json()
        assert body["results"][0]["trace"]["terminal"]["status"] == "ambiguous", body
        save("query_ambiguous.json", body)

        fallback = client.post("/api/query", json={
            "sequence_id": "twins",
            "description": {"height_class": "average", "torso_primary_color": "pink"},
        })
        assert fallback.status_code == 200, fallback.text
        body = fallback.json()
        assert body["results"][0]["trace"]["terminal"]["fallback"], body
        save("query_fallback.json", body)

        invalid = client.post("/api/query", json={
            "sequence_id": "distinct",
            "description": {"torso_primary_color": "crimson"},
        })
        assert invalid.status_code == 422
        save("query_invalid_422.json", invalid.json())
    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
