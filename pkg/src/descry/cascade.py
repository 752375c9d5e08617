"""The ordered filter cascade: height, torso color/type/pattern, leg
color/pattern, gender.

Each stage narrows the surviving candidate set; a stage whose descriptor is
absent from the query is skipped, and the cascade exits early once a single
candidate remains after at least one applied stage. Candidates are only ever
removed by an explicit mismatch decision: whenever an attribute cannot be
evaluated (empty band, missing scores, degenerate geometry) the candidate is
kept and flagged (fail-open).

Gender doubles as a verifier: if it is reached with a single surviving
candidate, a mismatch flags the result instead of un-retrieving it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import DescryError
from .geometry import (
    BehindCameraError,
    CameraModel,
    DegenerateRayError,
    HeightBias,
    UndistortConvergenceError,
    UnobservableHeightError,
    corrected_height,
    estimate_height,
    undistort,
)
from .model import BoundingBox, FrameRecord, PersonCandidate, SemanticDescription
from .regions import (
    LEG_BAND,
    TORSO_BAND,
    EmptyBandError,
    EmptyMaskError,
    RegionBand,
    extract_patch,
    head_feet_points,
)
from .vocab import AttributeVocabulary, HeightClass

STAGE_ORDER = ("height", "torso_color", "torso_type", "torso_pattern",
               "leg_color", "leg_pattern", "gender")

# stage -> (primary description field, secondary description field)
_STAGE_FIELDS = {
    "height": ("height_class", None),
    "torso_color": ("torso_primary_color", "torso_secondary_color"),
    "torso_type": ("torso_type", None),
    "torso_pattern": ("torso_pattern", None),
    "leg_color": ("leg_primary_color", "leg_secondary_color"),
    "leg_pattern": ("leg_pattern", None),
    "gender": ("gender", None),
}

_HEIGHT_ERRORS = (BehindCameraError, DegenerateRayError, UnobservableHeightError,
                  UndistortConvergenceError, EmptyMaskError)


class CascadeError(DescryError):
    """Engine misconfiguration: missing backend or camera mismatch."""


@dataclass(frozen=True)
class FilterStage:
    name: str
    threshold: float = 0.5
    slack: float = 0.0

    def __post_init__(self):
        if self.name not in STAGE_ORDER:
            raise ValueError(f"unknown stage '{self.name}'")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must be in [0, 1]")
        if self.slack < 0:
            raise ValueError("slack must be non-negative")


@dataclass(frozen=True)
class CascadeConfig:
    threshold: float = 0.5
    thresholds: dict = field(default_factory=dict)  # per-stage overrides
    height_slack: float = 0.05
    match_secondary_colors: bool = False
    torso_band: RegionBand = TORSO_BAND
    leg_band: RegionBand = LEG_BAND
    band_anchor: str = "bbox"
    undistort_points: bool = True

    def stages(self) -> tuple:
        out = []
        for name in STAGE_ORDER:
            threshold = self.thresholds.get(name, self.threshold)
            slack = self.height_slack if name == "height" else 0.0
            out.append(FilterStage(name=name, threshold=threshold, slack=slack))
        return tuple(out)


@dataclass(frozen=True)
class StageDecision:
    candidate_id: str
    kept: bool
    reason: str
    flags: tuple = ()
    measured_height: float | None = None
    corrected_height: float | None = None
    score: float | None = None
    argmax_label: str | None = None
    matched_label: str | None = None

    def to_dict(self) -> dict:
        out = {"candidate_id": self.candidate_id, "kept": bool(self.kept),
               "reason": self.reason}
        if self.flags:
            out["flags"] = list(self.flags)
        for key in ("measured_height", "corrected_height", "score",
                    "argmax_label", "matched_label"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class StageTrace:
    name: str
    kind: str  # applied | verify | skipped_absent | skipped_early_exit
    input_ids: tuple = ()
    kept_ids: tuple = ()
    decisions: tuple = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "input": list(self.input_ids),
            "kept": list(self.kept_ids),
            "decisions": [d.to_dict() for d in self.decisions],
        }


@dataclass(frozen=True)
class CascadeTrace:
    stages: tuple = ()
    status: str = "none_retrieved"  # retrieved | ambiguous | none_retrieved
    retrieved_id: str | None = None
    ambiguous_ids: tuple = ()
    fallback: bool = False
    fallback_stage: str | None = None
    flags: tuple = ()
    match_scores: tuple = ()  # ((candidate_id, score), ...) over the choice set

    def to_dict(self) -> dict:
        return {
            "stages": [s.to_dict() for s in self.stages],
            "terminal": {
                "status": self.status,
                "retrieved": self.retrieved_id,
                "ambiguous": list(self.ambiguous_ids),
                "fallback": self.fallback,
                "fallback_stage": self.fallback_stage,
                "flags": list(self.flags),
                "match_scores": [[cid, score] for cid, score in self.match_scores],
            },
        }


@dataclass(frozen=True)
class RetrievalResult:
    sequence_id: str
    frame_index: int
    retrieved: str | None
    final_bbox: BoundingBox | None
    match_score: float
    trace: CascadeTrace

    def to_dict(self) -> dict:
        return {
            "sequence_id": self.sequence_id,
            "frame_index": self.frame_index,
            "retrieved": self.retrieved,
            "final_bbox": self.final_bbox.as_list() if self.final_bbox else None,
            "match_score": self.match_score,
            "trace": self.trace.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(", ", ": "))


def candidate_height(candidate: PersonCandidate, camera: CameraModel,
                     bias: HeightBias, undistort_points: bool = True) -> tuple[float, float]:
    """(measured, corrected) height for one candidate; raises on degenerate
    geometry. Head/feet come from the detection when present, else from the
    mask; they are undistorted before solving."""
    head, feet = candidate.head, candidate.feet
    if head is None or feet is None:
        head, feet = head_feet_points(candidate)
    if undistort_points:
        head = undistort(camera, head)
        feet = undistort(camera, feet)
    measured = estimate_height(camera, head, feet)
    return measured, corrected_height(measured, bias)


def filter_height(candidates, height_class: HeightClass, camera: CameraModel,
                  bias: HeightBias, slack: float, undistort_points: bool = True):
    """Keep candidates whose corrected height falls inside the class interval
    widened by ``slack``; unobservable heights are kept and flagged."""
    kept, decisions = [], []
    lo = height_class.min_m - slack
    hi = height_class.max_m + slack
    for cand in candidates:
        try:
            measured, corrected = candidate_height(
                cand, camera, bias, undistort_points=undistort_points)
        except _HEIGHT_ERRORS as exc:
            kept.append(cand)
            decisions.append(StageDecision(
                candidate_id=cand.candidate_id, kept=True,
                reason=f"height unobservable ({exc})",
                flags=("height_unobservable",),
            ))
            continue
        inside = lo <= corrected <= hi
        decisions.append(StageDecision(
            candidate_id=cand.candidate_id, kept=inside,
            reason=(f"corrected height {corrected:.3f} m "
                    f"{'inside' if inside else 'outside'} "
                    f"[{lo:.3f}, {hi:.3f}] ({height_class.label})"),
            measured_height=measured, corrected_height=corrected,
        ))
        if inside:
            kept.append(cand)
    return kept, decisions


def filter_attribute(candidates, family: str, query_labels, backend,
                     threshold: float, patch_for=None):
    """Keep candidates whose score vector argmax matches a queried label or
    whose queried-label score reaches the threshold; unavailable backends
    keep the candidate with a flag."""
    kept, decisions = [], []
    for cand in candidates:
        patch = patch_for(cand) if patch_for is not None else None
        vec = backend.score(cand, family, patch)
        if vec is None:
            kept.append(cand)
            decisions.append(StageDecision(
                candidate_id=cand.candidate_id, kept=True,
                reason=f"{family} unavailable", flags=("unavailable",),
            ))
            continue
        argmax = vec.argmax_label()
        best_label = max(query_labels, key=vec.score_for)
        best_score = vec.score_for(best_label)
        matched = argmax in query_labels or best_score >= threshold
        decisions.append(StageDecision(
            candidate_id=cand.candidate_id, kept=matched,
            reason=(f"{family}: query {'/'.join(query_labels)} score {best_score:.4f}, "
                    f"argmax '{argmax}'"),
            score=best_score, argmax_label=argmax,
            matched_label=best_label if matched else None,
        ))
        if matched:
            kept.append(cand)
    return kept, decisions


def _stage_queries(desc: SemanticDescription, config: CascadeConfig) -> dict:
    """stage name -> tuple of queried labels (empty when absent)."""
    queries = {}
    for name in STAGE_ORDER:
        primary_field, secondary_field = _STAGE_FIELDS[name]
        labels = []
        primary = getattr(desc, primary_field)
        if primary is not None:
            labels.append(primary)
        if secondary_field and config.match_secondary_colors:
            secondary = getattr(desc, secondary_field)
            if secondary is not None and secondary not in labels:
                labels.append(secondary)
        queries[name] = tuple(labels)
    return queries


class _PatchCache:
    """Lazy per-candidate band patches; None where the band is empty or no
    imagery is available."""

    def __init__(self, frame_image, config: CascadeConfig):
        self.frame_image = frame_image
        self.config = config
        self._cache: dict = {}

    def get(self, candidate: PersonCandidate, band_name: str):
        if self.frame_image is None:
            return None
        key = (candidate.candidate_id, band_name)
        if key not in self._cache:
            band = self.config.torso_band if band_name == "torso" else self.config.leg_band
            try:
                patch = extract_patch(candidate, self.frame_image, band,
                                      anchor=self.config.band_anchor)
            except (EmptyBandError, EmptyMaskError):
                patch = None
            self._cache[key] = patch
        return self._cache[key]


def _geometric_mean(factors) -> float:
    factors = list(factors)
    if not factors:
        return 1.0
    if any(f <= 0.0 for f in factors):
        return 0.0
    return math.exp(sum(math.log(f) for f in factors) / len(factors))


def compute_match_scores(stages, candidate_ids) -> dict:
    """Geometric mean of queried-label scores over applied attribute stages;
    an applied height stage contributes a factor of 1 for kept candidates."""
    scores = {}
    for cid in candidate_ids:
        factors = []
        for stage in stages:
            if stage.kind != "applied":
                continue
            for decision in stage.decisions:
                if decision.candidate_id != cid:
                    continue
                if stage.name == "height":
                    if decision.kept:
                        factors.append(1.0)
                elif decision.score is not None:
                    factors.append(decision.score)
        scores[cid] = _geometric_mean(factors)
    return scores


def decide_final(survivor_ids, stages) -> CascadeTrace:
    """Terminal decision: unique survivor, argmax over an ambiguous set, or
    roll back to the last non-empty stage output when everything was removed."""
    stages = tuple(stages)
    fallback = False
    fallback_stage = None
    choice_ids = list(survivor_ids)
    if not choice_ids:
        for stage in reversed(stages):
            if stage.kind in ("applied", "verify") and stage.kept_ids:
                choice_ids = list(stage.kept_ids)
                fallback = True
                fallback_stage = stage.name
                break
    if not choice_ids:
        return CascadeTrace(stages=stages, status="none_retrieved")
    match_scores = compute_match_scores(stages, choice_ids)
    ranked = sorted(choice_ids, key=lambda cid: (-match_scores[cid], cid))
    retrieved = ranked[0]
    status = "retrieved" if len(choice_ids) == 1 else "ambiguous"
    return CascadeTrace(
        stages=stages,
        status=status,
        retrieved_id=retrieved,
        ambiguous_ids=tuple(sorted(choice_ids)) if len(choice_ids) > 1 else (),
        fallback=fallback,
        fallback_stage=fallback_stage,
        match_scores=tuple((cid, match_scores[cid]) for cid in sorted(choice_ids)),
    )


def run_cascade(frame: FrameRecord, desc: SemanticDescription, camera: CameraModel,
                bias: HeightBias, backends: dict, config: CascadeConfig,
                vocabulary: AttributeVocabulary, frame_image=None) -> RetrievalResult:
    """Apply the full cascade to one frame and return the retrieval with its
    complete decision trace."""
    if camera.camera_id and frame.camera_id != camera.camera_id:
        raise CascadeError(
            f"camera mismatch: frame uses '{frame.camera_id}', got '{camera.camera_id}'")
    queries = _stage_queries(desc, config)
    for name in STAGE_ORDER:
        if name != "height" and queries[name] and name not in backends:
            raise CascadeError(f"missing backend for described family '{name}'")

    candidates = list(frame.candidates)
    if not candidates:
        trace = CascadeTrace(stages=(), status="none_retrieved")
        return RetrievalResult(
            sequence_id=frame.sequence_id, frame_index=frame.frame_index,
            retrieved=None, final_bbox=None, match_score=0.0, trace=trace)

    by_id = {c.candidate_id: c for c in candidates}
    patches = _PatchCache(frame_image, config)
    stages = []
    current = candidates
    applied = 0
    extra_flags = []

    for stage_cfg in config.stages():
        name = stage_cfg.name
        query = queries[name]
        if not query:
            stages.append(StageTrace(name=name, kind="skipped_absent"))
            continue
        if applied >= 1 and len(current) == 1:
            stages.append(StageTrace(
                name=name, kind="skipped_early_exit",
                input_ids=tuple(c.candidate_id for c in current),
                kept_ids=tuple(c.candidate_id for c in current)))
            continue
        input_ids = tuple(c.candidate_id for c in current)
        if name == "height":
            kept, decisions = filter_height(
                current, vocabulary.height_class(query[0]), camera, bias,
                stage_cfg.slack, undistort_points=config.undistort_points)
            kind = "applied"
        else:
            band = "torso" if name.startswith("torso") else ("leg" if name.startswith("leg") else None)
            patch_for = None
            if band is not None and getattr(backends[name], "needs_patch", False):
                patch_for = lambda cand, _band=band: patches.get(cand, _band)
            verify = name == "gender" and len(current) == 1
            kept, decisions = filter_attribute(
                current, name, query, backends[name], stage_cfg.threshold,
                patch_for=patch_for)
            if verify:
                # single survivor: gender verifies instead of filtering
                if len(kept) < len(current):
                    extra_flags.append("gender_unverified")
                    decisions = tuple(
                        StageDecision(
                            candidate_id=d.candidate_id, kept=True,
                            reason=d.reason + " (verify only: kept despite mismatch)",
                            flags=d.flags + ("gender_unverified",),
                            score=d.score, argmax_label=d.argmax_label,
                            matched_label=d.matched_label,
                        ) for d in decisions)
                kept = current
                kind = "verify"
            else:
                kind = "applied"
        if kind == "applied":
            applied += 1
        stages.append(StageTrace(
            name=name, kind=kind, input_ids=input_ids,
            kept_ids=tuple(c.candidate_id for c in kept),
            decisions=tuple(decisions)))
        current = kept

    trace = decide_final([c.candidate_id for c in current], stages)
    if extra_flags:
        trace = CascadeTrace(
            stages=trace.stages, status=trace.status, retrieved_id=trace.retrieved_id,
            ambiguous_ids=trace.ambiguous_ids, fallback=trace.fallback,
            fallback_stage=trace.fallback_stage, flags=tuple(extra_flags),
            match_scores=trace.match_scores)
    retrieved = trace.retrieved_id
    match_score = 0.0
    for cid, score in trace.match_scores:
        if cid == retrieved:
            match_score = score
    return RetrievalResult(
        sequence_id=frame.sequence_id,
        frame_index=frame.frame_index,
        retrieved=retrieved,
        final_bbox=by_id[retrieved].bbox if retrieved else None,
        match_score=match_score,
        trace=trace,
    )
