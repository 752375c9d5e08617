"""Overlap metric and the benchmark aggregation: per-frame IoU, per-sequence
averages, the dataset-level average-of-averages, the fraction of frames whose
IoU strictly exceeds 0.4, and difficulty breakdowns.

Box areas are computed in exact integer arithmetic so the headline metric has
no floating-point ambiguity; only the final ratio is a float.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import BoundingBox, SequenceRecord
from .vocab import DIFFICULTIES

IOU_THRESHOLD = 0.4


def iou(d: BoundingBox, gt: BoundingBox) -> float:
    """Intersection over union of two axis-aligned integer boxes."""
    ix = max(0, min(d.x + d.width, gt.x + gt.width) - max(d.x, gt.x))
    iy = max(0, min(d.y + d.height, gt.y + gt.height) - max(d.y, gt.y))
    intersection = ix * iy
    union = d.area + gt.area - intersection
    if union == 0:
        return 0.0
    return intersection / union


@dataclass(frozen=True)
class FrameScore:
    sequence_id: str
    frame_index: int
    iou: float
    retrieved: bool

    def __post_init__(self):
        if not self.retrieved and self.iou != 0.0:
            raise ValueError("iou must be 0 when nothing was retrieved")
        if not (0.0 <= self.iou <= 1.0):
            raise ValueError("iou outside [0, 1]")


@dataclass(frozen=True)
class SequenceSummary:
    sequence_id: str
    difficulty: str
    frame_scores: tuple
    average_iou: float
    percent_over: float


def evaluate_sequence(seq: SequenceRecord, results: dict,
                      skip_initial_frames: int = 0) -> SequenceSummary:
    """Score one sequence from per-frame retrieval results.

    Only frames bearing ground truth are scored, after dropping the first
    ``skip_initial_frames`` of the sequence (the entry period). Frames where
    nothing was retrieved contribute an IoU of 0.
    """
    first = min(f.frame_index for f in seq.frames)
    scores = []
    for frame in seq.frames:
        if frame.ground_truth is None:
            continue
        if frame.frame_index - first < skip_initial_frames:
            continue
        if frame.frame_index not in results:
            raise ValueError(
                f"missing result for frame {frame.frame_index} "
                f"of sequence '{seq.sequence_id}'")
        result = results[frame.frame_index]
        if result.final_bbox is None:
            scores.append(FrameScore(seq.sequence_id, frame.frame_index, 0.0, False))
        else:
            value = iou(result.final_bbox, frame.ground_truth.bbox)
            scores.append(FrameScore(seq.sequence_id, frame.frame_index, value, True))
    if not scores:
        raise ValueError(f"sequence '{seq.sequence_id}' has no scorable frames "
                         f"(skip_initial_frames={skip_initial_frames})")
    average = sum(s.iou for s in scores) / len(scores)
    over = sum(1 for s in scores if s.iou > IOU_THRESHOLD) / len(scores)
    return SequenceSummary(
        sequence_id=seq.sequence_id, difficulty=seq.difficulty,
        frame_scores=tuple(scores), average_iou=average, percent_over=over)


@dataclass(frozen=True)
class DifficultyGroup:
    difficulty: str
    sequence_count: int
    frame_count: int
    average_iou: float
    percent_over: float


@dataclass(frozen=True)
class EvalReport:
    summaries: tuple
    dataset_average_iou: float
    percent_over: float            # frame-level population (strict > 0.4)
    percent_over_sequences: float  # sequence-level variant
    difficulty_groups: tuple
    vocabulary_hash: str = ""
    config_digest: str = ""

    @property
    def frame_count(self) -> int:
        return sum(len(s.frame_scores) for s in self.summaries)


def evaluate_dataset(summaries, vocabulary_hash: str = "",
                     config_digest: str = "") -> EvalReport:
    """Aggregate sequence summaries into the dataset report.

    The dataset average is the unweighted mean of per-sequence averages; the
    %w metric is the fraction of scored frames with IoU strictly above 0.4
    (a per-sequence variant is reported alongside).
    """
    summaries = tuple(summaries)
    if not summaries:
        raise ValueError("no sequence summaries")
    dataset_average = sum(s.average_iou for s in summaries) / len(summaries)
    all_scores = [fs for s in summaries for fs in s.frame_scores]
    percent_over = sum(1 for fs in all_scores if fs.iou > IOU_THRESHOLD) / len(all_scores)
    percent_over_seq = (sum(1 for s in summaries if s.average_iou > IOU_THRESHOLD)
                        / len(summaries))
    groups = []
    for difficulty in DIFFICULTIES:
        members = [s for s in summaries if s.difficulty == difficulty]
        if not members:
            continue
        frames = [fs for s in members for fs in s.frame_scores]
        groups.append(DifficultyGroup(
            difficulty=difficulty,
            sequence_count=len(members),
            frame_count=len(frames),
            average_iou=sum(s.average_iou for s in members) / len(members),
            percent_over=sum(1 for fs in frames if fs.iou > IOU_THRESHOLD) / len(frames),
        ))
    return EvalReport(
        summaries=summaries,
        dataset_average_iou=dataset_average,
        percent_over=percent_over,
        percent_over_sequences=percent_over_seq,
        difficulty_groups=tuple(groups),
        vocabulary_hash=vocabulary_hash,
        config_digest=config_digest,
    )


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def render_text(report: EvalReport) -> str:
    lines = []
    lines.append("retrieval benchmark report")
    lines.append("==========================")
    lines.append(f"vocabulary hash: {report.vocabulary_hash}")
    lines.append(f"config digest:   {report.config_digest}")
    lines.append(f"sequences: {len(report.summaries)}    "
                 f"frames scored: {report.frame_count}")
    lines.append("")
    lines.append(f"{'':24}{'Average IoU':>14}{'%w IoU>0.4':>14}")
    lines.append(f"{'overall':<24}{_fmt(report.dataset_average_iou):>14}"
                 f"{_fmt(report.percent_over):>14}")
    lines.append(f"{'overall (per-sequence %w)':<24}{'':>14}"
                 f"{_fmt(report.percent_over_sequences):>14}")
    lines.append("")
    lines.append(f"{'difficulty':<12}{'sequences':>10}{'frames':>8}"
                 f"{'Average IoU':>14}{'%w IoU>0.4':>14}")
    for g in report.difficulty_groups:
        lines.append(f"{g.difficulty:<12}{g.sequence_count:>10}{g.frame_count:>8}"
                     f"{_fmt(g.average_iou):>14}{_fmt(g.percent_over):>14}")
    lines.append("")
    lines.append(f"{'sequence':<16}{'difficulty':<12}{'frames':>8}"
                 f"{'Average IoU':>14}{'%w IoU>0.4':>14}")
    for s in report.summaries:
        lines.append(f"{s.sequence_id:<16}{s.difficulty:<12}{len(s.frame_scores):>8}"
                     f"{_fmt(s.average_iou):>14}{_fmt(s.percent_over):>14}")
    return "\n".join(lines) + "\n"


def render_sequences_csv(report: EvalReport) -> str:
    rows = ["sequence_id,difficulty,frames,average_iou,percent_over_04"]
    for s in report.summaries:
        rows.append(f"{s.sequence_id},{s.difficulty},{len(s.frame_scores)},"
                    f"{_fmt(s.average_iou)},{_fmt(s.percent_over)}")
    return "\n".join(rows) + "\n"


def render_difficulty_csv(report: EvalReport) -> str:
    rows = ["difficulty,sequences,frames,average_iou,percent_over_04"]
    for g in report.difficulty_groups:
        rows.append(f"{g.difficulty},{g.sequence_count},{g.frame_count},"
                    f"{_fmt(g.average_iou)},{_fmt(g.percent_over)}")
    return "\n".join(rows) + "\n"


def render_frames_csv(report: EvalReport) -> str:
    rows = ["sequence_id,frame_index,iou,retrieved"]
    for s in report.summaries:
        for fs in s.frame_scores:
            rows.append(f"{fs.sequence_id},{fs.frame_index},{_fmt(fs.iou)},"
                        f"{str(fs.retrieved).lower()}")
    return "\n".join(rows) + "\n"


_FORMATS = {
    "text": render_text,
    "csv-sequences": render_sequences_csv,
    "csv-difficulty": render_difficulty_csv,
    "csv-frames": render_frames_csv,
}


def render_report(report: EvalReport, fmt: str = "text") -> str:
    try:
        renderer = _FORMATS[fmt]
    except KeyError:
        raise ValueError(f"unknown report format '{fmt}' "
                         f"(known: {', '.join(sorted(_FORMATS))})") from None
    return renderer(report)
