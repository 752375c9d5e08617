"""Attribute-scoring backends consumed by the cascade.

Two implementations ship: a precomputed-scores lookup (scores generated
offline by any external classifier and attached to candidates at load time)
and a deterministic HSV-histogram color baseline that lets the whole engine
run with no learned models at all.

A backend returns ``None`` to mean "unavailable" (for example, the leg band
was empty); the cascade treats that as fail-open, never as a mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DescryError
from .model import PersonCandidate
from .regions import Patch
from .vocab import AttributeVocabulary

HUE_BINS = 16

# hue intervals in degrees, half-open [lo, hi); a label may own several.
# brown / beige / multicolour are not separable by hue alone, so the baseline
# ships them empty; deployments can widen the table in configuration.
DEFAULT_HUE_TABLE = {
    "red": ((345.0, 360.0), (0.0, 15.0)),
    "orange": ((15.0, 45.0),),
    "yellow": ((45.0, 70.0),),
    "green": ((70.0, 165.0),),
    "blue": ((165.0, 255.0),),
    "purple": ((255.0, 290.0),),
    "pink": ((290.0, 345.0),),
    "brown": (),
    "beige": (),
    "multicolour": (),
}

BLACK_VALUE_MAX = 0.2
WHITE_VALUE_MIN = 0.85
ACHROMATIC_SAT_MAX = 0.15


class BackendError(DescryError):
    """Backend misconfiguration or malformed backend data."""


@dataclass(frozen=True)
class ScoreVector:
    family: str
    labels: tuple
    scores: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        scores = tuple(float(s) for s in self.scores)
        if len(labels) != len(scores):
            raise BackendError(
                f"score vector length {len(scores)} != {len(labels)} labels")
        for s in scores:
            if not math.isfinite(s) or not (0.0 <= s <= 1.0):
                raise BackendError(f"score {s!r} outside [0, 1]")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scores", scores)

    def score_for(self, label: str) -> float:
        try:
            return self.scores[self.labels.index(label)]
        except ValueError:
            raise BackendError(f"label '{label}' not in family '{self.family}'") from None

    def argmax_label(self) -> str:
        # ties resolve to the first label in vocabulary order
        return self.labels[max(range(len(self.scores)), key=lambda i: (self.scores[i], -i))]


class PrecomputedScoreBackend:
    """Serves score vectors attached to candidates at load time."""

    needs_patch = False

    def __init__(self, vocabulary: AttributeVocabulary):
        self.vocabulary = vocabulary

    def supports(self, family: str) -> bool:
        try:
            self.vocabulary.family_labels(family)
            return True
        except KeyError:
            return False

    def score(self, candidate: PersonCandidate, family: str,
              patch: Patch | None = None) -> ScoreVector | None:
        labels = self.vocabulary.family_labels(family)
        stored = candidate.attribute_scores.get(family)
        if stored is None:
            return None
        if len(stored) != len(labels):
            raise BackendError(
                f"candidate '{candidate.candidate_id}' carries {len(stored)} scores "
                f"for family '{family}', vocabulary has {len(labels)} labels")
        return ScoreVector(family=family, labels=labels, scores=stored)


def rgb_to_hsv(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB (uint8) to hue [0, 360), saturation and value in [0, 1]."""
    rgb = np.asarray(pixels, dtype=float) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    value = maxc
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    hue = np.zeros_like(maxc)
    chroma = delta > 0
    rmax = chroma & (maxc == r)
    gmax = chroma & (maxc == g) & ~rmax
    bmax = chroma & ~rmax & ~gmax
    safe = np.where(chroma, delta, 1.0)
    hue[rmax] = ((g - b)[rmax] / safe[rmax]) % 6.0
    hue[gmax] = (b - r)[gmax] / safe[gmax] + 2.0
    hue[bmax] = (r - g)[bmax] / safe[bmax] + 4.0
    return hue * 60.0, sat, value


def _bin_centers():
    width = 360.0 / HUE_BINS
    return np.arange(HUE_BINS) * width + width / 2.0


def _interval_mask(centers, intervals) -> np.ndarray:
    mask = np.zeros(centers.shape, dtype=bool)
    for lo, hi in intervals:
        mask |= (centers >= lo) & (centers < hi)
    return mask


def histogram_color_score(patch: Patch, labels, hue_table=None) -> ScoreVector:
    """Deterministic color scoring from an HSV histogram of the valid pixels.

    Achromatic classes are gated on value/saturation (black, then white,
    then grey); the remaining pixels vote into a 16-bin hue histogram and
    each chromatic label collects the mass of the bins whose centers fall in
    its configured hue intervals. The vector is normalized to max 1.
    """
    if hue_table is None:
        hue_table = DEFAULT_HUE_TABLE
    pixels = patch.pixels[patch.valid]
    if pixels.size == 0:
        raise BackendError("patch has no valid pixels")
    hue, sat, value = rgb_to_hsv(pixels)
    n = float(len(pixels))

    black = value < BLACK_VALUE_MAX
    white = ~black & (value > WHITE_VALUE_MIN) & (sat < ACHROMATIC_SAT_MAX)
    grey = ~black & ~white & (sat < ACHROMATIC_SAT_MAX)
    chromatic = ~black & ~white & ~grey

    hist, _ = np.histogram(hue[chromatic], bins=HUE_BINS, range=(0.0, 360.0))
    centers = _bin_centers()
    fractions = {}
    for label in labels:
        if label == "black":
            fractions[label] = float(black.sum()) / n
        elif label == "white":
            fractions[label] = float(white.sum()) / n
        elif label == "grey":
            fractions[label] = float(grey.sum()) / n
        else:
            intervals = hue_table.get(label, ())
            fractions[label] = float(hist[_interval_mask(centers, intervals)].sum()) / n
    peak = max(fractions.values())
    if peak > 0:
        fractions = {k: v / peak for k, v in fractions.items()}
    return ScoreVector(family="color", labels=tuple(labels),
                       scores=tuple(min(1.0, fractions[l]) for l in labels))


class HistogramColorBackend:
    """Color scoring over torso/leg patches; other families are unsupported."""

    FAMILIES = ("torso_color", "leg_color")
    needs_patch = True

    def __init__(self, vocabulary: AttributeVocabulary, hue_table=None):
        self.vocabulary = vocabulary
        self.hue_table = dict(hue_table) if hue_table is not None else dict(DEFAULT_HUE_TABLE)

    def supports(self, family: str) -> bool:
        return family in self.FAMILIES

    def score(self, candidate: PersonCandidate, family: str,
              patch: Patch | None = None) -> ScoreVector | None:
        if family not in self.FAMILIES:
            raise BackendError(f"histogram backend does not score '{family}'")
        if patch is None:
            return None
        vec = histogram_color_score(patch, self.vocabulary.family_labels(family),
                                    self.hue_table)
        return ScoreVector(family=family, labels=vec.labels, scores=vec.scores)


def score(backend, candidate: PersonCandidate, family: str,
          patch: Patch | None = None) -> ScoreVector | None:
    """Score one candidate for one family; None means unavailable."""
    if not backend.supports(family):
        raise BackendError(f"no backend registered for family '{family}'")
    return backend.score(candidate, family, patch)


def build_backend_registry(vocabulary: AttributeVocabulary, kind: str = "precomputed",
                           hue_table=None) -> dict:
    """Family -> backend mapping for the engine.

    ``precomputed`` serves every family from stored scores; ``histogram``
    overrides the two color families with the HSV baseline (type, pattern and
    gender remain precomputed-only).
    """
    precomputed = PrecomputedScoreBackend(vocabulary)
    registry = {fam: precomputed for fam in
                ("torso_color", "torso_type", "torso_pattern",
                 "leg_color", "leg_pattern", "gender")}
    if kind == "histogram":
        hist = HistogramColorBackend(vocabulary, hue_table)
        registry["torso_color"] = hist
        registry["leg_color"] = hist
    elif kind != "precomputed":
        raise BackendError(f"unknown backend kind '{kind}'")
    return registry
