"""Frame-by-frame loop-closure pipeline.

filter -> semantic vector -> vocabulary query -> feature row -> forest vote.
The same candidate walk feeds both training-table construction and inference.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import bow
from .errors import ConfigError
from .forest import FEATURE_NAMES, Dataset, ForestModel
from .geometry import (
    DEFAULT_EPS_POS, SemanticVector, TemporalParams, build_semantic_vector,
    hausdorff_temporal, norm_dist_dissimilarity, semantic_match,
)
from .ingest.formats import LoopLabelSet, PairScoreTable
from .objfilter import FilterPolicy, filter_objects
from .vocab import VocabularyDB

log = logging.getLogger(__name__)

DETECTION_HEADER = ["query", "reference", "prob", *FEATURE_NAMES]


@dataclass(frozen=True)
class PipelineConfig:
    policy: FilterPolicy = FilterPolicy()
    temporal: TemporalParams = TemporalParams()
    eps_pos: float = DEFAULT_EPS_POS
    insert_period: int = 5
    exclusion_window: int = 30
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold} must be in [0, 1]")
        if not self.eps_pos > 0:
            raise ConfigError("eps_pos must be positive")


@dataclass(frozen=True)
class FeatureRow:
    matched_labels: float
    hausdorff_t: float
    norm_dist: float
    vbow_score: float

    def as_array(self) -> np.ndarray:
        return np.array([self.matched_labels, self.hausdorff_t, self.norm_dist, self.vbow_score])


@dataclass(frozen=True)
class Detection:
    query_frame_id: int
    reference_frame_id: int
    prob: float
    features: FeatureRow


class VbowSource:
    """vBoW scores for frame pairs.

    A supplied ``PairScoreTable`` wins; otherwise scores are computed from
    per-frame descriptors with a vocabulary tree. Pairs found in neither
    score 0.
    """

    def __init__(self, table: PairScoreTable | None = None, descriptors=None,
                 tree: bow.VocabTree | None = None):
        self.table = table
        self.descriptors = descriptors or {}
        self.tree = tree
        self._vectors: dict[int, dict] = {}
        self.missing = 0

    def _vector(self, fid: int) -> dict:
        if fid not in self._vectors:
            desc = self.descriptors.get(fid)
            self._vectors[fid] = {} if desc is None else bow.encode(desc, self.tree)
        return self._vectors[fid]

    def score(self, query: int, reference: int) -> float:
        if self.table is not None:
            s = self.table.get(query, reference)
            if s is not None:
                return s
        if self.tree is not None and (query in self.descriptors or reference in self.descriptors):
            return bow.similarity(self._vector(query), self._vector(reference))
        self.missing += 1
        return 0.0


def sentinel_features(vbow: float, params: TemporalParams) -> FeatureRow:
    """Features for a spatially unusable frame: only vBoW carries information."""
    return FeatureRow(0.0, params.alpha, 1.0, vbow)


def assemble_features(current: SemanticVector | None, reference: SemanticVector | None,
                      vbow: float, params: TemporalParams = TemporalParams(),
                      eps_pos: float = DEFAULT_EPS_POS) -> FeatureRow:
    if current is None or reference is None:
        return sentinel_features(vbow, params)
    match = semantic_match(current, reference, eps_pos)
    if match.accepted:
        a = current.points[[i for i, _ in match.matched_pairs]]
        b = reference.points[[j for _, j in match.matched_pairs]]
    else:
        a, b = current.points, reference.points
    h_t = hausdorff_temporal(a, b, current.frame_id, reference.frame_id, params)
    return FeatureRow(
        matched_labels=match.matched_fraction,
        hausdorff_t=h_t,
        norm_dist=norm_dist_dissimilarity(current, reference, match),
        vbow_score=float(vbow),
    )


def walk(frames, config: PipelineConfig, db: VocabularyDB | None = None):
    """Yield ``(frame_id, vector_or_None, candidates)`` in frame order.

    ``db`` warm-starts the vocabulary and is updated in place.
    """
    if db is None:
        db = VocabularyDB(config.insert_period, config.exclusion_window)
    for frame in sorted(frames, key=lambda f: f.frame_id):
        filtered = filter_objects(frame, config.policy)
        vec = build_semantic_vector(filtered) if filtered.usable else None
        yield frame.frame_id, vec, db.query_candidates(frame.frame_id)
        if vec is not None:
            db.maybe_insert(vec)


def candidate_features(frames, vbow: VbowSource, config: PipelineConfig,
                       db: VocabularyDB | None = None):
    """All candidate pairs of the walk with their feature rows."""
    pairs, rows = [], []
    for fid, vec, cands in walk(frames, config, db):
        for ref in cands:
            score = vbow.score(fid, ref.frame_id)
            rows.append(assemble_features(vec, ref, score, config.temporal, config.eps_pos))
            pairs.append((fid, ref.frame_id))
    return pairs, rows


def build_training_table(frames, vbow: VbowSource, truth: LoopLabelSet,
                         config: PipelineConfig = PipelineConfig(),
                         db: VocabularyDB | None = None) -> Dataset:
    pairs, rows = candidate_features(frames, vbow, config, db)
    y = np.array([int(bool(truth.get(q, r, False))) for q, r in pairs], dtype=np.int64)
    seen = set(pairs)
    skipped = [p for p in truth.positives() if p not in seen]
    if skipped:
        log.warning("%d ground-truth loop pairs never produced by the candidate walk "
                    "(skipped), e.g. %s", len(skipped), skipped[:3])
    X = np.array([r.as_array() for r in rows]).reshape(-1, len(FEATURE_NAMES))
    data = Dataset(X, y, FEATURE_NAMES, pairs)
    log.info("training table: %d rows, %d positive", len(data), data.n_positive)
    return data


@dataclass
class RunReport:
    n_frames: int = 0
    n_candidates: int = 0
    n_detections: int = 0
    # per ground-truth loop region: (first query frame, earliest detection or None)
    regions: list[tuple[int, int | None]] = field(default_factory=list)


def loop_regions(truth: LoopLabelSet) -> list[tuple[int, int]]:
    """Maximal runs of consecutive query frames that have a true loop, as [start, end]."""
    queries = sorted({q for q, _ in truth.positives()})
    regions: list[tuple[int, int]] = []
    for q in queries:
        if regions and q == regions[-1][1] + 1:
            regions[-1] = (regions[-1][0], q)
        else:
            regions.append((q, q))
    return regions


def run_sequence(frames, vbow: VbowSource, model: ForestModel,
                 config: PipelineConfig = PipelineConfig(),
                 truth: LoopLabelSet | None = None,
                 db: VocabularyDB | None = None) -> tuple[list[Detection], RunReport]:
    """Score every candidate pair and keep those whose vote fraction clears the threshold.

    A pair is emitted when its vote fraction is strictly above ``threshold``;
    at the default 0.5 this is the forest's majority label with ties going
    to "no loop".
    """
    model.check_features(FEATURE_NAMES)
    frames = list(frames)
    pairs, rows = candidate_features(frames, vbow, config, db)
    detections: list[Detection] = []
    if rows:
        probs = model.predict_proba(np.array([r.as_array() for r in rows]))
        for (q, r), row, p in zip(pairs, rows, probs):
            if p > config.threshold:
                detections.append(Detection(q, r, float(p), row))
    report = RunReport(n_frames=len(frames), n_candidates=len(pairs), n_detections=len(detections))
    if truth is not None:
        for start, end in loop_regions(truth):
            hits = [d.query_frame_id for d in detections if start <= d.query_frame_id <= end]
            report.regions.append((start, min(hits) if hits else None))
    return detections, report


def detections_to_csv(detections) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DETECTION_HEADER)
    for d in detections:
        f = d.features
        w.writerow([d.query_frame_id, d.reference_frame_id, repr(d.prob), repr(f.matched_labels),
                    repr(f.hausdorff_t), repr(f.norm_dist), repr(f.vbow_score)])
    return buf.getvalue().encode("utf-8")
