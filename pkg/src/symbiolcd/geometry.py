"""Scale-invariant object geometry, semantic matching and the
temporally penalised Hausdorff distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SymbioError

ACCEPT_FRACTION = 0.6
DEFAULT_EPS_POS = 0.15


class DegenerateFrameError(SymbioError, ValueError):
    """Frame has fewer than two objects or all centroids coincide."""


@dataclass(frozen=True)
class SemanticVector:
    frame_id: int
    labels: tuple[str, ...]
    points: np.ndarray      # (n, 2) normalised centroids
    norm_dists: np.ndarray  # sorted C(n, 2) normalised pairwise distances

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        if not isinstance(other, SemanticVector):
            return NotImplemented
        return (self.frame_id == other.frame_id and self.labels == other.labels
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.norm_dists, other.norm_dists))

    def allclose(self, other: "SemanticVector", atol: float = 1e-9) -> bool:
        """Equality up to ``atol`` on coordinates, ignoring ``frame_id``."""
        return (self.labels == other.labels
                and self.points.shape == other.points.shape
                and np.allclose(self.points, other.points, rtol=0.0, atol=atol)
                and np.allclose(self.norm_dists, other.norm_dists, rtol=0.0, atol=atol))

    def to_record(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "labels": list(self.labels),
            "points": self.points.tolist(),
            "norm_dists": self.norm_dists.tolist(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SemanticVector":
        pts = np.asarray(rec["points"], dtype=np.float64).reshape(-1, 2)
        return cls(frame_id=int(rec["frame_id"]), labels=tuple(rec["labels"]),
                   points=pts, norm_dists=np.asarray(rec["norm_dists"], dtype=np.float64))


@dataclass(frozen=True)
class MatchResult:
    matched_fraction: float
    matched_pairs: tuple[tuple[int, int], ...]
    accepted: bool


@dataclass(frozen=True)
class TemporalParams:
    alpha: float = 100.0
    beta_s: float = 1.0

    def __post_init__(self):
        # alpha = 0 is admitted to switch the penalty off entirely
        if not 0.0 <= self.alpha <= 100.0:
            raise ConfigError("alpha must be in [0, 100]")
        if not 0.0 < self.beta_s <= 1.0:
            raise ConfigError("beta_s must be in (0, 1]")


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Condensed upper-triangle Euclidean distances, row-major (i < j)."""
    n = len(points)
    i, j = np.triu_indices(n, k=1)
    d = points[i] - points[j]
    return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])


def normalize_points(centroids) -> tuple[np.ndarray, np.ndarray]:
    """Translate to the min corner and divide by the largest pairwise distance.

    Returns ``(points, sorted_norm_dists)``.
    """
    pts = np.asarray(centroids, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise DegenerateFrameError("need at least two objects")
    dists = pairwise_distances(pts)
    scale = dists.max()
    if not scale > 0.0:
        raise DegenerateFrameError("all object centroids coincide")
    points = (pts - pts.min(axis=0)) / scale
    return points, np.sort(dists / scale)


def build_semantic_vector(frame) -> SemanticVector:
    """Build the normalised vector for a filtered frame (object order kept)."""
    if len(frame.objects) < 2:
        raise DegenerateFrameError(
            f"frame {frame.frame_id} has {len(frame.objects)} objects; need at least two")
    points, norm_dists = normalize_points([o.centroid for o in frame.objects])
    return SemanticVector(frame_id=frame.frame_id,
                          labels=tuple(o.label for o in frame.objects),
                          points=points, norm_dists=norm_dists)


def semantic_match(current: SemanticVector, reference: SemanticVector,
                   eps_pos: float = DEFAULT_EPS_POS) -> MatchResult:
    """Greedy nearest-first label matching in the normalised plane.

    Pairs need equal labels and a point distance of at most ``eps_pos``.
    The match is accepted when at least 60% of the larger set is paired.
    """
    n_cur, n_ref = len(current), len(reference)
    cands = []
    for i, la in enumerate(current.labels):
        for j, lb in enumerate(reference.labels):
            if la != lb:
                continue
            dx, dy = current.points[i] - reference.points[j]
            d = math.sqrt(dx * dx + dy * dy)
            if d <= eps_pos:
                cands.append((d, i, j))
    cands.sort()
    used_i, used_j, pairs = set(), set(), []
    for _, i, j in cands:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        pairs.append((i, j))
    denom = max(n_cur, n_ref)
    frac = len(pairs) / denom if denom else 0.0
    return MatchResult(matched_fraction=frac, matched_pairs=tuple(pairs),
                       accepted=frac >= ACCEPT_FRACTION)


def directed_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """max over a of the distance to the nearest point of b."""
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    d = np.sqrt(dx * dx + dy * dy)
    return float(d.min(axis=1).max())


def hausdorff(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("Hausdorff distance needs two non-empty point sets")
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


def temporal_penalty(i: int, j: int, beta_s: float) -> float:
    """``1 / exp(beta_s * (i - j)**2)``; underflows to 0 for large offsets."""
    expo = beta_s * float(i - j) ** 2
    if expo > 700.0:
        return 0.0
    return 1.0 / math.exp(expo)


def hausdorff_temporal(a, b, i: int, j: int, params: TemporalParams = TemporalParams()) -> float:
    return hausdorff(a, b) + params.alpha * temporal_penalty(i, j, params.beta_s)


def norm_dist_dissimilarity(current: SemanticVector, reference: SemanticVector,
                            match: MatchResult) -> float:
    """Mean absolute difference of the sorted, re-normalised pairwise distances
    of the matched objects; 1.0 when fewer than two pairs matched."""
    if len(match.matched_pairs) < 2:
        return 1.0
    ci = [i for i, _ in match.matched_pairs]
    rj = [j for _, j in match.matched_pairs]
    da = _renormalized_dists(current.points[ci])
    db = _renormalized_dists(reference.points[rj])
    return float(np.mean(np.abs(da - db)))


def _renormalized_dists(points: np.ndarray) -> np.ndarray:
    d = pairwise_distances(points)
    top = d.max()
    if top > 0.0:
        d = d / top
    return np.sort(d)
