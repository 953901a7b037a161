"""Static-object selection: drop moving classes, oversized boxes and
low-confidence detections, then keep the largest few."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .ingest.formats import ObjectInstance

DEFAULT_MOVING_LABELS = frozenset({
    "person", "bicycle", "car", "motorcycle", "bus", "truck",
    "scooter", "bird", "cat", "dog",
})


@dataclass(frozen=True)
class FilterPolicy:
    moving_labels: frozenset = DEFAULT_MOVING_LABELS
    max_area_fraction: float = 0.5
    max_objects: int = 8
    min_confidence: float = 0.7

    def __post_init__(self):
        object.__setattr__(self, "moving_labels", frozenset(self.moving_labels))
        if not 0.0 < self.max_area_fraction <= 1.0:
            raise ConfigError("max_area_fraction must be in (0, 1]")
        if int(self.max_objects) != self.max_objects or self.max_objects < 2:
            raise ConfigError("max_objects must be an integer >= 2")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ConfigError("min_confidence must be in [0, 1]")


@dataclass(frozen=True)
class FilteredFrame:
    frame_id: int
    width: int
    height: int
    objects: tuple[ObjectInstance, ...] = ()
    # position of each kept object in the source frame's object list
    indices: tuple[int, ...] = field(default=())

    @property
    def usable(self) -> bool:
        """At least two objects survive, so pairwise geometry exists."""
        return len(self.objects) >= 2


def filter_objects(frame, policy: FilterPolicy = FilterPolicy()) -> FilteredFrame:
    """Apply ``policy`` to a frame.

    Survivors are ordered by area (largest first); equal areas fall back to
    label then original index. Accepts a ``FilteredFrame`` too, in which case
    stored indices keep pointing into the original frame.
    """
    image_area = float(frame.width) * float(frame.height)
    source_idx = getattr(frame, "indices", None) or range(len(frame.objects))
    kept = []
    for obj, idx in zip(frame.objects, source_idx):
        if obj.label in policy.moving_labels:
            continue
        if obj.confidence < policy.min_confidence:
            continue
        if obj.area > policy.max_area_fraction * image_area:
            continue
        kept.append((obj, idx))
    kept.sort(key=lambda t: (-t[0].area, t[0].label, t[1]))
    kept = kept[: policy.max_objects]
    return FilteredFrame(
        frame_id=frame.frame_id,
        width=frame.width,
        height=frame.height,
        objects=tuple(o for o, _ in kept),
        indices=tuple(i for _, i in kept),
    )
