"""Synthetic loop-closure sequences with known ground truth.

The world is a chain of rooms; the camera dwells ``room_length`` frames in
each. Revisit segments replay earlier frames: the same room layout seen
through the origin frame's camera, rescaled by ``scale_drift`` and with
fresh detection noise. Every room owns a pool of 256-bit descriptor
prototypes; frames sample the pool with per-bit flip noise.

Two confusers make the task non-trivial: some rooms copy another room's
object layout (only descriptors tell them apart) and some rooms share a
large part of another room's descriptor pool (only objects tell them apart).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError
from ..seeding import derive_rng
from .formats import FrameObservation, LoopLabelSet, ObjectInstance

STATIC_CLASSES = (
    "chair", "couch", "potted plant", "bed", "tv", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink",
    "refrigerator", "book", "clock", "vase", "scissors", "teddy bear", "bottle",
    "cup", "bowl", "wine glass", "backpack", "umbrella", "handbag", "suitcase",
    "bench", "toilet",
)
MOVING_CLASSES = ("person", "bicycle", "dog", "cat", "scooter")

_WORLD_TO_PX = 300.0
_MIN_SEPARATION = 0.25


@dataclass(frozen=True)
class SyntheticConfig:
    n_frames: int = 184
    n_object_classes: int = 20
    objects_per_frame: tuple[int, int] = (3, 7)
    loop_revisit_spec: tuple[tuple[int, int, int], ...] = ((104, 0, 40), (149, 40, 35))
    label_noise_rate: float = 0.1
    position_noise_sigma: float = 5.0
    scale_drift: float = 0.1
    seed: int = 42
    descriptor_flip_rate: float = 0.05
    room_length: int = 20
    insert_period: int = 5
    exclusion_window: int = 30
    width: int = 640
    height: int = 480
    descriptors_per_frame: int = 48
    descriptor_pool_size: int = 64
    shared_texture_fraction: float = 0.15
    revisit_descriptor_change: tuple[float, float] = (0.3, 0.8)
    layout_alias_rate: float = 0.15
    texture_alias_rate: float = 0.3
    texture_alias_share: float = 0.6
    distractor_rate: float = 0.3

    def zero_noise(self) -> "SyntheticConfig":
        """Same world with every noise source switched off; revisits replay exactly."""
        return replace(self, label_noise_rate=0.0, position_noise_sigma=0.0, scale_drift=0.0,
                       descriptor_flip_rate=0.0, revisit_descriptor_change=(0.0, 0.0))

    def validate(self) -> None:
        if self.n_frames < 1:
            raise ConfigError("n_frames must be positive")
        if not 1 <= self.n_object_classes <= len(STATIC_CLASSES):
            raise ConfigError(f"n_object_classes must be in [1, {len(STATIC_CLASSES)}]")
        lo, hi = self.objects_per_frame
        if not 2 <= lo <= hi:
            raise ConfigError("objects_per_frame must be a range with 2 <= min <= max")
        for name in ("label_noise_rate", "descriptor_flip_rate", "shared_texture_fraction",
                     "layout_alias_rate", "texture_alias_rate", "texture_alias_share",
                     "distractor_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        a, b = self.revisit_descriptor_change
        if not 0.0 <= a <= b <= 1.0:
            raise ConfigError("revisit_descriptor_change must be a sub-range of [0, 1]")
        if self.position_noise_sigma < 0:
            raise ConfigError("position_noise_sigma must be non-negative")
        if not -0.5 < self.scale_drift <= 0.2:
            raise ConfigError("scale_drift must be in (-0.5, 0.2] to keep objects in view")
        if self.room_length < 1 or self.insert_period < 1 or self.exclusion_window < 1:
            raise ConfigError("room_length, insert_period and exclusion_window must be positive")
        if self.descriptor_pool_size < 1 or self.descriptors_per_frame < 0:
            raise ConfigError("descriptor counts must be positive")
        spans = sorted(self.loop_revisit_spec)
        for rs, os_, ln in spans:
            if ln < 1 or rs < 0 or os_ < 0:
                raise ConfigError(f"bad revisit entry {(rs, os_, ln)}")
            if os_ + ln > rs:
                raise ConfigError(
                    f"revisit ({rs}, {os_}, {ln}) overlaps its origin span [{os_}, {os_ + ln})")
            if rs + ln > self.n_frames:
                raise ConfigError(f"revisit ({rs}, {os_}, {ln}) runs past n_frames={self.n_frames}")
        for (r1, _, l1), (r2, _, _) in zip(spans, spans[1:]):
            if r1 + l1 > r2:
                raise ConfigError("revisit intervals overlap each other")
        for rs, os_, ln in spans:
            for r2, _, l2 in spans:
                if os_ < r2 + l2 and r2 < os_ + ln:
                    raise ConfigError(f"origin span of revisit at {rs} lies inside another revisit")


@dataclass
class SyntheticDataset:
    frames: list[FrameObservation]
    descriptors: dict[int, np.ndarray]
    truth: LoopLabelSet
    config: SyntheticConfig
    place_of: dict[int, int] = field(default_factory=dict)  # frame -> origin frame
    regions: list[tuple[int, int]] = field(default_factory=list)  # revisit [start, end)

    @property
    def n_positive(self) -> int:
        return sum(self.truth.labels.values())

    @property
    def n_negative(self) -> int:
        return len(self.truth) - self.n_positive


class _World:
    def __init__(self, cfg: SyntheticConfig):
        self.cfg = cfg
        self.classes = STATIC_CLASSES[: cfg.n_object_classes]
        self.place = list(range(cfg.n_frames))
        self.visit = [-1] * cfg.n_frames
        for v, (rs, os_, ln) in enumerate(sorted(cfg.loop_revisit_spec)):
            for k in range(ln):
                self.place[rs + k] = os_ + k
                self.visit[rs + k] = v
        self.room = [p // cfg.room_length for p in self.place]
        rooms = sorted(set(self.room))
        self.layout_src = {r: r for r in rooms}
        self.texture_src = {r: r for r in rooms}
        self._assign_aliases(rooms)
        self._layouts: dict[int, list] = {}
        self._pools: dict[int, np.ndarray] = {}
        self.shared_pool = derive_rng(cfg.seed, "shared-pool").integers(
            0, 256, (cfg.descriptor_pool_size, 32), dtype=np.uint8)

    def _assign_aliases(self, rooms):
        cfg = self.cfg
        rng = derive_rng(cfg.seed, "aliases")
        n_layout = int(round(cfg.layout_alias_rate * len(rooms)))
        n_texture = int(round(cfg.texture_alias_rate * len(rooms)))
        taken: set[int] = set()
        # a later room copies an earlier one; each room joins at most one alias pair
        for n_alias, table in ((n_layout, self.layout_src), (n_texture, self.texture_src)):
            for _ in range(n_alias):
                later = [r for r in rooms[1:] if r not in taken]
                if not later:
                    break
                b = int(later[rng.integers(len(later))])
                earlier = [r for r in rooms if r < b and r not in taken]
                if not earlier:
                    continue
                a = int(earlier[rng.integers(len(earlier))])
                table[b] = a
                taken.update((a, b))

    def layout(self, room: int) -> list:
        if room not in self._layouts:
            src = self.layout_src[room]
            base = self._make_layout(src)
            if src != room:
                # imperfect copy: jittered positions, one object relabelled
                rng = derive_rng(self.cfg.seed, "layout-alias", room)
                base = [(lab, np.clip(pos + rng.normal(0, 0.05, 2), 0, 1), size)
                        for lab, pos, size in base]
                k = int(rng.integers(len(base)))
                others = [c for c in self.classes if c != base[k][0]] or [base[k][0]]
                base[k] = (others[int(rng.integers(len(others)))],) + base[k][1:]
            self._layouts[room] = base
        return self._layouts[room]

    def _make_layout(self, room: int) -> list:
        cfg = self.cfg
        rng = derive_rng(cfg.seed, "room", room)
        lo, hi = cfg.objects_per_frame
        n = int(rng.integers(lo, hi + 1))
        pts: list[np.ndarray] = []
        while len(pts) < n:
            for _ in range(500):
                p = rng.uniform(0.0, 1.0, 2)
                if all(np.hypot(*(p - q)) >= _MIN_SEPARATION for q in pts):
                    break
            pts.append(p)
        labels = rng.choice(len(self.classes), n)
        sizes = rng.uniform(0.06, 0.16, (n, 2))
        return [(self.classes[int(l)], pts[i], sizes[i]) for i, l in enumerate(labels)]

    def pool(self, room: int) -> np.ndarray:
        if room not in self._pools:
            cfg = self.cfg
            own = derive_rng(cfg.seed, "pool", room).integers(
                0, 256, (cfg.descriptor_pool_size, 32), dtype=np.uint8)
            src = self.texture_src[room]
            if src != room:
                share = int(round(cfg.texture_alias_share * cfg.descriptor_pool_size))
                own = np.concatenate([self.pool(src)[:share], own[share:]])
            self._pools[room] = own
        return self._pools[room]

    def camera(self, frame: int) -> tuple[float, float, float]:
        rng = derive_rng(self.cfg.seed, "camera", frame)
        zoom = float(rng.uniform(0.85, 1.0))
        pan = rng.uniform(-20.0, 20.0, 2)
        return zoom, float(pan[0]), float(pan[1])


def _box(cx, cy, w, h, width, height):
    w, h = min(w, width - 1.0), min(h, height - 1.0)
    x = min(max(cx - w / 2.0, 0.0), width - w)
    y = min(max(cy - h / 2.0, 0.0), height - h)
    return (float(x), float(y), float(w), float(h))


def _render_frame(world: _World, f: int) -> FrameObservation:
    cfg = world.cfg
    rng = derive_rng(cfg.seed, "frame", f)
    place = world.place[f]
    zoom, px, py = world.camera(place)
    if world.visit[f] >= 0:
        zoom *= 1.0 + cfg.scale_drift
    scale = zoom * _WORLD_TO_PX
    objects = []
    for label, pos, size in world.layout(world.room[f]):
        cx = cfg.width / 2.0 + px + scale * (pos[0] - 0.5)
        cy = cfg.height / 2.0 + py + scale * (pos[1] - 0.5)
        if cfg.position_noise_sigma > 0:
            cx, cy = np.array([cx, cy]) + rng.normal(0.0, cfg.position_noise_sigma, 2)
        if rng.random() < cfg.label_noise_rate:
            others = [c for c in world.classes if c != label] or [label]
            label = others[int(rng.integers(len(others)))]
        conf = float(rng.uniform(0.75, 0.99))
        objects.append(ObjectInstance(label, conf, _box(float(cx), float(cy), scale * size[0],
                                                         scale * size[1], cfg.width, cfg.height)))
    # distractors that the default filter policy removes
    if rng.random() < cfg.distractor_rate:
        w, h = rng.uniform(40, 120), rng.uniform(120, 300)
        objects.append(ObjectInstance(
            MOVING_CLASSES[int(rng.integers(len(MOVING_CLASSES)))], float(rng.uniform(0.8, 0.99)),
            _box(rng.uniform(0, cfg.width), rng.uniform(0, cfg.height), w, h, cfg.width, cfg.height)))
    if rng.random() < cfg.distractor_rate / 2:
        objects.append(ObjectInstance(
            "dining table", float(rng.uniform(0.8, 0.99)),
            _box(cfg.width / 2, cfg.height / 2, 0.85 * cfg.width, 0.75 * cfg.height,
                 cfg.width, cfg.height)))
    if rng.random() < cfg.distractor_rate:
        objects.append(ObjectInstance(
            world.classes[int(rng.integers(len(world.classes)))], float(rng.uniform(0.3, 0.6)),
            _box(rng.uniform(0, cfg.width), rng.uniform(0, cfg.height), 30.0, 30.0,
                 cfg.width, cfg.height)))
    order = rng.permutation(len(objects))
    return FrameObservation(frame_id=f, width=cfg.width, height=cfg.height,
                            objects=tuple(objects[i] for i in order), timestamp=f / 10.0)


def _render_descriptors(world: _World, f: int) -> np.ndarray:
    cfg = world.cfg
    rng = derive_rng(cfg.seed, "descriptors", f)
    n = cfg.descriptors_per_frame
    pool = world.pool(world.room[f])
    n_shared = int(round(cfg.shared_texture_fraction * n))
    own = pool[rng.choice(len(pool), min(n - n_shared, len(pool)), replace=False)]
    shared = world.shared_pool[rng.choice(len(world.shared_pool), n_shared)]
    desc = np.concatenate([own, shared])
    if world.visit[f] >= 0:
        lo, hi = cfg.revisit_descriptor_change
        n_new = int(round(rng.uniform(lo, hi) * len(desc)))
        desc[:n_new] = rng.integers(0, 256, (n_new, 32), dtype=np.uint8)
    flips = np.packbits(rng.random((len(desc), 256)) < cfg.descriptor_flip_rate, axis=1)
    return desc ^ flips


def walk_pairs(n_frames: int, insert_period: int, exclusion_window: int):
    """Candidate pairs of the vocabulary walk, assuming every frame is usable."""
    for q in range(n_frames):
        for r in range(0, q - exclusion_window + 1, insert_period):
            yield q, r


def generate_synthetic(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticDataset:
    """Deterministic synthetic sequence with ground truth for every walk pair."""
    cfg.validate()
    world = _World(cfg)
    frames = [_render_frame(world, f) for f in range(cfg.n_frames)]
    descriptors = {f: _render_descriptors(world, f) for f in range(cfg.n_frames)}
    labels = {}
    for q, r in walk_pairs(cfg.n_frames, cfg.insert_period, cfg.exclusion_window):
        labels[(q, r)] = world.room[q] == world.room[r] and world.visit[q] != world.visit[r]
    regions = [(rs, rs + ln) for rs, _, ln in sorted(cfg.loop_revisit_spec)]
    return SyntheticDataset(frames=frames, descriptors=descriptors, truth=LoopLabelSet(labels),
                            config=cfg, place_of=dict(enumerate(world.place)), regions=regions)
