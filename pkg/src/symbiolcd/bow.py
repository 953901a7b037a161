"""Minimal vocabulary-tree bag-of-words scorer for 256-bit binary descriptors.

Stand-in for an external BoW system: hierarchical k-medians in Hamming space,
idf-weighted leaf histograms and the L1 similarity score.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError, TrainingError
from .seeding import derive_rng

VOCAB_MAGIC = b"SBV1"
NO_PARENT = 0xFFFFFFFF
MAX_ITER = 10


@dataclass
class VocabTree:
    k: int
    depth: int
    parents: list[int] = field(default_factory=list)
    centers: list[np.ndarray] = field(default_factory=list)  # uint8[32] each
    idf: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._index()

    def _index(self):
        self.children: list[list[int]] = [[] for _ in self.parents]
        for nid, p in enumerate(self.parents):
            if p != NO_PARENT:
                self.children[p].append(nid)
        self._child_bits = {
            nid: np.unpackbits(np.stack([self.centers[c] for c in ch]), axis=1).astype(np.float32)
            for nid, ch in enumerate(self.children) if ch
        }

    @property
    def n_nodes(self) -> int:
        return len(self.parents)

    @property
    def leaves(self) -> list[int]:
        return [n for n, ch in enumerate(self.children) if not ch]

    def to_bytes(self) -> bytes:
        out = [VOCAB_MAGIC, struct.pack("<III", self.k, self.depth, self.n_nodes)]
        for p, c, w in zip(self.parents, self.centers, self.idf):
            out.append(struct.pack("<I", p))
            out.append(np.asarray(c, dtype=np.uint8).tobytes())
            out.append(struct.pack("<d", w))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "VocabTree":
        if data[:4] != VOCAB_MAGIC:
            raise ModelFormatError("bad vocabulary magic (expected SBV1)")
        if len(data) < 16:
            raise ModelFormatError("truncated vocabulary header")
        k, depth, n = struct.unpack_from("<III", data, 4)
        rec = 4 + 32 + 8
        if len(data) != 16 + n * rec:
            raise ModelFormatError("vocabulary file size does not match node count")
        parents, centers, idf = [], [], []
        for i in range(n):
            off = 16 + i * rec
            (p,) = struct.unpack_from("<I", data, off)
            if p != NO_PARENT and p >= i:
                raise ModelFormatError(f"node {i} lists parent {p} out of order")
            parents.append(p)
            centers.append(np.frombuffer(data, np.uint8, 32, off + 4).copy())
            idf.append(struct.unpack_from("<d", data, off + 36)[0])
        return cls(k=k, depth=depth, parents=parents, centers=centers, idf=idf)


def _hamming(bits: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) Hamming distances between unpacked bit rows."""
    return (bits.sum(axis=1)[:, None] + centers.sum(axis=1)[None, :]
            - 2 * bits @ centers.T)


def _kmedians(bits: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Cluster unpacked bit rows; returns the assignment of each row."""
    n = len(bits)
    chosen = [int(rng.integers(n))]
    dmin = _hamming(bits, bits[chosen]).min(axis=1).astype(np.float64)
    for _ in range(1, k):
        w = dmin * dmin
        total = w.sum()
        nxt = int(rng.integers(n)) if total == 0 else int(rng.choice(n, p=w / total))
        chosen.append(nxt)
        dmin = np.minimum(dmin, _hamming(bits, bits[[nxt]])[:, 0])
    centers = bits[chosen].copy()
    assign = np.argmin(_hamming(bits, centers), axis=1)
    for _ in range(MAX_ITER):
        for c in range(k):
            members = bits[assign == c]
            if len(members):
                # majority vote per bit; an exact half goes to 0
                centers[c] = (2 * members.sum(axis=0) > len(members)).astype(bits.dtype)
        new = np.argmin(_hamming(bits, centers), axis=1)
        if np.array_equal(new, assign):
            break
        assign = new
    return assign


def build_vocabulary(descriptor_sets, k: int = 9, depth: int = 3, seed: int = 0) -> VocabTree:
    """Build a k-ary tree of the given depth from per-frame descriptor arrays."""
    if k < 2 or depth < 1:
        raise ValueError("need k >= 2 and depth >= 1")
    sets = [np.asarray(d, dtype=np.uint8).reshape(-1, 32) for d in descriptor_sets]
    n_frames = len(sets)
    if sum(len(s) for s in sets) < k:
        raise TrainingError(f"need at least k={k} descriptors to build a vocabulary")
    packed = np.concatenate(sets)
    frame_of = np.concatenate([np.full(len(s), i) for i, s in enumerate(sets)])
    bits = np.unpackbits(packed, axis=1).astype(np.float32)

    parents, centers, depths, members = [NO_PARENT], [np.zeros(32, np.uint8)], [0], [np.arange(len(bits))]
    queue = [0]
    while queue:
        nid = queue.pop(0)
        idx = members[nid]
        if depths[nid] >= depth or len(idx) < k:
            continue
        sub = bits[idx]
        if (sub == sub[0]).all() and nid != 0:
            continue
        assign = _kmedians(sub, k, derive_rng(seed, "vocab-node", nid))
        for c in range(k):
            part = idx[assign == c]
            if not len(part):
                continue
            majority = (2 * bits[part].sum(axis=0) > len(part)).astype(np.uint8)
            parents.append(nid)
            centers.append(np.packbits(majority))
            depths.append(depths[nid] + 1)
            members.append(part)
            queue.append(len(parents) - 1)

    tree = VocabTree(k=k, depth=depth, parents=parents, centers=centers,
                     idf=[0.0] * len(parents))
    for leaf in tree.leaves:
        n_leaf = len(np.unique(frame_of[members[leaf]]))
        tree.idf[leaf] = math.log(n_frames / n_leaf)
    return tree


def quantize(descriptors, tree: VocabTree) -> np.ndarray:
    """Leaf id reached by each descriptor under greedy min-Hamming descent."""
    desc = np.asarray(descriptors, dtype=np.uint8).reshape(-1, 32)
    bits = np.unpackbits(desc, axis=1).astype(np.float32)
    node = np.zeros(len(bits), dtype=np.int64)
    for _ in range(tree.depth + 1):
        moved = False
        for nid in np.unique(node):
            ch = tree.children[nid]
            if not ch:
                continue
            sel = node == nid
            best = np.argmin(_hamming(bits[sel], tree._child_bits[nid]), axis=1)
            node[sel] = np.asarray(ch)[best]
            moved = True
        if not moved:
            break
    return node


def encode(descriptors, tree: VocabTree) -> dict[int, float]:
    """L1-normalised idf-weighted leaf histogram; empty dict for no descriptors."""
    desc = np.asarray(descriptors, dtype=np.uint8).reshape(-1, 32)
    if len(desc) == 0:
        return {}
    counts = Counter(int(x) for x in quantize(desc, tree))
    weights = {leaf: n * tree.idf[leaf] for leaf, n in sorted(counts.items())}
    total = sum(weights.values())
    if total <= 0.0:
        # every hit leaf is present in all training frames: fall back to tf
        weights = {leaf: float(n) for leaf, n in sorted(counts.items())}
        total = float(sum(counts.values()))
    return {leaf: w / total for leaf, w in weights.items() if w > 0.0}


def similarity(v1: dict, v2: dict) -> float:
    """L1 score ``1 - 0.5 * sum|v1 - v2|``; 0 if either vector is empty."""
    if not v1 or not v2:
        return 0.0
    diff = sum(abs(v1.get(k, 0.0) - v2.get(k, 0.0)) for k in sorted(set(v1) | set(v2)))
    return min(1.0, max(0.0, 1.0 - 0.5 * diff))
