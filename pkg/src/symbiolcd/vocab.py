"""Online vocabulary of reference semantic vectors."""

from __future__ import annotations

import bisect
import json

from .errors import ConfigError, FormatError
from .geometry import SemanticVector, build_semantic_vector


class VocabularyDB:
    """Append-only store of periodically inserted semantic vectors.

    A vector enters when its frame id is a multiple of ``insert_period``.
    Queries only return entries at least ``exclusion_window`` frames older
    than the query frame.
    """

    def __init__(self, insert_period: int = 5, exclusion_window: int = 30):
        if insert_period < 1:
            raise ConfigError("insert_period must be a positive integer")
        if exclusion_window < 1:
            raise ConfigError("exclusion_window must be a positive integer")
        self.insert_period = int(insert_period)
        self.exclusion_window = int(exclusion_window)
        self.entries: list[SemanticVector] = []
        self._ids: list[int] = []

    def __len__(self):
        return len(self.entries)

    def maybe_insert(self, item) -> bool:
        """Insert a ``SemanticVector``, or a filtered frame which is converted
        when it still has at least two objects."""
        if not isinstance(item, SemanticVector):
            if len(item.objects) < 2 or item.frame_id % self.insert_period:
                return False
            item = build_semantic_vector(item)
        if item.frame_id % self.insert_period:
            return False
        if item.frame_id in self._ids:
            raise ValueError(f"frame {item.frame_id} already in vocabulary")
        if self._ids and item.frame_id < self._ids[-1]:
            raise ValueError("vocabulary entries must arrive in frame order")
        self.entries.append(item)
        self._ids.append(item.frame_id)
        return True

    def query_candidates(self, frame_id) -> list[SemanticVector]:
        """Entries with ``id <= frame_id - exclusion_window``, ascending.

        ``frame_id`` may also be a ``SemanticVector``.
        """
        if isinstance(frame_id, SemanticVector):
            frame_id = frame_id.frame_id
        cut = bisect.bisect_right(self._ids, frame_id - self.exclusion_window)
        return list(self.entries[:cut])

    def dumps(self) -> bytes:
        head = {"insert_period": self.insert_period, "exclusion_window": self.exclusion_window}
        lines = [json.dumps(head, separators=(",", ":"))]
        lines += [json.dumps(e.to_record(), separators=(",", ":")) for e in self.entries]
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def loads(cls, data: bytes) -> "VocabularyDB":
        lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
        if not lines:
            raise FormatError("empty vocabulary file")
        try:
            head = json.loads(lines[0])
            db = cls(head["insert_period"], head["exclusion_window"])
            for ln in lines[1:]:
                db.maybe_insert(SemanticVector.from_record(json.loads(ln)))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad vocabulary file: {exc}") from None
        return db
