"""Input parsing, validation and synthetic data generation."""

from .formats import (
    FrameObservation, LoopLabelSet, ObjectInstance, PairScoreTable,
    load_descriptor_dir, parse_descriptors, parse_frames, parse_ground_truth,
    parse_pair_scores, save_descriptor_dir, serialize_descriptors, serialize_frames,
    serialize_ground_truth, serialize_pair_scores,
)
from .synthetic import SyntheticConfig, SyntheticDataset, generate_synthetic

__all__ = [
    "FrameObservation", "LoopLabelSet", "ObjectInstance", "PairScoreTable",
    "load_descriptor_dir", "parse_descriptors", "parse_frames", "parse_ground_truth",
    "parse_pair_scores", "save_descriptor_dir", "serialize_descriptors", "serialize_frames",
    "serialize_ground_truth", "serialize_pair_scores",
    "SyntheticConfig", "SyntheticDataset", "generate_synthetic",
]
