import json

import numpy as np
import pytest

from symbiolcd.errors import ConfigError, FormatError
from symbiolcd.ingest import (
    LoopLabelSet, PairScoreTable, SyntheticConfig, generate_synthetic, parse_descriptors,
    parse_frames, parse_ground_truth, parse_pair_scores, serialize_descriptors,
    serialize_frames, serialize_ground_truth, serialize_pair_scores,
)
from symbiolcd.geometry import build_semantic_vector
from symbiolcd.objfilter import filter_objects

LINE = ('{"frame_id":3,"timestamp":0.3,"width":640,"height":480,"objects":['
        '{"label":"cup","confidence":0.97,"bbox":[10.0,20.0,30.0,40.0]},'
        '{"label":"book","confidence":0.8,"bbox":[100.0,120.0,50.0,60.0]}]}\n')


def test_parse_one_frame():
    frames = parse_frames(LINE.encode())
    assert len(frames) == 1
    assert frames[0].frame_id == 3
    assert [o.label for o in frames[0].objects] == ["cup", "book"]


def test_empty_stream():
    assert parse_frames(b"") == []


def test_frames_sorted_by_id():
    other = LINE.replace('"frame_id":3', '"frame_id":1')
    frames = parse_frames((LINE + other).encode())
    assert [f.frame_id for f in frames] == [1, 3]


def test_bad_confidence_names_field_and_line():
    bad = LINE.replace("0.97", "1.3")
    with pytest.raises(FormatError) as exc:
        parse_frames(("\n" + bad).encode())
    assert exc.value.line == 2
    assert exc.value.field == "confidence"
    assert "line 2" in str(exc.value) and "confidence" in str(exc.value)


@pytest.mark.parametrize("mutate, field", [
    (lambda r: r.update(frame_id=-1), "frame_id"),
    (lambda r: r["objects"][0].update(bbox=[630.0, 20.0, 30.0, 40.0]), "bbox"),
    (lambda r: r["objects"][0].update(bbox=[10.0, 20.0, 0.0, 40.0]), "bbox"),
    (lambda r: r["objects"][0].update(label=""), "label"),
    (lambda r: r.update(width=0), "width"),
])
def test_validation_errors(mutate, field):
    rec = json.loads(LINE)
    mutate(rec)
    with pytest.raises(FormatError) as exc:
        parse_frames(json.dumps(rec).encode())
    assert exc.value.field == field


def test_malformed_json_reports_line():
    with pytest.raises(FormatError, match="line 2"):
        parse_frames((LINE + "{not json\n").encode())


def test_duplicate_frame_id():
    with pytest.raises(FormatError, match="duplicate"):
        parse_frames((LINE + LINE).encode())


def test_unknown_labels_accepted():
    frames = parse_frames(LINE.replace('"cup"', '"flux capacitor"').encode())
    assert frames[0].objects[0].label == "flux capacitor"


def test_frames_round_trip():
    data = serialize_frames(parse_frames(LINE.encode()))
    assert data == LINE.encode()
    assert serialize_frames(parse_frames(data)) == data


def test_ground_truth():
    truth = parse_ground_truth(b"query,reference,is_loop\n100,5,1\n")
    assert truth.get(100, 5) is True
    with pytest.raises(FormatError, match="greater"):
        parse_ground_truth(b"query,reference,is_loop\n5,100,1\n")
    with pytest.raises(FormatError, match="duplicate"):
        parse_ground_truth(b"query,reference,is_loop\n100,5,1\n100,5,1\n")
    with pytest.raises(FormatError, match="boolean"):
        parse_ground_truth(b"query,reference,is_loop\n100,5,maybe\n")
    with pytest.raises(FormatError, match="header"):
        parse_ground_truth(b"q,r,l\n100,5,1\n")


def test_ground_truth_round_trip():
    data = b"query,reference,is_loop\n40,3,0\n100,5,1\n"
    assert serialize_ground_truth(parse_ground_truth(data)) == data


def test_pair_scores():
    table = parse_pair_scores(b"query,reference,score\n10,2,0.73\n")
    assert table.get(2, 10) == 0.73
    assert table.get(10, 2) == 0.73
    assert table.get(11, 2) is None
    with pytest.raises(FormatError, match="outside"):
        parse_pair_scores(b"query,reference,score\n10,2,1.5\n")
    with pytest.raises(FormatError, match="conflicting"):
        parse_pair_scores(b"query,reference,score\n10,2,0.5\n2,10,0.6\n")
    # identical duplicates are harmless
    assert len(parse_pair_scores(b"query,reference,score\n10,2,0.5\n2,10,0.5\n")) == 1


def test_pair_scores_round_trip():
    data = b"query,reference,score\n10,2,0.73\n40,7,0.1\n"
    assert serialize_pair_scores(parse_pair_scores(data)) == data


def test_descriptor_round_trip():
    desc = np.random.default_rng(0).integers(0, 256, (5, 32), dtype=np.uint8)
    raw = serialize_descriptors(desc)
    assert raw[:4] == b"SBD1" and len(raw) == 8 + 5 * 32
    assert np.array_equal(parse_descriptors(raw), desc)
    assert serialize_descriptors(parse_descriptors(raw)) == raw
    with pytest.raises(FormatError):
        parse_descriptors(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        parse_descriptors(raw[:-1])


def test_label_set_rejects_bad_order():
    with pytest.raises(FormatError):
        LoopLabelSet({(3, 5): True})


def test_pair_table_construction_validates():
    with pytest.raises(FormatError):
        PairScoreTable({(1, 0): 2.0})


# -- synthetic generator -------------------------------------------------------

SMALL = SyntheticConfig(n_frames=90, loop_revisit_spec=((60, 0, 30),), seed=3)


def test_synthetic_deterministic():
    a, b = generate_synthetic(SMALL), generate_synthetic(SMALL)
    assert serialize_frames(a.frames) == serialize_frames(b.frames)
    assert serialize_ground_truth(a.truth) == serialize_ground_truth(b.truth)
    assert all(np.array_equal(a.descriptors[k], b.descriptors[k]) for k in a.descriptors)


def test_synthetic_seed_changes_output():
    other = SyntheticConfig(**{**SMALL.__dict__, "seed": 4})
    assert serialize_frames(generate_synthetic(SMALL).frames) != serialize_frames(
        generate_synthetic(other).frames)


def test_synthetic_frames_parse_back():
    data = generate_synthetic(SMALL)
    raw = serialize_frames(data.frames)
    assert parse_frames(raw) == data.frames
    assert serialize_frames(parse_frames(raw)) == raw


def test_zero_noise_revisit_matches_origin():
    cfg = SyntheticConfig(**{**SMALL.__dict__, "label_noise_rate": 0.0,
                             "position_noise_sigma": 0.0, "scale_drift": 0.0})
    data = generate_synthetic(cfg)
    for q in range(60, 90):
        cur = build_semantic_vector(filter_objects(data.frames[q]))
        ref = build_semantic_vector(filter_objects(data.frames[q - 60]))
        assert cur.allclose(ref, atol=1e-9)


def test_zero_noise_positive_pairs_identical():
    cfg = SyntheticConfig(**{**SMALL.__dict__, "label_noise_rate": 0.0,
                             "position_noise_sigma": 0.0, "scale_drift": 0.0})
    data = generate_synthetic(cfg)
    vec = {f.frame_id: build_semantic_vector(filter_objects(f)) for f in data.frames}
    positives = data.truth.positives()
    assert positives
    for q, r in positives:
        assert vec[q].allclose(vec[r], atol=1e-9)


def test_default_scale_matches_training_set_size():
    data = generate_synthetic(SyntheticConfig())
    assert abs(len(data.truth) - 2453) <= 0.02 * 2453
    assert abs(data.n_positive - 300) <= 0.02 * 300


def test_descriptors_are_256_bit():
    data = generate_synthetic(SMALL)
    assert all(d.shape[1] == 32 and d.dtype == np.uint8 for d in data.descriptors.values())


@pytest.mark.parametrize("revisits", [((20, 0, 30),), ((80, 0, 30),), ((40, 0, 20), (50, 0, 20))])
def test_infeasible_revisits(revisits):
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticConfig(n_frames=90, loop_revisit_spec=revisits))
