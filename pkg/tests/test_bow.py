import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symbiolcd.bow import VocabTree, build_vocabulary, encode, quantize, similarity
from symbiolcd.errors import ModelFormatError, TrainingError


def random_sets(seed, n_frames=12, per_frame=30):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, (per_frame, 32), dtype=np.uint8) for _ in range(n_frames)]


def test_identical_descriptors_single_leaf():
    d = np.full((9, 32), 0xA5, dtype=np.uint8)
    tree = build_vocabulary([d[:5], d[5:]], k=9, depth=2, seed=0)
    assert all(np.array_equal(c, d[0]) for c in tree.centers[1:])
    assert len(set(quantize(d, tree).tolist())) == 1


def test_build_deterministic():
    sets = random_sets(0)
    assert build_vocabulary(sets, 4, 2, seed=3).to_bytes() == build_vocabulary(sets, 4, 2, seed=3).to_bytes()


def test_too_few_descriptors():
    with pytest.raises(TrainingError):
        build_vocabulary([np.zeros((3, 32), np.uint8)], k=9)


def test_node_count_bound():
    tree = build_vocabulary(random_sets(1, 20, 60), k=3, depth=3, seed=0)
    assert tree.n_nodes <= (3 ** 4 - 1) // 2
    assert all(np.isfinite(tree.idf)) and min(tree.idf) >= 0


def test_two_separated_clusters():
    rng = np.random.default_rng(2)
    base_a = np.zeros(256, np.uint8)
    base_b = np.ones(256, np.uint8)

    def noisy(base, n):
        bits = np.repeat(base[None], n, axis=0)
        flip = rng.random(bits.shape) < 0.05
        return np.packbits(bits ^ flip, axis=1)

    a, b = noisy(base_a, 20), noisy(base_b, 20)
    tree = build_vocabulary([a, b], k=2, depth=1, seed=0)
    qa, qb = quantize(a, tree), quantize(b, tree)
    # oracle: the optimal 2-clustering separates the two generators
    assert len(set(qa.tolist())) == 1 and len(set(qb.tolist())) == 1
    assert qa[0] != qb[0]


def test_encode_examples():
    sets = random_sets(3)
    tree = build_vocabulary(sets, 3, 2, seed=0)
    assert encode(np.zeros((0, 32), np.uint8), tree) == {}
    one = encode(sets[0][:1], tree)
    assert list(one.values()) == [1.0]
    v = encode(sets[0], tree)
    assert encode(np.concatenate([sets[0], sets[0]]), tree) == pytest.approx(v)
    assert sum(v.values()) == pytest.approx(1.0)
    perm = np.random.default_rng(0).permutation(len(sets[0]))
    assert encode(sets[0][perm], tree) == v


def test_similarity_examples():
    assert similarity({1: 0.5, 2: 0.5}, {1: 0.5, 2: 0.5}) == 1.0
    assert similarity({1: 1.0}, {2: 1.0}) == 0.0
    assert similarity({1: 1.0}, {1: 0.5, 2: 0.5}) == pytest.approx(0.5)
    assert similarity({}, {1: 1.0}) == 0.0


weights = st.dictionaries(st.integers(0, 20), st.floats(0.01, 1), min_size=1, max_size=8)


def _norm(d):
    s = sum(d.values())
    return {k: v / s for k, v in d.items()}


@settings(max_examples=200, deadline=None)
@given(weights, weights)
def test_similarity_properties(a, b):
    a, b = _norm(a), _norm(b)
    s = similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(similarity(b, a))
    assert similarity(a, a) == pytest.approx(1.0)


def test_vocab_file_round_trip():
    tree = build_vocabulary(random_sets(4), 3, 2, seed=1)
    raw = tree.to_bytes()
    again = VocabTree.from_bytes(raw)
    assert again.to_bytes() == raw
    d = random_sets(5, 1)[0]
    assert np.array_equal(quantize(d, again), quantize(d, tree))
    with pytest.raises(ModelFormatError):
        VocabTree.from_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ModelFormatError):
        VocabTree.from_bytes(raw[:-1])
