import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symbiolcd.errors import ConfigError
from symbiolcd.ingest.formats import FrameObservation, ObjectInstance
from symbiolcd.objfilter import DEFAULT_MOVING_LABELS, FilterPolicy, filter_objects


def obj(label, w=10.0, h=10.0, conf=0.9, x=0.0, y=0.0):
    return ObjectInstance(label, conf, (x, y, w, h))


def frame(objs, width=640, height=480):
    return FrameObservation(0, width, height, tuple(objs))


def test_moving_object_removed():
    out = filter_objects(frame([obj("person", 50, 50), obj("cup", 20, 20), obj("book", 30, 10)]))
    assert [o.label for o in out.objects] == ["cup", "book"]
    assert out.indices == (1, 2)


def test_empty_frame():
    out = filter_objects(frame([]))
    assert out.objects == () and not out.usable


def test_oversized_and_low_confidence_removed():
    objs = [obj("dining table", 600, 300), obj("cup", conf=0.5), obj("chair"), obj("book", 5, 5)]
    out = filter_objects(frame(objs))
    assert [o.label for o in out.objects] == ["chair", "book"]


def test_twelve_chairs_keeps_eight_largest():
    objs = [obj("chair", w=float(a), h=1.0) for a in (7, 3, 12, 1, 9, 5, 11, 2, 8, 10, 4, 6)]
    out = filter_objects(frame(objs), FilterPolicy(max_objects=8))
    # oracle: the 8-subset with the largest total area, ordered largest first
    best = max(itertools.combinations(range(12), 8), key=lambda s: sum(objs[i].area for i in s))
    expected = sorted(best, key=lambda i: -objs[i].area)
    assert list(out.indices) == expected


def test_equal_area_tie_break():
    objs = [obj("mug"), obj("book"), obj("mug"), obj("apple")]
    out = filter_objects(frame(objs))
    assert [(o.label, i) for o, i in zip(out.objects, out.indices)] == [
        ("apple", 3), ("book", 1), ("mug", 0), ("mug", 2)]


def test_custom_moving_labels():
    out = filter_objects(frame([obj("person"), obj("plant"), obj("tv")]),
                         FilterPolicy(moving_labels={"plant"}))
    assert sorted(o.label for o in out.objects) == ["person", "tv"]


@pytest.mark.parametrize("kwargs", [{"max_objects": 1}, {"max_area_fraction": 0.0},
                                    {"max_area_fraction": 1.5}, {"min_confidence": -0.1}])
def test_policy_validation(kwargs):
    with pytest.raises(ConfigError):
        FilterPolicy(**kwargs)


labels = st.sampled_from(["person", "cup", "book", "chair", "tv", "dog", "plant"])
objects = st.builds(obj, labels, st.floats(1, 640), st.floats(1, 480), st.floats(0, 1))


@settings(max_examples=200, deadline=None)
@given(st.lists(objects, max_size=20), st.integers(2, 10))
def test_filter_properties(objs, n):
    policy = FilterPolicy(max_objects=n)
    out = filter_objects(frame(objs), policy)
    assert len(out.objects) <= n
    assert not any(o.label in DEFAULT_MOVING_LABELS for o in out.objects)
    assert all(objs[i] == o for i, o in zip(out.indices, out.objects))
    areas = [o.area for o in out.objects]
    assert areas == sorted(areas, reverse=True)
    again = filter_objects(out, policy)
    assert again == out
