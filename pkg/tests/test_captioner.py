import re

import pytest
from hypothesis import given, settings, strategies as st

from rescu.captioner import (
    COLLECTIVES, CaptionContext, assign_rp_to_region, count_for_regions, enhance_caption, number_to_word,
    rp_region_overlap,
)
from rescu.errors import NoInsertionPoint, OutOfRange
from rescu.types import RecurringPattern, RpMatrix, instance_regions

from conftest import make_fs

FIXTURES = [
    (CaptionContext("A group of babies sitting on the couch.", 6), "Six similar babies sitting on the couch."),
    (CaptionContext("An old picture of stone statues on a wall.", 6), "An old picture of six similar stone statues on a wall."),
    (
        CaptionContext("A group of men jumping in the sky.", 5, ts_detected=True, vp_status="outside"),
        "Five similar men jumping in the sky. The men have a potential translation symmetry in 3D "
        "and form a vanishing point outside of the image.",
    ),
]


@pytest.mark.parametrize("ctx,expected", FIXTURES)
def test_reference_captions(ctx, expected):
    assert enhance_caption(ctx) == expected


@pytest.mark.parametrize("ctx,expected", FIXTURES)
def test_idempotent(ctx, expected):
    once = enhance_caption(ctx)
    again = enhance_caption(CaptionContext(once, ctx.rp_count, ctx.ts_detected, ctx.vp_status))
    assert again == once


def test_mid_sentence_article_kept():
    out = enhance_caption(CaptionContext("There is a herd of cows in a field.", 4))
    assert out == "There is a four similar cows in a field."


def test_clause_variants():
    base = "A row of houses along the street."
    assert enhance_caption(CaptionContext(base, 7, ts_detected=True)) == (
        "Seven similar houses along the street. The houses have a potential translation symmetry in 3D."
    )
    assert enhance_caption(CaptionContext(base, 7, vp_status="inside")) == (
        "Seven similar houses along the street. The houses form a vanishing point inside of the image."
    )


def test_missing_period_added():
    assert enhance_caption(CaptionContext("A flock of birds", 3, ts_detected=True)) == (
        "Three similar birds. The birds have a potential translation symmetry in 3D."
    )


def test_no_insertion_point():
    with pytest.raises(NoInsertionPoint):
        enhance_caption(CaptionContext("A cat on a mat.", 3))
    with pytest.raises(NoInsertionPoint):
        enhance_caption(CaptionContext("   ", 3))


def test_bad_vp_status():
    with pytest.raises(ValueError):
        CaptionContext("A group of dogs.", 2, vp_status="maybe")


def test_number_words():
    assert number_to_word(6) == "six"
    assert number_to_word(2) == "two"
    assert number_to_word(21) == "twenty-one"
    assert number_to_word(40) == "forty"
    for bad in (1, 100, 0, True):
        with pytest.raises(OutOfRange):
            number_to_word(bad)


nouns = st.sampled_from(["dogs", "cars", "windows", "bottles", "people", "chairs"])
prefixes = st.sampled_from(["", "Here is ", "A photo showing "])
suffixes = st.sampled_from(["", " on a shelf", " in the street"])


@settings(max_examples=200)
@given(prefixes, st.sampled_from(COLLECTIVES), nouns, suffixes, st.integers(2, 99), st.booleans(),
       st.sampled_from(["none", "inside", "outside"]))
def test_properties(prefix, coll, noun, suffix, n, ts, vp):
    art = "A" if not prefix else "a"
    base = f"{prefix}{art} {coll} of {noun}{suffix}."
    ctx = CaptionContext(base, n, ts, vp)
    out = enhance_caption(ctx)
    word = number_to_word(n)
    assert len(re.findall(rf"\b{word}\b", out, re.IGNORECASE)) == 1
    assert out[0].isupper() and out.endswith(".")
    assert ("translation symmetry" in out) == ts
    assert ("vanishing point" in out) == (vp != "none")
    if ts and vp != "none":
        assert out.index("translation symmetry") < out.index("vanishing point")
    assert enhance_caption(CaptionContext(out, n, ts, vp)) == out


def _rp(boxes):
    pts = []
    for x0, y0, x1, y1 in boxes:
        pts.append((x0, y0))
        pts.append((x1, y1))
    fs = make_fs(pts, width=1000, height=1000)
    m = RpMatrix(rows=(tuple(range(0, len(pts), 2)), tuple(range(1, len(pts), 2))), words=(0, 1))
    return RecurringPattern(matrix=m, score=1.0, instances=instance_regions(m, fs))


def test_region_assignment():
    rp = _rp([(100, 100, 120, 120), (200, 100, 220, 120)])
    union = [inst.bbox for inst in rp.instances]
    x0 = min(b[0] for b in union)
    x1 = max(b[2] for b in union)
    assert assign_rp_to_region(rp, (0, 0, 1000, 1000))
    # only the first instance inside: half the area
    assert rp_region_overlap(rp, (0, 0, 150, 1000)) == pytest.approx(0.5)
    assert not assign_rp_to_region(rp, (0, 0, 150, 1000))
    # cut the second instance so exactly 90% of the union is inside
    b = union[1]
    cut = b[0] + 0.8 * (b[2] - b[0])
    assert rp_region_overlap(rp, (0, 0, cut, 1000)) == pytest.approx(0.9, abs=1e-12)
    assert assign_rp_to_region(rp, (0, 0, cut, 1000))
    assert x1 > x0


def test_count_for_regions():
    small = _rp([(100, 100, 120, 120), (200, 100, 220, 120)])
    assert count_for_regions([small], [("cars", (500, 500, 600, 600)), ("dogs", (0, 0, 300, 300))]) == ("dogs", 2)
    assert count_for_regions([small], [("cars", (500, 500, 600, 600))]) is None
