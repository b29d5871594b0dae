"""Rule-based caption enhancement with pattern counts and geometry facts."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from shapely.geometry import box as shapely_box
from shapely.ops import unary_union

from .errors import NoInsertionPoint, OutOfRange
from .types import Box, RecurringPattern

COLLECTIVES = ("group", "herd", "heard", "row", "series", "bunch", "flock", "pack", "set", "collection")
ASSIGN_OVERLAP = 0.90
VP_STATUSES = ("none", "inside", "outside")

_ONES = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
         "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen")
_TENS = ("", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety")
_IRREGULAR_PLURALS = {"men", "women", "people", "children", "feet", "teeth", "mice", "geese", "sheep", "deer", "fish", "cattle"}
_DETERMINERS = {"the", "these", "those", "some", "many", "several", "its", "their", "his", "her", "our", "my", "your"}
_ARTICLES = {"a", "an", "the"}

_COLLECTIVE_RE = re.compile(
    r"\b(?:(?P<art>a|an|the)\s+)?(?:" + "|".join(COLLECTIVES) + r")\s+of\s+",
    re.IGNORECASE,
)
_WORD_RE = re.compile(r"[A-Za-z][A-Za-z'-]*")


@dataclass(frozen=True)
class CaptionContext:
    base_caption: str
    rp_count: int
    ts_detected: bool = False
    vp_status: str = "none"
    noun_regions: Optional[tuple[tuple[str, Box], ...]] = None

    def __post_init__(self) -> None:
        if self.vp_status not in VP_STATUSES:
            raise ValueError(f"vp_status must be one of {VP_STATUSES}, got {self.vp_status!r}")


def number_to_word(n: int) -> str:
    """Lowercase English cardinal for 2..99 (``21 -> "twenty-one"``)."""
    if not isinstance(n, int) or isinstance(n, bool) or not 2 <= n <= 99:
        raise OutOfRange(f"count {n!r} outside 2..99")
    if n < 20:
        return _ONES[n]
    tens, ones = divmod(n, 10)
    return _TENS[tens] if ones == 0 else f"{_TENS[tens]}-{_ONES[ones]}"


def is_plural(token: str) -> bool:
    t = token.lower()
    if t in _IRREGULAR_PLURALS:
        return True
    return len(t) > 2 and t.endswith("s") and not t.endswith(("ss", "us", "is"))


def _at_sentence_start(text: str, pos: int) -> bool:
    return text[:pos].strip() == "" or text[:pos].rstrip().endswith((".", "!", "?"))


def _cap(word: str) -> str:
    return word[:1].upper() + word[1:]


def _insert_count(caption: str, count_word: str) -> str:
    m = _COLLECTIVE_RE.search(caption)
    if m is not None:
        start = m.start()
        if m.group("art") and not _at_sentence_start(caption, start):
            start = m.start() + len(m.group("art")) + 1  # keep a mid-sentence article
        phrase = f"{count_word} similar "
        if _at_sentence_start(caption, start):
            phrase = _cap(phrase)
        return caption[:start] + phrase + caption[m.end():]

    # fallback: after the first "of" whose noun phrase holds a plural token
    tokens = list(_WORD_RE.finditer(caption))
    for idx, tok in enumerate(tokens):
        if tok.group().lower() != "of":
            continue
        k = idx + 1
        while k < len(tokens) and tokens[k].group().lower() in _DETERMINERS:
            k += 1
        window = tokens[k : k + 3]
        if k < len(tokens) and any(is_plural(t.group()) for t in window):
            pos = tokens[k].start()
            return caption[:pos] + f"{count_word} similar " + caption[pos:]
    raise NoInsertionPoint(f"no collective noun and no 'of' + plural noun in {caption!r}")


def subject_noun(enhanced: str, count_word: str) -> str:
    """First plural token after ``<count> similar``; else the token right after it."""
    m = re.search(rf"\b{re.escape(count_word)}\s+similar\s+", enhanced, re.IGNORECASE)
    if m is None:
        raise NoInsertionPoint("count phrase not found")
    following = list(_WORD_RE.finditer(enhanced, m.end()))
    for t in following[:4]:
        if is_plural(t.group()):
            return t.group()
    if not following:
        raise NoInsertionPoint("no noun after the count phrase")
    return following[0].group()


def enhance_caption(ctx: CaptionContext) -> str:
    """Insert the pattern count into a caption and append geometry clauses.

    A collective phrase such as "a group of" becomes "<count> similar"; the
    article is dropped only when the phrase opens the sentence. Without a
    collective noun the count goes after the first "of" that introduces a
    plural noun. Translation symmetry and vanishing point facts follow as a
    second sentence about the same noun. Enhancing an enhanced caption with
    the same context returns it unchanged.

    Raises:
        NoInsertionPoint: the caption offers no place for the count.
        OutOfRange: the count is outside 2..99.
    """
    base = ctx.base_caption.strip()
    if not base:
        raise NoInsertionPoint("empty caption")
    count_word = number_to_word(ctx.rp_count)

    ts_clause = "have a potential translation symmetry in 3D"
    vp_clause = f"form a vanishing point {ctx.vp_status} of the image"
    already = re.search(rf"\b{re.escape(count_word)}\s+similar\b", base, re.IGNORECASE) is not None
    text = base if already else _insert_count(base, count_word)

    want_ts = ctx.ts_detected and ts_clause not in text
    want_vp = ctx.vp_status != "none" and vp_clause not in text
    if not (want_ts or want_vp):
        return text
    noun = subject_noun(text, count_word)
    if want_ts and want_vp:
        extra = f"The {noun} {ts_clause} and {vp_clause}."
    elif want_ts:
        extra = f"The {noun} {ts_clause}."
    else:
        extra = f"The {noun} {vp_clause}."
    if not text.endswith((".", "!", "?")):
        text += "."
    return f"{text} {extra}"


def _union(rp: RecurringPattern):
    return unary_union([shapely_box(*inst.bbox) for inst in rp.instances])


def rp_region_overlap(rp: RecurringPattern, region: Box) -> float:
    """|union of instance boxes ∩ region| / |union of instance boxes|."""
    r = shapely_box(*region)
    if r.area <= 0:
        raise ValueError(f"region {region} has zero area")
    u = _union(rp)
    if u.area <= 0:
        return 0.0
    return float(u.intersection(r).area / u.area)


def assign_rp_to_region(rp: RecurringPattern, region: Box) -> bool:
    """True when at least 90% of the pattern's instance area lies in ``region``."""
    return rp_region_overlap(rp, region) >= ASSIGN_OVERLAP - 1e-12


def count_for_regions(
    rps: Sequence[RecurringPattern], noun_regions: Sequence[tuple[str, Box]]
) -> Optional[tuple[str, int]]:
    """First (noun, count) whose region receives a pattern, patterns in score order."""
    for rp in sorted(rps, key=lambda p: -p.score):
        for noun, region in noun_regions:
            if assign_rp_to_region(rp, region):
                return noun, rp.count
    return None
