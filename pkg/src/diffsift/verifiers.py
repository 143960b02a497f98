"""Correctness judges that turn raw response text into binary rewards.

Classification uses normalized exact match, grounding uses box IoU against a
threshold.  Responses that cannot be parsed count as incorrect rather than
being dropped, so reward vectors always keep their full length.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .core import BBox

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_MAX_PIXELS = 802816  # 896 x 896

_TRAILING_PUNCT = ".,;:!?"
_ANSWER_TAG = re.compile(r"answer\s*:", re.IGNORECASE)
# Four comma-separated numbers inside one pair of brackets; also matches the
# inner array of a JSON object like {"bbox": [x1, y1, x2, y2]}.
_NUM = r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?"
_QUAD = re.compile(r"\[\s*(%s)\s*,\s*(%s)\s*,\s*(%s)\s*,\s*(%s)\s*\]" % ((_NUM,) * 4))


class BBoxParseError(ValueError):
    """Raised when no usable four-number box can be extracted from a response."""


@dataclass(frozen=True, slots=True)
class ImageSize:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def pixels(self) -> int:
        return self.width * self.height


def extract_answer(response: str) -> str:
    """Return the text after the last 'answer:' tag, or the whole response."""
    matches = list(_ANSWER_TAG.finditer(response))
    return response[matches[-1].end():] if matches else response


def normalize_label(text: str) -> str:
    """Trim whitespace, strip trailing punctuation, lowercase."""
    return text.strip().rstrip(_TRAILING_PUNCT).strip().lower()


def verify_classification(response: str, gold_label: str) -> bool:
    """True iff the (extracted, normalized) response label matches the gold label."""
    if not gold_label:
        raise ValueError("gold_label must be non-empty")
    return normalize_label(extract_answer(response)) == normalize_label(gold_label)


def parse_bbox(response: str) -> BBox:
    """Extract the first bracketed [x1, y1, x2, y2] group from a response.

    Coordinates are reordered so x1 < x2 and y1 < y2.  A zero-width or
    zero-height group cannot form a box and raises :class:`BBoxParseError`,
    as does text with no four-number group at all.
    """
    m = _QUAD.search(response)
    if m is None:
        raise BBoxParseError(f"no four-number box group in response: {response[:80]!r}")
    x1, y1, x2, y2 = (float(v) for v in m.groups())
    x1, x2 = sorted((x1, x2))
    y1, y2 = sorted((y1, y2))
    if x1 == x2 or y1 == y2 or min(x1, y1) < 0:
        raise BBoxParseError(f"degenerate box group: {m.group(0)}")
    return BBox(x1, y1, x2, y2)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; disjoint boxes score 0."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def verify_grounding(response: str, gold: BBox, threshold: float = DEFAULT_IOU_THRESHOLD) -> bool:
    """True iff a box parses out of the response and overlaps gold at or above
    the threshold.  Unparseable responses are simply wrong."""
    if not (0 < threshold <= 1):
        raise ValueError("threshold must lie in (0, 1]")
    try:
        predicted = parse_bbox(response)
    except BBoxParseError:
        return False
    return iou(predicted, gold) >= threshold


def rescale_box(b: BBox, original: ImageSize, max_pixels: int = DEFAULT_MAX_PIXELS) -> BBox:
    """Rescale a box the way its image would be rescaled under a pixel budget.

    Images are shrunk so neither side exceeds the budget's square side
    (isqrt(max_pixels); 896 for the default budget).  Boxes on images already
    inside the budget are returned unchanged; otherwise all four coordinates
    are scaled, rounded to the nearest integer, and clamped to the scaled
    image.
    """
    if b.x2 > original.width or b.y2 > original.height:
        raise ValueError(f"box {b.as_list()} lies outside a {original.width}x{original.height} image")
    side_cap = math.isqrt(max_pixels)
    if original.pixels <= max_pixels and max(original.width, original.height) <= side_cap:
        return b
    s = min(side_cap / original.width, side_cap / original.height, 1.0)
    new_w = round(original.width * s)
    new_h = round(original.height * s)
    x1 = min(max(round(b.x1 * s), 0), new_w)
    y1 = min(max(round(b.y1 * s), 0), new_h)
    x2 = min(max(round(b.x2 * s), 0), new_w)
    y2 = min(max(round(b.y2 * s), 0), new_h)
    # Rounding can collapse a sliver box; keep it one pixel wide instead.
    if x2 <= x1:
        x1, x2 = (x1 - 1, x2) if x2 >= new_w else (x1, x1 + 1)
    if y2 <= y1:
        y1, y2 = (y1 - 1, y2) if y2 >= new_h else (y1, y1 + 1)
    return BBox(float(x1), float(y1), float(x2), float(y2))
