"""Code-level evaluation: edit distance, compression ratio, recall, IoU.

Graphics are compared through a symbol serialization: every command becomes
nine symbols (its type plus eight coordinates quantized to a 256-bin grid
over the viewbox, both axes sharing the larger extent). The edit score is
the Levenshtein distance between two serializations normalized by the
longer one, which makes it a proper metric on serialized form and keeps the
oracle (exhaustive recursion on short strings) trivial to state.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import StroketokError
from .model import Graphic
from .render import rasterize

EDIT_BINS = 256

# Symbol space: 0..2 are command types, 3..258 are coordinate bins.
_TYPE_SYMBOL = {"M": 0, "L": 1, "C": 2}
_BIN_OFFSET = 3


class ZeroLength(StroketokError):
    """Compression ratio is undefined for empty sequences."""


class VocabMismatch(StroketokError):
    """Token sequences come from different vocabulary layouts."""


class RenderFailure(StroketokError):
    """Graphic could not be rasterized for pixel comparison."""


@dataclass
class EvalRecord:
    edit: float
    cr: float
    cr_inverse: float
    recall: float
    pixel_iou: float
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "edit": self.edit,
            "cr": self.cr,
            "cr_inverse": self.cr_inverse,
            "recall": self.recall,
            "pixel_iou": self.pixel_iou,
        }
        if include_timings:
            out["timings"] = self.timings
        return out


def serialize_symbols(g: Graphic) -> list[int]:
    """Nine symbols per command: type, then 256-bin quantized coordinates."""
    min_x, min_y, w, h = g.viewbox
    extent = max(w, h)
    out: list[int] = []
    for cmd in g.all_commands():
        out.append(_TYPE_SYMBOL[cmd.cmd_type])
        for x, y in cmd.points():
            for v, lo in ((x, min_x), (y, min_y)):
                b = int(np.floor((v - lo) / extent * EDIT_BINS))
                out.append(_BIN_OFFSET + min(max(b, 0), EDIT_BINS - 1))
    return out


def code_length(g: Graphic) -> int:
    """Symbol count of the serialized simplified code (9 per command)."""
    return 9 * g.command_count()


def levenshtein(a, b) -> int:
    """Classic two-row DP edit distance over equality-comparable symbols."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a):
        cur = [i + 1]
        for j, cb in enumerate(b):
            cur.append(min(prev[j + 1] + 1, cur[j] + 1, prev[j] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_score(a: Graphic, b: Graphic) -> float:
    """Normalized edit distance between the two symbol serializations."""
    sa = serialize_symbols(a)
    sb = serialize_symbols(b)
    longest = max(len(sa), len(sb))
    if longest == 0:
        return 0.0
    return levenshtein(sa, sb) / longest


def compression_ratio(code_len: int, token_len: int) -> float:
    """code_len / token_len; values > 1 mean the tokens are shorter."""
    if code_len <= 0 or token_len <= 0:
        raise ZeroLength(f"lengths must be positive, got {code_len}, {token_len}")
    return code_len / token_len


def recall_score(golden, generated) -> float:
    """Multiset recall of the golden token ids within the generated ones."""
    glayout = _layout(golden)
    playout = _layout(generated)
    if glayout != playout:
        raise VocabMismatch(f"token layouts differ: {glayout} vs {playout}")
    gold = Counter(golden.tokens)
    hits = gold & Counter(generated.tokens)
    if not golden.tokens:
        raise ZeroLength("golden token sequence is empty")
    return sum(hits.values()) / len(golden.tokens)


def _layout(seq) -> tuple:
    meta = seq.meta or {}
    return (meta.get("rvq_depth"), meta.get("codebook_size"), meta.get("stages"))


def pixel_iou(a: Graphic, b: Graphic, res: int = 128, stroke_px: int = 2) -> float:
    """IoU of the two stroked-pixel sets at res x res.

    Rasterizes with a 2 px stroke by default: at comparison resolutions a
    1 px stroke makes the score hypersensitive to sub-pixel wobble.
    """
    try:
        ga = rasterize(a, res, stroke_px)
        gb = rasterize(b, res, stroke_px)
    except (ValueError, OverflowError) as e:
        raise RenderFailure(str(e)) from e
    union = int(np.count_nonzero(ga | gb))
    if union == 0:
        return 1.0
    inter = int(np.count_nonzero(ga & gb))
    return inter / union


class StageTimer:
    """Accumulates wall-clock seconds per named stage."""

    def __init__(self):
        self.timings: dict[str, float] = {}

    def time(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = timer.timings.get(name, 0.0) + (
                    time.perf_counter() - self.t0
                )
                return False

        return _Ctx()
