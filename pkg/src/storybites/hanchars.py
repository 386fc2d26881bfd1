"""Counting Chinese text length the way the page/feedback limits define it.

A character counts only when its Unicode script property is Han. CJK
punctuation, fullwidth digits, Latin, emoji, and whitespace never count.
Lookups run against the frozen range table via bisection.
"""

from __future__ import annotations

from bisect import bisect_right

from ._han_ranges import HAN_RANGES

_STARTS = tuple(lo for lo, _ in HAN_RANGES)
_ENDS = tuple(hi for _, hi in HAN_RANGES)


def is_han(ch: str) -> bool:
    """True when the single code point has script=Han."""
    cp = ord(ch)
    idx = bisect_right(_STARTS, cp) - 1
    return idx >= 0 and cp <= _ENDS[idx]


def count_han_chars(text: str) -> int:
    """Number of script=Han code points in ``text``. Total function."""
    return sum(1 for ch in text if is_han(ch))
