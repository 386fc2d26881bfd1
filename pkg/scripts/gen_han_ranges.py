#!/usr/bin/env python3
"""Regenerate src/storybites/_han_ranges.py from the Unicode character database.

The `regex` package ships the UCD script property tables. We freeze the Han
ranges into a plain module so the runtime counter needs no third-party lookup
and so the test suite can diff the frozen table against a live per-code-point
classification.

Run from the repo root after a Unicode version bump:

    python scripts/gen_han_ranges.py
"""

from pathlib import Path

import regex

OUT = Path(__file__).resolve().parent.parent / "src" / "storybites" / "_han_ranges.py"

HEADER = '''"""Frozen Unicode script=Han code point ranges (inclusive).

Auto-generated by scripts/gen_han_ranges.py from the UCD tables shipped
with regex {version}. Do not edit by hand; regenerate to pick up a newer
Unicode release.
"""

HAN_RANGES: tuple[tuple[int, int], ...] = (
'''


def han_ranges() -> list[tuple[int, int]]:
    is_han = regex.compile(r"\p{Han}").match
    ranges: list[tuple[int, int]] = []
    start = None
    for cp in range(0x110000):
        surrogate = 0xD800 <= cp <= 0xDFFF
        han = not surrogate and is_han(chr(cp)) is not None
        if han and start is None:
            start = cp
        elif not han and start is not None:
            ranges.append((start, cp - 1))
            start = None
    if start is not None:
        ranges.append((start, 0x10FFFF))
    return ranges


def main() -> None:
    lines = [HEADER.format(version=regex.__version__)]
    for lo, hi in han_ranges():
        lines.append(f"    (0x{lo:04X}, 0x{hi:04X}),\n")
    lines.append(")\n")
    OUT.write_text("".join(lines), encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
