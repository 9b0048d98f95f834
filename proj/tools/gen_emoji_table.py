#!/usr/bin/env python3
"""Regenerates the bundled emoji name table (core/data/emoji_names.json and
core/src/emoji_table.inc) from the `emoji` package's CLDR short names."""
import json
import pathlib
import sys

import emoji

RANGES = [
    (0x1F600, 0x1F64F),  # faces
    (0x1F910, 0x1F92F),  # more faces, hands
    (0x1F440, 0x1F450),  # eyes, hands
    (0x1F30A, 0x1F30A),
    (0x1F300, 0x1F308),  # weather
    (0x1F3FB, 0x1F3FF),  # skin tone modifiers
    (0x1F691, 0x1F699),  # emergency vehicles
    (0x1F3E0, 0x1F3E5),  # buildings
    (0x1F490, 0x1F49F),  # hearts
    (0x1F4A5, 0x1F4AF),
]
SINGLES = [
    0x2600, 0x2601, 0x2602, 0x2603, 0x2604, 0x26A0, 0x26A1, 0x26C8, 0x2744,
    0x2764, 0x2705, 0x274C, 0x2757, 0x2753, 0x2714, 0x2716, 0x2728, 0x2B50,
    0x1F525, 0x1F198, 0x1F6A8, 0x1F6A9, 0x1F6D1, 0x1F30B, 0x1F30D, 0x1F30E,
    0x1F30F, 0x1F327, 0x1F328, 0x1F329, 0x1F32A, 0x1F32B, 0x1F321, 0x1F4E2,
    0x1F4E3, 0x1F4F0, 0x1F4F7, 0x1F4F8, 0x1F489, 0x1F48A, 0x1F9A0, 0x1F637,
    0x1F912, 0x1F915, 0x1F97A, 0x1F975, 0x1F976, 0x1F973, 0x1F970, 0x1F929,
    0x1F92A, 0x1F92B, 0x1F92C, 0x1F92D, 0x1F92E, 0x1F9D0, 0x1F90D, 0x1F90E,
    0x1F9E1, 0x1F49A, 0x1F499, 0x1F49C, 0x1F5A4, 0x1F44F, 0x1F64F, 0x1F4AA,
    0x1F680, 0x1F681, 0x1F682, 0x1F6F3, 0x2708, 0x1F3C3, 0x1F6B6, 0x1F440,
]


def main() -> int:
    root = pathlib.Path(__file__).resolve().parent.parent
    cps = set(SINGLES)
    for lo, hi in RANGES:
        cps.update(range(lo, hi + 1))
    table = {}
    for cp in sorted(cps):
        ch = chr(cp)
        name = None
        for candidate in (ch, ch + "️"):
            if candidate in emoji.EMOJI_DATA:
                name = emoji.EMOJI_DATA[candidate]["en"].strip(":")
                break
        if name is None:
            continue
        table["%X" % cp] = name
    (root / "core/data/emoji_names.json").write_text(
        json.dumps(table, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    with open(root / "core/src/emoji_table.inc", "w", encoding="utf-8") as out:
        out.write("// Generated by tools/gen_emoji_table.py. Do not edit.\n")
        for key, name in table.items():
            out.write('{0x%s, "%s"},\n' % (key, name))
    print(len(table), "entries", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
