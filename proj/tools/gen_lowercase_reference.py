"""Writes tests/unit/lowercase_reference.inc from CPython's Unicode tables.

Each entry is {code point, UTF-8 of str.lower()} for the scripts normalize()
claims to cover.
"""
import pathlib

RANGES = [(0x20, 0x7F), (0xA0, 0x100), (0x100, 0x180), (0x370, 0x400), (0x400, 0x530),
          (0x531, 0x590), (0x1E00, 0x1F00), (0xFF01, 0xFF5F)]


def c_escape(s):
    return "".join("\\x%02X" % b for b in s.encode("utf-8"))


def main():
    rows = []
    for lo, hi in RANGES:
        for cp in range(lo, hi):
            ch = chr(cp)
            if not ch.isprintable() or ch.isspace():
                continue
            rows.append('{0x%04X, "%s"},' % (cp, c_escape(ch.lower())))
    out = pathlib.Path(__file__).resolve().parent.parent / "tests" / "unit" / "lowercase_reference.inc"
    out.write_text("// generated by tools/gen_lowercase_reference.py\n" + "\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
