#!/usr/bin/env python3
"""Regenerates src/font_data.inc: an 8x12 monochrome rasterization of
DejaVu Sans Mono (printable ASCII), one byte per row, MSB = leftmost pixel."""
import sys
from PIL import Image, ImageDraw, ImageFont

FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf"
W, H = 8, 12


def main(out):
    font = ImageFont.truetype(FONT, 11)
    lines = ["// Generated by tools/gen_font.py; do not edit.",
             "// 8x12 cells, characters 0x20..0x7E, MSB is the leftmost column."]
    for code in range(32, 127):
        im = Image.new("1", (W, H), 0)
        draw = ImageDraw.Draw(im)
        draw.fontmode = "1"
        draw.text((0, -2), chr(code), font=font, fill=1)
        rows = []
        for y in range(H):
            byte = 0
            for x in range(W):
                if im.getpixel((x, y)):
                    byte |= 0x80 >> x
            rows.append(f"0x{byte:02x}")
        esc = chr(code).replace("\\", "backslash")
        lines.append("{" + ", ".join(rows) + "},  // " + esc)
    with open(out, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/font_data.inc")
