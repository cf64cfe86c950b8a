"""Writes src/viridis.inc: the 256-entry viridis table as 8-bit RGB."""
import sys

from matplotlib import colormaps

cmap = colormaps["viridis"].resampled(256)
rows = []
for i in range(256):
    r, g, b, _ = cmap(i)
    rows.append("    {%d, %d, %d}," % (round(r * 255), round(g * 255), round(b * 255)))
out = sys.argv[1] if len(sys.argv) > 1 else "src/viridis.inc"
with open(out, "w") as f:
    f.write("// Generated by tools/gen/make_colormap.py; do not edit.\n")
    f.write("\n".join(rows) + "\n")
