"""Deterministic SVG phase portraits on the unrolled phase cylinder.

The picture is the rectangle ``[0, perimeter) x (-1, 1)`` in (r, s)
coordinates.  Periodic orbits are drawn as dots, manifold branches as
polylines colored by kind, and crossings as ring markers.  Every number is
written with a fixed format and every collection is emitted in input order,
so identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 150, 20, 50
EDGE_FRACTION = 0.02          # crossings this close to r = 0 (mod P) are drawn twice

KIND_COLORS = {
    "unstable+": "#d62728",
    "unstable-": "#ff7f0e",
    "stable+": "#1f77b4",
    "stable-": "#17becf",
}
STABILITY_COLORS = {"hyperbolic": "#2ca02c", "elliptic": "#9467bd", "parabolic": "#8c564b"}
DEFAULT_COLOR = "#444444"


class PortraitInputError(ValueError):
    """A dump file could not be parsed; the message names file and line."""

    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


@dataclass
class PortraitData:
    orbits: list = field(default_factory=list)      # (label, stability, [(r, s), ...])
    branches: dict = field(default_factory=dict)    # label -> [(r, s), ...]
    crossings: list = field(default_factory=list)   # (r, s)


def _number(path, line, value, what):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise PortraitInputError(path, line, f"{what} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise PortraitInputError(path, line, f"{what} is not finite")
    return x


def read_orbits(path):
    """Orbit CSV with space-separated ``r`` and ``s`` columns per row."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return out
        missing = {"r", "s"} - set(reader.fieldnames)
        if missing:
            raise PortraitInputError(path, 1, f"missing column(s) {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise PortraitInputError(path, line, "wrong number of fields")
            rs = row["r"].split()
            ss = row["s"].split()
            if len(rs) != len(ss):
                raise PortraitInputError(path, line, "r and s lists differ in length")
            pts = [(_number(path, line, a, "r"), _number(path, line, b, "s"))
                   for a, b in zip(rs, ss)]
            label = row.get("rotation") or f"orbit {len(out)}"
            out.append((label, row.get("stability", ""), pts))
    return out


def read_branches(path):
    """Branch JSONL: one node per line with ``branch``, ``r`` and ``s`` keys.

    Records carrying an ``orbit`` key are grouped per orbit as well.
    """
    out = {}
    with open(path) as fh:
        for line, text in enumerate(fh, 1):
            if not text.strip():
                continue
            try:
                rec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise PortraitInputError(path, line, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise PortraitInputError(path, line, "record is not an object")
            for key in ("branch", "r", "s"):
                if key not in rec:
                    raise PortraitInputError(path, line, f"missing key {key!r}")
            label = str(rec["branch"])
            if "orbit" in rec:
                label = f"{rec['orbit']}:{label}"
            out.setdefault(label, []).append(
                (_number(path, line, rec["r"], "r"), _number(path, line, rec["s"], "s")))
    return out


def _collect_crossings(node, path, found):
    if isinstance(node, dict):
        for key in sorted(node):
            if key == "crossings" and isinstance(node[key], list):
                for i, c in enumerate(node[key]):
                    if not isinstance(c, dict) or "r" not in c or "s" not in c:
                        raise PortraitInputError(path, 0, f"crossing #{i} lacks r/s")
                    found.append((_number(path, 0, c["r"], "r"), _number(path, 0, c["s"], "s")))
            else:
                _collect_crossings(node[key], path, found)
    elif isinstance(node, list):
        for item in node:
            _collect_crossings(item, path, found)


def read_crossings(path):
    """Every ``crossings`` list found anywhere in a report JSON document."""
    text = Path(path).read_text()
    if not text.strip():
        return []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PortraitInputError(path, exc.lineno, f"invalid JSON ({exc.msg})") from None
    found = []
    _collect_crossings(doc, path, found)
    return found


def load_inputs(orbits=None, branches=None, crossings=None) -> PortraitData:
    """Read whichever dump files are given; missing ones are simply absent."""
    data = PortraitData()
    if orbits:
        data.orbits = read_orbits(orbits)
    if branches:
        data.branches = read_branches(branches)
    if crossings:
        data.crossings = read_crossings(crossings)
    return data


def _f(x):
    # fixed formatting, and no "-0.00"
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


class _Frame:
    def __init__(self, perimeter):
        self.P = perimeter
        self.w = WIDTH - MARGIN_L - MARGIN_R
        self.h = HEIGHT - MARGIN_T - MARGIN_B

    def x(self, r):
        return MARGIN_L + self.w * r / self.P

    def y(self, s):
        return MARGIN_T + self.h * (1.0 - s) / 2.0


def _runs(points, P):
    """Split a polyline at seam jumps and drop repeated pixels."""
    run, prev_px = [], None
    for r, s in points:
        r %= P
        if run and abs(r - run[-1][0]) > 0.5 * P:
            yield run
            run, prev_px = [], None
        px = (round(r / P * 4000), round(s * 4000))
        if px != prev_px:
            run.append((r, s))
            prev_px = px
    if run:
        yield run


def _axes(fr: _Frame):
    out = [f'<rect x="{_f(MARGIN_L)}" y="{_f(MARGIN_T)}" width="{_f(fr.w)}" height="{_f(fr.h)}" '
           'fill="none" stroke="#000000" stroke-width="1"/>']
    y0 = MARGIN_T + fr.h
    for i in range(5):
        r = fr.P * i / 4
        x = fr.x(r)
        out.append(f'<line x1="{_f(x)}" y1="{_f(y0)}" x2="{_f(x)}" y2="{_f(y0 + 5)}" stroke="#000000"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(y0 + 18)}" text-anchor="middle">{r:.3f}</text>')
    for s in (-1.0, -0.5, 0.0, 0.5, 1.0):
        y = fr.y(s)
        out.append(f'<line x1="{_f(MARGIN_L - 5)}" y1="{_f(y)}" x2="{_f(MARGIN_L)}" y2="{_f(y)}" stroke="#000000"/>')
        out.append(f'<text x="{_f(MARGIN_L - 8)}" y="{_f(y + 4)}" text-anchor="end">{s:.1f}</text>')
    out.append(f'<text x="{_f(MARGIN_L + fr.w / 2)}" y="{_f(HEIGHT - 10)}" text-anchor="middle">r (arc length)</text>')
    out.append(f'<text x="15" y="{_f(MARGIN_T + fr.h / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 15 {_f(MARGIN_T + fr.h / 2)})">s = sin(angle)</text>')
    return out


def _kind(label):
    # "orbit:kind@index" or "kind@index"
    return label.rsplit(":", 1)[-1].split("@", 1)[0]


def render_svg(perimeter: float, data: PortraitData | None = None, title: str = "") -> str:
    """SVG text of the portrait of ``data`` on a cylinder of the given perimeter."""
    if not (perimeter > 0 and math.isfinite(perimeter)):
        raise ValueError("perimeter must be positive and finite")
    data = data or PortraitData()
    fr = _Frame(perimeter)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<title>{escape(title or "phase portrait")}</title>',
           '<defs><clipPath id="frame">'
           f'<rect x="{_f(MARGIN_L)}" y="{_f(MARGIN_T)}" width="{_f(fr.w)}" height="{_f(fr.h)}"/>'
           '</clipPath></defs>']
    out += _axes(fr)

    out.append('<g clip-path="url(#frame)" fill="none" stroke-width="0.8">')
    for label, pts in data.branches.items():
        color = KIND_COLORS.get(_kind(label), DEFAULT_COLOR)
        out.append(f'<g class="branch" data-branch="{escape(label)}" stroke="{color}">')
        for run in _runs(pts, perimeter):
            coords = " ".join(f"{_f(fr.x(r))},{_f(fr.y(s))}" for r, s in run)
            out.append(f'<polyline points="{coords}"/>')
        out.append("</g>")
    out.append("</g>")

    for label, stability, pts in data.orbits:
        color = STABILITY_COLORS.get(stability, DEFAULT_COLOR)
        out.append(f'<g class="orbit" data-orbit="{escape(label)}" fill="{color}">')
        for r, s in pts:
            out.append(f'<circle cx="{_f(fr.x(r % perimeter))}" cy="{_f(fr.y(s))}" r="3"/>')
        out.append("</g>")

    out.append('<g class="crossings" fill="none" stroke="#000000" stroke-width="1">')
    for r, s in data.crossings:
        r %= perimeter
        xs = [r]
        if r < EDGE_FRACTION * perimeter:
            xs.append(r + perimeter)
        elif r > (1.0 - EDGE_FRACTION) * perimeter:
            xs.append(r - perimeter)
        for rr in xs:
            out.append(f'<circle class="crossing" cx="{_f(fr.x(rr))}" cy="{_f(fr.y(s))}" r="2.5"/>')
    out.append("</g>")

    # legend lists only what is present, in a fixed order
    lx, ly = WIDTH - MARGIN_R + 15, MARGIN_T + 10
    kinds = sorted({_kind(b) for b in data.branches})
    for k in kinds:
        color = KIND_COLORS.get(k, DEFAULT_COLOR)
        out.append(f'<line x1="{_f(lx)}" y1="{_f(ly)}" x2="{_f(lx + 20)}" y2="{_f(ly)}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_f(lx + 26)}" y="{_f(ly + 4)}">{escape(k)}</text>')
        ly += 16
    if data.crossings:
        out.append(f'<circle cx="{_f(lx + 10)}" cy="{_f(ly)}" r="2.5" fill="none" stroke="#000000"/>')
        out.append(f'<text x="{_f(lx + 26)}" y="{_f(ly + 4)}">crossing</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_portrait(out_path, perimeter: float, orbits=None, branches=None, crossings=None,
                    title: str = "") -> Path:
    """Read the dumps, render, and write the SVG file; returns its path."""
    for p in (orbits, branches, crossings):
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(p)
    svg = render_svg(perimeter, load_inputs(orbits, branches, crossings), title)
    out_path = Path(out_path)
    out_path.write_text(svg)
    return out_path
