"""SVG rendering of credibility maps.

Each lattice cell is one ``cell_width`` x ``cell_height`` rectangle; runs of
equal flags along a row are merged into a single rectangle.  Age in years BP
grows to the right (the reverse of the internal time axis) and the smoothing
level grows upward on a logarithmic scale.
"""

import xml.etree.ElementTree as ET

import numpy as np

from .exceptions import InvalidInputError

COLORS = {-1: "#2166ac", 0: "#bdbdbd", 1: "#b2182b"}
CLASSES = {-1: "dec", 0: "none", 1: "inc"}
_SVG_NS = "http://www.w3.org/2000/svg"


def _runs(row):
    """Start indices, lengths and values of constant runs in ``row``."""
    change = np.flatnonzero(np.diff(row)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [row.size]]))
    return starts, lengths, row[starts]


def _nice_ticks(lo, hi, count=5):
    step = (hi - lo) / max(count - 1, 1)
    return np.linspace(lo, hi, count) if step > 0 else np.array([lo])


def render_map_svg(cmap, path=None, markers=(), cell_width=1.0, cell_height=2.0, title=None):
    """Render ``cmap`` as SVG 1.1; write to ``path`` if given, return the text.

    ``markers`` are smoothing levels drawn as horizontal lines.
    """
    flags = np.asarray(cmap.flags)
    if flags.ndim != 2 or flags.size == 0:
        raise InvalidInputError("cannot render an empty credibility map")
    L, r = flags.shape
    lambdas = np.asarray(cmap.lambdas, dtype=float)
    age = np.asarray(cmap.age_bp, dtype=float)
    # columns in increasing age: the internal grid runs oldest first
    order = np.argsort(age, kind="stable")
    flags = flags[:, order]
    age = age[order]

    left, right, top, bottom = 70.0, 20.0, 30.0 if title else 12.0, 45.0
    pw, ph = r * cell_width, L * cell_height
    width, height = left + pw + right, top + ph + bottom

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="{_SVG_NS}" version="1.1" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
    ]
    if title:
        out.append(f'<text x="{left:g}" y="18" font-size="13" font-family="sans-serif">{title}</text>')
    out.append(
        f'<g id="lattice" transform="translate({left:g},{top:g})" data-rows="{L}" data-cols="{r}" '
        f'data-cell-width="{cell_width:g}" data-cell-height="{cell_height:g}" shape-rendering="crispEdges">'
    )
    for i in range(L):
        y = (L - 1 - i) * cell_height
        starts, lengths, vals = _runs(flags[i])
        for x0, n, v in zip(starts, lengths, vals):
            v = int(v)
            out.append(
                f'<rect class="{CLASSES[v]}" x="{x0 * cell_width:g}" y="{y:g}" '
                f'width="{n * cell_width:g}" height="{cell_height:g}" fill="{COLORS[v]}"/>'
            )
    out.append("</g>")

    # markers and axes
    log_lam = np.log10(lambdas)
    lo, hi = log_lam[0], log_lam[-1]

    def y_of(level):
        if hi == lo:
            return top + ph / 2
        frac = (np.log10(level) - lo) / (hi - lo)
        return top + ph - cell_height / 2 - frac * (ph - cell_height)

    for m in markers:
        if m <= 0 or not lambdas[0] <= m <= lambdas[-1]:
            continue
        y = y_of(m)
        out.append(
            f'<line class="marker" x1="{left:g}" x2="{left + pw:g}" y1="{y:.3f}" y2="{y:.3f}" '
            f'stroke="black" stroke-width="1" stroke-dasharray="4,3" data-lambda="{m:.6g}"/>'
        )

    out.append(f'<g id="axes" font-size="11" font-family="sans-serif">')
    out.append(
        f'<rect x="{left:g}" y="{top:g}" width="{pw:g}" height="{ph:g}" fill="none" stroke="black"/>'
    )
    for a in _nice_ticks(age[0], age[-1]):
        x = left + (np.searchsorted(age, a) + 0.5) * cell_width if r > 1 else left + pw / 2
        x = min(x, left + pw)
        out.append(f'<line x1="{x:.2f}" x2="{x:.2f}" y1="{top + ph:g}" y2="{top + ph + 4:g}" stroke="black"/>')
        out.append(
            f'<text x="{x:.2f}" y="{top + ph + 16:g}" text-anchor="middle">{a:.0f}</text>'
        )
    out.append(
        f'<text x="{left + pw / 2:g}" y="{top + ph + 34:g}" text-anchor="middle">age (years BP)</text>'
    )
    for e in range(int(np.ceil(lo)), int(np.floor(hi)) + 1):
        y = y_of(10.0 ** e)
        out.append(f'<line x1="{left - 4:g}" x2="{left:g}" y1="{y:.2f}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6:g}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    out.append(
        f'<text x="14" y="{top + ph / 2:g}" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + ph / 2:g})">log10 lambda</text>'
    )
    out.append("</g>")
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def parse_map_svg(source):
    """Recover the flag lattice from :func:`render_map_svg` output.

    Returns an int8 array with the same layout as ``CredibilityMap.flags``
    when the time grid runs oldest first (columns by increasing age reversed
    back to forward time).
    """
    if hasattr(source, "read") or not str(source).lstrip().startswith("<"):
        root = ET.parse(source).getroot()
    else:
        root = ET.fromstring(source)
    g = root.find(f".//{{{_SVG_NS}}}g[@id='lattice']")
    if g is None:
        raise InvalidInputError("no lattice group in SVG")
    L, r = int(g.get("data-rows")), int(g.get("data-cols"))
    cw, chh = float(g.get("data-cell-width")), float(g.get("data-cell-height"))
    flags = np.full((L, r), 99, dtype=np.int8)
    value = {v: k for k, v in CLASSES.items()}
    for rect in g.iter(f"{{{_SVG_NS}}}rect"):
        row = L - 1 - int(round(float(rect.get("y")) / chh))
        x0 = int(round(float(rect.get("x")) / cw))
        n = int(round(float(rect.get("width")) / cw))
        flags[row, x0:x0 + n] = value[rect.get("class")]
    if np.any(flags == 99):
        raise InvalidInputError("SVG lattice has uncovered cells")
    return flags[:, ::-1]
