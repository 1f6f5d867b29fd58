"""Minimal SVG charts written directly as text."""
from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H = 720, 360
ML, MR, MT, MB = 60, 150, 30, 70


def _frame(title: str, body: list, y_lo: float, y_hi: float, y_label: str) -> str:
    ph = H - MT - MB
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
           f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
           f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
           f'<text x="14" y="{MT + ph / 2:.1f}" transform="rotate(-90 14 {MT + ph / 2:.1f})" '
           f'text-anchor="middle">{escape(y_label)}</text>']
    for i in range(5):
        v = y_lo + (y_hi - y_lo) * i / 4
        y = H - MB - ph * i / 4
        out.append(f'<text x="{ML - 4}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')
        out.append(f'<line x1="{ML - 3}" y1="{y:.1f}" x2="{ML}" y2="{y:.1f}" stroke="black"/>')
    out += body
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _scale(lo: float, hi: float):
    if hi <= lo:
        hi = lo + 1.0
    pad = (hi - lo) * 0.05
    lo, hi = lo - pad, hi + pad
    ph = H - MT - MB
    return lo, hi, lambda v: H - MB - (v - lo) / (hi - lo) * ph


def _legend(names) -> list:
    out = []
    for i, name in enumerate(names):
        y = MT + 14 * i
        out.append(f'<rect x="{W - MR + 10}" y="{y}" width="10" height="10" fill="{PALETTE[i % len(PALETTE)]}"/>')
        out.append(f'<text x="{W - MR + 25}" y="{y + 9}">{escape(str(name))}</text>')
    return out


def ratio_chart(title: str, labels, series: dict, ranges=None, ref: float = 1.0,
                y_label: str = "ratio") -> str:
    """Point markers per label for each series, optional (lo, hi) bars, and a reference line.

    ``series`` maps a name to a list of values aligned with ``labels``
    (None marks a gap); ``ranges`` is a list of (lo, hi) or None per label.
    """
    vals = [v for s in series.values() for v in s if v is not None]
    if ranges:
        vals += [v for r in ranges if r for v in r]
    vals.append(ref)
    lo, hi, sy = _scale(min(vals), max(vals))
    pw = W - ML - MR
    n = max(1, len(labels))
    step = pw / n
    body = [f'<line x1="{ML}" y1="{sy(ref):.1f}" x2="{W - MR}" y2="{sy(ref):.1f}" stroke="gray" stroke-dasharray="4 3"/>']
    for i, lab in enumerate(labels):
        x = ML + step * (i + 0.5)
        body.append(f'<text x="{x:.1f}" y="{H - MB + 14}" text-anchor="end" '
                    f'transform="rotate(-45 {x:.1f} {H - MB + 14})">{escape(str(lab))}</text>')
        if ranges and ranges[i]:
            r_lo, r_hi = ranges[i]
            body.append(f'<line x1="{x:.1f}" y1="{sy(r_lo):.1f}" x2="{x:.1f}" y2="{sy(r_hi):.1f}" stroke="black"/>')
            for v in (r_lo, r_hi):
                body.append(f'<line x1="{x - 5:.1f}" y1="{sy(v):.1f}" x2="{x + 5:.1f}" y2="{sy(v):.1f}" stroke="black"/>')
        for j, (name, s) in enumerate(series.items()):
            v = s[i]
            if v is None:
                continue
            dx = (j - (len(series) - 1) / 2) * 4
            col = PALETTE[j % len(PALETTE)]
            body.append(f'<circle cx="{x + dx:.1f}" cy="{sy(v):.1f}" r="3" fill="{col}"/>')
    body += _legend(series)
    return _frame(title, body, lo, hi, y_label)


def line_chart(title: str, xs, series: dict, x_label: str = "", y_label: str = "") -> str:
    vals = [v for s in series.values() for v in s if v is not None]
    lo, hi, sy = _scale(min(vals + [0.0]), max(vals + [1.0]))
    pw = W - ML - MR
    x_lo, x_hi = min(xs), max(xs)
    span = (x_hi - x_lo) or 1

    def sx(v):
        return ML + (v - x_lo) / span * pw

    body = []
    for x in xs:
        body.append(f'<text x="{sx(x):.1f}" y="{H - MB + 16}" text-anchor="middle">{x}</text>')
    body.append(f'<text x="{ML + pw / 2:.1f}" y="{H - MB + 34}" text-anchor="middle">{escape(x_label)}</text>')
    for j, (name, s) in enumerate(series.items()):
        col = PALETTE[j % len(PALETTE)]
        pts = " ".join(f"{sx(x):.1f},{sy(v):.1f}" for x, v in zip(xs, s) if v is not None)
        body.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        for x, v in zip(xs, s):
            if v is not None:
                body.append(f'<circle cx="{sx(x):.1f}" cy="{sy(v):.1f}" r="2.5" fill="{col}"/>')
    body += _legend(series)
    return _frame(title, body, lo, hi, y_label)
