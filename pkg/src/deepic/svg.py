"""Tiny dependency-free SVG writers for constellation scatters and SER histograms."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 420, 420, 40


def _frame(title: str, body: list[str], w=W, h=H) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
        f'<rect width="{w}" height="{h}" fill="white"/>\n'
        f'<text x="{w / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">'
        f"{escape(title)}</text>\n"
    )
    return head + "\n".join(body) + "\n</svg>\n"


def scatter_svg(points, title: str, extent: float | None = None, reference=None) -> str:
    """I/Q scatter of complex ``points``; ``reference`` points are drawn as red crosses."""
    pts = np.asarray(points).ravel()
    if extent is None:
        extent = float(np.max(np.abs(np.r_[pts.real, pts.imag, 1.0]))) * 1.05
    span = W - 2 * PAD

    def xy(z):
        return PAD + (z.real + extent) / (2 * extent) * span, H - PAD - (z.imag + extent) / (2 * extent) * span

    body = [
        f'<rect x="{PAD}" y="{PAD}" width="{span}" height="{span}" fill="none" stroke="#888"/>',
        f'<line x1="{W / 2}" y1="{PAD}" x2="{W / 2}" y2="{H - PAD}" stroke="#ddd"/>',
        f'<line x1="{PAD}" y1="{H / 2}" x2="{W - PAD}" y2="{H / 2}" stroke="#ddd"/>',
    ]
    for z in pts:
        x, y = xy(z)
        body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.2" fill="#1f4e9a" fill-opacity="0.5"/>')
    for z in np.asarray(reference if reference is not None else []).ravel():
        x, y = xy(z)
        body.append(f'<path d="M{x - 3:.2f},{y:.2f}h6M{x:.2f},{y - 3:.2f}v6" stroke="#c0392b"/>')
    body.append(f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="11">I</text>')
    body.append(f'<text x="12" y="{H / 2}" font-size="11">Q</text>')
    return _frame(title, body)


def histogram_svg(edges, counts_before, counts_after, title: str) -> str:
    """Side-by-side bars of per-frame SER counts, before (grey) and after (blue)."""
    edges = np.asarray(edges, dtype=float)
    cb, ca = np.asarray(counts_before), np.asarray(counts_after)
    top = max(1, int(max(cb.max(initial=0), ca.max(initial=0))))
    span_w, span_h = W - 2 * PAD, H - 2 * PAD - 20
    bw = span_w / len(cb)
    body = [f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="#444"/>']
    for k, (b, a) in enumerate(zip(cb, ca)):
        x = PAD + k * bw
        for off, n, colour in ((0.0, b, "#999"), (0.5, a, "#1f4e9a")):
            h = n / top * span_h
            body.append(
                f'<rect x="{x + off * bw:.2f}" y="{H - PAD - h:.2f}" width="{bw / 2:.2f}" '
                f'height="{h:.2f}" fill="{colour}"/>'
            )
    body.append(f'<text x="{PAD}" y="{H - PAD + 14}" font-size="10">{edges[0]:.3g}</text>')
    body.append(f'<text x="{W - PAD}" y="{H - PAD + 14}" text-anchor="end" font-size="10">{edges[-1]:.3g}</text>')
    body.append(f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="11">per-frame SER</text>')
    body.append(f'<text x="{PAD}" y="{PAD + 4}" font-size="10">max count {top}</text>')
    body.append(f'<text x="{W - PAD}" y="{PAD + 4}" text-anchor="end" font-size="10" fill="#999">before</text>')
    body.append(f'<text x="{W - PAD}" y="{PAD + 18}" text-anchor="end" font-size="10" fill="#1f4e9a">after</text>')
    return _frame(title, body)
