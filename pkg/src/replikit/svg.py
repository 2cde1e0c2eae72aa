"""Static SVG scatter plots with deterministic markup."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def _f(v: float) -> str:
    return f"{v:.2f}"


def scatter_svg(points, labels, centers, title="", metadata=None, size=480, lim=0.5) -> str:
    """Points colored by label, centers drawn as black-edged crosses.

    Only the first two coordinates are drawn, over ``[-lim, lim]^2``.
    ``metadata`` (a string, typically canonical JSON) goes into a
    ``<metadata>`` element so the figure carries its own provenance.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if P.shape[1] == 1:
        P = np.column_stack([P[:, 0], np.zeros(len(P))])
    if C.size and C.shape[1] == 1:
        C = np.column_stack([C[:, 0], np.zeros(len(C))])
    pad = 20

    def sx(x):
        return pad + (x + lim) / (2 * lim) * (size - 2 * pad)

    def sy(y):
        return size - pad - (y + lim) / (2 * lim) * (size - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    if metadata is not None:
        out.append(f"<metadata>{escape(metadata)}</metadata>")
    out.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    if title:
        out.append(f'<text x="{pad}" y="{pad - 6}" font-size="12" font-family="sans-serif">'
                   f"{escape(title)}</text>")
    out.append('<g class="points" fill-opacity="0.5">')
    for (x, y), lab in zip(P[:, :2], labels):
        out.append(f'<circle cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="1.5" '
                   f'fill="{PALETTE[lab % len(PALETTE)]}"/>')
    out.append("</g>")
    out.append('<g class="centers" stroke="black" stroke-width="2">')
    for x, y in C[:, :2]:
        cx, cy = sx(x), sy(y)
        out.append(f'<path class="center" d="M{_f(cx - 6)},{_f(cy - 6)}L{_f(cx + 6)},{_f(cy + 6)}'
                   f'M{_f(cx - 6)},{_f(cy + 6)}L{_f(cx + 6)},{_f(cy - 6)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
