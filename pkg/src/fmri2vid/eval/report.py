"""CSV tables and minimal SVG bar charts."""
from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def svg_bars(path, labels: list[str], values: list[float], title: str = "",
             width: int = 480, height: int = 240, reference: float | None = None) -> Path:
    """Vertical bars scaled to the largest value; an optional dashed reference line."""
    path = Path(path)
    pad, top = 30, 30
    n = max(1, len(values))
    vmax = max([abs(v) for v in values] + ([reference] if reference else []) + [1e-12])
    bw = (width - 2 * pad) / n
    plot_h = height - pad - top
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for i, (lab, v) in enumerate(zip(labels, values)):
        h = plot_h * max(v, 0.0) / vmax
        x = pad + i * bw
        parts.append(f'<rect x="{x + 2:.1f}" y="{top + plot_h - h:.1f}" width="{bw - 4:.1f}" '
                     f'height="{h:.1f}" fill="#4a7ab5"/>')
        parts.append(f'<text x="{x + bw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
                     f'font-size="10">{escape(str(lab))}</text>')
    if reference is not None:
        y = top + plot_h - plot_h * reference / vmax
        parts.append(f'<line x1="{pad}" x2="{width - pad}" y1="{y:.1f}" y2="{y:.1f}" '
                     'stroke="#c33" stroke-dasharray="4 3"/>')
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path
