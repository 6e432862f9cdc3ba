"""Self-contained SVG figure writers (no plotting dependency).

Plots are conveniences; the numeric data is always emitted alongside as
CSV, which is the artifact tests rely on.
"""

from __future__ import annotations

W, H = 640, 420
MARGIN = 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in vals]


def _axes(title, xlabel, ylabel) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{xlabel}</text>',
        f'<text x="18" y="{H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {H / 2})">{ylabel}</text>',
    ]


def line_plot(series: dict, path, title="", xlabel="", ylabel="") -> None:
    """series: name -> list of (x, y) pairs; one polyline per name."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    parts = _axes(title, xlabel, ylabel)
    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        px = _scale([x for x, _ in pts], x_lo, x_hi, MARGIN, W - MARGIN)
        py = _scale([y for _, y in pts], y_lo, y_hi, H - MARGIN, MARGIN)
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{W - MARGIN + 4}" y="{MARGIN + 16 * i}" fill="{color}">{name}</text>'
        )
    parts.append(
        f'<text x="{MARGIN}" y="{H - MARGIN + 16}" text-anchor="middle">{x_lo:.3g}</text>'
    )
    parts.append(
        f'<text x="{W - MARGIN}" y="{H - MARGIN + 16}" text-anchor="middle">{x_hi:.3g}</text>'
    )
    parts.append(f'<text x="{MARGIN - 6}" y="{H - MARGIN}" text-anchor="end">{y_lo:.3g}</text>')
    parts.append(f'<text x="{MARGIN - 6}" y="{MARGIN + 4}" text-anchor="end">{y_hi:.3g}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def heatmap(grid_values, cells, path, title="", xlabel="", ylabel="") -> None:
    """cells: list of {l11, l22, accuracy}; one colored square per cell."""
    vals = [c["accuracy"] for c in cells]
    lo, hi = min(vals), max(vals)
    span = hi - lo if hi > lo else 1.0
    m = len(grid_values)
    cell_w = (W - 2 * MARGIN) / m
    cell_h = (H - 2 * MARGIN) / m
    index = {v: i for i, v in enumerate(grid_values)}
    parts = _axes(title, xlabel, ylabel)
    for c in cells:
        i, j = index[c["l11"]], index[c["l22"]]
        frac = (c["accuracy"] - lo) / span
        shade = int(255 - frac * 200)
        x = MARGIN + i * cell_w
        y = H - MARGIN - (j + 1) * cell_h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell_w:.2f}" height="{cell_h:.2f}" '
            f'fill="rgb({shade},{shade},255)" stroke="white"/>'
        )
        parts.append(
            f'<text x="{x + cell_w / 2:.2f}" y="{y + cell_h / 2 + 4:.2f}" '
            f'text-anchor="middle" font-size="10">{c["accuracy"]:.2f}</text>'
        )
    for v in grid_values:
        x = MARGIN + (index[v] + 0.5) * cell_w
        y = H - MARGIN - (index[v] + 0.5) * cell_h
        parts.append(
            f'<text x="{x:.2f}" y="{H - MARGIN + 16}" text-anchor="middle">{v:g}</text>'
        )
        parts.append(f'<text x="{MARGIN - 6}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def bar_chart(rows: list, metrics: list, path, title="") -> None:
    """Grouped bars: one group per method row, one bar per metric."""
    if not rows:
        rows = []
    parts = _axes(title, "method", "score")
    n_groups = max(len(rows), 1)
    group_w = (W - 2 * MARGIN) / n_groups
    bar_w = group_w / (len(metrics) + 1)
    for gi, row in enumerate(rows):
        x0 = MARGIN + gi * group_w
        for mi, metric in enumerate(metrics):
            v = max(0.0, min(1.0, float(row[metric])))
            bh = v * (H - 2 * MARGIN)
            x = x0 + mi * bar_w
            y = H - MARGIN - bh
            color = PALETTE[mi % len(PALETTE)]
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w * 0.9:.2f}" '
                f'height="{bh:.2f}" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{x0 + group_w / 2:.2f}" y="{H - MARGIN + 16}" '
            f'text-anchor="middle" font-size="10">{row["method"]}</text>'
        )
    for mi, metric in enumerate(metrics):
        color = PALETTE[mi % len(PALETTE)]
        parts.append(
            f'<text x="{W - MARGIN + 4}" y="{MARGIN + 16 * mi}" fill="{color}">{metric}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
