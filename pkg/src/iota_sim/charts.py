"""Minimal static SVG renderings of run metrics.

Charts are convenience output only; the CSVs are the canonical artifacts.
Hand-rolled SVG keeps output deterministic and dependency-free.
"""

__all__ = ["line_chart", "bar_chart", "heatmap"]

_W, _H = 640, 400
_PAD = 50


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo or 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def _frame(title: str, body: str, x_label: str, y_label: str) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">\n'
        f'<rect width="{_W}" height="{_H}" fill="white"/>\n'
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>\n'
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">{x_label}</text>\n'
        f'<text x="14" y="{_H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_H / 2})">{y_label}</text>\n'
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        f'fill="none" stroke="black"/>\n'
        f"{body}</svg>\n"
    )


def line_chart(series: dict, title: str, x_label: str, y_label: str) -> str:
    """``series`` maps a label to a list of (x, y) points."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        return _frame(title, "", x_label, y_label)
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    body = []
    for i, (label, pts) in enumerate(series.items()):
        px = _scale([x for x, _ in pts], x_lo, x_hi, _PAD, _W - _PAD)
        py = _scale([y for _, y in pts], y_lo, y_hi, _H - _PAD, _PAD)
        d = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
        color = colors[i % len(colors)]
        body.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(
            f'<text x="{_W - _PAD + 4}" y="{_PAD + 14 * (i + 1)}" fill="{color}" '
            f'text-anchor="end">{label}</text>'
        )
    body.append(f'<text x="{_PAD}" y="{_H - _PAD + 16}">{x_lo:g}</text>')
    body.append(f'<text x="{_W - _PAD}" y="{_H - _PAD + 16}" text-anchor="end">{x_hi:g}</text>')
    body.append(f'<text x="{_PAD - 4}" y="{_H - _PAD}" text-anchor="end">{y_lo:.4g}</text>')
    body.append(f'<text x="{_PAD - 4}" y="{_PAD + 4}" text-anchor="end">{y_hi:.4g}</text>')
    return _frame(title, "\n".join(body) + "\n", x_label, y_label)


def bar_chart(labels, values, title: str, y_label: str, highlight=frozenset()) -> str:
    """Vertical bars; labels in ``highlight`` are drawn red."""
    if not labels:
        return _frame(title, "", "", y_label)
    y_lo = min(0.0, min(values))
    y_hi = max(values) or 1.0
    inner_w = _W - 2 * _PAD
    slot = inner_w / len(labels)
    body = []
    for i, (label, v) in enumerate(zip(labels, values)):
        h = (v - y_lo) / (y_hi - y_lo or 1.0) * (_H - 2 * _PAD)
        x = _PAD + i * slot
        color = "#d62728" if label in highlight else "#1f77b4"
        body.append(
            f'<rect x="{x + slot * 0.1:.2f}" y="{_H - _PAD - h:.2f}" '
            f'width="{slot * 0.8:.2f}" height="{h:.2f}" fill="{color}"/>'
        )
        body.append(
            f'<text x="{x + slot / 2:.2f}" y="{_H - _PAD + 12}" text-anchor="middle" '
            f'font-size="8">{label}</text>'
        )
    body.append(f'<text x="{_PAD - 4}" y="{_H - _PAD}" text-anchor="end">{y_lo:.3g}</text>')
    body.append(f'<text x="{_PAD - 4}" y="{_PAD + 4}" text-anchor="end">{y_hi:.3g}</text>')
    return _frame(title, "\n".join(body) + "\n", "", y_label)


def heatmap(rows, cols, grid, title: str, x_label: str, y_label: str) -> str:
    """``grid[i][j]`` is the cell value for rows[i] x cols[j]."""
    flat = [v for row in grid for v in row]
    if not flat:
        return _frame(title, "", x_label, y_label)
    lo, hi = min(flat), max(flat)
    span = hi - lo or 1.0
    cell_w = (_W - 2 * _PAD) / len(cols)
    cell_h = (_H - 2 * _PAD) / len(rows)
    body = []
    for i, row_label in enumerate(rows):
        for j, col_label in enumerate(cols):
            t = (grid[i][j] - lo) / span
            # white -> dark blue ramp
            shade = int(255 * (1 - t))
            x = _PAD + j * cell_w
            y = _PAD + i * cell_h
            body.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell_w:.2f}" height="{cell_h:.2f}" '
                f'fill="rgb({shade},{shade},255)" stroke="white"/>'
            )
            body.append(
                f'<text x="{x + cell_w / 2:.2f}" y="{y + cell_h / 2 + 4:.2f}" '
                f'text-anchor="middle" font-size="9">{grid[i][j]:.3g}</text>'
            )
        body.append(
            f'<text x="{_PAD - 4}" y="{_PAD + (i + 0.5) * cell_h + 4:.2f}" '
            f'text-anchor="end">{row_label}</text>'
        )
    for j, col_label in enumerate(cols):
        body.append(
            f'<text x="{_PAD + (j + 0.5) * cell_w:.2f}" y="{_PAD - 6}" '
            f'text-anchor="middle">{col_label}</text>'
        )
    return _frame(title, "\n".join(body) + "\n", x_label, y_label)
