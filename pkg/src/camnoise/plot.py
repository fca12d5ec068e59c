"""Minimal dependency-free SVG line plots for metric curves."""

PALETTE = ("#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b")


def _esc(s):
    return (str(s).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


def write_svg_lines(path, series, title="", x_label="", y_label="",
                    width=640, height=400):
    """Polyline plot. series: iterable of (label, xs, ys); points with
    non-finite y are skipped. Ranges are fit to the data."""
    margin = 60
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys)
           if y == y and abs(y) != float("inf")]
    if not pts:
        raise ValueError("nothing to plot")
    xmin = min(p[0] for p in pts)
    xmax = max(p[0] for p in pts)
    ymin = min(p[1] for p in pts)
    ymax = max(p[1] for p in pts)
    if xmax == xmin:
        xmax = xmin + 1.0
    if ymax == ymin:
        ymax = ymin + 1.0

    def sx(x):
        return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{margin}" y1="{height-margin}" x2="{width-margin}" '
             f'y2="{height-margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
             f'y2="{height-margin}" stroke="black"/>']
    if title:
        parts.append(f'<text x="{width/2:.0f}" y="24" text-anchor="middle" '
                     f'font-size="15">{_esc(title)}</text>')
    if x_label:
        parts.append(f'<text x="{width/2:.0f}" y="{height-16}" '
                     f'text-anchor="middle" font-size="12">{_esc(x_label)}</text>')
    if y_label:
        parts.append(f'<text x="16" y="{height/2:.0f}" text-anchor="middle" '
                     f'font-size="12" transform="rotate(-90 16 {height/2:.0f})"'
                     f'>{_esc(y_label)}</text>')
    for lo, hi, fmt in ((xmin, xmax, "x"), (ymin, ymax, "y")):
        for frac in (0.0, 0.5, 1.0):
            v = lo + frac * (hi - lo)
            if fmt == "x":
                parts.append(f'<text x="{sx(v):.1f}" y="{height-margin+16}" '
                             f'text-anchor="middle" font-size="10">{v:.3g}</text>')
            else:
                parts.append(f'<text x="{margin-6}" y="{sy(v):.1f}" '
                             f'text-anchor="end" font-size="10">{v:.3g}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys)
                          if y == y and abs(y) != float("inf"))
        if coords:
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        ly = margin + 14 + 14 * i
        parts.append(f'<rect x="{width-margin-110}" y="{ly-9}" width="10" '
                     f'height="10" fill="{color}"/>')
        parts.append(f'<text x="{width-margin-96}" y="{ly}" font-size="11">'
                     f'{_esc(label)}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
