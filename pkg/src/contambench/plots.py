"""Tiny deterministic SVG line charts (no plotting dependency, stable bytes)."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["Series", "line_chart"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    name: str
    xs: tuple
    ys: tuple
    dashed: bool = False


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_chart(
    series: list[Series],
    title: str,
    x_label: str,
    y_label: str,
    width: int = 640,
    height: int = 420,
) -> str:
    if not series or not any(len(s.xs) for s in series):
        raise ValueError("nothing to plot")
    margin_l, margin_r, margin_t, margin_b = 62, 150, 34, 46
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    all_x = [x for s in series for x in s.xs]
    all_y = [y for s in series for y in s.ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(0.0, min(all_y)), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_hi += pad

    def px(x: float) -> float:
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return margin_t + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    # axes
    out.append(
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{margin_t + plot_h}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{margin_l}" y1="{margin_t + plot_h}" x2="{margin_l + plot_w}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>'
    )
    for i in range(5):
        fy = y_lo + (y_hi - y_lo) * i / 4
        yy = py(fy)
        out.append(f'<line x1="{margin_l - 4}" y1="{_fmt(yy)}" x2="{margin_l}" y2="{_fmt(yy)}" stroke="black"/>')
        out.append(f'<text x="{margin_l - 7}" y="{_fmt(yy + 3.5)}" text-anchor="end">{fy:.3f}</text>')
        fx = x_lo + (x_hi - x_lo) * i / 4
        xx = px(fx)
        out.append(
            f'<line x1="{_fmt(xx)}" y1="{margin_t + plot_h}" x2="{_fmt(xx)}" '
            f'y2="{margin_t + plot_h + 4}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_fmt(xx)}" y="{margin_t + plot_h + 16}" text-anchor="middle">{fx:.3f}</text>'
        )
    out.append(
        f'<text x="{margin_l + plot_w // 2}" y="{height - 10}" text-anchor="middle">{x_label}</text>'
    )
    out.append(
        f'<text x="16" y="{margin_t + plot_h // 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {margin_t + plot_h // 2})">{y_label}</text>'
    )
    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(s.xs, s.ys))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        for x, y in zip(s.xs, s.ys):
            out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="2.4" fill="{color}"/>')
        ly = margin_t + 14 + 16 * idx
        lx = margin_l + plot_w + 8
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" '
            f'stroke-width="1.5"{dash}/>'
        )
        out.append(f'<text x="{lx + 27}" y="{ly}">{s.name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
