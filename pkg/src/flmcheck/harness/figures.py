"""Static figure emission: matplotlib PNG panels and hand-written SVG.

The SVG path avoids matplotlib entirely so the line plots stay tiny,
dependency-free to parse, and byte-deterministic for a given series
bundle (matplotlib SVG embeds library versions and object ids).
"""

from __future__ import annotations

import os

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = [
    "render_power_png",
    "render_gridsize_files",
    "render_test_report_png",
    "svg_line_chart",
]

_PALETTE = (
    "#4477aa",
    "#ee6677",
    "#228833",
    "#ccbb44",
    "#66ccee",
    "#aa3377",
    "#994455",
    "#997700",
    "#222222",
)


def _color(i: int) -> str:
    return _PALETTE[i % len(_PALETTE)]


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_W, _H = 560, 400
_L, _R, _T, _B = 62, 160, 36, 46  # margins; right one leaves room for the legend


def svg_line_chart(
    series: dict[str, list[tuple[float, float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    y_max: float | None = None,
) -> str:
    """Minimal SVG line chart with one polyline per labelled series."""
    if not series:
        raise ValueError("svg_line_chart needs at least one series")
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_hi = max(ys + [1.0]) * 1.08 if y_max is None else y_max

    def px(x: float) -> float:
        return _L + (x - x_lo) * (_W - _L - _R) / (x_hi - x_lo)

    def py(y: float) -> float:
        return _H - _B - y * (_H - _T - _B) / y_hi

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_L}" y="20" font-size="14">{title}</text>',
        f'<line x1="{_L}" y1="{_H - _B}" x2="{_W - _R}" y2="{_H - _B}" stroke="#444"/>',
        f'<line x1="{_L}" y1="{_T}" x2="{_L}" y2="{_H - _B}" stroke="#444"/>',
        f'<text x="{(_L + _W - _R) / 2:.0f}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{(_T + _H - _B) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(_T + _H - _B) / 2:.0f})">{ylabel}</text>',
    ]
    # x ticks at the observed abscissae, y ticks at quarters
    for x in sorted(set(xs)):
        parts.append(
            f'<line x1="{px(x):.1f}" y1="{_H - _B}" x2="{px(x):.1f}" y2="{_H - _B + 4}" stroke="#444"/>'
            f'<text x="{px(x):.1f}" y="{_H - _B + 17}" text-anchor="middle">{x:g}</text>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = frac * y_hi
        parts.append(
            f'<line x1="{_L - 4}" y1="{py(y):.1f}" x2="{_L}" y2="{py(y):.1f}" stroke="#444"/>'
            f'<text x="{_L - 8}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.3g}</text>'
        )
    for i, (label, pts) in enumerate(series.items()):
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(pts))
        parts.append(
            f'<polyline fill="none" stroke="{_color(i)}" stroke-width="1.6" points="{coords}"/>'
        )
        ly = _T + 16 * i
        parts.append(
            f'<line x1="{_W - _R + 12}" y1="{ly}" x2="{_W - _R + 34}" y2="{ly}" '
            f'stroke="{_color(i)}" stroke-width="1.6"/>'
            f'<text x="{_W - _R + 40}" y="{ly + 4}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------


def _new_axes(n_panels: int, width: float = 6.0):
    fig = Figure(figsize=(width * n_panels, 4.2))
    FigureCanvasAgg(fig)
    return fig, [fig.add_subplot(1, n_panels, k + 1) for k in range(n_panels)]


def render_power_png(rows, path: str) -> None:
    """Rejection rate versus deviation level, one line per table group."""
    fig, (ax,) = _new_axes(1)
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r.scenario, r.n, r.M), []).append((r.d, r.reject_pct))
    for i, (key, pts) in enumerate(sorted(groups.items())):
        sid, n, M = key
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            color=_color(i),
            label=f"{sid} (n={n}, M={M})",
        )
    ax.set_xlabel("deviation level d")
    ax.set_ylabel("rejection rate (%)")
    ax.set_ylim(0, 105)
    ax.set_xticks(sorted({r.d for r in rows}))
    ax.grid(alpha=0.3)
    if len(groups) <= 12:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=144)


def render_gridsize_files(series, out_dir: str) -> dict[str, str]:
    """Write the grid-size study figures (SVG per panel plus PNG)."""
    written: dict[str, str] = {}

    def put_svg(name: str, payload: str) -> None:
        p = os.path.join(out_dir, name + ".svg")
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(payload)
        written[name + "_svg"] = p

    put_svg(
        "size_vs_M",
        svg_line_chart(series.size_vs_M, "Empirical size vs grid size", "M", "size (%)"),
    )
    put_svg(
        "power_vs_M",
        svg_line_chart(
            series.power_vs_M, "Empirical power vs grid size", "M", "power (%)", y_max=105
        ),
    )
    for M, per_scenario in sorted(series.power_vs_n.items()):
        put_svg(
            f"power_vs_n_M{M}",
            svg_line_chart(
                per_scenario, f"Empirical power vs n (M={M})", "n", "power (%)", y_max=105
            ),
        )

    fig, (ax_size, ax_power) = _new_axes(2)
    for i, (sid, pts) in enumerate(sorted(series.size_vs_M.items())):
        ax_size.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", color=_color(i), label=sid)
    ax_size.axhline(5.0, color="gray", linestyle=":", linewidth=1)
    ax_size.set_xscale("log", base=2)
    ax_size.set_xlabel("M")
    ax_size.set_ylabel("size (%)")
    ax_size.legend(fontsize=8)
    ax_size.grid(alpha=0.3)
    for i, (sid, pts) in enumerate(sorted(series.power_vs_M.items())):
        ax_power.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", color=_color(i), label=sid)
    ax_power.set_xscale("log", base=2)
    ax_power.set_xlabel("M")
    ax_power.set_ylabel("power (%)")
    ax_power.set_ylim(0, 105)
    ax_power.grid(alpha=0.3)
    fig.tight_layout()
    png = os.path.join(out_dir, "gridsize.png")
    fig.savefig(png, dpi=144)
    written["gridsize_png"] = png

    if series.power_vs_n:
        fig, axes = _new_axes(len(series.power_vs_n))
        for ax, (M, per_scenario) in zip(axes, sorted(series.power_vs_n.items())):
            for i, (sid, pts) in enumerate(sorted(per_scenario.items())):
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", color=_color(i), label=sid)
            ax.set_title(f"M = {M}")
            ax.set_xlabel("n")
            ax.set_ylabel("power (%)")
            ax.set_ylim(0, 105)
            ax.grid(alpha=0.3)
            ax.legend(fontsize=8)
        fig.tight_layout()
        png = os.path.join(out_dir, "power_vs_n.png")
        fig.savefig(png, dpi=144)
        written["power_vs_n_png"] = png
    return written


def render_test_report_png(dataset, report, alpha: float, path: str) -> None:
    """Data view for a single test: curves, and response against curve size."""
    fig, (ax_curves, ax_scatter) = _new_axes(2, width=5.2)
    t = dataset.grid.nodes
    for row in dataset.curves:
        ax_curves.plot(t, row, color="#4477aa", alpha=min(0.5, 30.0 / dataset.n), lw=0.8)
    ax_curves.set_xlabel("t")
    ax_curves.set_ylabel("X(t)")
    ax_curves.set_title(f"{dataset.n} curves on {dataset.grid.M} nodes")

    norms = np.sqrt(np.clip(dataset.curves**2 @ dataset.grid.weights, 0.0, None))
    ax_scatter.scatter(norms, dataset.responses, s=12, color="#ee6677", alpha=0.7)
    ax_scatter.set_xlabel("curve L2 norm")
    ax_scatter.set_ylabel("response")
    verdict = "reject" if report.reject else "retain"
    ax_scatter.set_title(
        f"T_n = {report.T_n:.3g}, q = {report.q_hat}, p = {report.p_value:.3g} ({verdict} at {alpha:g})"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=144)
