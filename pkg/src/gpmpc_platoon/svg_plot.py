"""Static three-panel SVG of a closed-loop run, written without a plotting library.

Output depends only on the log values, so identical logs give identical bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .sim_harness import SimLog

WIDTH = 800
PANEL_HEIGHT = 240
MARGIN_LEFT = 70
MARGIN_RIGHT = 150
MARGIN_TOP = 30
PANEL_GAP = 50
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(count, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * max(1.0, abs(hi)):
        ticks.append(round(t, 10) + 0.0)
        t += step
    return ticks


class _Panel:
    def __init__(self, top: float, title: str, ylabel: str, t: np.ndarray, series: list[np.ndarray]):
        self.top = top
        self.title = title
        self.ylabel = ylabel
        self.x0 = MARGIN_LEFT
        self.x1 = WIDTH - MARGIN_RIGHT
        self.y0 = top + PANEL_HEIGHT
        self.y1 = top
        self.t_lo = 0.0
        self.t_hi = float(t[-1]) if t.size and t[-1] > 0 else 1.0
        finite = np.concatenate([s[np.isfinite(s)] for s in series]) if series else np.array([])
        if finite.size == 0:
            lo, hi = 0.0, 1.0
        else:
            lo, hi = float(finite.min()), float(finite.max())
        if hi - lo < 1e-9:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        self.v_lo, self.v_hi = lo - pad, hi + pad

    def px(self, t: float) -> float:
        return self.x0 + (t - self.t_lo) / (self.t_hi - self.t_lo) * (self.x1 - self.x0)

    def py(self, v: float) -> float:
        return self.y0 - (v - self.v_lo) / (self.v_hi - self.v_lo) * (self.y0 - self.y1)

    def frame(self) -> list[str]:
        out = [
            f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" height="{PANEL_HEIGHT}" '
            'fill="none" stroke="#000" stroke-width="1"/>',
            f'<text x="{self.x0}" y="{_num(self.y1 - 8)}" font-size="14">{escape(self.title)}</text>',
            f'<text x="18" y="{_num((self.y0 + self.y1) / 2)}" font-size="12" '
            f'transform="rotate(-90 18 {_num((self.y0 + self.y1) / 2)})" text-anchor="middle">'
            f"{escape(self.ylabel)}</text>",
        ]
        for v in _nice_ticks(self.v_lo, self.v_hi):
            y = _num(self.py(v))
            out.append(f'<line x1="{self.x0 - 4}" y1="{y}" x2="{self.x0}" y2="{y}" stroke="#000"/>')
            out.append(f'<text x="{self.x0 - 6}" y="{y}" font-size="10" text-anchor="end" '
                       f'dominant-baseline="middle">{v:g}</text>')
        for tv in _nice_ticks(self.t_lo, self.t_hi):
            x = _num(self.px(tv))
            out.append(f'<line x1="{x}" y1="{self.y0}" x2="{x}" y2="{self.y0 + 4}" stroke="#000"/>')
            out.append(f'<text x="{x}" y="{self.y0 + 16}" font-size="10" text-anchor="middle">{tv:g}</text>')
        return out

    def polyline(self, t, v, color: str, dash: str | None = None) -> str:
        pts = " ".join(f"{_num(self.px(a))},{_num(self.py(b))}" for a, b in zip(t, v) if math.isfinite(b))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>'

    def legend(self, entries: list[tuple[str, str, str | None]]) -> list[str]:
        out = []
        for i, (label, color, dash) in enumerate(entries):
            y = self.y1 + 14 + 16 * i
            extra = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<line x1="{self.x1 + 10}" y1="{y}" x2="{self.x1 + 30}" y2="{y}" '
                       f'stroke="{color}" stroke-width="1.5"{extra}/>')
            out.append(f'<text x="{self.x1 + 35}" y="{y}" font-size="11" '
                       f'dominant-baseline="middle">{escape(label)}</text>')
        return out


def render(log: SimLog, delta: float, title: str = "") -> str:
    """Velocities, gaps (with the fixed minimum gap and the tightened bound) and accelerations."""
    na = log.n_av
    height = MARGIN_TOP + 3 * PANEL_HEIGHT + 2 * PANEL_GAP + 40
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">',
        f'<rect width="{WIDTH}" height="{height}" fill="#fff"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH // 2}" y="18" font-size="15" text-anchor="middle">{escape(title)}</text>')
    tops = [MARGIN_TOP + i * (PANEL_HEIGHT + PANEL_GAP) for i in range(3)]

    if len(log) == 0:
        for top, name in zip(tops, ("velocity", "gap", "acceleration")):
            parts.append(f'<rect x="{MARGIN_LEFT}" y="{top}" width="{WIDTH - MARGIN_LEFT - MARGIN_RIGHT}" '
                         f'height="{PANEL_HEIGHT}" fill="none" stroke="#000"/>')
            parts.append(f'<text x="{MARGIN_LEFT + 10}" y="{top + 20}" font-size="12">{name}: no data</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    t = log.column("time_s")

    vel = [(f"AV{n}", log.column(f"av{n}_vel_mps"), PALETTE[(n - 1) % len(PALETTE)], None) for n in range(1, na + 1)]
    vel.append(("HV", log.column("hv_vel_mps"), "#000000", None))
    vel.append(("v_ref", log.column("v_ref_mps"), "#7f7f7f", "6,4"))

    gaps = [(f"AV{n}-AV{n + 1}", log.column(f"gap_av{n}_av{n + 1}_m"), PALETTE[(n - 1) % len(PALETTE)], None)
            for n in range(1, na)]
    gaps.append((f"AV{na}-HV", log.column(f"gap_av{na}_hv_m"), "#000000", None))
    gaps.append(("delta", np.full(t.shape, float(delta)), "#d62728", "6,4"))
    gaps.append(("tightened", log.column("bound_next_m"), "#9467bd", "2,3"))

    acc = [(f"AV{n}", log.column(f"av{n}_acc_mps2"), PALETTE[(n - 1) % len(PALETTE)], None) for n in range(1, na + 1)]

    for top, (name, unit, series) in zip(
        tops,
        (("velocity", "m/s", vel), ("inter-vehicle distance", "m", gaps), ("acceleration", "m/s^2", acc)),
    ):
        panel = _Panel(top, name, unit, t, [s[1] for s in series])
        parts += panel.frame()
        for label, values, color, dash in series:
            parts.append(panel.polyline(t, values, color, dash))
        parts += panel.legend([(label, color, dash) for label, _, color, dash in series])
    bottom = tops[-1] + PANEL_HEIGHT + 34
    parts.append(f'<text x="{(MARGIN_LEFT + WIDTH - MARGIN_RIGHT) // 2}" y="{bottom}" font-size="12" '
                 'text-anchor="middle">time (s)</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write(path, log: SimLog, delta: float, title: str = "") -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(render(log, delta, title))
