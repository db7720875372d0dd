"""Hand-rolled SVG plots: gain/phase panels and CDF curves.

SVG is written directly (no rendering dependency) so output bytes are a
pure function of the input data; every plot embeds its CSV twin in a
<desc> element for parse-back checks.
"""

import math

_W, _H = 640, 360
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


class _Panel:
    """One cartesian panel with optional log axes."""

    def __init__(self, title, xlabel, ylabel, xlog=False, ylog=False):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.xlog = xlog
        self.ylog = ylog
        self.series = []  # (label, xs, ys, color, marker)
        self.bands = []  # (xs, lo, hi, color)

    def add(self, label, xs, ys, color, marker=False):
        self.series.append((label, list(xs), list(ys), color, marker))

    def add_band(self, xs, lo, hi, color):
        self.bands.append((list(xs), list(lo), list(hi), color))

    def _tx(self, x, x0, x1):
        if self.xlog:
            x, x0, x1 = math.log10(x), math.log10(x0), math.log10(x1)
        return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

    def _ty(self, y, y0, y1):
        if self.ylog:
            y, y0, y1 = math.log10(y), math.log10(y0), math.log10(y1)
        return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

    def _limits(self):
        xs = [x for _, sx, _, _, _ in self.series for x in sx]
        ys = [y for _, _, sy, _, _ in self.series for y in sy]
        for bx, lo, hi, _ in self.bands:
            xs += bx
            ys += lo + hi
        if self.xlog:
            xs = [x for x in xs if x > 0]
        if self.ylog:
            ys = [y for y in ys if y > 0]
        if not xs or not ys:
            xs, ys = [0.0, 1.0], [0.0, 1.0]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x0 == x1:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y0 == y1:
            y0, y1 = y0 - 0.5, y1 + 0.5
        if self.ylog:
            y0, y1 = y0 / 1.3, y1 * 1.3
        else:
            pad = 0.05 * (y1 - y0)
            y0, y1 = y0 - pad, y1 + pad
        return x0, x1, y0, y1

    def _ticks(self, lo, hi, log):
        if log:
            lo_e = math.floor(math.log10(lo))
            hi_e = math.ceil(math.log10(hi))
            return [10.0**e for e in range(lo_e, hi_e + 1) if lo <= 10.0**e <= hi]
        span = hi - lo
        step = 10.0 ** math.floor(math.log10(span / 4))
        for mult in (1, 2, 5, 10):
            if span / (step * mult) <= 6:
                step *= mult
                break
        first = math.ceil(lo / step) * step
        ticks = []
        v = first
        while v <= hi + 1e-12 * span:
            ticks.append(0.0 if abs(v) < 1e-12 * span else v)
            v += step
        return ticks

    def render(self, out):
        x0, x1, y0, y1 = self._limits()
        out.append(
            f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
            f'height="{_H - _MT - _MB}" fill="none" stroke="#444"/>'
        )
        out.append(
            f'<text x="{_W / 2}" y="{_MT - 10}" text-anchor="middle" '
            f'font-size="14">{self.title}</text>'
        )
        for tick in self._ticks(x0, x1, self.xlog):
            px = self._tx(tick, x0, x1)
            out.append(
                f'<line x1="{px:.2f}" y1="{_H - _MB}" x2="{px:.2f}" '
                f'y2="{_H - _MB + 5}" stroke="#444"/>'
            )
            out.append(
                f'<text x="{px:.2f}" y="{_H - _MB + 18}" text-anchor="middle" '
                f'font-size="11">{_fmt(tick)}</text>'
            )
        for tick in self._ticks(y0, y1, self.ylog):
            py = self._ty(tick, y0, y1)
            out.append(
                f'<line x1="{_ML - 5}" y1="{py:.2f}" x2="{_ML}" '
                f'y2="{py:.2f}" stroke="#444"/>'
            )
            out.append(
                f'<text x="{_ML - 8}" y="{py + 4:.2f}" text-anchor="end" '
                f'font-size="11">{_fmt(tick)}</text>'
            )
        out.append(
            f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle" '
            f'font-size="12">{self.xlabel}</text>'
        )
        out.append(
            f'<text x="16" y="{_H / 2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {_H / 2})">{self.ylabel}</text>'
        )
        for bx, lo, hi, color in self.bands:
            pts = [
                f"{self._tx(x, x0, x1):.2f},{self._ty(v, y0, y1):.2f}"
                for x, v in zip(bx, lo)
            ]
            pts += [
                f"{self._tx(x, x0, x1):.2f},{self._ty(v, y0, y1):.2f}"
                for x, v in zip(reversed(bx), reversed(hi))
            ]
            out.append(
                f'<polygon points="{" ".join(pts)}" fill="{color}" '
                f'fill-opacity="0.25" stroke="none"/>'
            )
        legend_y = _MT + 14
        for label, xs, ys, color, marker in self.series:
            pts = " ".join(
                f"{self._tx(x, x0, x1):.2f},{self._ty(y, y0, y1):.2f}"
                for x, y in zip(xs, ys)
                if (not self.xlog or x > 0) and (not self.ylog or y > 0)
            )
            if marker:
                for x, y in zip(xs, ys):
                    if (self.xlog and x <= 0) or (self.ylog and y <= 0):
                        continue
                    out.append(
                        f'<circle cx="{self._tx(x, x0, x1):.2f}" '
                        f'cy="{self._ty(y, y0, y1):.2f}" r="3" fill="{color}"/>'
                    )
            else:
                out.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5"/>'
                )
            out.append(
                f'<text x="{_W - _MR - 6}" y="{legend_y}" text-anchor="end" '
                f'font-size="11" fill="{color}">{label}</text>'
            )
            legend_y += 14


def render_svg(panels, csv_text: str) -> str:
    """Stack panels vertically into one SVG; embeds the CSV twin."""
    total_h = _H * len(panels)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
        f'height="{total_h}" viewBox="0 0 {_W} {total_h}" '
        'font-family="sans-serif">',
        "<desc>",
        csv_text.replace("&", "&amp;").replace("<", "&lt;"),
        "</desc>",
        f'<rect width="{_W}" height="{total_h}" fill="white"/>',
    ]
    for i, panel in enumerate(panels):
        out.append(f'<g transform="translate(0 {i * _H})">')
        panel.render(out)
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def frf_csv(curves) -> str:
    """CSV twin for gain/phase plots: one block per labeled FRF."""
    lines = ["label,f_hz,re,im,gain,phase_deg"]
    for label, centers, values in curves:
        for f, v in zip(centers, values):
            gain = abs(v)
            phase = math.degrees(math.atan2(v.imag, v.real))
            lines.append(
                f"{label},{f:.12g},{v.real:.12g},{v.imag:.12g},"
                f"{gain:.12g},{phase:.12g}"
            )
    return "\n".join(lines) + "\n"


def frf_svg(curves) -> str:
    """Two-panel gain (log-log) / phase (semilog-x) plot of FRFs."""
    gain = _Panel("FRF gain", "frequency [Hz]", "gain", xlog=True, ylog=True)
    phase = _Panel("FRF phase", "frequency [Hz]", "phase [deg]", xlog=True)
    for i, (label, centers, values) in enumerate(curves):
        color = _COLORS[i % len(_COLORS)]
        gains = [abs(v) for v in values]
        phases = [math.degrees(math.atan2(v.imag, v.real)) for v in values]
        gain.add(label, centers, gains, color)
        phase.add(label, centers, phases, color)
    return render_svg([gain, phase], frf_csv(curves))


def cdf_csv(grid, mean, var, samples, markers) -> str:
    lines = ["series,x,y"]
    for x, m, v in zip(grid, mean, var):
        lines.append(f"cdf_mean,{x:.12g},{m:.12g}")
        lines.append(f"cdf_var,{x:.12g},{v:.12g}")
    for x, y in samples:
        lines.append(f"cohort,{x:.12g},{y:.12g}")
    for label, x in markers:
        lines.append(f"marker_{label},{x:.12g},0")
    return "\n".join(lines) + "\n"


def cdf_svg(grid, mean, var, samples, markers) -> str:
    """Bootstrap CDF with a +-2 sigma band, cohort points, score markers."""
    panel = _Panel(
        "Score distribution over the cohort", "human-likeness score D",
        "cumulative fraction",
    )
    sd = [math.sqrt(v) for v in var]
    lo = [max(0.0, m - 2 * s) for m, s in zip(mean, sd)]
    hi = [min(1.0, m + 2 * s) for m, s in zip(mean, sd)]
    panel.add_band(list(grid), lo, hi, "#1f77b4")
    panel.add("bootstrap mean", list(grid), list(mean), "#1f77b4")
    if samples:
        panel.add(
            "cohort", [x for x, _ in samples], [y for _, y in samples],
            "#d62728", marker=True,
        )
    for i, (label, x) in enumerate(markers):
        color = _COLORS[(2 + i) % len(_COLORS)]
        panel.add(label, [x, x], [0.0, 1.0], color)
    return render_svg([panel], cdf_csv(grid, mean, var, samples, markers))
