"""Certificate tables (CSV) and bound-vs-eta line plots (SVG)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from learncert.certify import Certificate

ABSTAIN = "-"


class MixedSettingsError(ValueError):
    pass


@dataclass
class MethodCertificates:
    label: str
    certificates: list[Certificate]
    offset: float | None = None


def _settings(cert: Certificate) -> tuple:
    return (cert.q, cert.sigma, cert.n, cert.alpha)


def check_settings(methods: list[MethodCertificates], allow_mixed: bool = False) -> None:
    seen = {_settings(c) for m in methods for c in m.certificates}
    if len(seen) > 1 and not allow_mixed:
        raise MixedSettingsError(f"certificates mix (q, sigma, n, alpha) settings {sorted(seen)}")


def format_cell(value: float | None) -> str:
    return ABSTAIN if value is None else f"{100.0 * value:.2f}"


def eta_header(eta: float) -> str:
    return repr(float(eta))


def build_table(methods: list[MethodCertificates], allow_mixed: bool = False, offsets: bool = False) -> list[list[str]]:
    """Rows are methods, columns are eta values; cells hold ``bound * 100``.

    With ``offsets`` every method row is followed by an ``<label> (offset)``
    row holding ``raw + offset`` and the constant goes into an ``offset``
    column. Raw bounds are never altered.
    """
    if not methods or not any(m.certificates for m in methods):
        raise ValueError("no certificates to report")
    check_settings(methods, allow_mixed)
    etas = sorted({c.eta for m in methods for c in m.certificates})
    header = ["method"] + [eta_header(e) for e in etas]
    if offsets:
        header.append("offset")
    rows = [header]
    for m in methods:
        by_eta = {}
        for c in m.certificates:
            if c.eta in by_eta:
                raise ValueError(f"{m.label}: two certificates at eta={c.eta!r}")
            by_eta[c.eta] = c
        raw = [format_cell(by_eta[e].bound) if e in by_eta else "" for e in etas]
        if not offsets:
            rows.append([m.label] + raw)
            continue
        off = m.offset or 0.0
        rows.append([m.label] + raw + [f"{100.0 * off:.2f}"])
        shifted = [format_cell(by_eta[e].with_offset(off).offset_bound) if e in by_eta else "" for e in etas]
        rows.append([f"{m.label} (offset)"] + shifted + [f"{100.0 * off:.2f}"])
    return rows


def table_csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def parse_table(text: str) -> tuple[list[float], dict[str, list[float | None]]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "method":
        raise ValueError("not a certificate table")
    header = rows[0][1:]
    if header and header[-1] == "offset":
        header = header[:-1]
    etas = [float(h) for h in header]
    series = {}
    for row in rows[1:]:
        cells = row[1:1 + len(etas)]
        series[row[0]] = [None if c in (ABSTAIN, "") else float(c) for c in cells]
    return etas, series


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def svg_plot(table_text: str, width: int = 640, height: int = 400) -> str:
    """Line plot of bound (x100) against eta, computed from the CSV text alone.

    Abstained cells break the line.
    """
    etas, series = parse_table(table_text)
    left, right, top, bottom = 60, 150, 20, 50
    pw, ph = width - left - right, height - top - bottom
    values = [v for vs in series.values() for v in vs if v is not None]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    e_lo, e_hi = (min(etas), max(etas)) if etas else (0.0, 1.0)
    if e_hi == e_lo:
        e_lo, e_hi = e_lo - 1.0, e_hi + 1.0

    def sx(e):
        return left + pw * (e - e_lo) / (e_hi - e_lo)

    def sy(v):
        return top + ph * (1.0 - (v - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for j in range(5):
        v = lo + (hi - lo) * j / 4
        y = sy(v)
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{v:.2f}</text>')
    for e in etas:
        out.append(f'<text x="{sx(e):.2f}" y="{top + ph + 16}" text-anchor="middle">{e:g}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">eta</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.2f})">bound x100</text>')
    for i, (label, vs) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        segment: list[str] = []
        segments = []
        for e, v in zip(etas, vs):
            if v is None:
                if segment:
                    segments.append(segment)
                segment = []
                continue
            segment.append(f"{sx(e):.2f},{sy(v):.2f}")
        if segment:
            segments.append(segment)
        for seg in segments:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
            for pt in seg:
                x, y = pt.split(",")
                out.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly}">{_escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
