"""Report emission: per-image CSV, summary JSON, histograms and SVG charts.

Everything written here is deterministic for identical inputs: floats are
serialized with repr (CSV) or a fixed format (SVG), JSON keys are sorted,
and no timestamps appear in any artifact.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .evaluation import METRICS, ComparisonResult, EvalRecord, compare_sets

N_BINS = 20

SVG_W, SVG_H = 640, 400
MARGIN_L, MARGIN_B, MARGIN_T = 60, 50, 30


@dataclass
class ReportInputs:
    custom: list[EvalRecord]
    baseline: list[EvalRecord]
    custom_name: str = "custom"
    baseline_name: str = "baseline"
    # run descriptors surfaced in summary.json and the comparison tables
    metadata: dict = field(default_factory=dict)
    noun_counts: dict | None = None  # {"custom": int, "baseline": int}


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def histogram(values: list[float], lo: float, hi: float, n_bins: int = N_BINS) -> list[int]:
    """Counts over n_bins equal-width bins; the top edge is inclusive."""
    span = hi - lo
    if span <= 0:
        span = 1.0  # degenerate range: everything lands in bin 0
    counts = [0] * n_bins
    for v in values:
        idx = min(int((v - lo) / span * n_bins), n_bins - 1)
        counts[idx] += 1
    return counts


def _bin_edges(lo: float, hi: float, n_bins: int = N_BINS) -> list[tuple[float, float]]:
    span = hi - lo
    if span <= 0:
        span = 1.0
    width = span / n_bins
    return [(lo + i * width, lo + (i + 1) * width) for i in range(n_bins)]


def _svg_header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}">',
        f'<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>',
        f'<text x="{SVG_W // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]


def render_histogram_svg(
    metric: str,
    edges: list[tuple[float, float]],
    counts_custom: list[int],
    counts_baseline: list[int],
    names: tuple[str, str],
) -> str:
    lines = _svg_header(f"{metric} distribution")
    plot_w = SVG_W - MARGIN_L - 20
    plot_h = SVG_H - MARGIN_T - MARGIN_B
    peak = max(max(counts_custom, default=0), max(counts_baseline, default=0), 1)
    n = len(edges)
    slot = plot_w / n
    bar = slot * 0.42
    for i in range(n):
        for offset, counts, color in (
            (0.0, counts_custom, "#2b6cb0"),
            (bar, counts_baseline, "#dd6b20"),
        ):
            h = plot_h * counts[i] / peak
            x = MARGIN_L + i * slot + offset
            y = MARGIN_T + plot_h - h
            lines.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar)}" '
                f'height="{_fmt(h)}" fill="{color}"/>'
            )
    axis_y = MARGIN_T + plot_h
    lines.append(
        f'<line x1="{MARGIN_L}" y1="{axis_y}" x2="{SVG_W - 20}" y2="{axis_y}" stroke="black"/>'
    )
    lines.append(
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{axis_y}" stroke="black"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        x = MARGIN_L + frac * plot_w
        value = edges[0][0] + frac * (edges[-1][1] - edges[0][0])
        lines.append(
            f'<text x="{_fmt(x)}" y="{axis_y + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(value)}</text>'
        )
    lines.append(
        f'<text x="{MARGIN_L - 8}" y="{MARGIN_T + 5}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{peak}</text>'
    )
    lines.append(
        f'<rect x="{SVG_W - 180}" y="{MARGIN_T}" width="12" height="12" fill="#2b6cb0"/>'
        f'<text x="{SVG_W - 162}" y="{MARGIN_T + 11}" font-family="sans-serif" '
        f'font-size="11">{names[0]}</text>'
    )
    lines.append(
        f'<rect x="{SVG_W - 180}" y="{MARGIN_T + 18}" width="12" height="12" fill="#dd6b20"/>'
        f'<text x="{SVG_W - 162}" y="{MARGIN_T + 29}" font-family="sans-serif" '
        f'font-size="11">{names[1]}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_comparison_svg(metric: str, pct_custom: float, pct_baseline: float,
                          names: tuple[str, str]) -> str:
    lines = _svg_header(f"{metric}: share of images won (strict)")
    plot_h = SVG_H - MARGIN_T - MARGIN_B
    axis_y = MARGIN_T + plot_h
    for i, (name, pct, color) in enumerate(
        ((names[0], pct_custom, "#2b6cb0"), (names[1], pct_baseline, "#dd6b20"))
    ):
        h = plot_h * pct / 100.0
        x = MARGIN_L + 80 + i * 220
        lines.append(
            f'<rect x="{x}" y="{_fmt(axis_y - h)}" width="120" height="{_fmt(h)}" '
            f'fill="{color}"/>'
        )
        lines.append(
            f'<text x="{x + 60}" y="{axis_y + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{name}</text>'
        )
        lines.append(
            f'<text x="{x + 60}" y="{_fmt(axis_y - h - 6)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{_fmt(pct)}%</text>'
        )
    lines.append(
        f'<line x1="{MARGIN_L}" y1="{axis_y}" x2="{SVG_W - 20}" y2="{axis_y}" stroke="black"/>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _set_summary(records: list[EvalRecord]) -> dict:
    scored = [r for r in records if r.ok]
    out: dict = {"n_records": len(records), "n_scored": len(scored)}
    for metric in METRICS:
        values = [r.metric(metric) for r in scored]
        out[metric] = {
            "mean": statistics.fmean(values) if values else None,
            "median": statistics.median(values) if values else None,
        }
    return out


def emit_report(inputs: ReportInputs, out_dir: str | Path) -> list[Path]:
    """Write the full report directory; returns the created paths."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"report directory not writable: {out_dir}: {exc}") from exc

    written: list[Path] = []
    comparisons = {m: compare_sets(inputs.custom, inputs.baseline, m) for m in METRICS}
    reverse = {m: compare_sets(inputs.baseline, inputs.custom, m) for m in METRICS}

    scores_path = out_dir / "scores.csv"
    with scores_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["image", "set", "clip_score", "informativeness", "infometic", "better", "error"]
        )
        for set_name, records in ((inputs.custom_name, inputs.custom),
                                  (inputs.baseline_name, inputs.baseline)):
            for r in sorted(records, key=lambda x: x.image_id):
                writer.writerow(
                    [
                        r.image_id,
                        set_name,
                        repr(r.clip_score) if r.ok else "",
                        repr(r.informativeness) if r.ok else "",
                        repr(r.infometic) if r.ok else "",
                        "" if r.better is None else r.better,
                        r.error or "",
                    ]
                )
    written.append(scores_path)

    summary = {
        "metadata": dict(inputs.metadata),
        "informativeness_log_base": "e",
        "sets": {
            inputs.custom_name: _set_summary(inputs.custom),
            inputs.baseline_name: _set_summary(inputs.baseline),
        },
        "comparisons": {m: comparisons[m].to_dict() for m in METRICS},
        "comparisons_reverse": {m: reverse[m].to_dict() for m in METRICS},
    }
    if inputs.noun_counts is not None:
        summary["noun_counts"] = inputs.noun_counts
    summary_path = out_dir / "summary.json"
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(summary_path)

    for metric in METRICS:
        custom_vals = [r.metric(metric) for r in inputs.custom if r.ok]
        baseline_vals = [r.metric(metric) for r in inputs.baseline if r.ok]
        pool = custom_vals + baseline_vals
        lo, hi = (min(pool), max(pool)) if pool else (0.0, 1.0)
        edges = _bin_edges(lo, hi)
        counts_c = histogram(custom_vals, lo, hi)
        counts_b = histogram(baseline_vals, lo, hi)

        hist_path = out_dir / f"hist_{metric}.csv"
        with hist_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_lo", "bin_hi", inputs.custom_name, inputs.baseline_name])
            for (b_lo, b_hi), c, b in zip(edges, counts_c, counts_b):
                writer.writerow([repr(b_lo), repr(b_hi), c, b])
        written.append(hist_path)

        svg_path = out_dir / f"hist_{metric}.svg"
        svg_path.write_text(
            render_histogram_svg(
                metric, edges, counts_c, counts_b, (inputs.custom_name, inputs.baseline_name)
            ),
            encoding="utf-8",
        )
        written.append(svg_path)

        cmp_path = out_dir / f"compare_{metric}.svg"
        cmp_path.write_text(
            render_comparison_svg(
                metric,
                comparisons[metric].percentage,
                reverse[metric].percentage,
                (inputs.custom_name, inputs.baseline_name),
            ),
            encoding="utf-8",
        )
        written.append(cmp_path)

    written.append(_emit_comparison_table(inputs, comparisons, reverse, out_dir))
    if inputs.noun_counts is not None:
        written.append(_emit_noun_table(inputs, out_dir))
    return written


def _emit_comparison_table(
    inputs: ReportInputs,
    comparisons: dict[str, ComparisonResult],
    reverse: dict[str, ComparisonResult],
    out_dir: Path,
) -> Path:
    """One row per configuration with the dataset/KG/backbone descriptors."""
    meta = inputs.metadata
    path = out_dir / "comparison_table.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "dataset", "kg", "backbone", "model", "baseline",
                "clipscore_custom_pct", "clipscore_baseline_pct",
                "infometic_custom_pct", "infometic_baseline_pct",
            ]
        )
        writer.writerow(
            [
                meta.get("dataset", ""),
                "with" if meta.get("kg_enabled", True) else "without",
                meta.get("backbone", ""),
                meta.get("model", ""),
                inputs.baseline_name,
                repr(comparisons["clip_score"].percentage),
                repr(reverse["clip_score"].percentage),
                repr(comparisons["infometic"].percentage),
                repr(reverse["infometic"].percentage),
            ]
        )
    return path


def _emit_noun_table(inputs: ReportInputs, out_dir: Path) -> Path:
    meta = inputs.metadata
    counts = inputs.noun_counts or {}
    custom = counts.get("custom", 0)
    baseline = counts.get("baseline", 0)
    path = out_dir / "noun_table.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["dataset", "kg", "backbone", "custom_model", "baseline_model", "best_model"]
        )
        writer.writerow(
            [
                meta.get("dataset", ""),
                "with" if meta.get("kg_enabled", True) else "without",
                meta.get("backbone", ""),
                custom,
                baseline,
                "custom" if custom > baseline else ("baseline" if baseline > custom else "tie"),
            ]
        )
    return path
