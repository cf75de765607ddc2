"""Experiment report files: delimited per-frame data plus histogram figures.

write_report is the one-stop output path: given an ExperimentReport and a
CSV destination it writes the per-frame table (summary rows appended) and
renders the four-panel histogram figure next to it, same stem, .svg.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .simulator import CHANNELS, ExperimentReport

# pole-frame axis colors: x blue, y green (the cylinder axis), z red
CHANNEL_COLORS = {
    "distance": "#555555",
    "angle_x": "#1f77b4",
    "angle_y": "#2ca02c",
    "angle_z": "#d62728",
}
CHANNEL_LABELS = {
    "distance": "relative distance [m]",
    "angle_x": "angle about x [deg]",
    "angle_y": "angle about y [deg]",
    "angle_z": "angle about z [deg]",
}


def render_histograms(report: ExperimentReport, path, bins: int = 24) -> None:
    """Four-panel histogram of the pair measurements, one panel per channel.

    Panels share nothing: distance is in meters, angles in degrees, and
    their spreads differ by orders of magnitude.  Mean is drawn as a
    dashed line with the summary numbers in the panel title.
    """
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
    for ax, ch in zip(axes.ravel(), CHANNELS):
        vals = report.channel_values(ch)
        color = CHANNEL_COLORS[ch]
        if len(vals):
            ax.hist(vals, bins=bins, color=color, alpha=0.75,
                    edgecolor="white")
            s = report.summary[ch]
            ax.axvline(s["mean"], color="black", linestyle="--", linewidth=1)
            ax.set_title(f"{CHANNEL_LABELS[ch]}\n"
                         f"mean {s['mean']:.5g}, std {s['std']:.3g}",
                         fontsize=10)
        else:
            ax.set_title(f"{CHANNEL_LABELS[ch]} (no included frames)",
                         fontsize=10)
        ax.set_ylabel("frames")
    fig.suptitle(
        f"two-pole experiment: {report.n_included} of "
        f"{len(report.frames)} frames included", fontsize=11)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_report(report: ExperimentReport, csv_path) -> tuple[Path, Path]:
    """Write the CSV and render the histogram SVG alongside it."""
    csv_path = Path(csv_path)
    report.to_csv(csv_path)
    svg_path = csv_path.with_suffix(".svg")
    render_histograms(report, svg_path)
    return csv_path, svg_path
