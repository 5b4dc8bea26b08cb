"""Render convergence curves and reconstruction panels from run artifacts.

Reads the CSV traces and PGM images written by the experiment runner and
saves matplotlib figures next to them; the delimited files remain the
machine-readable contract.
"""

import csv
import glob
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render_convergence", "render_reconstructions", "render_report"]

_STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.frameon": False,
}


def _read_trace(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    cols = {}
    for name in ("wall_seconds", "objective_tv", "rel_error"):
        vals = []
        for row in rows:
            raw = row.get(name, "")
            vals.append(float(raw) if raw not in ("", None) else None)
        cols[name] = vals
    return cols


def _series(cols, ykey):
    xs, ys = [], []
    for x, y in zip(cols["wall_seconds"], cols[ykey]):
        if x is not None and y is not None:
            xs.append(x)
            ys.append(y)
    return xs, ys


def render_convergence(output_dir, trace_paths):
    """Objective and relative error against solver wall time, one line per trace."""
    out = os.path.join(output_dir, "convergence.png")
    with plt.rc_context(_STYLE):
        fig, (ax_obj, ax_err) = plt.subplots(1, 2, figsize=(9.2, 3.6))
        for path in trace_paths:
            label = os.path.splitext(os.path.basename(path))[0].replace("trace_", "")
            cols = _read_trace(path)
            xs, ys = _series(cols, "objective_tv")
            if xs:
                ax_obj.semilogy(xs, ys, label=label)
            xs, ys = _series(cols, "rel_error")
            if xs:
                ax_err.plot(xs, ys, label=label)
        ax_obj.set_xlabel("wall time (s)")
        ax_obj.set_ylabel("TV/L2 objective")
        ax_err.set_xlabel("wall time (s)")
        ax_err.set_ylabel("relative error (%)")
        for ax in (ax_obj, ax_err):
            if ax.lines:
                ax.legend()
        fig.tight_layout()
        fig.savefig(out)
        plt.close(fig)
    return out


def _read_summary(output_dir):
    path = os.path.join(output_dir, "summary.csv")
    if not os.path.exists(path):
        return {}
    with open(path, newline="") as fh:
        return {row["solver"]: row for row in csv.DictReader(fh)}


def render_reconstructions(output_dir, image_paths):
    """Side-by-side grayscale panel of the original and each reconstruction."""
    from .imaging import read_image

    out = os.path.join(output_dir, "reconstructions.png")
    summary = _read_summary(output_dir)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(image_paths), figsize=(3.0 * len(image_paths), 3.2))
        if len(image_paths) == 1:
            axes = [axes]
        for ax, path in zip(axes, image_paths):
            name = os.path.splitext(os.path.basename(path))[0]
            title = "original" if name == "original" else name.replace("recon_", "")
            if title in summary:
                title += f" (RE {float(summary[title]['RE_percent']):.2f}%)"
            ax.imshow(read_image(path), cmap="gray", vmin=0.0, vmax=1.0)
            ax.set_title(title)
            ax.set_axis_off()
            ax.grid(False)
        fig.tight_layout()
        fig.savefig(out)
        plt.close(fig)
    return out


def render_report(output_dir):
    """Render every figure the artifacts in ``output_dir`` support; return paths."""
    written = []
    traces = sorted(glob.glob(os.path.join(output_dir, "trace_*.csv")))
    if traces:
        written.append(render_convergence(output_dir, traces))
    images = [p for p in [os.path.join(output_dir, "original.pgm")] if os.path.exists(p)]
    images += sorted(glob.glob(os.path.join(output_dir, "recon_*.pgm")))
    if images:
        written.append(render_reconstructions(output_dir, images))
    if not written:
        raise ValueError(f"no trace or image artifacts found in {output_dir!r}")
    return written
