"""Render a recorded run (twin CSV) into figures plus a summary table.

Figures are written as PNG next to a summary.csv so a run can be inspected
without any plotting environment of one's own. Uses the non-interactive
matplotlib backend; safe headless.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .twin import read_twin_csv  # noqa: E402

THETA_KEYS = ["theta1_deg", "theta2_deg", "theta3_deg", "theta4_deg"]


def render_report(run_csv: str, out_dir: str) -> list[str]:
    """Write summary.csv and figures for the run; returns written paths."""
    rows = read_twin_csv(run_csv)
    os.makedirs(out_dir, exist_ok=True)
    written = [_write_summary(rows, os.path.join(out_dir, "summary.csv"))]
    if rows:
        written.append(_pressure_figure(rows, out_dir))
        written.append(_bending_figure(rows, out_dir))
        written.append(_tip_figure(rows, out_dir))
    return written


def _write_summary(rows: list[dict], path: str) -> str:
    stats: list[tuple[str, object]] = [("samples", len(rows))]
    if rows:
        t = [r["t_ms"] for r in rows]
        stats += [
            ("duration_ms", t[-1] - t[0]),
            ("final_pressure_kpa", rows[-1]["pressure_kpa"]),
            ("max_pressure_kpa", max(r["pressure_kpa"] for r in rows)),
            ("min_pressure_kpa", min(r["pressure_kpa"] for r in rows)),
        ]
        for key in THETA_KEYS:
            stats.append((f"final_{key}", rows[-1][key]))
        stats += [
            ("final_tip_x_mm", rows[-1]["tip_x_mm"]),
            ("final_tip_y_mm", rows[-1]["tip_y_mm"]),
            ("final_tip_z_mm", rows[-1]["tip_z_mm"]),
            ("extrapolated_samples", sum(r["extrapolated"] for r in rows)),
            ("fault_samples", sum(1 for r in rows if r["controller_faults"])),
            ("link_drops", sum(1 for r in rows if not r["link_ok"])),
        ]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerows(stats)
    return path


def _pressure_figure(rows: list[dict], out_dir: str) -> str:
    t = [r["t_ms"] / 1000.0 for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(t, [r["pressure_kpa"] for r in rows], lw=1.5)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("pressure (kPa)")
    ax.set_title("controller pressure")
    ax.grid(True, alpha=0.3)
    path = os.path.join(out_dir, "pressure_vs_time.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def _bending_figure(rows: list[dict], out_dir: str) -> str:
    t = [r["t_ms"] / 1000.0 for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, key in enumerate(THETA_KEYS, start=1):
        ax.plot(t, [r[key] for r in rows], lw=1.2, label=f"theta{i}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("bending angle (deg)")
    ax.set_title("cumulative bending angles")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    path = os.path.join(out_dir, "bending_vs_time.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def _tip_figure(rows: list[dict], out_dir: str) -> str:
    fig, (ax_path, ax_z) = plt.subplots(1, 2, figsize=(10, 4))
    xs = [r["tip_x_mm"] for r in rows]
    zs = [r["tip_z_mm"] for r in rows]
    ax_path.plot(xs, zs, lw=1.2)
    ax_path.plot(xs[0], zs[0], "go", label="start")
    ax_path.plot(xs[-1], zs[-1], "rs", label="end")
    ax_path.set_xlabel("x (mm)")
    ax_path.set_ylabel("z (mm)")
    ax_path.set_title("tip path, side view")
    ax_path.axis("equal")
    ax_path.legend(loc="best", fontsize=8)
    ax_path.grid(True, alpha=0.3)
    t = [r["t_ms"] / 1000.0 for r in rows]
    ax_z.plot(t, zs, lw=1.2)
    ax_z.set_xlabel("time (s)")
    ax_z.set_ylabel("tip z (mm)")
    ax_z.set_title("tip height")
    ax_z.grid(True, alpha=0.3)
    path = os.path.join(out_dir, "tip_path.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
