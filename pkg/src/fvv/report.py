"""Interpolation quality evaluation: per-gap, per-depth metrics against the
scene's analytic ground truth, written as JSON + CSV with rendered figures."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .interp import InterpConfig, dense_views
from .metrics import lap_distance, psnr, ssim
from .scene import SceneSpec, SyntheticScene, load_frame, load_manifest


@dataclass
class EvalRow:
    gap: int
    depth: int
    views: int
    psnr: float
    ssim: float
    lap_distance: float

    def to_json(self) -> dict:
        return {"gap": self.gap, "depth": self.depth, "views": self.views,
                "psnr": None if math.isinf(self.psnr) else self.psnr,
                "ssim": self.ssim, "lap_distance": self.lap_distance}


@dataclass
class EvalReport:
    scene: str
    stages: int
    frame_index: int
    border: int
    rows: list[EvalRow] = field(default_factory=list)

    def aggregate(self) -> dict:
        finite = [r.psnr for r in self.rows if math.isfinite(r.psnr)]
        return {
            "psnr": sum(finite) / len(finite) if finite else None,
            "ssim": sum(r.ssim for r in self.rows) / len(self.rows) if self.rows else None,
            "lap_distance": (sum(r.lap_distance for r in self.rows) / len(self.rows)
                             if self.rows else None),
            "rows": len(self.rows),
        }

    def to_json(self) -> dict:
        return {
            "kind": "fvv-eval-report",
            "scene": self.scene,
            "config": {"stages": self.stages, "frame_index": self.frame_index,
                       "excluded_border": self.border},
            "rows": [r.to_json() for r in self.rows],
            "aggregate": self.aggregate(),
        }


def _depth_of(position_numerator: int, stages: int) -> int:
    """Dyadic depth of view j/2**stages: stage at which recursion created it."""
    k = 0
    while position_numerator % 2 == 0:
        position_numerator //= 2
        k += 1
    return stages - k


def evaluate_scene(scene_dir: str | Path, stages: int = 2, frame_index: int = 0,
                   border: int = 8, config: InterpConfig | None = None,
                   use_disk_frames: bool = True) -> EvalReport:
    """Interpolate every camera gap recursively and score against ground truth.

    One row per (gap, recursion depth): views introduced at that depth are
    compared to analytic renders at their exact positions.
    """
    spec, frame_count = load_manifest(scene_dir)
    if frame_index >= frame_count:
        raise ValueError(f"frame {frame_index} beyond captured {frame_count}")
    scene = SyntheticScene(spec)
    report = EvalReport(str(scene_dir), stages, frame_index, border)
    step = 1 << stages
    for gap in range(spec.camera_count - 1):
        if use_disk_frames:
            left = load_frame(scene_dir, gap, frame_index, spec)
            right = load_frame(scene_dir, gap + 1, frame_index, spec)
        else:
            left = scene.render_view(float(gap), frame_index)
            right = scene.render_view(float(gap + 1), frame_index)
        views = dense_views(left, right, stages, config)
        by_depth: dict[int, list[tuple[float, float, float]]] = {}
        for j, view in enumerate(views, start=1):
            position = gap + j / step
            gt = scene.render_view(position, frame_index)
            d = _depth_of(j, stages)
            by_depth.setdefault(d, []).append((
                psnr(view, gt, border), ssim(view, gt, border), lap_distance(view, gt)))
        for d in sorted(by_depth):
            vals = by_depth[d]
            report.rows.append(EvalRow(
                gap, d, len(vals),
                sum(v[0] for v in vals) / len(vals),
                sum(v[1] for v in vals) / len(vals),
                sum(v[2] for v in vals) / len(vals)))
    return report


def write_eval_report(report: EvalReport, out_dir: str | Path,
                      figures: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "eval.json", "csv": out / "eval.csv"}
    paths["json"].write_text(json.dumps(report.to_json(), indent=2) + "\n")
    with paths["csv"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gap", "depth", "views", "psnr_db", "ssim", "lap_distance"])
        for r in report.rows:
            writer.writerow([r.gap, r.depth, r.views,
                             f"{r.psnr:.4f}" if math.isfinite(r.psnr) else "inf",
                             f"{r.ssim:.6f}", f"{r.lap_distance:.6f}"])
    if figures:
        paths["figure"] = render_eval_figure(report, out / "eval_metrics.png")
    return paths


def render_eval_figure(report: EvalReport, path: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    depths = sorted({r.depth for r in report.rows})
    for metric, ax, label in ((lambda r: r.psnr, axes[0], "PSNR (dB)"),
                              (lambda r: r.ssim, axes[1], "SSIM"),
                              (lambda r: r.lap_distance, axes[2], "Laplacian distance")):
        for d in depths:
            rows = [r for r in report.rows if r.depth == d]
            xs = [r.gap for r in rows]
            ys = [metric(r) if math.isfinite(metric(r)) else None for r in rows]
            ax.plot(xs, ys, marker="o", label=f"depth {d}")
        ax.set_xlabel("camera gap")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.suptitle("interpolated views vs analytic ground truth "
                 f"(border {report.border} px excluded)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def write_bench_report(report, out_dir: str | Path, figures: bool = True
                       ) -> dict[str, Path]:
    from .server.bench import REFERENCE_LATENCIES_MS
    from .server.pipeline import STAGES

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = report.stats()
    paths = {"json": out / "bench.json", "csv": out / "bench.csv"}
    paths["json"].write_text(json.dumps(
        {"kind": "fvv-bench-report", **report.to_json(),
         "reference_ms": REFERENCE_LATENCIES_MS}, indent=2) + "\n")
    with paths["csv"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "min_ms", "avg_ms", "max_ms", "count"])
        for name in STAGES:
            s = stats[name]
            writer.writerow([name, f"{s['min_ms']:.3f}", f"{s['avg_ms']:.3f}",
                             f"{s['max_ms']:.3f}", s["count"]])
    if figures:
        paths["figure"] = render_bench_figure(stats, out / "bench_latency.png")
    return paths


def render_bench_figure(stats: dict, path: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    from .server.bench import REFERENCE_LATENCIES_MS
    from .server.pipeline import STAGES

    names = list(STAGES)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(9, 4.5))
    avg = [stats[n]["avg_ms"] for n in names]
    err_low = [stats[n]["avg_ms"] - stats[n]["min_ms"] for n in names]
    err_high = [stats[n]["max_ms"] - stats[n]["avg_ms"] for n in names]
    ax.bar(x - 0.2, avg, 0.38, yerr=[err_low, err_high], capsize=4,
           label="measured (CPU)")
    ref_avg = [REFERENCE_LATENCIES_MS[n]["avg_ms"] for n in names]
    ax.bar(x + 0.2, ref_avg, 0.38, alpha=0.6, label="reference GPU deployment")
    ax.set_xticks(x, names)
    ax.set_ylabel("latency per frame (ms)")
    ax.set_title("pipeline stage latency: min/avg/max")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
