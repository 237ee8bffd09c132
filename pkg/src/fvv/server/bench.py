"""Headless latency bench: run the pipeline N iterations, report per stage."""
from __future__ import annotations

from dataclasses import replace

from ..scene import SceneSpec, SyntheticScene
from .pipeline import (PipelineConfig, PrerenderedSource, StageLatencyReport,
                       STAGES, run_pipeline)

# Reference per-frame timings (ms) of the original GPU deployment of this
# pipeline shape, printed next to measured values for context. Never asserted:
# this implementation is CPU-only and desk scale.
REFERENCE_LATENCIES_MS = {
    "view interpolation": {"max_ms": 17.89, "min_ms": 11.24, "avg_ms": 12.85},
    "adaptive stitch": {"max_ms": 2.08, "min_ms": 0.98, "avg_ms": 1.27},
    "encoder": {"max_ms": 9.62, "min_ms": 4.27, "avg_ms": 5.62},
    "schedule": {"max_ms": 8.97, "min_ms": 3.21, "avg_ms": 5.45},
}


def bench(config: PipelineConfig, iterations: int = 1000,
          source: PrerenderedSource | None = None,
          distinct_ticks: int = 8) -> StageLatencyReport:
    """Run the full pipeline headless over `iterations` frames.

    Without an explicit source, frames come from the configured scene
    directory's spec rendered once and cycled, so the bench measures pipeline
    stages rather than disk or synthesis.
    """
    if source is None:
        if config.scene_dir:
            from ..scene import load_manifest
            spec, _ = load_manifest(config.scene_dir)
        else:
            spec = SceneSpec(seed=1, camera_count=2, width=128, height=96,
                             format="gray8", sprites=())
        scene = SyntheticScene(spec)
        ticks = [[scene.render_view(float(c), t) for c in range(spec.camera_count)]
                 for t in range(distinct_ticks)]
        source = PrerenderedSource(ticks, iterations)
    else:
        source = PrerenderedSource(source._ticks, iterations)
    handle = run_pipeline(replace(config, realtime=False), source=source)
    handle.wait()
    return handle.report


def format_report(report: StageLatencyReport, reference: bool = True) -> str:
    """Render the report as a latency-by-stage table, reference set alongside."""
    stats = report.stats()
    names = list(STAGES)
    rows = [("Maximum", "max_ms"), ("Minimum", "min_ms"), ("Average", "avg_ms")]
    width = max(len(n) for n in names) + 2
    lines = ["Latency per frame over %d iterations" % stats[names[0]]["count"],
             " " * 10 + "".join(n.rjust(width) for n in names)]
    for label, key in rows:
        lines.append(label.ljust(10)
                     + "".join(f"{stats[n][key]:.2f}ms".rjust(width) for n in names))
    if reference:
        lines.append("reference GPU deployment (not asserted):")
        for label, key in rows:
            lines.append(label.ljust(10)
                         + "".join(f"{REFERENCE_LATENCIES_MS[n][key]:.2f}ms".rjust(width)
                                   for n in names))
    return "\n".join(lines)
