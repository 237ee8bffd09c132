from .pipeline import PipelineConfig, PipelineHandle, StageLatencyReport, run_pipeline
from .bench import bench, REFERENCE_LATENCIES_MS

__all__ = [
    "PipelineConfig",
    "PipelineHandle",
    "StageLatencyReport",
    "run_pipeline",
    "bench",
    "REFERENCE_LATENCIES_MS",
]
