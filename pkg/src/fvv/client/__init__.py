from .core import ExtractResult, extract_view, select_cluster
from .player import ClientError, ClientStats, FvvClient, TranscriptEntry

__all__ = [
    "ClientError",
    "ClientStats",
    "ExtractResult",
    "FvvClient",
    "TranscriptEntry",
    "extract_view",
    "select_cluster",
]
