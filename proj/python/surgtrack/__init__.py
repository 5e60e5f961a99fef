"""Prompted surgical instrument segmentation with LoRA fine-tuning and memory-based tracking."""

from ._core import (
    Error,
    Segmenter,
    Tracker,
    bbox_from_mask,
    evaluate,
    format_percent,
    frame_score,
    load_sequence,
    lora_merge,
    memory_read,
    render_table,
    run_pipeline,
    synth_video,
    write_sequence,
)

__all__ = [
    "Error",
    "Segmenter",
    "Tracker",
    "bbox_from_mask",
    "evaluate",
    "format_percent",
    "frame_score",
    "load_sequence",
    "lora_merge",
    "memory_read",
    "render_table",
    "run_pipeline",
    "synth_video",
    "write_sequence",
]
