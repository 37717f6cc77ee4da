"""Temporal-spatial detection post-processing toolkit.

Components: box geometry and IoU (`boxes`), position-aware confidence
recalibration with NMS baselines (`pac`), a minimal forward-only tensor
kernel (`tensor`), temporally calibrated convolution (`gtconv`), the
convolutional-LSTM context integrator (`hqim`), detection metrics
(`evaluate`), a deterministic synthetic benchmark (`synth`), file formats
(`formats`), and the command-line front end (`cli`).
"""

from .boxes import Box, FrameDetections, SequenceDataset, area, iou
from .pac import (
    AdjacencyGraph,
    PacParams,
    build_graph,
    classical_nms,
    connected_components,
    enhancement,
    low_high_neighbors,
    pac_rescore,
    pac_select,
    soft_nms,
    suppression,
)

__all__ = [
    "Box",
    "FrameDetections",
    "SequenceDataset",
    "area",
    "iou",
    "AdjacencyGraph",
    "PacParams",
    "build_graph",
    "classical_nms",
    "connected_components",
    "enhancement",
    "low_high_neighbors",
    "pac_rescore",
    "pac_select",
    "soft_nms",
    "suppression",
]

__version__ = "0.1.0"
