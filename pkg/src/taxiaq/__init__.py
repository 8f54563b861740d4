"""Segment-level on-road exposure from taxi-mounted air-quality sensors.

Pipeline: cut roads into 50-m segments (:mod:`taxiaq.network`), QA the raw
records (:mod:`taxiaq.ingest`), snap them to segments and reduce to median
hourly estimates (:mod:`taxiaq.reduction`), compare with fixed stations
(:mod:`taxiaq.stations`) and flag hotspots (:mod:`taxiaq.hotspot`).
"""

__version__ = "0.1.0"

from .geo import GeoPoint, PlanarPoint, Projection, project, unproject
from .hotspot import ExposureLevel, classify_segment, get_level, identify_hotspots, mark_valid
from .ingest import Observation, ObservationBatch, inter_device_deviation, parse_observations, qa_filter
from .kernels import BACKEND as KERNEL_BACKEND
from .network import RoadNetwork, RoadSegment, build_segments
from .reduction import aggregate_hourly, median, snap_observations, summarize_segments
from .spatial import SegmentIndex, build_index, nearest_segment
from .stations import compute_metrics, pair_buffer_hours

__all__ = [
    "ExposureLevel", "GeoPoint", "KERNEL_BACKEND", "Observation", "ObservationBatch", "PlanarPoint",
    "Projection", "RoadNetwork", "RoadSegment", "SegmentIndex", "aggregate_hourly", "build_index",
    "build_segments", "classify_segment", "compute_metrics", "get_level", "identify_hotspots",
    "inter_device_deviation", "mark_valid", "median", "nearest_segment", "pair_buffer_hours",
    "parse_observations", "project", "qa_filter", "snap_observations", "summarize_segments", "unproject",
]
