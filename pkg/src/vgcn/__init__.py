"""Superpixel graphs from images and lightweight graph-conv classifiers in numpy."""
__version__ = "0.1.0"

from .boundary import build_voronoi_graph, douglas_peucker, extract_boundaries
from .datasets import load_dataset
from .dualgraph import DualConfig, build_delaunay, degree_stats, image_to_graph
from .graphstore import GraphRecord, batch_graphs, read_graphs, write_graphs
from .superpixel import SnicConfig, snic_segment

__all__ = [
    "DualConfig", "GraphRecord", "SnicConfig", "batch_graphs", "build_delaunay",
    "build_voronoi_graph", "degree_stats", "douglas_peucker", "extract_boundaries",
    "image_to_graph", "load_dataset", "read_graphs", "snic_segment", "write_graphs",
]
