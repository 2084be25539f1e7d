"""Delaunay-style dual graph: one node per region, one edge per shared Voronoi edge."""
import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import FRAME, VoronoiGraph, build_voronoi_graph, extract_boundaries, simplify_chains
from .datasets import normalize_image
from .superpixel import SnicConfig, snic_segment

DEFAULT_EPS = 1.5


@dataclass(frozen=True)
class DualConfig:
    perp_check: bool = False
    perp_tolerance: float = 30.0  # degrees
    neighborhood_radius: int = 1

    def __post_init__(self):
        if not 0 <= self.perp_tolerance <= 90:
            raise ValueError("perp_tolerance must lie in [0, 90] degrees")
        if self.neighborhood_radius < 1:
            raise ValueError("neighborhood_radius must be >= 1")


@dataclass
class DelaunayGraph:
    nodes: np.ndarray  # (M, 2) generator coordinates (x, y)
    edges: np.ndarray  # (E, 2) node pairs, i < j, lexicographically sorted
    features: np.ndarray = None
    source_dims: tuple = (0, 0)  # (width, height)
    counters: dict = field(default_factory=dict)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.edges)


@dataclass
class DegreeStats:
    min: int
    max: int
    mean: float
    histogram: np.ndarray


def _window_labels(labels, corner, radius):
    """Labels of the 2r x 2r pixels around an integer corner; frame for outside pixels."""
    h, w = labels.shape
    cx, cy = int(round(corner[0])), int(round(corner[1]))
    x0, x1 = cx - radius, cx + radius
    y0, y1 = cy - radius, cy + radius
    found = set(labels[max(y0, 0):min(y1, h), max(x0, 0):min(x1, w)].ravel().tolist())
    if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
        found.add(FRAME)
    return found


def shared_regions(x1, x2, annotation, labels, cfg=DualConfig()):
    """Regions separated by the Voronoi edge (x1, x2), or None when it borders only the frame.

    The candidates are the labels seen around both endpoints.  When that
    intersection is not exactly the chain's own pair of regions, the chain
    annotation is used instead.
    """
    labels = np.asarray(getattr(labels, "labels", labels))
    common = _window_labels(labels, x1, cfg.neighborhood_radius) & \
        _window_labels(labels, x2, cfg.neighborhood_radius)
    inner = sorted(r for r in common if r != FRAME)
    ann = tuple(sorted(int(r) for r in annotation))
    if FRAME in ann:
        return None
    if len(inner) == 2 and tuple(inner) == ann:
        return ann, False
    return ann, True


def perpendicularity_test(p1, p2, x1, x2, tolerance):
    """True when segments p1-p2 and x1-x2 meet within ``tolerance`` degrees of a right angle."""
    u = np.subtract(p2, p1, dtype=np.float64)
    v = np.subtract(x2, x1, dtype=np.float64)
    nu, nv = math.hypot(*u), math.hypot(*v)
    if nu == 0.0 or nv == 0.0:
        return False
    cos = abs(float(u @ v)) / (nu * nv)
    angle = math.degrees(math.acos(min(1.0, cos)))  # in [0, 90]
    return 90.0 - angle <= tolerance + 1e-12


def build_delaunay(vg, seg, cfg=DualConfig()):
    labels = seg.labels
    gens = seg.generators
    pairs = set()
    skipped = fallback = rejected = 0
    for (a, b), ann in zip(vg.edges.tolist(), vg.edge_regions.tolist()):
        x1, x2 = vg.vertices[a], vg.vertices[b]
        resolved = shared_regions(x1, x2, ann, labels, cfg)
        if resolved is None:
            skipped += 1
            continue
        (r1, r2), fell_back = resolved
        fallback += fell_back
        if cfg.perp_check and not perpendicularity_test(gens[r1], gens[r2], x1, x2,
                                                        cfg.perp_tolerance):
            rejected += 1
            continue
        pairs.add((r1, r2))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    h, w = labels.shape
    return DelaunayGraph(nodes=gens.copy(), edges=edges, source_dims=(w, h),
                         counters={"skipped": skipped, "fallback": fallback,
                                   "rejected": rejected})


def node_features(seg, img):
    """[x/width, y/height, mean colour...] per region; colour means in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    h, w, c = img.shape
    flat = seg.labels.ravel()
    sizes = np.bincount(flat, minlength=seg.num_regions).astype(np.float64)
    means = [np.bincount(flat, weights=img[..., ch].ravel(), minlength=seg.num_regions) / sizes
             for ch in range(c)]
    pos = seg.generators / np.array([w, h], dtype=np.float64)
    return np.column_stack([pos] + means)


def degree_stats(g):
    m = g.num_nodes if hasattr(g, "num_nodes") else int(g[0])
    edges = g.edges if hasattr(g, "edges") else np.asarray(g[1])
    if m == 0:
        return DegreeStats(0, 0, 0.0, np.zeros(0, dtype=np.int64))
    deg = np.bincount(np.asarray(edges, dtype=np.int64).ravel(), minlength=m)
    return DegreeStats(int(deg.min()), int(deg.max()), 2.0 * len(edges) / m, np.bincount(deg))


@dataclass
class Conversion:
    segmentation: object
    chains: list
    voronoi: VoronoiGraph = None
    graph: DelaunayGraph = None


def image_to_graph(img, snic_cfg=SnicConfig(), dual_cfg=DualConfig(), eps=DEFAULT_EPS,
                   return_stages=False):
    """Raw uint8 image (H, W[, C]) -> DelaunayGraph with node features."""
    norm = normalize_image(img)
    if norm.ndim == 3 and norm.shape[2] == 1:
        norm = norm[..., 0]
    seg = snic_segment(norm, snic_cfg)
    chains = extract_boundaries(seg)
    vg = build_voronoi_graph(simplify_chains(chains, eps))
    g = build_delaunay(vg, seg, dual_cfg)
    g.features = node_features(seg, norm)
    if return_stages:
        return Conversion(seg, chains, vg, g)
    return g
