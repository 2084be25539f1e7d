"""SNIC superpixels: one-pass priority-queue region growing from a seed grid.

Every region grows through 4-neighbours only, so regions are connected by
construction.  The resulting label map is treated as a digitized Voronoi
diagram whose generators are the region centroids.

Coordinates follow the continuous image plane: pixel (row r, col c) covers
[c, c+1] x [r, r+1], so its centre is (c + 0.5, r + 0.5) and pixel corners
sit on integer positions.
"""
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

COLOR_SPACES = ("gray", "rgb", "lab")


@dataclass(frozen=True)
class SnicConfig:
    k: int = 64
    compactness: float = 0.5
    spacing: float = None  # None -> sqrt(N / k)
    color_space: str = "auto"  # auto -> gray for 1 channel, lab for 3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.compactness <= 0:
            raise ValueError("compactness must be > 0")
        if self.spacing is not None and self.spacing <= 0:
            raise ValueError("spacing must be > 0")
        if self.color_space not in COLOR_SPACES + ("auto",):
            raise ValueError(f"unknown color space {self.color_space!r}")


REFERENCE_SPACING = 50.0


def reference_config(k=64):
    """Seed count and spacing used in the reported MNIST experiments."""
    return SnicConfig(k=k, spacing=REFERENCE_SPACING)


@dataclass
class Segmentation:
    labels: np.ndarray  # (height, width) int64 region ids 0..R-1
    generators: np.ndarray  # (R, 2) centroid (x, y)
    region_means: np.ndarray  # (R, C) mean colour in the clustering space
    region_sizes: np.ndarray  # (R,) pixel counts
    queue_pops: int = 0
    merged: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def num_regions(self):
        return len(self.region_sizes)

    @property
    def shape(self):
        return self.labels.shape


def init_seeds(width, height, k):
    """Place exactly ``k`` distinct seed pixels on a near-square grid.

    The grid has ceil(sqrt(k)) columns; the last row holds the remainder and
    is spread over the full width.  Seeds are the pixels containing the cell
    centres, returned as an int array of (x, y) pairs.
    """
    if k < 1 or k > width * height:
        raise ValueError(f"cannot place {k} seeds in a {width}x{height} image")
    cols = min(math.ceil(math.sqrt(k)), width)
    rows = math.ceil(k / cols)
    if rows > height:
        rows = height
        cols = math.ceil(k / rows)
    seeds = []
    pitch_y = height / rows
    for r in range(rows):
        n = min(cols, k - r * cols)
        pitch_x = width / n
        y = min(int((r + 0.5) * pitch_y), height - 1)
        for c in range(n):
            x = min(int((c + 0.5) * pitch_x), width - 1)
            seeds.append((x, y))
    return np.array(seeds, dtype=np.int64)


def rgb_to_lab(rgb):
    """sRGB in [0, 1] -> CIELAB (D65), shape (..., 3)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    lin = np.where(rgb > 0.04045, ((rgb + 0.055) / 1.055) ** 2.4, rgb / 12.92)
    m = np.array([[0.412453, 0.357580, 0.180423],
                  [0.212671, 0.715160, 0.072169],
                  [0.019334, 0.119193, 0.950227]])
    xyz = lin @ m.T / np.array([0.950456, 1.0, 1.088754])
    eps = 216 / 24389
    f = np.where(xyz > eps, np.cbrt(xyz), (24389 / 27 * xyz + 16) / 116)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def _resolve_color_space(img, color_space):
    channels = img.shape[2] if img.ndim == 3 else 1
    if color_space == "auto":
        color_space = "gray" if channels == 1 else "lab"
    if color_space == "gray" and channels != 1:
        raise ValueError("gray colour space needs a single-channel image")
    if color_space in ("rgb", "lab") and channels != 3:
        raise ValueError(f"{color_space} colour space needs an RGB image")
    return color_space


def color_features(img, color_space="auto"):
    """Per-pixel colour vectors (N, C) used by the SNIC distance."""
    img = np.asarray(img, dtype=np.float64)
    space = _resolve_color_space(img, color_space)
    h, w = img.shape[:2]
    if space == "gray":
        return img.reshape(h * w, 1)
    if space == "rgb":
        return img.reshape(h * w, 3)
    # Lab spans ~[0, 100]; rescale so one unit of Lab ~ one unit of [0, 1] intensity
    return rgb_to_lab(img.reshape(h * w, 3)) / 100.0


def _grow(colors, width, height, seeds, spatial_weight):
    """Core SNIC loop; returns (flat label list, number of queue pops).

    Queue entries are (D^2, pixel index, region id) so ties resolve on the
    pixel's row-major index and then the region id.
    """
    k = len(seeds)
    gray = colors.shape[1] == 1
    col = colors[:, 0].tolist() if gray else [tuple(c) for c in colors.tolist()]
    nch = colors.shape[1]
    labels = [-1] * (width * height)
    sum_x = [0.0] * k
    sum_y = [0.0] * k
    sum_c = [0.0] * k if gray else [[0.0] * nch for _ in range(k)]
    size = [0] * k
    heap = [(0.0, int(y) * width + int(x), r) for r, (x, y) in enumerate(seeds)]
    heapq.heapify(heap)
    push, pop = heapq.heappush, heapq.heappop
    pops = 0
    wlast, hlast = width - 1, height - 1
    sw = spatial_weight
    while heap:
        _, p, r = pop(heap)
        pops += 1
        if labels[p] >= 0:
            continue
        labels[p] = r
        y, x = divmod(p, width)
        cnt = size[r] + 1
        size[r] = cnt
        sum_x[r] += x
        sum_y[r] += y
        cx = sum_x[r] / cnt
        cy = sum_y[r] / cnt
        if gray:
            sum_c[r] += col[p]
            mean = sum_c[r] / cnt
            nbrs = []
            if x > 0 and labels[p - 1] < 0:
                nbrs.append((p - 1, x - 1, y))
            if x < wlast and labels[p + 1] < 0:
                nbrs.append((p + 1, x + 1, y))
            if y > 0 and labels[p - width] < 0:
                nbrs.append((p - width, x, y - 1))
            if y < hlast and labels[p + width] < 0:
                nbrs.append((p + width, x, y + 1))
            for q, qx, qy in nbrs:
                dc = col[q] - mean
                dx = qx - cx
                dy = qy - cy
                push(heap, (dc * dc + sw * (dx * dx + dy * dy), q, r))
        else:
            sc = sum_c[r]
            cp = col[p]
            for i in range(nch):
                sc[i] += cp[i]
            mean = [v / cnt for v in sc]
            nbrs = []
            if x > 0 and labels[p - 1] < 0:
                nbrs.append((p - 1, x - 1, y))
            if x < wlast and labels[p + 1] < 0:
                nbrs.append((p + 1, x + 1, y))
            if y > 0 and labels[p - width] < 0:
                nbrs.append((p - width, x, y - 1))
            if y < hlast and labels[p + width] < 0:
                nbrs.append((p + width, x, y + 1))
            for q, qx, qy in nbrs:
                cq = col[q]
                dcol = 0.0
                for i in range(nch):
                    d = cq[i] - mean[i]
                    dcol += d * d
                dx = qx - cx
                dy = qy - cy
                push(heap, (dcol + sw * (dx * dx + dy * dy), q, r))
    return labels, pops


def _border_counts(labels, region):
    """Number of 4-adjacent pixel pairs between ``region`` and each neighbour."""
    counts = {}
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        mask = (a != b) & ((a == region) | (b == region))
        other = np.where(a[mask] == region, b[mask], a[mask])
        for lab, c in zip(*np.unique(other, return_counts=True)):
            counts[int(lab)] = int(c)
    return counts


def _merge_small(labels, min_size):
    """Absorb regions below ``min_size`` pixels into their longest-border neighbour."""
    merged = 0
    while True:
        sizes = np.bincount(labels.ravel())
        small = [r for r in np.argsort(sizes, kind="stable")
                 if 0 < sizes[r] < min_size]
        if not small:
            return merged
        progressed = False
        for r in small:
            counts = _border_counts(labels, r)
            if not counts:
                continue
            target = max(counts, key=lambda lab: (counts[lab], -lab))
            labels[labels == r] = target
            merged += 1
            progressed = True
            break  # sizes changed; recompute
        if not progressed:
            return merged


def region_statistics(labels, colors):
    """Exact sizes, centroids and mean colours recomputed from a label map."""
    h, w = labels.shape
    flat = labels.ravel()
    nreg = int(flat.max()) + 1
    sizes = np.bincount(flat, minlength=nreg).astype(np.float64)
    rows, cols = np.divmod(np.arange(h * w), w)
    gx = np.bincount(flat, weights=cols + 0.5, minlength=nreg) / sizes
    gy = np.bincount(flat, weights=rows + 0.5, minlength=nreg) / sizes
    means = np.stack([np.bincount(flat, weights=colors[:, c], minlength=nreg) / sizes
                      for c in range(colors.shape[1])], axis=1)
    return sizes.astype(np.int64), np.stack([gx, gy], axis=1), means


def snic_segment(img, cfg=SnicConfig()):
    """Segment a normalized image (H, W) or (H, W, C) with values in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    h, w = img.shape[:2]
    n = h * w
    colors = color_features(img if img.ndim == 3 else img, cfg.color_space)
    seeds = init_seeds(w, h, cfg.k)
    spacing = cfg.spacing if cfg.spacing is not None else math.sqrt(n / cfg.k)
    spatial_weight = (cfg.compactness / spacing) ** 2
    flat, pops = _grow(colors, w, h, seeds, spatial_weight)
    labels = np.array(flat, dtype=np.int64).reshape(h, w)
    merged = _merge_small(labels, max(4.0, 0.05 * n / cfg.k)) if cfg.k > 1 else 0
    # compact ids, preserving seed order
    _, labels = np.unique(labels, return_inverse=True)
    labels = labels.reshape(h, w).astype(np.int64)
    sizes, generators, means = region_statistics(labels, colors)
    return Segmentation(labels=labels, generators=generators, region_means=means,
                        region_sizes=sizes, queue_pops=pops, merged=merged)


def region_adjacency(seg):
    """Set of (i, j), i < j, for regions with at least one 4-adjacent pixel pair."""
    labels = seg.labels if isinstance(seg, Segmentation) else np.asarray(seg)
    pairs = []
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        mask = a != b
        pairs.append(np.stack([np.minimum(a[mask], b[mask]), np.maximum(a[mask], b[mask])], axis=1))
    allp = np.unique(np.concatenate(pairs), axis=0) if pairs else np.empty((0, 2), np.int64)
    return {(int(i), int(j)) for i, j in allp}
