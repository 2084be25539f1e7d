"""Region borders on the pixel-corner lattice and their straight-line simplification.

A border segment is a unit edge between two pixel corners that separates two
different labels; pixels outside the image carry the frame label ``FRAME``.
Corners where three or more labels meet are junctions.  Chains run from
junction to junction, so every chain separates exactly one pair of labels.
"""
import math
from dataclasses import dataclass

import numpy as np

FRAME = -1


@dataclass
class BoundaryChain:
    vertices: list  # [(x, y), ...] integer corner coordinates
    left_region: int
    right_region: int
    closed: bool = False  # cut from a junction-free loop

    @property
    def regions(self):
        return tuple(sorted((self.left_region, self.right_region)))


@dataclass
class VoronoiGraph:
    vertices: np.ndarray  # (V, 2) float corner coordinates
    edges: np.ndarray  # (E, 2) vertex indices
    edge_regions: np.ndarray  # (E, 2) sorted region pair; FRAME sorts first
    vertex_regions: np.ndarray = None  # (V,) number of non-frame regions meeting there
    dropped: int = 0  # zero-length edges discarded

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def voronoi_vertices(self):
        """Indices of proper Voronoi vertices: points shared by three or more regions.

        The remaining vertices are frame junctions and polyline bends kept by
        the simplification.
        """
        return np.flatnonzero(self.vertex_regions >= 3)

    @property
    def num_voronoi_vertices(self):
        return int((self.vertex_regions >= 3).sum())

    @property
    def num_edges(self):
        return len(self.edges)


def _padded(labels):
    h, w = labels.shape
    pad = np.full((h + 2, w + 2), FRAME, dtype=np.int64)
    pad[1:-1, 1:-1] = labels
    return pad


def junction_mask(labels):
    """Boolean (h+1, w+1) mask of corners touched by three or more labels."""
    pad = _padded(np.asarray(labels))
    quad = np.stack([pad[:-1, :-1], pad[:-1, 1:], pad[1:, :-1], pad[1:, 1:]])
    s = np.sort(quad, axis=0)
    distinct = 1 + (s[1:] != s[:-1]).sum(axis=0)
    # checkerboard saddles (two labels, four borders) also end chains
    saddle = (quad[0] == quad[3]) & (quad[1] == quad[2]) & (quad[0] != quad[1])
    return (distinct >= 3) | saddle


def extract_boundaries(seg, generators=None):
    """Trace all border chains of a label map.

    ``seg`` is a Segmentation or a bare label array.  Chains that close on
    themselves without meeting a junction are cut into two halves: once at
    the vertex nearest the midpoint of the two regions' centroids and once
    half way round the loop.
    """
    labels = np.asarray(getattr(seg, "labels", seg))
    if generators is None:
        generators = getattr(seg, "generators", None)
    h, w = labels.shape
    pad = _padded(labels)
    # hb[cy, cx]: segment (cx, cy)-(cx+1, cy); above = pad[cy, cx+1], below = pad[cy+1, cx+1]
    above, below = pad[:-1, 1:-1], pad[1:, 1:-1]
    # vb[cy, cx]: segment (cx, cy)-(cx, cy+1); left = pad[cy+1, cx], right = pad[cy+1, cx+1]
    vleft, vright = pad[1:-1, :-1], pad[1:-1, 1:]
    hb = (above != below).tolist()
    vb = (vleft != vright).tolist()
    above, below = above.tolist(), below.tolist()
    vleft, vright = vleft.tolist(), vright.tolist()
    junction = junction_mask(labels).tolist()

    hseen = [[False] * w for _ in range(h + 1)]
    vseen = [[False] * (w + 1) for _ in range(h)]

    def moves(cx, cy):
        """Unvisited border moves out of a corner: (dx, dy)."""
        out = []
        if cx < w and hb[cy][cx] and not hseen[cy][cx]:
            out.append((1, 0))
        if cx > 0 and hb[cy][cx - 1] and not hseen[cy][cx - 1]:
            out.append((-1, 0))
        if cy < h and vb[cy][cx] and not vseen[cy][cx]:
            out.append((0, 1))
        if cy > 0 and vb[cy - 1][cx] and not vseen[cy - 1][cx]:
            out.append((0, -1))
        return out

    def mark(cx, cy, dx, dy):
        # returns (left, right) label of the segment as walked (y points down)
        if dx:
            sx = cx if dx > 0 else cx - 1
            hseen[cy][sx] = True
            up, down = above[cy][sx], below[cy][sx]
            return (up, down) if dx > 0 else (down, up)
        sy = cy if dy > 0 else cy - 1
        vseen[sy][cx] = True
        lft, rgt = vleft[sy][cx], vright[sy][cx]
        return (rgt, lft) if dy > 0 else (lft, rgt)

    def walk(cx, cy, dx, dy, stop_at_start=False):
        start = (cx, cy)
        pts = [start]
        sides = mark(cx, cy, dx, dy)
        cx, cy = cx + dx, cy + dy
        pts.append((cx, cy))
        while not junction[cy][cx] and not (stop_at_start and (cx, cy) == start):
            nxt = moves(cx, cy)
            if not nxt:
                break
            dx, dy = nxt[0]
            mark(cx, cy, dx, dy)
            cx, cy = cx + dx, cy + dy
            pts.append((cx, cy))
        return pts, sides

    chains = []
    jy, jx = np.nonzero(junction_mask(labels))
    for cy, cx in zip(jy.tolist(), jx.tolist()):
        for dx, dy in moves(cx, cy):
            # a move may have been consumed by a chain that ended here
            if (dx, dy) not in moves(cx, cy):
                continue
            pts, (lft, rgt) = walk(cx, cy, dx, dy)
            chains.append(BoundaryChain(pts, lft, rgt))

    # junction-free loops: inner holes, or the frame of a one-region image
    for cy in range(h + 1):
        for cx in range(w):
            if hb[cy][cx] and not hseen[cy][cx]:
                pts, (lft, rgt) = walk(cx, cy, 1, 0, stop_at_start=True)
                chains.extend(_cut_loop(pts, lft, rgt, generators))
    for cy in range(h):
        for cx in range(w + 1):
            if vb[cy][cx] and not vseen[cy][cx]:
                pts, (lft, rgt) = walk(cx, cy, 0, 1, stop_at_start=True)
                chains.extend(_cut_loop(pts, lft, rgt, generators))
    return chains


def _cut_loop(pts, left, right, generators):
    loop = pts[:-1] if pts[0] == pts[-1] else pts
    n = len(loop)
    regions = [r for r in (left, right) if r != FRAME]
    if generators is not None and regions:
        ref = np.mean([generators[r] for r in regions], axis=0)
        d = [(x - ref[0]) ** 2 + (y - ref[1]) ** 2 for x, y in loop]
        i0 = int(np.argmin(d))
    else:
        i0 = 0
    i1 = (i0 + n // 2) % n
    ring = loop[i0:] + loop[:i0]
    half = (i1 - i0) % n
    first = ring[:half + 1]
    second = ring[half:] + [ring[0]]
    return [BoundaryChain(first, left, right, closed=True),
            BoundaryChain(second, left, right, closed=True)]


def point_segment_distance(p, a, b):
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def douglas_peucker(points, eps):
    """Simplify a polyline, keeping every point farther than ``eps`` from the result.

    Splits recursively at the point of maximum distance from the current
    chord (measured to the chord segment).  Returns a subsequence of
    ``points`` that always includes both endpoints.
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    keep = [False] * len(pts)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        best, dmax = -1, -1.0
        a, b = pts[i], pts[j]
        for m in range(i + 1, j):
            d = point_segment_distance(pts[m], a, b)
            if d > dmax:
                best, dmax = m, d
        if dmax > eps:
            keep[best] = True
            stack.append((best, j))
            stack.append((i, best))
    return [p for p, k in zip(pts, keep) if k]


def simplify_chains(chains, eps):
    return [BoundaryChain(douglas_peucker(c.vertices, eps), c.left_region,
                          c.right_region, c.closed) for c in chains]


def build_voronoi_graph(chains):
    """Join simplified chains into one graph, merging vertices with equal coordinates."""
    index = {}
    coords = []
    edges = {}
    dropped = 0
    for chain in chains:
        ids = []
        for p in chain.vertices:
            key = (float(p[0]), float(p[1]))
            if key not in index:
                index[key] = len(coords)
                coords.append(key)
            ids.append(index[key])
        pair = chain.regions
        for a, b in zip(ids[:-1], ids[1:]):
            if a == b:
                dropped += 1
                continue
            key = (min(a, b), max(a, b), pair)
            edges.setdefault(key, None)
    e = np.array([k[:2] for k in edges], dtype=np.int64).reshape(-1, 2)
    er = np.array([k[2] for k in edges], dtype=np.int64).reshape(-1, 2)
    v = np.array(coords, dtype=np.float64).reshape(-1, 2)
    meeting = [set() for _ in coords]
    for (a, b), pair in zip(e.tolist(), er.tolist()):
        inner = {r for r in pair if r != FRAME}
        meeting[a] |= inner
        meeting[b] |= inner
    counts = np.array([len(m) for m in meeting], dtype=np.int64)
    return VoronoiGraph(vertices=v, edges=e, edge_regions=er, vertex_regions=counts,
                        dropped=dropped)


def format_chains(chains):
    """One chain per line: ``left right: x,y x,y ...``."""
    lines = []
    for c in chains:
        pts = " ".join(f"{x:g},{y:g}" for x, y in c.vertices)
        lines.append(f"{c.left_region} {c.right_region}: {pts}")
    return "\n".join(lines) + ("\n" if lines else "")
