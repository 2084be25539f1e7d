"""VGR1 graph container and block-diagonal batching.

File layout, all little-endian::

    "VGR1" | version u8 | record_count u64 | feature_width u32
    per record: node_count u32 | feature_width u32 | label u32 | edge_count u32
                features f64[node_count * feature_width] | edges u32[edge_count * 2]
"""
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"VGR1"
VERSION = 1
FEATURE_WIDTHS = (3, 5)
_HEADER = struct.Struct("<4sBQI")
_RECORD = struct.Struct("<IIII")


class GraphFormatError(ValueError):
    pass


@dataclass
class GraphRecord:
    features: np.ndarray  # (M, F) float64
    edges: np.ndarray  # (E, 2) int
    label: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= self.num_nodes):
            raise ValueError("edge index out of range")
        self.label = int(self.label)

    @property
    def num_nodes(self):
        return self.features.shape[0]

    @property
    def feature_width(self):
        return self.features.shape[1]

    @property
    def num_edges(self):
        return len(self.edges)

    def __eq__(self, other):
        return (isinstance(other, GraphRecord) and self.label == other.label
                and self.features.shape == other.features.shape
                and self.features.tobytes() == other.features.tobytes()
                and np.array_equal(self.edges, other.edges))


def graph_to_record(graph, label):
    return GraphRecord(graph.features, graph.edges, label)


def encode_graphs(records):
    records = list(records)
    width = records[0].feature_width if records else 0
    parts = [_HEADER.pack(MAGIC, VERSION, len(records), width)]
    for r in records:
        if r.feature_width != width:
            raise ValueError("all records in a file must share one feature width")
        if width not in FEATURE_WIDTHS:
            raise ValueError(f"feature width must be one of {FEATURE_WIDTHS}, got {width}")
        if not 0 <= r.label < 2 ** 32:
            raise ValueError("label out of range")
        parts.append(_RECORD.pack(r.num_nodes, width, r.label, r.num_edges))
        parts.append(r.features.astype("<f8").tobytes())
        parts.append(r.edges.astype("<u4").tobytes())
    return b"".join(parts)


def decode_graphs(data):
    if len(data) < _HEADER.size:
        raise GraphFormatError("truncated header")
    magic, version, count, width = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise GraphFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise GraphFormatError(f"unsupported version {version}")
    pos = _HEADER.size
    out = []
    for i in range(count):
        if pos + _RECORD.size > len(data):
            raise GraphFormatError(f"truncated record {i}")
        m, f, label, e = _RECORD.unpack_from(data, pos)
        pos += _RECORD.size
        if f != width:
            raise GraphFormatError(f"record {i} has width {f}, header says {width}")
        nf, ne = m * f * 8, e * 8
        if pos + nf + ne > len(data):
            raise GraphFormatError(f"truncated record {i}")
        feats = np.frombuffer(data, "<f8", m * f, pos).reshape(m, f).astype(np.float64)
        pos += nf
        edges = np.frombuffer(data, "<u4", 2 * e, pos).reshape(e, 2).astype(np.int64)
        pos += ne
        try:
            out.append(GraphRecord(feats, edges, label))
        except ValueError as exc:
            raise GraphFormatError(f"record {i}: {exc}") from None
    if pos != len(data):
        raise GraphFormatError("trailing bytes after last record")
    return out


def write_graphs(records, path):
    """Write records to ``path``; returns the number of bytes written."""
    data = encode_graphs(records)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def read_graphs(path):
    with open(path, "rb") as f:
        return decode_graphs(f.read())


@dataclass
class Batch:
    features: np.ndarray  # (M_total, F)
    edges: np.ndarray  # (E_total, 2) with per-graph offsets applied
    graph_id: np.ndarray  # (M_total,) non-decreasing
    labels: np.ndarray  # (G,)
    offsets: np.ndarray  # (G + 1,) node start of each graph

    @property
    def num_graphs(self):
        return len(self.labels)

    @property
    def num_nodes(self):
        return len(self.features)


def batch_graphs(records):
    records = list(records)
    if not records:
        raise ValueError("cannot batch an empty sequence")
    widths = {r.feature_width for r in records}
    if len(widths) != 1:
        raise ValueError(f"mixed feature widths {sorted(widths)}")
    sizes = np.array([r.num_nodes for r in records], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    edges = np.concatenate([r.edges + o for r, o in zip(records, offsets[:-1])]
                           ).reshape(-1, 2)
    return Batch(features=np.concatenate([r.features for r in records]),
                 edges=edges.astype(np.int64),
                 graph_id=np.repeat(np.arange(len(records)), sizes),
                 labels=np.array([r.label for r in records], dtype=np.int64),
                 offsets=offsets)


def unbatch(batch):
    out = []
    counts = np.bincount(batch.graph_id[batch.edges[:, 0]], minlength=batch.num_graphs) \
        if len(batch.edges) else np.zeros(batch.num_graphs, dtype=np.int64)
    # edges are stored graph by graph, so they split at cumulative counts
    ecut = np.concatenate([[0], np.cumsum(counts)])
    for g in range(batch.num_graphs):
        a, b = batch.offsets[g], batch.offsets[g + 1]
        out.append(GraphRecord(batch.features[a:b], batch.edges[ecut[g]:ecut[g + 1]] - a,
                               batch.labels[g]))
    return out


def iter_batches(records, batch_size, rng=None):
    """Yield batches of ``batch_size`` graphs, shuffled by ``rng`` when given."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(records))
    if rng is not None:
        order = rng.permutation(len(records))
    for s in range(0, len(order), batch_size):
        yield batch_graphs([records[i] for i in order[s:s + batch_size]])
