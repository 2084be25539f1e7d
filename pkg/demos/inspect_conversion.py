"""Walk one MNIST digit through every conversion stage and print what each produces.

    python3 demos/inspect_conversion.py [index]
"""
import sys
from pathlib import Path

import numpy as np

from vgcn.datasets import load_dataset
from vgcn.dualgraph import degree_stats, image_to_graph
from vgcn.superpixel import region_adjacency

DATA = Path(__file__).resolve().parents[1] / "data" / "mnist5k"


def ascii_labels(labels):
    glyphs = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ+*"
    return "\n".join("".join(glyphs[v % len(glyphs)] for v in row) for row in labels)


def main(index=0):
    ds = load_dataset(DATA, "mnist")
    conv = image_to_graph(ds.images[index], return_stages=True)
    seg, vg, g = conv.segmentation, conv.voronoi, conv.graph
    print(f"digit {ds.labels[index]}: {seg.num_regions} superpixels")
    print(ascii_labels(seg.labels))
    print(f"boundary chains: {len(conv.chains)}")
    print(f"voronoi graph: {vg.num_voronoi_vertices} junctions, {vg.num_edges} straight edges")
    adj = region_adjacency(seg)
    print(f"dual graph: {g.num_nodes} nodes, {g.num_edges} edges "
          f"({len(adj)} adjacent region pairs in the label map)")
    s = degree_stats(g)
    print(f"degree min/mean/max: {s.min}/{s.mean:.2f}/{s.max}")
    print("first node features (x, y, intensity):")
    print(np.round(g.features[:5], 3))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
