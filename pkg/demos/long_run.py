"""Longer training attempt on every converted digit of the bundled subset
(or any VGR1 file), with the full 300-epoch / patience-10 schedule.

    python3 demos/long_run.py [graphs.vgr] [model]

Without a graph file, the 5,000-image subset is converted first (about
40 s).  Expect 20-60 minutes for the nvgcn model.  Full-size MNIST is
not bundled; convert it with `vgcn convert` and pass the file here.
"""
import sys
import time
from pathlib import Path

from vgcn.datasets import load_dataset
from vgcn.dualgraph import image_to_graph
from vgcn.graphstore import graph_to_record, read_graphs
from vgcn.nn import ModelConfig
from vgcn.train import TrainConfig, fit, split_dataset

DATA = Path(__file__).resolve().parents[1] / "data" / "mnist5k"


def main(path=None, model="nvgcn"):
    if path:
        records = read_graphs(path)
    else:
        ds = load_dataset(DATA, "mnist")
        records = [graph_to_record(image_to_graph(im), y) for im, y in zip(ds.images, ds.labels)]
    train, test = split_dataset(records, 0.2, seed=0)
    print(f"{len(train)} train / {len(test)} test graphs, model {model}")
    t0 = time.time()
    res = fit(ModelConfig(model, records[0].feature_width), train, test, TrainConfig(seed=0),
              on_epoch=lambda m: print(f"epoch {m.epoch:3d} loss {m.train_loss:.4f} "
                                       f"train {m.train_accuracy:.3f} test {m.val_accuracy:.3f}",
                                       flush=True))
    print(f"best test accuracy {res.best_accuracy:.4f} at epoch {res.best_epoch} "
          f"({(time.time() - t0) / 60:.1f} min)")


if __name__ == "__main__":
    main(*sys.argv[1:3])
