"""Rebuild data/mnist5k/ from the 5,000-digit MNIST sample bundled in the mlxtend wheel.

    pip download --no-deps mlxtend -d /tmp/wheels
    python tools/extract_mnist_subset.py /tmp/wheels/mlxtend-*.whl

The sample holds 500 digits per class as CSV rows (784 pixels, then label).
Output is gzipped IDX so the regular loaders read it unchanged.
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main(wheel, out_dir="data/mnist5k"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    pixels = table[:, :784].astype(np.uint8)
    labels = table[:, 784].astype(np.uint8)
    n = len(labels)
    images = struct.pack(">IIII", 0x803, n, 28, 28) + pixels.tobytes()
    label_bytes = struct.pack(">II", 0x801, n) + labels.tobytes()
    # mtime=0 keeps the archives byte-stable across rebuilds
    for name, payload in [("images-idx3-ubyte.gz", images), ("labels-idx1-ubyte.gz", label_bytes)]:
        with open(out / name, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
                gz.write(payload)
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
