#!/usr/bin/env python3
"""Convert the 5000-digit MNIST subset bundled with mlxtend into IDX files.

Usage:
    pip download --no-deps -d /tmp/wheels mlxtend
    python3 scripts/mnist5k_to_idx.py /tmp/wheels/mlxtend-*.whl data/mnist5k

Writes `images.idx3-ubyte` and `labels.idx1-ubyte` (big-endian IDX headers,
raw u8 payload) in the row order of the source CSV.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main(wheel: str, out_dir: str) -> None:
    member = "mlxtend/data/data/mnist_5k.csv.gz"
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(member)).decode()
    rows = [line.split(",") for line in raw.strip().splitlines()]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(int(float(v)) for v in r[:784]))
    with open(out / "labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(int(float(r[784])) for r in rows))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
