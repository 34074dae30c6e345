#!/usr/bin/env python3
"""Write the 5,000-sample MNIST subset shipped inside the mlxtend wheel as IDX files.

Usage: make_mnist_subset.py <mlxtend wheel or mnist_5k.csv.gz> <out_dir>

Rows keep their original order. Each CSV row is 784 pixel values followed by
the digit label.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(src: Path):
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as wheel:
            raw = wheel.read(MEMBER)
    else:
        raw = src.read_bytes()
    for line in gzip.decompress(raw).decode().splitlines():
        values = [int(float(v)) for v in line.split(",")]
        yield values[:-1], values[-1]


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    rows = list(read_rows(src))
    images = bytearray(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
    labels = bytearray(struct.pack(">II", 0x00000801, len(rows)))
    for pixels, label in rows:
        assert len(pixels) == 784 and 0 <= label <= 9
        images.extend(bytes(pixels))
        labels.append(label)
    (out / "mnist5k-images-idx3-ubyte").write_bytes(images)
    (out / "mnist5k-labels-idx1-ubyte").write_bytes(labels)
    print(f"wrote {len(rows)} samples to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
