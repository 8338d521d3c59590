#!/usr/bin/env python3
"""Builds data/mnist5k/ (IDX files) from the 5,000-image MNIST subset that
ships inside the mlxtend wheel. The source rows are sorted by class; they are interleaved
round-robin across classes, then the first 4,000 become the train split
(400 per class) and the remaining 1,000 the validation split (100 per class)."""

import argparse
import glob
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_csv(wheel_dir):
    wheels = glob.glob(os.path.join(wheel_dir, "mlxtend-*.whl"))
    if not wheels:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
                        "-d", wheel_dir, "mlxtend"], check=True)
        wheels = glob.glob(os.path.join(wheel_dir, "mlxtend-*.whl"))
    with zipfile.ZipFile(sorted(wheels)[-1]) as wheel:
        return gzip.decompress(wheel.read(MEMBER)).decode()


def write_idx(path, images, labels):
    with open(path + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for row in images:
            f.write(bytes(row))
    with open(path + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist5k"))
    parser.add_argument("--csv", help="local mnist_5k.csv.gz instead of downloading the wheel")
    args = parser.parse_args()

    if args.csv:
        with gzip.open(args.csv, "rt") as f:
            text = f.read()
    else:
        with tempfile.TemporaryDirectory() as tmp:
            text = fetch_csv(tmp)

    images, labels = [], []
    for line in io.StringIO(text):
        fields = line.strip().split(",")
        if len(fields) != 785:
            continue
        # Pixels first, label in the last column.
        images.append([int(float(v)) for v in fields[:-1]])
        labels.append(int(float(fields[-1])))
    if len(images) != 5000:
        sys.exit(f"expected 5000 rows, got {len(images)}")

    by_class = {}
    for image, label in zip(images, labels):
        by_class.setdefault(label, []).append(image)
    per_class = min(len(v) for v in by_class.values())
    images, labels = [], []
    for i in range(per_class):
        for label in sorted(by_class):
            images.append(by_class[label][i])
            labels.append(label)

    os.makedirs(args.out, exist_ok=True)
    write_idx(os.path.join(args.out, "train"), images[:4000], labels[:4000])
    write_idx(os.path.join(args.out, "val"), images[4000:], labels[4000:])
    print(f"wrote {4000} train / {len(images) - 4000} val images to {args.out}")


if __name__ == "__main__":
    main()
