#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the `mnist` npm package.

The npm package (MIT) bundles 10,000 MNIST digits as per-class JSON arrays of
pixel intensities scaled to [0, 1] with three decimals. This script restores the
original bytes, shuffles with a fixed seed and writes a 5,000 / 5,000
train/test split as gzipped IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

N_TRAIN = 5000


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        for k in range(len(data) // 784):
            px = [min(255, max(0, round(v * 255))) for v in data[k * 784:(k + 1) * 784]]
            samples.append((px, digit))
    random.Random(0).shuffle(samples)
    for name, part in (("train", samples[:N_TRAIN]), ("t10k", samples[N_TRAIN:])):
        pixels = [p for px, _ in part for p in px]
        labels = [y for _, y in part]
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 0x803, (len(part), 28, 28), pixels)
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(part),), labels)
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main()
