#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the 5000-sample CSV that
ships inside the mlxtend wheel (500 images per digit).

Per digit, the first 400 images go to the training files and the remaining
100 to the test files, giving 4000 / 1000 samples.

    python3 tools/make_mnist_subset.py data/mnist-5k
"""
import argparse
import gzip
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN_PER_CLASS = 400


def fetch_rows():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                        "-q", "-d", tmp, "mlxtend==0.24.0"], check=True)
        wheel = next(pathlib.Path(tmp).glob("mlxtend-*.whl"))
        text = gzip.decompress(zipfile.ZipFile(wheel).read(CSV_MEMBER)).decode()
    rows = []
    for line in text.splitlines():
        fields = [int(float(v)) for v in line.split(",")]
        rows.append((bytes(fields[:-1]), fields[-1]))
    return rows


def write_idx(out, stem, rows):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(pixels)
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir")
    args = parser.parse_args()
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    seen = {}
    train, test = [], []
    for pixels, label in fetch_rows():
        count = seen.get(label, 0)
        (train if count < TRAIN_PER_CLASS else test).append((pixels, label))
        seen[label] = count + 1
    write_idx(out, "train", train)
    write_idx(out, "t10k", test)
    print(f"wrote {len(train)} training and {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
