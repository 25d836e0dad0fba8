#!/usr/bin/env python3
"""Writes scikit-learn's 8x8 digits as an IDX image file.

Pixel values 0..16 are scaled by 16 and clipped to 0..255, so thresholding at
128 gives a binary image set in the MNIST container format.

usage: make_digits_idx.py OUT [--labels OUT_LABELS]
"""
import argparse
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, array, magic):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--labels")
    args = ap.parse_args()
    digits = load_digits()
    images = np.clip(digits.images * 16, 0, 255).astype(np.uint8)
    write_idx(args.out, images, 0x803)
    if args.labels:
        write_idx(args.labels, digits.target.astype(np.uint8), 0x801)
    print(f"wrote {images.shape[0]} images of {images.shape[1]}x{images.shape[2]} to {args.out}")


if __name__ == "__main__":
    main()
