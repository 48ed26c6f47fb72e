#!/usr/bin/env python3
"""JPEG2000 command-line codec speaking raw frames on stdin/stdout.

encode --rate N : frame in, .jp2 bytes out (N = target compression ratio,
                  0 = reversible/lossless)
decode          : .jp2 bytes in, frame out
"""
import argparse
import io
import struct
import sys

import numpy as np
from PIL import Image

HEADER = struct.Struct("<4sHHB")


def read_frame(blob):
    magic, w, h, depth = HEADER.unpack(blob[:HEADER.size])
    assert magic == b"MRF1", magic
    dtype = {8: "<u1", 16: "<u2", 32: "<f4"}[depth]
    flat = np.frombuffer(blob[HEADER.size:], dtype=dtype)
    return flat.reshape((w, h), order="F"), depth


def write_frame(arr, depth):
    dtype = {8: "<u1", 16: "<u2", 32: "<f4"}[depth]
    body = np.ascontiguousarray(arr.astype(dtype).ravel(order="F")).tobytes()
    return HEADER.pack(b"MRF1", arr.shape[0], arr.shape[1], depth) + body


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("mode", choices=["encode", "decode"])
    parser.add_argument("--rate", type=float, default=0.0)
    args = parser.parse_args()
    blob = sys.stdin.buffer.read()

    if args.mode == "encode":
        arr, depth = read_frame(blob)
        if depth == 32:
            print("float frames unsupported", file=sys.stderr)
            return 2
        pil = arr.T  # PIL arrays are (rows, cols) = (y, x)
        img = Image.fromarray(pil, mode="L" if depth == 8 else "I;16")
        buf = io.BytesIO()
        if args.rate > 0:
            img.save(buf, format="JPEG2000", irreversible=True,
                     quality_mode="rates", quality_layers=[args.rate])
        else:
            img.save(buf, format="JPEG2000", irreversible=False)
        out = buf.getvalue() + struct.pack("<B", depth)  # remember depth
        sys.stdout.buffer.write(out)
        return 0

    depth = blob[-1]
    img = Image.open(io.BytesIO(blob[:-1]))
    arr = np.asarray(img)
    if arr.dtype == np.int32:  # Pillow decodes 16-bit jp2 to I;32
        arr = np.clip(arr, 0, 65535).astype(np.uint16)
    sys.stdout.buffer.write(write_frame(arr.T, depth))
    return 0


if __name__ == "__main__":
    sys.exit(main())
