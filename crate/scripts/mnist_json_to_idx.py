#!/usr/bin/env python3
"""Convert per-digit JSON pixel dumps (`{"data": [...]}` with 784 values in
[0, 1] per image) into an IDX image/label pair readable by `kind = "mnist"`."""

import argparse
import json
import struct
from pathlib import Path

PIXELS = 28 * 28


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("src", type=Path, help="directory holding 0.json .. 9.json")
    ap.add_argument("dst", type=Path, help="output directory")
    ap.add_argument("--digits", default="0123456789")
    args = ap.parse_args()

    images, labels = bytearray(), bytearray()
    for d in args.digits:
        values = json.loads((args.src / f"{d}.json").read_text())["data"]
        if len(values) % PIXELS:
            raise SystemExit(f"{d}.json: {len(values)} values is not a multiple of {PIXELS}")
        images.extend(min(255, max(0, round(v * 255))) for v in values)
        labels.extend([int(d)] * (len(values) // PIXELS))

    n = len(labels)
    args.dst.mkdir(parents=True, exist_ok=True)
    (args.dst / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + images)
    (args.dst / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} images to {args.dst}")


if __name__ == "__main__":
    main()
