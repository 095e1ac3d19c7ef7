"""Dataset loading for anomaly detection.

Images are returned as (height, width, pixels) with pixels a flat row-major
list of grayscale floats in [0, 1]. PNG decoding is pure Python (8-bit gray,
gray+alpha, RGB, RGBA; non-interlaced).

Augmentation presets: resize:<size>, hflip:<p>, gauss_noise:<sigma>.

--self-check loads one batch (from artifacts/dataset.csv when present,
synthetic otherwise) and prints its shape.
"""
import argparse
import csv
import os
import random
import struct
import sys
import zlib

ROOT = os.environ.get("AUTOIAD_WORKSPACE", os.getcwd())
REQUIRED = ("image_path", "split", "label")
DEFAULT_SIZE = 64


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def read_png(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("%s: not a PNG file" % path)
    pos = 8
    idat = b""
    width = height = None
    channels = 1
    while pos < len(data):
        length, ctype = struct.unpack(">I4s", data[pos:pos + 8])
        chunk = data[pos + 8:pos + 8 + length]
        pos += 12 + length
        if ctype == b"IHDR":
            width, height, depth, color, _, _, interlace = struct.unpack(">IIBBBBB", chunk)
            if depth != 8 or interlace != 0:
                raise ValueError("%s: only 8-bit non-interlaced PNG supported" % path)
            channels = {0: 1, 2: 3, 4: 2, 6: 4}.get(color)
            if channels is None:
                raise ValueError("%s: unsupported colour type %d" % (path, color))
        elif ctype == b"IDAT":
            idat += chunk
        elif ctype == b"IEND":
            break
    if width is None:
        raise ValueError("%s: missing IHDR" % path)
    raw = zlib.decompress(idat)
    stride = width * channels
    prev = bytearray(stride)
    pixels = []
    off = 0
    for _ in range(height):
        ftype = raw[off]
        line = bytearray(raw[off + 1:off + 1 + stride])
        off += 1 + stride
        for i in range(stride):
            a = line[i - channels] if i >= channels else 0
            b = prev[i]
            c = prev[i - channels] if i >= channels else 0
            if ftype == 1:
                line[i] = (line[i] + a) & 0xFF
            elif ftype == 2:
                line[i] = (line[i] + b) & 0xFF
            elif ftype == 3:
                line[i] = (line[i] + ((a + b) >> 1)) & 0xFF
            elif ftype == 4:
                line[i] = (line[i] + _paeth(a, b, c)) & 0xFF
            elif ftype != 0:
                raise ValueError("%s: bad filter type %d" % (path, ftype))
        if channels <= 2:
            pixels.extend(line[i] / 255.0 for i in range(0, stride, channels))
        else:
            pixels.extend((line[i] + line[i + 1] + line[i + 2]) / 765.0 for i in range(0, stride, channels))
        prev = line
    return (height, width, pixels)


def resize(image, size):
    h, w, px = image
    if (h, w) == (size, size):
        return image
    out = []
    for y in range(size):
        sy = min(h - 1, y * h // size)
        for x in range(size):
            out.append(px[sy * w + min(w - 1, x * w // size)])
    return (size, size, out)


def hflip(image):
    h, w, px = image
    return (h, w, [px[y * w + (w - 1 - x)] for y in range(h) for x in range(w)])


def gauss_noise(image, sigma, rng):
    if sigma == 0:
        return image
    h, w, px = image
    return (h, w, [min(1.0, max(0.0, v + rng.gauss(0.0, sigma))) for v in px])


def parse_preset(spec):
    name, _, arg = spec.partition(":")
    if name == "resize":
        return ("resize", int(arg or DEFAULT_SIZE))
    if name == "hflip":
        return ("hflip", float(arg or 0.5))
    if name == "gauss_noise":
        return ("gauss_noise", float(arg or 0.01))
    raise ValueError("unknown augmentation preset %r" % name)


def apply_presets(image, presets, rng):
    for name, arg in presets:
        if name == "resize":
            image = resize(image, arg)
        elif name == "hflip":
            if rng.random() < arg:
                image = hflip(image)
        elif name == "gauss_noise":
            image = gauss_noise(image, arg, rng)
    return image


def load_rows(csv_path):
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in REQUIRED if c not in (reader.fieldnames or [])]
        if missing:
            raise SystemExit("%s: missing columns %s" % (csv_path, ", ".join(missing)))
        rows = []
        for r in reader:
            r["label"] = int(r["label"])
            rows.append(r)
    return rows


def split_train_val(rows, ratio=0.9, seed=0):
    rows = list(rows)
    random.Random(seed).shuffle(rows)
    cut = max(1, int(round(len(rows) * ratio))) if rows else 0
    return rows[:cut], rows[cut:]


def load_images(rows, augment=(), seed=0, size=DEFAULT_SIZE):
    presets = [("resize", size)] + [parse_preset(a) if isinstance(a, str) else a for a in augment]
    rng = random.Random(seed)
    return [apply_presets(read_png(os.path.join(ROOT, r["image_path"])), presets, rng) for r in rows]


def batches(rows, batch_size, augment=(), seed=0):
    for i in range(0, len(rows), batch_size):
        yield load_images(rows[i:i + batch_size], augment=augment, seed=seed + i)


def self_check(csv_path, augment):
    if os.path.isfile(csv_path):
        rows = [r for r in load_rows(csv_path) if r["split"] == "train"]
        fit, _ = split_train_val(rows)
        batch = next(batches(fit, 4, augment=augment), [])
    else:
        rng = random.Random(0)
        batch = [apply_presets((8, 8, [rng.random() for _ in range(64)]), [("resize", DEFAULT_SIZE)], rng)]
    if not batch:
        raise SystemExit("empty batch")
    h, w, _ = batch[0]
    print("batch shape: (%d, %d, %d)" % (len(batch), h, w))


def main(argv=None):
    ap = argparse.ArgumentParser(description="dataset loader")
    ap.add_argument("--self-check", action="store_true")
    ap.add_argument("--csv", default=os.path.join(ROOT, "artifacts", "dataset.csv"))
    ap.add_argument("--augment", action="append", default=[])
    args = ap.parse_args(argv)
    try:
        presets = [parse_preset(a) for a in args.augment]
    except ValueError as e:
        print(e, file=sys.stderr)
        return 2
    if args.self_check:
        self_check(args.csv, presets)
        return 0
    ap.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())
