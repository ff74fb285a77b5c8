#!/usr/bin/env python3
"""Regenerates the bundled sample triple in data/samples.

The images are synthetic and fully determined by this script: a striped,
shaded "object" as the source, a two-tone gradient scene as the target, and
an elliptical mask placed over the object.
"""
import json
from pathlib import Path

import numpy as np
from PIL import Image

SIZE = 96
OUT = Path(__file__).resolve().parent.parent / "data" / "samples"


def source(yy, xx):
    r = np.hypot(yy - 44, xx - 50) / SIZE
    stripes = 0.5 + 0.5 * np.sin(xx * 0.45 + yy * 0.15)
    red = np.clip(0.85 - 0.9 * r + 0.1 * stripes, 0, 1)
    green = np.clip(0.35 + 0.3 * stripes - 0.4 * r, 0, 1)
    blue = np.clip(0.15 + 0.25 * (yy / SIZE), 0, 1)
    return np.stack([red, green, blue], axis=-1)


def target(yy, xx):
    sky = yy < 0.55 * SIZE + 6 * np.sin(xx / 11.0)
    red = np.where(sky, 0.45 + 0.3 * yy / SIZE, 0.30 + 0.1 * xx / SIZE)
    green = np.where(sky, 0.65 + 0.2 * yy / SIZE, 0.55 - 0.2 * yy / SIZE)
    blue = np.where(sky, 0.95 - 0.2 * yy / SIZE, 0.25 + 0.05 * np.cos(xx / 5.0))
    return np.stack([red, green, blue], axis=-1)


def mask(yy, xx):
    return ((yy - 46) / 22.0) ** 2 + ((xx - 48) / 28.0) ** 2 <= 1.0


def to_u8(a):
    return np.floor(np.clip(a, 0, 1) * 255 + 0.5).astype(np.uint8)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    Image.fromarray(to_u8(source(yy, xx)), "RGB").save(OUT / "source.png")
    Image.fromarray(to_u8(target(yy, xx)), "RGB").save(OUT / "target.png")
    Image.fromarray(mask(yy, xx).astype(np.uint8) * 255, "L").save(OUT / "mask.png")
    entry = {
        "id": "ellipse",
        "source": "source.png",
        "mask": "mask.png",
        "target": "target.png",
        "steps": [
            "compose",
            {"blend": {"mode": "variational"}},
            {"refine": {"boundary": "ground_truth_edge"}},
            {"attack": {"kind": "jpeg", "quality": 70}},
        ],
    }
    (OUT / "manifest.jsonl").write_text(json.dumps(entry) + "\n")


if __name__ == "__main__":
    main()
