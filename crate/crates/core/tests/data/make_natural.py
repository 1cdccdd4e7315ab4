"""Regenerates the 512x512 grayscale photos in natural/ from sample images
bundled with scikit-image, scikit-learn and matplotlib."""

import os

import matplotlib
import numpy as np
import skimage
import sklearn.datasets
from PIL import Image

SKI = os.path.join(os.path.dirname(skimage.__file__), "data")
SKL = os.path.join(os.path.dirname(sklearn.datasets.__file__), "images")
MPL = os.path.join(os.path.dirname(matplotlib.__file__), "mpl-data", "sample_data")
OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "natural")
SIDE = 512

# name, source file, horizontal crop anchor in [0, 1], extra zoom
SOURCES = [
    ("astronaut", os.path.join(SKI, "astronaut.png"), 0.5, 1.0),
    ("camera", os.path.join(SKI, "camera.png"), 0.5, 1.0),
    ("ihc", os.path.join(SKI, "ihc.png"), 0.5, 1.0),
    ("moon", os.path.join(SKI, "moon.png"), 0.5, 1.0),
    ("retina", os.path.join(SKI, "retina.jpg"), 0.5, 1.0),
    ("motorcycle", os.path.join(SKI, "motorcycle_left.png"), 0.0, 1.0),
    ("coffee", os.path.join(SKI, "coffee.png"), 0.5, 1.0),
    ("rocket", os.path.join(SKI, "rocket.jpg"), 0.5, 1.0),
    ("china", os.path.join(SKL, "china.jpg"), 0.5, 1.0),
    ("hopper", os.path.join(MPL, "grace_hopper.jpg"), 0.5, 1.0),
    ("chelsea", os.path.join(SKI, "chelsea.png"), 0.5, 1.0),
    ("flower", os.path.join(SKL, "flower.jpg"), 0.5, 1.0),
    ("cell", os.path.join(SKI, "cell.png"), 0.5, 1.0),
    ("retina_detail", os.path.join(SKI, "retina.jpg"), 0.5, 2.0),
    ("motorcycle_right", os.path.join(SKI, "motorcycle_right.png"), 1.0, 1.0),
    ("coffee_left", os.path.join(SKI, "coffee.png"), 0.0, 1.4),
    ("china_right", os.path.join(SKL, "china.jpg"), 1.0, 1.3),
    ("flower_left", os.path.join(SKL, "flower.jpg"), 0.0, 1.3),
    ("hopper_face", os.path.join(MPL, "grace_hopper.jpg"), 0.5, 1.6),
    ("astronaut_detail", os.path.join(SKI, "astronaut.png"), 0.3, 1.5),
]


def prepare(path, anchor, zoom):
    img = Image.open(path).convert("RGB")
    w, h = img.size
    scale = SIDE * zoom / min(w, h)
    img = img.resize((max(SIDE, round(w * scale)), max(SIDE, round(h * scale))), Image.LANCZOS)
    w, h = img.size
    x0 = round((w - SIDE) * anchor)
    y0 = (h - SIDE) // 2
    rgb = np.asarray(img.crop((x0, y0, x0 + SIDE, y0 + SIDE)), dtype=np.float64)
    gray = rgb @ np.array([0.299, 0.587, 0.114])
    return Image.fromarray(np.clip(np.round(gray), 0, 255).astype(np.uint8), mode="L")


def main():
    os.makedirs(OUT, exist_ok=True)
    for name, path, anchor, zoom in SOURCES:
        prepare(path, anchor, zoom).save(os.path.join(OUT, name + ".png"), optimize=True)


if __name__ == "__main__":
    main()
