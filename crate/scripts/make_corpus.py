"""Builds the small natural-image test corpus under crates/core/tests/data.

Sources are the freely licensed sample photographs shipped with scikit-image.
Each source is box-downscaled by 2 and cut into 96x96 RGB tiles.
"""
import os
import skimage
from PIL import Image

SRC = os.path.join(os.path.dirname(skimage.__file__), "data")
OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "data")
TILE = 96

TRAIN = ["astronaut.png", "coffee.png", "camera.png", "brick.png",
         "grass.png", "coins.png", "moon.png", "rocket.jpg"]
HELDOUT = ["chelsea.png", "gravel.png"]


def tiles(name, count):
    im = Image.open(os.path.join(SRC, name)).convert("RGB")
    im = im.resize((im.width // 2, im.height // 2), Image.BOX)
    w, h = im.size
    xs = [0, (w - TILE) // 2, w - TILE]
    ys = [(h - TILE) // 3, (h - TILE) // 2, 2 * (h - TILE) // 3]
    for k in range(count):
        x, y = xs[k % 3], ys[k % 3]
        yield im.crop((x, y, x + TILE, y + TILE))


def emit(names, sub, per_source):
    d = os.path.join(OUT, sub)
    os.makedirs(d, exist_ok=True)
    for name in names:
        stem = os.path.splitext(name)[0]
        for k, t in enumerate(tiles(name, per_source)):
            t.save(os.path.join(d, f"{stem}_{k}.png"))


emit(TRAIN, "train", 3)
emit(HELDOUT, "heldout", 3)
