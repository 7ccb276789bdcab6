"""Regenerate the 128x128 test crops in tests/data from scikit-image samples."""

from pathlib import Path

import skimage.data as data
from PIL import Image

CROPS = {
    "astronaut": (data.astronaut, (30, 170)),
    "coffee": (data.coffee, (100, 200)),
    "chelsea": (data.chelsea, (80, 150)),
}
SIZE = 128


def main(out=Path(__file__).resolve().parent.parent / "tests" / "data"):
    out.mkdir(parents=True, exist_ok=True)
    for name, (load, (i, j)) in CROPS.items():
        Image.fromarray(load()[i : i + SIZE, j : j + SIZE]).save(out / f"{name}.png")
        print(out / f"{name}.png")


if __name__ == "__main__":
    main()
