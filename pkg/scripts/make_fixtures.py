"""Crop 256x256 base fixtures from the photographs bundled with scikit-image.

Writes PNGs plus an index (fixtures.json) into tests/fixtures/. The index
marks which crops serve as pristine references.
"""

import json
from pathlib import Path

import numpy as np
import skimage.data
from PIL import Image

SIZE = 256
OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

# (source, row, col, pristine)
CROPS = [
    ("astronaut", 0, 0, True),
    ("astronaut", 0, 256, True),
    ("astronaut", 256, 0, True),
    ("astronaut", 256, 256, False),
    ("chelsea", 0, 0, True),
    ("chelsea", 44, 195, False),
    ("coffee", 0, 0, True),
    ("coffee", 0, 256, True),
    ("coffee", 144, 344, False),
    ("coffee", 144, 128, False),
    ("rocket", 0, 0, False),
    ("rocket", 0, 256, False),
    ("rocket", 171, 384, False),
    ("immunohistochemistry", 0, 0, False),
    ("immunohistochemistry", 256, 256, False),
    ("retina", 256, 256, False),
    ("retina", 512, 512, False),
    ("retina", 768, 768, False),
    ("hubble_deep_field", 0, 0, False),
    ("hubble_deep_field", 512, 512, False),
]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    index = []
    for source, r, c, pristine in CROPS:
        img = np.asarray(getattr(skimage.data, source)())[..., :3]
        crop = img[r : r + SIZE, c : c + SIZE]
        assert crop.shape == (SIZE, SIZE, 3), (source, crop.shape)
        name = f"{source}_{r}_{c}.png"
        Image.fromarray(np.ascontiguousarray(crop).astype(np.uint8)).save(OUT / name)
        index.append({"file": name, "source": source, "pristine": pristine})
    (OUT / "fixtures.json").write_text(json.dumps(index, indent=2) + "\n")
    print(f"wrote {len(index)} fixtures to {OUT}")


if __name__ == "__main__":
    main()
