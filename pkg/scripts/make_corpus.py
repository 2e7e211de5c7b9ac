"""Generate the 200-image noise/blur corpus from the bundled fixtures.

    python3 scripts/make_corpus.py OUT_DIR [--seed 0]
"""

import argparse
import json
from pathlib import Path

from friquee.dataset_io import build_distortion_corpus, decode_image

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    meta = json.loads((FIXTURES / "fixtures.json").read_text())
    bases = {Path(m["file"]).stem: decode_image(FIXTURES / m["file"]) for m in meta}
    print(build_distortion_corpus(bases, args.out_dir, seed=args.seed))


if __name__ == "__main__":
    main()
