import json
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from friquee.dataset_io import decode_image

FIXTURE_DIR = Path(__file__).parent / "fixtures"


@lru_cache(maxsize=None)
def fixture_meta():
    return tuple(json.loads((FIXTURE_DIR / "fixtures.json").read_text()))


@lru_cache(maxsize=None)
def load_fixture(name: str) -> np.ndarray:
    img = decode_image(FIXTURE_DIR / name)
    img.setflags(write=False)
    return img


def pristine_names():
    return [m["file"] for m in fixture_meta() if m["pristine"]]


def all_names():
    return [m["file"] for m in fixture_meta()]


@pytest.fixture(scope="session")
def pristine_images():
    return {n: load_fixture(n) for n in pristine_names()}


@pytest.fixture(scope="session")
def astronaut():
    return load_fixture("astronaut_0_0.png")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


class Corpus:
    def __init__(self, root: Path):
        start = time.perf_counter()
        from friquee import cli
        from friquee.dataset_io import build_distortion_corpus, load_manifest, write_manifest

        bases = {Path(n).stem: load_fixture(n) for n in all_names()}
        self.manifest = build_distortion_corpus(bases, root / "images", seed=0)
        self.cache = root / "corpus.fqch"
        assert cli.main(["extract", "--manifest", str(self.manifest), "--cache", str(self.cache)]) == 0
        rows = load_manifest(self.manifest)
        self.noise_manifest = root / "images" / "noise.csv"
        write_manifest([r for r in rows if "_noise" in r.path.name], self.noise_manifest)
        self.rows = rows
        self.build_seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The 200-image noise/blur corpus with every feature vector cached."""
    return Corpus(tmp_path_factory.mktemp("corpus"))


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        number, title = marker.args
        _ACCEPTANCE[number] = (status, title, getattr(item, "acceptance_note", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, note = _ACCEPTANCE[number]
        line = f"criterion {number}: {status:4s} {title}"
        terminalreporter.write_line(line + (f" ({note})" if note else ""))
