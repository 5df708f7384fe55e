import json
import random
import shutil
from pathlib import Path

import pytest

from biorag.corpus import CleanDocument, read_corpus
from biorag.embedding import REF256
from biorag.index import build_index, save_index_file

FIXTURES = Path(__file__).parent / "fixtures"
DEMO = FIXTURES / "demo"
GOLDEN = Path(__file__).parent / "golden"

IMMUNITY_Q = "What are the differences between innate immunity and adaptive immunity?"

WORDS = ("gene protein kinase receptor immune cell tumor virus signal pathway membrane "
         "enzyme mutation variant expression binding transcription antigen lymphocyte "
         "macrophage cytokine apoptosis repair chromatin").split()
LABELS = ["A", "B", "C", "D", "E", "F", "G", "H"]


def random_docs(rng: random.Random, n: int, labels=LABELS) -> list[CleanDocument]:
    docs = []
    for i in range(n):
        title = " ".join(rng.choices(WORDS, k=rng.randint(1, 4)))
        abstract = " ".join(rng.choices(WORDS, k=rng.randint(3, 25)))
        mesh = tuple(sorted(rng.sample(labels, rng.randint(0, 3))))
        docs.append(CleanDocument(f"D{i:04d}", title, abstract, mesh, 2000 + i % 20))
    return docs


def random_query(rng: random.Random) -> str:
    return " ".join(rng.choices(WORDS, k=rng.randint(1, 6)))


def random_filter_terms(rng: random.Random, labels=LABELS + ["Z"]) -> list[str]:
    return rng.sample(labels, rng.randint(0, 3))


@pytest.fixture(scope="session")
def demo_docs():
    return list(read_corpus(DEMO / "corpus.jsonl"))


@pytest.fixture(scope="session")
def demo_index(demo_docs):
    return build_index(demo_docs, REF256)


@pytest.fixture
def demo_dir(tmp_path, demo_index):
    """A writable copy of the demo fixture directory with a built index."""
    out = tmp_path / "demo"
    shutil.copytree(DEMO, out)
    save_index_file(demo_index, out / "corpus.idx")
    return out


def write_script(path: Path, replies) -> Path:
    path.write_text(json.dumps({"replies": list(replies)}), encoding="utf-8")
    return path


# acceptance criteria report: one line per criterion at the end of the run
_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by this test")


def pytest_runtest_logreport(report):
    if report.when not in ("setup", "call"):
        return
    item_label = getattr(report, "criterion_label", None)
    if item_label is None:
        return
    prev = _CRITERIA.get(report.nodeid)
    if report.failed or (report.when == "call" and prev is None):
        _CRITERIA[report.nodeid] = (item_label, "FAIL" if report.failed else "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion_label = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in sorted(_CRITERIA.values(), key=lambda v: int(v[0].split()[0].lstrip("AC"))):
        terminalreporter.write_line(f"{status}  {label}")
