import pytest

from invmihnet.sample_data import write_sample_corpus


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """16 natural-image crops of 96x96."""
    d = tmp_path_factory.mktemp("corpus")
    write_sample_corpus(d, count=16, size=96, seed=0)
    return d


@pytest.fixture(scope="session")
def eval_dir(tmp_path_factory):
    """Ten 64x64 crops: two (cover + 4 secrets) sets."""
    d = tmp_path_factory.mktemp("evalset")
    write_sample_corpus(d, count=10, size=64, seed=5)
    return d


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[cid][1])
