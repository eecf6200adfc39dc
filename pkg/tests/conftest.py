import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def synthetic_docs():
    from emoclass.synthetic import load_shipped
    return load_shipped()


@pytest.fixture
def corpus_csv(tmp_path, synthetic_docs):
    from emoclass.corpus import write_corpus
    path = tmp_path / "corpus.csv"
    write_corpus(synthetic_docs, path)
    return path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
