import numpy as np
import pytest

from kpgan import corpus as cp
from kpgan import synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def copy_corpus():
    """10 copy-task documents with a vocabulary that leaves the rare words OOV."""
    samples = synthetic.copy_task(10, np.random.default_rng(3))
    vocab = cp.build_vocab(samples, 17)
    return samples, vocab, cp.encode_corpus(samples, vocab)


# ------------------------------------------------------------ acceptance log

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.failed:
        _ACCEPTANCE[props["criterion"]] = (report.passed, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")
