from __future__ import annotations

import numpy as np
import pytest

from treefpp.zoo import build_zoo_group


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("TREEFPP_CACHE", str(tmp_path / "cache"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grigorchuk():
    return build_zoo_group("grigorchuk").group


@pytest.fixture(scope="session")
def basilica():
    return build_zoo_group("basilica").group


@pytest.fixture(scope="session")
def ob():
    return build_zoo_group("ob").group


@pytest.fixture(scope="session")
def chebyshev():
    return build_zoo_group("chebyshev2").group


@pytest.fixture(scope="session")
def ggs3():
    return build_zoo_group("ggs:p=3,alpha=1.2").group


@pytest.fixture(scope="session")
def exc3():
    return build_zoo_group("exceptional:d=3").group


@pytest.fixture(scope="session")
def wreath2():
    return build_zoo_group("wreath:sym2").group


@pytest.fixture(scope="session")
def coset3():
    return build_zoo_group("coset:alt3-sym3").group


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
