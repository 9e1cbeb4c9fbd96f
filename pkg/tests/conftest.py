import numpy as np
import pytest

from dfgnn.graph import build_operators, from_edges


def random_graph(n, p, rng):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return from_edges(n, np.stack([iu[keep], ju[keep]], axis=1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def edge2_ops():
    return build_operators(from_edges(2, [(0, 1)]))


@pytest.fixture
def path3():
    return from_edges(3, [(0, 1), (1, 2)])


# acceptance summary lines, printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool | None, detail: str) -> None:
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{status} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
