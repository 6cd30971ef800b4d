import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_diff(f, x, h=1e-6):
    """Numerical gradient of scalar f at array x (modified in place and restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """6 objects x 6 trials at 32 px, 4 windows per trial."""
    from vtfn.data import build_dataset
    root = tmp_path_factory.mktemp("tiny")
    return build_dataset(root, n_objects=6, trials_per_object=6, seed=3, img_size=32, window_cap=4)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """200 training windows: 5 objects (2 train, 3 test) x 25 trials x 4 windows, 32 px."""
    from vtfn.data import build_dataset
    root = tmp_path_factory.mktemp("toy")
    return build_dataset(root, n_objects=5, trials_per_object=25, seed=11, img_size=32, window_cap=4)


# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
