import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402
import oracles  # noqa: E402
from fuzzydid import Dataset, build_cells  # noqa: E402

DATA = Path(__file__).parent / "data"


def dataset_from(rows) -> Dataset:
    arr = np.array(rows, dtype=float)
    return Dataset(arr[:, 0], arr[:, 1].astype(int), arr[:, 2].astype(int), arr[:, 3].astype(int))


def random_rows(rng, n=60, sharp=False, levels=(0, 1), ymax=20):
    """Random two-group data with every (d, g, t) cell populated."""
    while True:
        g = rng.integers(0, 2, n)
        t = rng.integers(0, 2, n)
        d = g * t if sharp else rng.choice(levels, n)
        y = rng.integers(0, ymax + 1, n).astype(float) + rng.normal(0, 0.01, n).round(3)
        rows = list(zip(y.tolist(), d.tolist(), g.tolist(), t.tolist()))
        ds = dataset_from(rows)
        ct = build_cells(ds)
        if sharp:
            cells = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 1, 1)]
        else:
            cells = [(dd, gg, tt) for dd in levels for gg in (0, 1) for tt in (0, 1)]
        if not all(ct.has_cell(*c) for c in cells):
            continue
        gap = ct.mean_d(1, 1) - ct.mean_d(1, 0)
        did_d = gap - (ct.mean_d(0, 1) - ct.mean_d(0, 0))
        if abs(gap) > 0.05 and abs(did_d) > 0.05:
            return rows, ds, ct


@pytest.fixture(scope="session")
def toy_rows():
    return list(oracles.TOY16)


@pytest.fixture(scope="session")
def toy_ds(toy_rows):
    return dataset_from(toy_rows)


@pytest.fixture(scope="session")
def toy(toy_ds):
    return build_cells(toy_ds)


@pytest.fixture(scope="session")
def unstable_rows():
    return oracles.unstable_toy()


@pytest.fixture(scope="session")
def unstable_ds(unstable_rows):
    return dataset_from(unstable_rows)


@pytest.fixture(scope="session")
def unstable(unstable_ds):
    return build_cells(unstable_ds)


def pytest_terminal_summary(terminalreporter):
    results = acceptance_log.RESULTS
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        status, title, detail = results[k]
        terminalreporter.write_line(f"{k:>2}. {status:<4}  {title}  {detail}".rstrip())
