import numpy as np
import pytest

from trialtransport.data import StudyDataset


def make_dataset(s, a, y, x=None, labels=(0, 1), design_kind="nested"):
    """Dataset from raw lists; ``a``/``y`` entries for s=0 rows are ignored."""
    s = np.asarray(s)
    n = s.size
    if x is None:
        x = np.arange(n, dtype=float).reshape(n, 1)
    return StudyDataset.from_arrays(s, a, y, x, treatment_labels=labels, design_kind=design_kind)


@pytest.fixture
def five_units():
    # two arm-1 participants, one arm-0 participant, two non-participants
    return make_dataset(
        s=[1, 1, 1, 0, 0],
        a=[1, 1, 0, None, None],
        y=[1.0, 3.0, 5.0, None, None],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20190321)


# acceptance criteria append (label, passed, detail) here; printed at session end
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0][2:])):
        terminalreporter.write_line(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}")
