import numpy as np
import pytest

from showbook.cascade import CascadeConfig, train_cascade
from showbook.dataset import Schema, build_dataset
from showbook.synthgen import GeneratorConfig, generate

STATUS_FOR = {(1, 1): "BookedCompleted", (1, 0): "ShowedNoBook", (0, 0): "NoShow"}


def toy_dataset(columns: dict, kinds: dict, flags=None, show=None, booked=None):
    """Dataset from python lists; ``kinds`` maps name -> 'numeric' | 'categorical'."""
    names = list(columns)
    lines = [f"{n} = {kinds[n]}, predictor" for n in names] + ["status = categorical, raw-booking-status"]
    schema = Schema.from_text("\n".join(lines) + "\n")
    n = len(columns[names[0]])
    if show is None:
        show = [1] * n
    if booked is None:
        booked = [0] * n
    rows = []
    for i in range(n):
        cells = ["" if columns[c][i] is None else str(columns[c][i]) for c in names]
        rows.append(cells + [STATUS_FOR[(int(show[i]), int(booked[i]))]])
    return build_dataset(schema, names + ["status"], rows)


def random_small_dataset(rng: np.random.Generator, n: int):
    """Mixed numeric/categorical rows with a planted signal and a few blanks."""
    x1 = rng.normal(size=n)
    x2 = rng.integers(0, 4, size=n)
    x3 = rng.integers(0, 3, size=n)
    logit = 1.5 * x1 + (x2 == 2) * 1.2 - (x3 == 0) * 0.8
    show = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(int)
    if show.min() == show.max():
        show[0] = 1 - show[0]
    c1 = [None if rng.random() < 0.05 else f"{v:.3f}" for v in x1]
    c2 = [None if rng.random() < 0.05 else "abcd"[v] for v in x2]
    c3 = ["xyz"[v] for v in x3]
    return toy_dataset(
        {"x1": c1, "x2": c2, "x3": c3},
        {"x1": "numeric", "x2": "categorical", "x3": "categorical"},
        show=show,
    )


@pytest.fixture(scope="session")
def small_corpus():
    return generate(GeneratorConfig(seed=5).with_total(20000))


@pytest.fixture(scope="session")
def small_cascade(small_corpus):
    return train_cascade(small_corpus.dataset, CascadeConfig(seed=2))


# one line per acceptance criterion, echoed after the run even when output is captured
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
