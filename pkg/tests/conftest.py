import numpy as np
import pytest
import torch

from rehab_supcon.data import CORRECT, INCORRECT, Dataset, LabeledSample, SkeletonGraph, SkeletonSequence
from rehab_supcon.synthetic import SYNTHETIC_GRAPH, make_synthetic_dataset

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic():
    return make_synthetic_dataset(n_per_type=12, length=16, seed=3)


def make_dataset(n_per_class=(20, 20), types=("a",), T=10, J=3, seed=0):
    rng = np.random.default_rng(seed)
    graph = SkeletonGraph(J, tuple((i, i + 1) for i in range(J - 1)))
    samples = []
    for c in types:
        for z, n in zip((CORRECT, INCORRECT), n_per_class):
            for k in range(n):
                samples.append(
                    LabeledSample(
                        SkeletonSequence(rng.normal(size=(T, J, 3))),
                        c,
                        z,
                        subject_id=f"s{k % 4}",
                        sample_id=f"{c}_{z == CORRECT}_{k}",
                    )
                )
    return Dataset(graph, tuple(samples), "toy")


# one PASS/FAIL line per acceptance criterion, shown after the run
ACCEPTANCE_RESULTS: dict = {}


def record_acceptance(criterion: int, passed, detail: str):
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    line = f"criterion {criterion:2d}: {status}  {detail}"
    ACCEPTANCE_RESULTS[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
