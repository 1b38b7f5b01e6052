from __future__ import annotations

import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from geofm_bench.synthetic import SyntheticSpec, make_synthetic_corpus  # noqa: E402

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """32x32 tiles, 12/4/4 split: enough for plumbing tests that train for an epoch or two."""
    root = tmp_path_factory.mktemp("tiny") / "tiny"
    return make_synthetic_corpus(root, {"train": 12, "val": 4, "test": 4}, seed=7,
                                 spec=SyntheticSpec(size=32, blob_radius=(0.15, 0.3)), corpus_id="tiny")


@pytest.fixture(scope="session")
def shifted_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("shifted") / "shifted"
    spec = SyntheticSpec(size=32, blob_radius=(0.15, 0.3), domain_shift=0.5)
    return make_synthetic_corpus(root, {"train": 4, "val": 2, "test": 4, "generalizability": 4}, seed=11,
                                 spec=spec, corpus_id="shifted")


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(name: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
