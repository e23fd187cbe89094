import re

import pytest

from avq.pipeline import cached_features
from avq.synth import SynthSpec, synth_dataset

TINY = SynthSpec(n_sequences=15, seed=5, frame_size=(32, 32), fps=10.0, duration=0.8, sample_rate=8000)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A 15-sequence synthetic dataset: (manifest path, records, features by id)."""
    root = tmp_path_factory.mktemp("tiny")
    manifest, records = synth_dataset(TINY, root)
    return manifest, records, cached_features(records)


def _criterion_order(line):
    num, suffix = re.match(r"criterion\s+(\d+)(\w*)", line).groups()
    return int(num), suffix


def pytest_terminal_summary(terminalreporter):
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            lines += [v for k, v in getattr(rep, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=_criterion_order):
            terminalreporter.write_line(line)
