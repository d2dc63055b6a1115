import numpy as np
import pytest

from raea import pipeline
from raea.synth import SynthConfig, generate_aligned_pair, split_seeds


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_pair():
    """10 entities, a handful of relations; used for gradient and shape checks."""
    p = generate_aligned_pair(SynthConfig(n_entities=10, n_relations=3, rel_density=2,
                                          attr_per_entity=2, n_predicates=4, numeric_frac=0.5,
                                          rng_seed=1))
    return pipeline.Bundle(p.kg1, p.kg2, split_seeds(p.gold, (0.5, 0.0), 0))


ACCEPTANCE_LINES = []


def report(number, passed, detail):
    """Record one acceptance criterion outcome; printed again in the terminal summary."""
    line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[-1])):
            terminalreporter.write_line(line)
