import random

import pytest

from svsjoin.datagen import GenSpec, generate
from svsjoin.model import GeoImage


def random_instance(rng: random.Random, n=None, vocab=None):
    """A small clustered dataset with plenty of near-duplicate pairs."""
    n = n if n is not None else rng.randint(50, 500)
    spec = GenSpec(
        n_records=n,
        vocab_size=vocab if vocab is not None else rng.randint(10, 100),
        tokens_per_record=rng.randint(3, 15),
        token_skew=rng.choice([0.0, 0.8, 1.2]),
        n_clusters=rng.randint(1, 6),
        cluster_sigma=rng.choice([20.0, 80.0, 200.0]),
        seed=rng.randrange(2**32),
        near_dup_rate=rng.choice([0.1, 0.3, 0.5]),
    )
    return generate(spec)


@pytest.fixture
def abc():
    return [
        GeoImage(0, 0.0, 0.0, (1, 2, 3)),
        GeoImage(1, 3.0, 4.0, (1, 2, 3, 4)),
        GeoImage(2, 100.0, 0.0, (1,)),
    ]


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
