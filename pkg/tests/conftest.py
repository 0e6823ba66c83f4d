import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from daguard.numcore import init_mlp, make_rng  # noqa: E402
from daguard.synth import SynthSpec, synth_two_domains  # noqa: E402


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_net(rng):
    return init_mlp([4, 5, 3, 3], rng, feature_layer=0)


@pytest.fixture(scope="session")
def synth_pair():
    return synth_two_domains(SynthSpec(n_per_class=40, n_classes=3, dim=6, domain_shift=0.2, noise=0.08, seed=3))


def random_net(seed, max_params=64):
    """A random small MLP (one or two hidden layers) with at most ``max_params`` parameters."""
    r = np.random.default_rng(seed)
    while True:
        dims = [int(r.integers(2, 5)) for _ in range(int(r.integers(3, 5)))]
        n = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
        if n <= max_params:
            break
    model = init_mlp(dims, make_rng(seed), feature_layer=int(r.integers(0, len(dims) - 2)))
    for b in model.biases:
        b += r.normal(0, 0.1, size=b.shape)
    return model


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
