import numpy as np
import pytest

ACCEPTANCE_LINES = []


def central_diff(f, params, h=1e-6):
    """Central-difference gradient of scalar ``f()`` w.r.t. each array in ``params``.

    Arrays are perturbed in place and restored.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp = f()
            p[i] = old - h
            fm = f()
            p[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def rel_error(analytic, numeric):
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_instance(rng, n, zero_cost_frac=0.0):
    """Symmetric kernel with entries in [0, 1], unit diagonal, and random costs."""
    a = rng.uniform(0.0, 1.0, size=(n, n))
    sim = np.triu(a) + np.triu(a, 1).T
    np.fill_diagonal(sim, 1.0)
    costs = rng.exponential(1.0, size=n)
    costs[rng.random(n) < zero_cost_frac] = 0.0
    return sim, costs
