import numpy as np
import pytest

from aeshape import network as nw


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(f, x, h=1e-5):
    """Column-by-column central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / scale


def numpy_forward(net, X, start=0, stop=None):
    """Plain-numpy MLP evaluation written independently of the tape."""
    views = net.views()
    stop = len(views) if stop is None else stop
    h = np.array(X, dtype=np.float64)
    for i in range(start, stop):
        W, b = views[i]
        h = h @ W + b
        if i != len(views) - 1:
            if net.arch.activation.value == "tanh":
                h = np.tanh(h)
            elif net.arch.activation.value == "softplus":
                h = np.logaddexp(0.0, h)
    return h


def random_net(rng, hidden=None, input_dim=2, activation="tanh", scale=1.0):
    if hidden is None:
        widths = [int(w) for w in rng.integers(1, 7, size=rng.integers(1, 4))]
        hidden = "-".join(map(str, widths))
    arch = nw.parse_arch(hidden, input_dim, "auto", activation)
    params = scale * rng.normal(size=arch.n_params)
    return nw.Net(arch, params)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
