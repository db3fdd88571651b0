"""Finite-difference gradient checking shared by the neural and acceptance tests."""

import numpy as np

from covsem import neural
from covsem.neural import NetSpec, Tensor

STATE_DIM, ACTION_DIM, TIME_DIM = 9, 2, 8

# layer layouts of every network the agents build: (input width, output width)
ARCHITECTURES = {
    "noise_net": (STATE_DIM + ACTION_DIM + TIME_DIM, ACTION_DIM),
    "critic": (STATE_DIM + ACTION_DIM, 1),
    "gaussian_policy": (STATE_DIM, 2 * ACTION_DIM),
}


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def check_net(spec: NetSpec, seed: int, batch: int = 8, coords: int | None = None,
              step: float = 1e-5) -> float:
    """Worst relative error between tape and central-difference gradients.

    The loss mixes a squared error with a tanh squash so every layer and
    nonlinearity sees a nonzero, nonconstant upstream gradient.  The numeric
    side uses the plain numpy forward pass, independent of the tape.
    ``coords`` limits the check to a random subset of parameters.
    """
    rng = np.random.default_rng(seed)
    params = neural.init_params(spec, rng)
    x = rng.uniform(-1, 1, size=(batch, spec.layer_sizes[0]))
    y = rng.normal(size=(batch, spec.layer_sizes[-1]))

    def tape_loss(net):
        out = net(Tensor(x))
        return (out - y).square().mean() + out.tanh().sum() * 0.1

    def np_loss(p):
        out = neural.forward(p, x)
        return float(np.mean((out - y) ** 2) + 0.1 * np.tanh(out).sum())

    _, (analytic,) = neural.gradient(tape_loss, params)
    idx = np.arange(params.flat.size) if coords is None else rng.choice(params.flat.size, coords, replace=False)
    numeric = np.empty(idx.size)
    probe = params.copy()
    for j, i in enumerate(idx):
        orig = probe.flat[i]
        probe.flat[i] = orig + step
        up = np_loss(probe)
        probe.flat[i] = orig - step
        down = np_loss(probe)
        probe.flat[i] = orig
        numeric[j] = (up - down) / (2 * step)
    return float(rel_error(analytic[idx], numeric).max())


def architecture_spec(name: str, hidden: tuple[int, ...], activation: str = "silu") -> NetSpec:
    n_in, n_out = ARCHITECTURES[name]
    return NetSpec((n_in, *hidden, n_out), activation)
