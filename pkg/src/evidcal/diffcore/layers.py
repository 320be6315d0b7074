"""Dense layers and the finite-difference gradient checker."""

from __future__ import annotations

import numpy as np

from .tape import Tape, Tensor, affine, tanh


class Affine:
    """Dense layer: x @ weight + bias, weights drawn uniform in +-1/sqrt(n_in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = Tensor(np.zeros(n_out))

    def __call__(self, x):
        return affine(x, self.weight, self.bias)

    @property
    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


class MLP:
    """Stack of Affine layers with tanh between them; the last layer is linear."""

    def __init__(self, sizes, rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.layers = [Affine(sizes[i], sizes[i + 1], rng) for i in range(len(sizes) - 1)]

    def __call__(self, x):
        h = x
        for layer in self.layers[:-1]:
            h = tanh(layer(h))
        return self.layers[-1](h)

    @property
    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params]


def check_gradients(loss_fn, params: list[Tensor], step: float = 1e-5) -> float:
    """Compare tape gradients of ``loss_fn()`` against central differences.

    Returns ||analytic - numeric|| / (||analytic|| + 1e-8) over all parameter
    entries stacked into one vector. ``loss_fn`` must close over ``params``
    and return a scalar.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        out = loss_fn()
        tape.backward(out)
    analytic = np.concatenate(
        [(p.grad if p.grad is not None else np.zeros_like(p.data)).ravel() for p in params]
    )
    numeric = np.empty_like(analytic)
    k = 0
    for p in params:
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn().item()
            flat[i] = orig - step
            lo = loss_fn().item()
            flat[i] = orig
            numeric[k] = (hi - lo) / (2.0 * step)
            k += 1
    for p in params:
        p.grad = None
    return float(np.linalg.norm(analytic - numeric) / (np.linalg.norm(analytic) + 1e-8))
