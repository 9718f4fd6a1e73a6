"""Shared helpers for the test suite."""

import numpy as np

from ncdkit.autodiff import Tape, Tensor, backward


def central_difference_gradient(loss_fn, params, h=1e-5):
    """Finite-difference gradients of a scalar loss over tensor params.

    ``loss_fn`` must rebuild the loss from scratch from the current
    parameter data on every call.  Returns one array per parameter,
    computed entry by entry with the symmetric two-point rule.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def tape_gradients(build_loss, params):
    """Reverse-mode gradients of ``build_loss()`` for each parameter."""
    with Tape() as tape:
        loss = build_loss()
    gm = backward(loss, tape)
    return [gm.grad(p) for p in params]


def relative_error(approx, exact):
    """Max elementwise relative error with an absolute floor of 1."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = np.maximum(1.0, np.maximum(np.abs(approx), np.abs(exact)))
    if approx.size == 0:
        return 0.0
    return float(np.max(np.abs(approx - exact) / scale))


def random_parameters(rng, shapes):
    """Gradient-requiring tensors filled with standard normal draws."""
    return [Tensor(rng.normal(size=shape), requires_grad=True) for shape in shapes]
