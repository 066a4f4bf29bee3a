"""Finite-difference verification of reverse-mode gradients.

The harness reduces an op's output to a scalar through a fixed random
projection, computes analytic input gradients via backward(), and compares
them against central differences in double precision.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def _scalarize(out, projection: np.ndarray) -> Tensor:
    flat = out.reshape((out.size,)) if out.ndim != 1 else out
    return (flat * projection).sum()


def finite_difference_check(op: Callable, inputs: Sequence[np.ndarray],
                            epsilon: float = 1e-5,
                            seed: int = 0) -> float:
    """Return the worst relative error between analytic and numeric gradients.

    ``op`` maps Tensors to a Tensor (or a (Tensor, mask) pair, in which case
    the mask is ignored).  Inputs are given as float64 arrays; every element
    of every input is perturbed by +/- epsilon.
    """
    rng = np.random.default_rng(seed)
    # contiguous copies: perturbation happens through a flat view
    tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True)
               for x in inputs]

    def run(ts):
        result = op(*ts)
        if isinstance(result, tuple):
            result = result[0]
        return result

    out = run(tensors)
    projection = rng.standard_normal(out.size)
    loss = _scalarize(out, projection)
    loss.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    worst = 0.0
    for which, base in enumerate(tensors):
        flat = base.data.reshape(-1)
        num = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            plus = _scalarize(run(tensors), projection).item()
            flat[j] = orig - epsilon
            minus = _scalarize(run(tensors), projection).item()
            flat[j] = orig
            num[j] = (plus - minus) / (2 * epsilon)
        ana = analytic[which].reshape(-1)
        denom = np.maximum(np.abs(ana) + np.abs(num), 1e-6)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst


def loss_gradient_check(build_loss: Callable[[], Tensor],
                        tensors: dict,
                        epsilon: float = 1e-5,
                        max_elements: int = 48,
                        seed: int = 0) -> float:
    """Check analytic gradients of a scalar loss w.r.t. named tensors.

    ``build_loss`` re-runs the full forward pass and returns a scalar; the
    tensors (weights or inputs, float64) are perturbed in place.  At most
    ``max_elements`` entries per tensor are probed, chosen deterministically,
    so composite paths stay fast.  Returns the worst relative error.
    """
    rng = np.random.default_rng(seed)
    for t in tensors.values():
        t.data = np.ascontiguousarray(t.data)  # perturbed through a flat view
        t.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = {}
    for name, t in tensors.items():
        if t.grad is None:
            analytic[name] = np.zeros_like(t.data)
        else:
            analytic[name] = t.grad.copy()

    worst = 0.0
    for name, t in tensors.items():
        flat = t.data.reshape(-1)
        n = flat.size
        picks = np.arange(n) if n <= max_elements else \
            rng.choice(n, size=max_elements, replace=False)
        for j in picks:
            orig = flat[j]
            flat[j] = orig + epsilon
            plus = build_loss().item()
            flat[j] = orig - epsilon
            minus = build_loss().item()
            flat[j] = orig
            num = (plus - minus) / (2 * epsilon)
            ana = analytic[name].reshape(-1)[j]
            rel = abs(ana - num) / max(abs(ana) + abs(num), 1e-6)
            worst = max(worst, rel)
    return worst
