"""Dense tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a Tensor wraps a numpy array, every
differentiable operation records its parents and a closure that routes the
output gradient back to them, and ``Tensor.backward`` replays the tape in
reverse topological order.  Everything runs on the CPU in float32 (training)
or float64 (verification); identical inputs produce bit-identical outputs.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]

# Global switches.  Finite checks enforce the "no NaN/Inf after any primitive"
# invariant; grad recording can be disabled for pure inference.
_FINITE_CHECKS = True
_GRAD_ENABLED = True


class NonFiniteError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the context (inference fast path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = enabled
    try:
        yield
    finally:
        _FINITE_CHECKS = prev


def _check_finite(data: np.ndarray, op_name: str) -> None:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by '{op_name}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """An n-dimensional array with optional gradient tracking.

    Attributes:
        data: the numpy payload (float32 or float64).
        requires_grad: whether backward() accumulates into ``grad``.
        grad: numpy array of the same shape once populated, else None.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    # While a backward sweep runs, interior-node gradients are held here
    # instead of on the tensors themselves.
    _ACTIVE_GRADS: Optional[dict] = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 dtype=None, name: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    @staticmethod
    def make(data: np.ndarray, parents: Iterable["Tensor"],
             backward: Callable[[np.ndarray], None], op_name: str) -> "Tensor":
        """Wrap an op result, recording the tape edge when grad is enabled."""
        _check_finite(data, op_name)
        parents = tuple(p for p in parents if isinstance(p, Tensor))
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs)
        if needs:
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        """Receive a gradient contribution from a child's backward closure."""
        g = _unbroadcast(np.asarray(g, dtype=self.data.dtype), self.data.shape)
        grads = Tensor._ACTIVE_GRADS
        if grads is not None and self._backward is not None:
            key = id(self)
            held = grads.get(key)
            grads[key] = g if held is None else held + g
        elif self.requires_grad:
            self.grad = np.array(g) if self.grad is None else self.grad + g
        # constants: gradient dead-ends

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """Reverse-mode sweep from this tensor.

        For non-scalar outputs a seed gradient of the same shape is required.
        Gradients land on every reachable tensor with ``requires_grad`` that
        is a graph leaf (weights, inputs).
        """
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        seed = np.asarray(seed, dtype=self.data.dtype)
        if seed.shape != self.data.shape:
            raise ValueError("seed gradient shape mismatch")

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative DFS: long GRU rollouts make deep graphs
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): seed}
        prev_active = Tensor._ACTIVE_GRADS
        Tensor._ACTIVE_GRADS = grads
        try:
            for node in reversed(order):
                g = grads.pop(id(node), None)
                if g is None:
                    continue
                if node._backward is not None:
                    node._backward(g)
                elif node.requires_grad:
                    node.grad = np.array(g) if node.grad is None else node.grad + g
        finally:
            Tensor._ACTIVE_GRADS = prev_active

    def __repr__(self) -> str:
        head = f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}"
        if self.requires_grad:
            head += ", requires_grad=True"
        if self.name:
            head += f", name={self.name!r}"
        return head + ")"


def as_tensor(x: ArrayLike, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def constant(x: ArrayLike, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype))
