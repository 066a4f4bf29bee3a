"""Layer plumbing on top of the autodiff core: parameter registry, conv,
batch norm, linear, and deterministic initialization."""

from __future__ import annotations

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .grad import Tensor, ops


class Module:
    """Minimal parameter container with named traversal and train/eval mode."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._buffers: Dict[str, np.ndarray] = {}
        self._children: Dict[str, "Module"] = {}
        self.training = True

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self.__dict__.setdefault("_children", {})[name] = value
        elif isinstance(value, Tensor) and getattr(value, "requires_grad", False):
            self.__dict__.setdefault("_params", {})[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def set_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name in self._buffers:
            yield prefix + name, self._buffers[name]
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            state[name] = b
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = []
        for name, p in own.items():
            if name not in state:
                missing.append(name)
                continue
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for '{name}': "
                                 f"{arr.shape} vs {p.data.shape}")
            p.data = arr.copy()
        for name, _ in self.named_buffers():
            if name in state:
                self._assign_buffer(name, np.asarray(state[name]))
        if missing:
            raise ValueError(f"checkpoint missing parameters: {missing}")

    def _assign_buffer(self, dotted: str, value: np.ndarray):
        parts = dotted.split(".")
        mod = self
        for part in parts[:-1]:
            mod = mod._children[part]
        mod.set_buffer(parts[-1], value.astype(mod._buffers[parts[-1]].dtype))

    def astype(self, dtype):
        """Cast all parameters and float buffers in place (for gradcheck)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for mod in self.modules():
            for name, b in list(mod._buffers.items()):
                if np.issubdtype(b.dtype, np.floating):
                    mod.set_buffer(name, b.astype(dtype))
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def parameter(array: np.ndarray, name: str = "") -> Tensor:
    return Tensor(np.asarray(array, dtype=np.float32), requires_grad=True,
                  name=name)


def kaiming_conv(rng: np.random.Generator, kh: int, kw: int,
                 cin: int, cout: int, gain: float = 1.0) -> np.ndarray:
    std = gain * np.sqrt(2.0 / (kh * kw * cin))
    return rng.normal(0.0, std, size=(kh, kw, cin, cout))


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, stride: int = 1,
                 padding: Optional[int] = None, bias: bool = True,
                 rng: Optional[np.random.Generator] = None,
                 zero_init: bool = False):
        super().__init__()
        if padding is None:
            padding = k // 2
        self.stride = stride
        self.padding = padding
        if zero_init:
            w = np.zeros((k, k, cin, cout))
        else:
            w = kaiming_conv(rng, k, k, cin, cout)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias,
                          stride=self.stride, padding=self.padding)


class BatchNorm2d(Module):
    """Per-channel normalization over the spatial axes of an (H, W, C) map.

    Train mode uses the current moments and updates running averages; eval
    mode applies the frozen running statistics.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            out, m, v = ops.batch_norm_train(x, self.gamma, self.beta, self.eps)
            mom = self.momentum
            self.set_buffer("running_mean",
                            ((1 - mom) * self.running_mean + mom * m
                             ).astype(self.running_mean.dtype))
            self.set_buffer("running_var",
                            ((1 - mom) * self.running_var + mom * v
                             ).astype(self.running_var.dtype))
            return out
        return ops.batch_norm_eval(x, self.gamma, self.beta,
                                   self.running_mean, self.running_var,
                                   self.eps)


class Linear(Module):
    def __init__(self, cin: int, cout: int,
                 rng: Optional[np.random.Generator] = None,
                 zero_init: bool = False):
        super().__init__()
        if zero_init:
            w = np.zeros((cin, cout))
        else:
            w = rng.normal(0.0, np.sqrt(1.0 / cin), size=(cin, cout))
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)


class ConvBnRelu(Module):
    def __init__(self, cin, cout, k=3, stride=1, rng=None):
        super().__init__()
        self.conv = Conv2d(cin, cout, k, stride=stride, rng=rng, bias=False)
        self.bn = BatchNorm2d(cout)

    def forward(self, x):
        return ops.relu(self.bn(self.conv(x)))


class ResidualBlock(Module):
    """conv-bn-relu-conv-bn plus a (possibly projected) skip, relu after add."""

    def __init__(self, cin, cout, stride=1, rng=None):
        super().__init__()
        self.conv1 = Conv2d(cin, cout, 3, stride=stride, rng=rng, bias=False)
        self.bn1 = BatchNorm2d(cout)
        self.conv2 = Conv2d(cout, cout, 3, rng=rng, bias=False)
        self.bn2 = BatchNorm2d(cout)
        self.proj = None
        if stride != 1 or cin != cout:
            self.proj = Conv2d(cin, cout, 1, stride=stride, padding=0,
                               rng=rng, bias=False)

    def forward(self, x):
        y = ops.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        skip = self.proj(x) if self.proj is not None else x
        return ops.relu(ops.add(y, skip))
