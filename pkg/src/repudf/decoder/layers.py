"""Small parameterised building blocks on top of the tape engine."""
from __future__ import annotations

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.tensor import Tensor, parameter


class Module:
    """Parameter container; submodules and parameters are discovered from attributes."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.is_param:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True,
                 init_scale: float = 1.0):
        bound = init_scale / np.sqrt(fan_in)
        self.weight = parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        self.bias = parameter(rng.uniform(-bound, bound, size=fan_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)


class MLP2(Module):
    """Linear -> ReLU -> Linear."""

    def __init__(self, fan_in: int, hidden: int, fan_out: int, rng: np.random.Generator):
        self.fc0 = Linear(fan_in, hidden, rng)
        self.fc1 = Linear(hidden, fan_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc1(T.relu(self.fc0(x)))


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = T.expand(T.mean(x, axis=-1, keepdims=True), x.shape)
        xc = T.sub(x, mu)
        var = T.mean(T.mul(xc, xc), axis=-1, keepdims=True)
        inv = T.expand(T.power(T.shift(var, self.eps), -0.5), x.shape)
        return T.add(T.mul(T.mul(xc, inv), self.gain), self.bias)


class SelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        n, d = x.shape
        h = self.heads
        dh = d // h
        qkv = T.transpose(T.reshape(self.qkv(x), (n, 3, h, dh)), (1, 2, 0, 3))  # 3, h, n, dh
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = T.softmax(T.scale(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dh)), axis=-1)
        y = T.reshape(T.transpose(T.matmul(att, v), (1, 0, 2)), (n, d))
        return self.proj(y)


class TransformerLayer(Module):
    """Pre-norm encoder layer: ``x + attn(ln(x))`` then ``x + mlp(ln(x))``."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, mlp_ratio: int = 2):
        self.ln1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = MLP2(dim, mlp_ratio * dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = T.add(x, self.attn(self.ln1(x)))
        return T.add(x, self.mlp(self.ln2(x)))
