"""Named trainable parameters with optimizer state and seeded initialization.

Randomness is fully stateless: every draw comes from a fresh generator keyed
by ``(seed, *path)`` where path components are strings (hashed with a stable
digest, never Python's per-process ``hash``) or integers.  The same key always
yields the same stream, independent of call order, which is what makes
training resumable bit-exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import ContractViolation
from .tensor import Tensor

# Probability mass of the standard normal below +/-2, used to sample a
# truncated normal by inverse-CDF.
_PHI_LO = float(ndtr(-2.0))
_PHI_HI = float(ndtr(2.0))


def _digest(text):
    return int.from_bytes(hashlib.blake2s(text.encode("utf-8"), digest_size=8).digest(), "little")


def rng_for(seed, *path):
    """A deterministic generator for the substream named by `path`."""
    entries = [int(seed)]
    for part in path:
        if isinstance(part, str):
            entries.append(_digest(part))
        else:
            entries.append(int(part))
    return np.random.default_rng(np.random.SeedSequence(entries))


def trunc_normal(rng, shape, std):
    """Normal(0, std) truncated to +/-2 std, sampled by inverse CDF."""
    u = rng.uniform(_PHI_LO, _PHI_HI, size=shape)
    return ndtri(u) * std


def fanin_normal(rng, shape, fan_in):
    """Truncated normal scaled by 1/sqrt(fan_in) — weight matrices."""
    if fan_in <= 0:
        raise ContractViolation(f"fanin_normal: fan_in must be positive, got {fan_in}")
    return trunc_normal(rng, shape, 1.0 / np.sqrt(float(fan_in)))


def small_normal(rng, shape, std=0.02):
    """Plain normal with a small fixed scale — biases, tokens, positions."""
    return rng.normal(0.0, std, size=shape)


class ParamStore:
    """Uniquely named parameters, each with a same-shape momentum buffer."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ContractViolation(f"ParamStore: unsupported dtype {dtype}")
        self._params: dict[str, Tensor] = {}
        self.momentum: dict[str, np.ndarray] = {}
        self.step = 0
        self.iter_total = 0

    def add(self, name, values):
        if name in self._params:
            raise ContractViolation(f"duplicate parameter name '{name}'")
        arr = np.array(values, dtype=self.dtype)  # always copy: no aliasing
        self._params[name] = Tensor(arr, requires_grad=True, name=name)
        self.momentum[name] = np.zeros_like(arr)
        return self._params[name]

    def __getitem__(self, name) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ContractViolation(f"unknown parameter '{name}'") from None

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(name, self._params[name]) for name in self.names()]

    def zero_grads(self):
        for p in self._params.values():
            p.grad = None

    def astype(self, dtype):
        """A deep copy of values, momentum, and counters in another precision."""
        out = ParamStore(dtype)
        for name in self.names():
            out.add(name, self._params[name].data)
            out.momentum[name] = self.momentum[name].astype(dtype).copy()
        out.step = self.step
        out.iter_total = self.iter_total
        return out

    def copy(self):
        return self.astype(self.dtype)

    def equals(self, other):
        """Bit-exact equality of names, values, momentum, and counters."""
        if self.names() != other.names():
            return False
        if (self.step, self.iter_total, self.dtype) != (other.step, other.iter_total, other.dtype):
            return False
        for name in self.names():
            if not np.array_equal(self._params[name].data, other._params[name].data):
                return False
            if not np.array_equal(self.momentum[name], other.momentum[name]):
                return False
        return True
