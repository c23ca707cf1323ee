"""Nilpotent multi-dual numbers carrying exact mixed first-order derivatives.

A MultiDual is a truncated polynomial over square-free monomials in a fixed
set of formal variables: any product in which a variable appears twice is
dropped.  Propagating such numbers through an ordinary arithmetic expression
therefore computes, exactly and in one pass, every mixed first-order partial
derivative of the expression with respect to the seeded variables.
"""

from __future__ import annotations

import math

import numpy as np

MAX_VARIABLES = 24

__all__ = ["MultiDual", "MAX_VARIABLES"]


class MultiDual:
    """Square-free truncated polynomial; monomials are variable-index bitmasks."""

    __slots__ = ("nvars", "coeffs")

    def __init__(self, nvars: int, coeffs: dict[int, complex]):
        if not 0 <= nvars <= MAX_VARIABLES:
            raise ValueError(f"variable count must be in [0, {MAX_VARIABLES}]")
        self.nvars = nvars
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value, nvars: int) -> "MultiDual":
        return cls(nvars, {0: value})

    @classmethod
    def variable(cls, index: int, nvars: int, value=0.0) -> "MultiDual":
        """value + eps_index; the usual seed for differentiation at ``value``."""
        if not 0 <= index < nvars:
            raise ValueError("variable index out of range")
        return cls(nvars, {0: value, 1 << index: 1.0})

    @property
    def standard(self):
        return self.coeffs.get(0, 0.0)

    def coefficient(self, mask: int):
        return self.coeffs.get(mask, 0.0)

    def _coerce(self, other) -> "MultiDual":
        if isinstance(other, MultiDual):
            if other.nvars != self.nvars:
                raise ValueError("mixing duals with different variable counts")
            return other
        return MultiDual(self.nvars, {0: other})

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out[k] + v if k in out else v
        return MultiDual(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return MultiDual(self.nvars, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        if not isinstance(other, MultiDual):
            return MultiDual(self.nvars, {k: v * other for k, v in self.coeffs.items()})
        if other.nvars != self.nvars:
            raise ValueError("mixing duals with different variable counts")
        a, b = self.coeffs, other.coeffs
        if len(b) < len(a):
            a, b = b, a
        out: dict[int, complex] = {}
        for ka, va in a.items():
            for kb, vb in b.items():
                if ka & kb:
                    continue  # repeated variable: nilpotent, term vanishes
                k = ka | kb
                prod = va * vb
                out[k] = out[k] + prod if k in out else prod
        return MultiDual(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = MultiDual.constant(1.0, self.nvars)
        for _ in range(k):
            out = out * self
        return out

    def exp(self) -> "MultiDual":
        """exp(a0 + n) = exp(a0) * sum n^j / j!; the nilpotent series terminates."""
        a0 = self.coeffs.get(0, 0.0)
        nil = MultiDual(self.nvars, {k: v for k, v in self.coeffs.items() if k != 0})
        acc = MultiDual.constant(1.0, self.nvars)
        term = MultiDual.constant(1.0, self.nvars)
        for j in range(1, self.nvars + 1):
            term = term * nil
            if not term.coeffs:
                break
            acc = acc + MultiDual(self.nvars, {k: v / math.factorial(j) for k, v in term.coeffs.items()})
        scale = np.exp(a0)
        return MultiDual(self.nvars, {k: scale * v for k, v in acc.coeffs.items()})

    def __repr__(self):
        terms = ", ".join(f"{k:b}:{v}" for k, v in sorted(self.coeffs.items()))
        return f"MultiDual({self.nvars}, {{{terms}}})"
