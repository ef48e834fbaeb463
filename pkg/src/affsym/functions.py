"""Univariate functions with closed-form derivatives and separable maps built from them.

A separable map sends ``x in R^d`` to ``R^m``; each output component is a sum
of terms ``c * g_1(x_1) * ... * g_d(x_d)``. Every partial derivative is then a
sum of products of univariate derivatives, which gives exact jets of any order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Univariate",
    "Const",
    "Power",
    "Exp",
    "Sin",
    "Cos",
    "Cosh",
    "Sinh",
    "LinComb",
    "CURVE_BASIS",
    "curve_from_coefficients",
    "Term",
    "SeparableMap",
    "multi_indices",
]


class Univariate:
    """A smooth function of one variable. Subclasses implement :meth:`deriv`."""

    def deriv(self, x: np.ndarray, k: int) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, x, k: int = 0) -> np.ndarray:
        return self.deriv(np.asarray(x, dtype=float), k)


@dataclass(frozen=True)
class Const(Univariate):
    value: float = 1.0

    def deriv(self, x, k):
        return np.full_like(x, self.value if k == 0 else 0.0, dtype=float)


@dataclass(frozen=True)
class Power(Univariate):
    """``x**n`` for a non-negative integer ``n``."""

    n: int

    def deriv(self, x, k):
        if k > self.n:
            return np.zeros_like(x, dtype=float)
        coeff = math.perm(self.n, k)
        return coeff * x ** (self.n - k)


@dataclass(frozen=True)
class Exp(Univariate):
    """``exp(rate * x)``."""

    rate: float = 1.0

    def deriv(self, x, k):
        return self.rate**k * np.exp(self.rate * x)


@dataclass(frozen=True)
class Sin(Univariate):
    def deriv(self, x, k):
        return np.sin(x + 0.5 * math.pi * k)


@dataclass(frozen=True)
class Cos(Univariate):
    def deriv(self, x, k):
        return np.cos(x + 0.5 * math.pi * k)


@dataclass(frozen=True)
class Cosh(Univariate):
    def deriv(self, x, k):
        return np.cosh(x) if k % 2 == 0 else np.sinh(x)


@dataclass(frozen=True)
class Sinh(Univariate):
    def deriv(self, x, k):
        return np.sinh(x) if k % 2 == 0 else np.cosh(x)


@dataclass(frozen=True)
class LinComb(Univariate):
    """Finite linear combination ``sum c_i g_i``."""

    terms: tuple[tuple[float, Univariate], ...]

    def deriv(self, x, k):
        out = np.zeros_like(x, dtype=float)
        for c, g in self.terms:
            if c != 0.0:
                out = out + c * g.deriv(x, k)
        return out


CURVE_BASIS: tuple[tuple[str, Univariate], ...] = (
    ("1", Const(1.0)),
    ("t", Power(1)),
    ("t^2", Power(2)),
    ("t^3", Power(3)),
    ("exp(t)", Exp(1.0)),
    ("exp(-t)", Exp(-1.0)),
    ("cosh(t)", Cosh()),
    ("sinh(t)", Sinh()),
)


def curve_from_coefficients(coeffs: Sequence[float]) -> LinComb:
    """Function with the given coordinates in :data:`CURVE_BASIS`."""
    coeffs = [float(c) for c in coeffs]
    if len(coeffs) != len(CURVE_BASIS):
        raise ValueError(f"expected {len(CURVE_BASIS)} curve coefficients, got {len(coeffs)}")
    return LinComb(tuple((c, g) for c, (_, g) in zip(coeffs, CURVE_BASIS) if c != 0.0))


@dataclass(frozen=True)
class Term:
    """``coeff * prod_a factors[a](x_a)``; ``None`` stands for the constant 1."""

    coeff: float
    factors: tuple[Univariate | None, ...]


def multi_indices(dim: int, order: int):
    """Sorted index tuples of length ``order`` over ``range(dim)``."""
    return itertools.combinations_with_replacement(range(dim), order)


class SeparableMap:
    """Map ``R^d -> R^m`` whose components are sums of separable terms."""

    def __init__(self, dim: int, components: Sequence[Sequence[Term]]):
        self.dim = int(dim)
        self.components = tuple(tuple(c) for c in components)
        for comp in self.components:
            for term in comp:
                if len(term.factors) != self.dim:
                    raise ValueError("term arity does not match map dimension")

    @property
    def codim(self) -> int:
        return len(self.components)

    def _partial(self, x: np.ndarray, counts: tuple[int, ...], cache: dict) -> np.ndarray:
        out = np.zeros((x.shape[0], self.codim))
        for m, comp in enumerate(self.components):
            acc = np.zeros(x.shape[0])
            for term in comp:
                prod = np.full(x.shape[0], term.coeff)
                for a, g in enumerate(term.factors):
                    k = counts[a]
                    if g is None:
                        if k:
                            prod = 0.0 * prod
                            break
                        continue
                    key = (id(g), a, k)
                    if key not in cache:
                        cache[key] = g.deriv(x[:, a], k)
                    prod = prod * cache[key]
                acc = acc + prod
            out[:, m] = acc
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._partial(x, (0,) * self.dim, {})

    def jets(self, x, order: int) -> list[np.ndarray]:
        """All partials up to ``order``.

        Returns a list whose entry ``k`` has shape ``(N,) + (d,)*k + (m,)`` and
        is symmetric in the ``k`` derivative slots.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        cache: dict = {}
        out = []
        for k in range(order + 1):
            arr = np.zeros((n,) + (self.dim,) * k + (self.codim,))
            for idx in multi_indices(self.dim, k):
                counts = tuple(idx.count(a) for a in range(self.dim))
                val = self._partial(x, counts, cache)
                for perm in set(itertools.permutations(idx)):
                    arr[(slice(None),) + perm] = val
            out.append(arr)
        return out
