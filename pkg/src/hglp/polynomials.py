"""Sparse multivariate polynomials and polynomial-times-Gaussian functions.

Everything the closed-form kernel machinery needs reduces to arithmetic on
polynomials in the Euclidean coordinates: the group law is polynomial, the
invariant vector fields have polynomial coefficients, and the shipped kernel
families are p(x)*exp(-q(x)).  Keeping that algebra exact gives cheap exact
derivatives and moment oracles that finite differences are tested against.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

Monomial = tuple[int, ...]


class Poly:
    """Sparse polynomial in n variables, monomial -> coefficient."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Mapping[Monomial, float] | None = None):
        self.n = n
        self.terms: dict[Monomial, float] = {}
        if terms:
            for mono, c in terms.items():
                if c != 0.0:
                    self.terms[tuple(int(i) for i in mono)] = float(c)

    @classmethod
    def zero(cls, n: int) -> "Poly":
        return cls(n)

    @classmethod
    def const(cls, n: int, c: float) -> "Poly":
        return cls(n, {(0,) * n: c})

    @classmethod
    def coordinate(cls, n: int, k: int) -> "Poly":
        mono = tuple(1 if i == k else 0 for i in range(n))
        return cls(n, {mono: 1.0})

    @classmethod
    def monomial(cls, index: Iterable[int], coeff: float = 1.0) -> "Poly":
        mono = tuple(int(i) for i in index)
        return cls(len(mono), {mono: coeff})

    def copy(self) -> "Poly":
        return Poly(self.n, self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def constant_term(self) -> float:
        return self.terms.get((0,) * self.n, 0.0)

    def degree(self) -> int:
        return max((sum(m) for m in self.terms), default=0)

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Poly(self.n, out)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "Poly":
        return Poly(self.n, {m: c * v for m, v in self.terms.items()})

    def __mul__(self, other: "Poly") -> "Poly":
        out: dict[Monomial, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0.0) + c1 * c2
        return Poly(self.n, out)

    def partial(self, k: int) -> "Poly":
        """d/dx_k."""
        out: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            if m[k] == 0:
                continue
            dm = list(m)
            dm[k] -= 1
            out[tuple(dm)] = out.get(tuple(dm), 0.0) + c * m[k]
        return Poly(self.n, out)

    def compose(self, sub: list["Poly"]) -> "Poly":
        """Substitute x_k -> sub[k]; sub polynomials share one variable set."""
        if len(sub) != self.n:
            raise ValueError("substitution list length mismatch")
        nv = sub[0].n
        out = Poly.zero(nv)
        # power cache keyed by (coordinate, exponent)
        powers: dict[tuple[int, int], Poly] = {}

        def power(k: int, e: int) -> Poly:
            if e == 0:
                return Poly.const(nv, 1.0)
            key = (k, e)
            if key not in powers:
                powers[key] = power(k, e - 1) * sub[k]
            return powers[key]

        for m, c in self.terms.items():
            term = Poly.const(nv, c)
            for k, e in enumerate(m):
                if e:
                    term = term * power(k, e)
            out = out + term
        return out

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at pts of shape (..., n)."""
        pts = np.asarray(pts, dtype=float)
        return self.eval_coords([np.ascontiguousarray(pts[..., k]) for k in range(self.n)])

    def eval_coords(self, coords: list[np.ndarray]) -> np.ndarray:
        """Evaluate from per-coordinate arrays (the fast contiguous path)."""
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords)) if coords else ()
        out = np.zeros(shape, dtype=float)
        for m, c in self.terms.items():
            term = None
            for k, e in enumerate(m):
                if e == 0:
                    continue
                factor = coords[k] if e == 1 else coords[k] ** e
                term = factor.copy() if term is None else term * factor
            if term is None:
                out += c
            else:
                if c != 1.0:
                    term *= c
                out += term
        return out

    def prune(self, tol: float = 0.0) -> "Poly":
        return Poly(self.n, {m: c for m, c in self.terms.items() if abs(c) > tol})

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        if not self.terms:
            return "Poly(0)"
        bits = [f"{c:+g}*x^{m}" for m, c in sorted(self.terms.items())]
        return "Poly(" + " ".join(bits) + ")"


class PolyGauss:
    """Function p(x) * exp(-q(x)) with p, q polynomials.

    Closed under the invariant derivatives, left translation and dilation of
    any polynomial group law, which is why all closed-form kernels and test
    atoms live in this class.  q must grow at infinity (shipped instances use
    positive-definite quadratics).
    """

    __slots__ = ("p", "q")

    def __init__(self, p: Poly, q: Poly):
        if p.n != q.n:
            raise ValueError("p and q dimension mismatch")
        self.p = p
        self.q = q

    @property
    def n(self) -> int:
        return self.p.n

    @classmethod
    def gaussian(cls, n: int, c: float = 1.0, amplitude: float = 1.0) -> "PolyGauss":
        """amplitude * exp(-c|x|^2)."""
        q = Poly.zero(n)
        for k in range(n):
            q = q + Poly(n, {tuple(2 if i == k else 0 for i in range(n)): c})
        return cls(Poly.const(n, amplitude), q)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return self.eval_coords([np.ascontiguousarray(pts[..., k]) for k in range(self.n)])

    def eval_coords(self, coords: list[np.ndarray]) -> np.ndarray:
        """Evaluate from per-coordinate arrays; exp is taken in place."""
        ex = self.q.eval_coords(coords)
        np.negative(ex, out=ex)
        np.exp(ex, out=ex)
        if list(self.p.terms) == [(0,) * self.n]:
            amp = self.p.constant_term()
            if amp != 1.0:
                ex *= amp
            return ex
        ex *= self.p.eval_coords(coords)
        return ex

    def scale(self, c: float) -> "PolyGauss":
        return PolyGauss(self.p.scale(c), self.q)

    def mul_poly(self, r: Poly) -> "PolyGauss":
        return PolyGauss(self.p * r, self.q)

    def partial(self, k: int) -> "PolyGauss":
        """d/dx_k of p e^{-q} = (p_k - p q_k) e^{-q}."""
        return PolyGauss(self.p.partial(k) - self.p * self.q.partial(k), self.q)

    def compose(self, sub: list[Poly]) -> "PolyGauss":
        return PolyGauss(self.p.compose(sub), self.q.compose(sub))

    def euclidean_moment(self, index: Iterable[int]) -> float:
        """Exact integral of x^index * p(x) exp(-q(x)) for diagonal quadratic q.

        Requires q = sum c_k x_k^2 with c_k > 0 (raises otherwise).  Used as
        the independent oracle for quadrature-based moment computation.
        """
        index = tuple(int(i) for i in index)
        coeffs = np.zeros(self.n)
        for m, c in self.q.terms.items():
            order = sum(m)
            if order == 0:
                continue
            axes = [k for k, e in enumerate(m) if e]
            if order != 2 or len(axes) != 1 or m[axes[0]] != 2:
                raise ValueError("closed-form moments need a diagonal quadratic exponent")
            coeffs[axes[0]] += c
        if np.any(coeffs <= 0):
            raise ValueError("exponent must be positive definite")
        extra = math.exp(-self.q.constant_term()) if (0,) * self.n in self.q.terms else 1.0
        total = 0.0
        for m, c in self.p.terms.items():
            val = c * extra
            for k in range(self.n):
                e = m[k] + index[k]
                if e % 2 == 1:
                    val = 0.0
                    break
                # int x^e exp(-a x^2) dx = Gamma((e+1)/2) / a^((e+1)/2)
                a = coeffs[k]
                val *= math.gamma((e + 1) / 2.0) / a ** ((e + 1) / 2.0)
            total += val
        return total

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"PolyGauss(p={self.p!r}, q={self.q!r})"
