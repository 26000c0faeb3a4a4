"""Homogeneity bookkeeping, invariant derivatives, Taylor polynomials.

Derivatives come in two flavours: an exact symbolic path for polynomial and
polynomial-times-Gaussian inputs (the group law is polynomial, so the
left/right invariant fields have polynomial coefficients and the class is
closed), and nested fourth-order central differences along the group
translation curves for everything else.  The symbolic path doubles as the
oracle the finite-difference path is validated against.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InvalidArgument, LatticeTooSmall, NotSchwartz, NumericFailure
from .groups import GroupSpec, hom_norm, multiply
from .polynomials import Poly, PolyGauss

__all__ = [
    "hom_degree",
    "multi_indices_up_to",
    "HomogeneityLattice",
    "a_bar",
    "left_derivative",
    "right_derivative",
    "apply_left_field",
    "apply_right_field",
    "invariant_derivative_exact",
    "TaylorPoly",
    "taylor_poly",
    "schwartz_seminorm",
    "default_probe_points",
]


def hom_degree(g: GroupSpec, index) -> float:
    """a(I) = sum a_k i_k."""
    return g.hom_degree(index)


def reverse_index(index) -> tuple[int, ...]:
    """I' = (i_n, ..., i_1)."""
    return tuple(reversed(tuple(index)))


def multi_indices_up_to(n: int, max_order: int):
    """All I in N_0^n with |I| <= max_order, lexicographic."""
    out = []
    for combo in product(range(max_order + 1), repeat=n):
        if sum(combo) <= max_order:
            out.append(combo)
    return out


# --------------------------------------------------------------------------
# Homogeneity lattice
# --------------------------------------------------------------------------


@dataclass
class HomogeneityLattice:
    """Values of {a(I)} up to a cutoff, closed under addition below it."""

    group: GroupSpec
    cutoff: float
    values: np.ndarray

    @classmethod
    def build(cls, group: GroupSpec, cutoff: float = 12.0) -> "HomogeneityLattice":
        vals = {0.0}
        frontier = [0.0]
        while frontier:
            base = frontier.pop()
            for a in group.exponents:
                v = base + float(a)
                if v > cutoff + 1e-9:
                    continue
                # tolerance-keyed dedupe: exponents may be irrational
                if all(abs(v - u) > 1e-9 for u in vals):
                    vals.add(v)
                    frontier.append(v)
        return cls(group, cutoff, np.array(sorted(vals)))


def a_bar(lat: HomogeneityLattice, a: float) -> float:
    """Smallest lattice value strictly above a."""
    if a >= lat.cutoff - 1e-9:
        raise LatticeTooSmall(f"a={a} at or beyond lattice cutoff {lat.cutoff}")
    above = lat.values[lat.values > a + 1e-9]
    if len(above) == 0:
        raise LatticeTooSmall(f"no lattice value above {a} within cutoff {lat.cutoff}")
    return float(above[0])


# --------------------------------------------------------------------------
# Invariant derivatives
# --------------------------------------------------------------------------

_STENCIL_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_STENCIL_COEFFS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def _first_axis(index) -> int:
    for j, e in enumerate(index):
        if e > 0:
            return j
    return -1


def _derivative_fd(g: GroupSpec, f, index, x: np.ndarray, step: float, side: str) -> np.ndarray:
    j = _first_axis(index)
    if j < 0:
        vals = np.asarray(f(x), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericFailure("non-finite value during derivative evaluation")
        return vals
    rest = list(index)
    rest[j] -= 1
    h = step
    acc = np.zeros(x.shape[:-1])
    for off, coef in zip(_STENCIL_OFFSETS, _STENCIL_COEFFS):
        e = np.zeros(g.n)
        e[j] = off * h
        moved = multiply(g, x, e) if side == "left" else multiply(g, e, x)
        acc = acc + coef * _derivative_fd(g, f, rest, moved, step, side)
    return acc / h


def left_derivative(g: GroupSpec, f, index, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """X^I f at x (x may carry leading axes) by nested central differences.

    Composition order is X_1^{i_1} ... X_n^{i_n} applied to f, matching the
    convention used for the Taylor systems.
    """
    x = np.asarray(x, dtype=float)
    return _derivative_fd(g, f, tuple(index), x, step, "left")


def right_derivative(g: GroupSpec, f, index, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Y^I f at x along curves (t e_j) x."""
    x = np.asarray(x, dtype=float)
    return _derivative_fd(g, f, tuple(index), x, step, "right")


def apply_left_field(g: GroupSpec, obj, j: int):
    """Exact X_j on a Poly or PolyGauss: X_j = d_j + sum_k q_{jk}(x) d_k."""
    coeffs = g.left_field_coeffs(j)
    if isinstance(obj, Poly):
        out = obj.partial(j)
        for k, q in coeffs.items():
            out = out + q * obj.partial(k)
        return out
    if isinstance(obj, PolyGauss):
        out = obj.partial(j)
        for k, q in coeffs.items():
            out = PolyGauss(out.p + (obj.partial(k).mul_poly(q)).p, out.q)
        return out
    raise InvalidArgument("exact derivatives need Poly or PolyGauss input")


def apply_right_field(g: GroupSpec, obj, j: int):
    """Exact Y_j on a Poly or PolyGauss."""
    coeffs = g.right_field_coeffs(j)
    if isinstance(obj, Poly):
        out = obj.partial(j)
        for k, q in coeffs.items():
            out = out + q * obj.partial(k)
        return out
    if isinstance(obj, PolyGauss):
        out = obj.partial(j)
        for k, q in coeffs.items():
            out = PolyGauss(out.p + (obj.partial(k).mul_poly(q)).p, out.q)
        return out
    raise InvalidArgument("exact derivatives need Poly or PolyGauss input")


def invariant_derivative_exact(g: GroupSpec, obj, index, side: str = "left"):
    """X^I (or Y^I) applied symbolically, innermost factor first."""
    apply = apply_left_field if side == "left" else apply_right_field
    out = obj
    for j in range(g.n - 1, -1, -1):
        for _ in range(int(index[j])):
            out = apply(g, out, j)
    return out


# --------------------------------------------------------------------------
# Taylor polynomials
# --------------------------------------------------------------------------


@dataclass
class TaylorPoly:
    """Homogeneous-degree-a Taylor polynomial of f at a base point."""

    base_point: np.ndarray
    side: str
    hom_degree: float
    coeffs: dict[tuple[int, ...], float]
    n: int

    def poly(self) -> Poly:
        return Poly(self.n, self.coeffs)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.poly()(pts)


def taylor_poly(g: GroupSpec, f, x: np.ndarray, a: float, side: str = "left") -> TaylorPoly:
    """Polynomial P with X^I P(0) = X^I f(x) for all a(I) <= a (left side;
    Y^I for the right side).

    The matching system is block diagonal across homogeneous degrees because
    X^I y^K is homogeneous of degree a(K) - a(I), hence has zero constant
    term unless the degrees agree.  Blocks are solved in increasing degree,
    ties broken lexicographically.
    """
    if side not in ("left", "right"):
        raise InvalidArgument("side must be 'left' or 'right'")
    x = np.asarray(x, dtype=float)
    max_order = int(np.floor(a + 1e-9))  # a_k >= 1 forces |I| <= a(I)
    indices = [I for I in multi_indices_up_to(g.n, max_order) if g.hom_degree(I) <= a + 1e-9]
    indices.sort(key=lambda I: (g.hom_degree(I), I))

    exact = isinstance(f, (Poly, PolyGauss))
    derivs = {}
    for I in indices:
        if exact:
            dI = invariant_derivative_exact(g, f, I, side)
            derivs[I] = float(dI(x[None, :])[0])
        else:
            fd = left_derivative if side == "left" else right_derivative
            derivs[I] = float(fd(g, f, I, x[None, :])[0])

    # constant terms of X^I y^K, computed symbolically once per block
    coeffs: dict[tuple[int, ...], float] = {}
    degrees = sorted({round(g.hom_degree(I), 9) for I in indices})
    for d in degrees:
        block = [I for I in indices if abs(g.hom_degree(I) - d) < 1e-9]
        m = len(block)
        mat = np.zeros((m, m))
        for col, K in enumerate(block):
            monoK = Poly.monomial(K)
            for row, I in enumerate(block):
                dmono = invariant_derivative_exact(g, monoK, I, side)
                mat[row, col] = dmono.constant_term()
        rhs = np.array([derivs[I] for I in block])
        try:
            sol = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - theory says invertible
            raise InvalidArgument(f"degenerate Taylor block at degree {d}: {exc}") from exc
        for K, c in zip(block, sol):
            coeffs[K] = float(c)

    return TaylorPoly(x.copy(), side, float(a), coeffs, g.n)


# --------------------------------------------------------------------------
# Schwartz-type seminorm
# --------------------------------------------------------------------------


def default_probe_points(g: GroupSpec, radius: float = 10.0, shells: int = 24) -> np.ndarray:
    """Origin plus dilated sphere shells, for sampled sups of decaying data."""
    from .groups import _sphere_grid

    theta, _ = _sphere_grid(g.n, 4)
    radii = np.geomspace(radius / 256.0, radius, shells)
    pts = [np.zeros((1, g.n))]
    for r in radii:
        pts.append(r**g.exponents * theta)
    return np.concatenate(pts)


def schwartz_seminorm(
    g: GroupSpec,
    f,
    N: int,
    probes: np.ndarray | None = None,
    step: float = 1e-3,
) -> float:
    """Sampled sup of (1 + rho)^{(N+1)(gamma+1)} |Y^I f| over |I| <= N.

    Diverging weighted values along the outermost probe shell raise
    NotSchwartz: the input does not decay fast enough for the weight.
    """
    if probes is None:
        probes = default_probe_points(g)
    probes = np.asarray(probes, dtype=float)
    rho = hom_norm(g, probes)
    weight = (1.0 + rho) ** ((N + 1) * (g.gamma + 1))
    exact = isinstance(f, (Poly, PolyGauss))
    best = 0.0
    outer = rho >= 0.9 * np.max(rho)
    for I in multi_indices_up_to(g.n, N):
        if exact:
            vals = invariant_derivative_exact(g, f, I, side="right")(probes)
        else:
            vals = right_derivative(g, f, I, probes, step=step)
        weighted = weight * np.abs(vals)
        if np.any(outer) and np.any(~outer):
            tail = float(np.max(weighted[outer]))
            bulk = float(np.max(weighted[~outer]))
            if tail > 10.0 * max(bulk, 1e-300) and tail > 1e3:
                raise NotSchwartz(
                    f"weighted derivative index {I} grows along the probe tail"
                )
        best = max(best, float(np.max(weighted)))
    return best
