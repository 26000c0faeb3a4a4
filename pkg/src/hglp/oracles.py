"""Independent 1-d oracles used by the flat-group identity checks.

The square-function energy identity on flat groups reduces to a radial
profile integral: for a kernel whose frequency profile is m(|xi|), the
energy multiplier is c = integral of m(t)^2 dt/t, independent of direction.
These helpers provide a closed-form kernel/profile pair and the 1-d
quadrature for c, deliberately bypassing the group convolution engine.
"""

from __future__ import annotations

import math

import numpy as np

from .groups import GroupSpec
from .kernels import KernelSpec
from .polynomials import Poly, PolyGauss

__all__ = ["ring_kernel", "radial_energy_constant"]


def ring_kernel(g: GroupSpec):
    """Mass-zero radial kernel (1 - pi |x|^2) exp(-pi |x|^2) on a flat group,
    with its exact frequency profile m(r) = pi r^2 exp(-pi r^2) (unitary
    transform convention; self-dual Gaussian).

    Returns (KernelSpec, profile callable).
    """
    if not g.is_abelian:
        raise ValueError("the ring kernel oracle is a flat-group construction")
    n = g.n
    q = Poly.zero(n)
    for k in range(n):
        q = q + Poly(n, {tuple(2 if i == k else 0 for i in range(n)): math.pi})
    p = Poly.const(n, 1.0)
    for k in range(n):
        p = p - Poly(n, {tuple(2 if i == k else 0 for i in range(n)): math.pi * 2.0 / n})
    sym = PolyGauss(p, q)
    # parity kills the degree-1 moments as well, so the order is 1
    kernel = KernelSpec(g, sym, "ring", moment_order=1.0, decay_note="gaussian",
                        symbolic=sym)

    def profile(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (2.0 * math.pi / n) * r**2 * np.exp(-math.pi * r**2)

    return kernel, profile


def radial_energy_constant(profile, t_min: float = 1e-4, t_max: float = 1e2,
                           points: int = 4001) -> float:
    """1-d log-trapezoid quadrature of profile(t)^2 dt/t."""
    s = np.linspace(math.log(t_min), math.log(t_max), points)
    t = np.exp(s)
    vals = np.asarray(profile(t), dtype=float) ** 2
    w = np.full(points, s[1] - s[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return float(np.sum(w * vals))
