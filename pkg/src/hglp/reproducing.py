"""Reproducing pairs: truncated synthesis, normalizer fits, tail kernel.

A pair {phi_l}, {eta_l} is certified operationally: the truncated synthesis
applied to probe functions must reproduce them with a small residual after a
single scalar normalizer is fitted.  No symbolic delta identity is claimed;
the residual history is the certificate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import HomogeneityLattice, a_bar, multi_indices_up_to
from .convops import convolve, _scales_of
from .errors import DegeneratePair, GridTooSmall, InvalidArgument
from .grids import GridSpec, SampledFunction
from .groups import GroupSpec
from .kernels import (
    KernelSpec,
    conv_support_extents,
    gaussian_kernel,
    heat_family,
    heat_pair_product,
    moment_certificate,
    vanishing_moment_kernel,
)

__all__ = [
    "ReproducingPair",
    "heat_pair",
    "synthesis_terms",
    "truncated_synthesis",
    "fit_normalizer",
    "synthesis_residual",
    "tail_kernel",
    "FactorizedFamily",
    "factorized_family",
    "resolve_pair",
]


@dataclass
class ReproducingPair:
    """Families {phi_l}, {eta_l} with mode, scale base and fitted normalizer."""

    phis: list[KernelSpec]
    etas: list[KernelSpec]
    mode: str = "continuous"
    b: float = 0.5
    normalizer: float | None = None
    products: list[KernelSpec] | None = None
    residual_history: list[dict] = field(default_factory=list)
    name: str = "pair"

    def __post_init__(self):
        if not self.phis or len(self.phis) != len(self.etas):
            raise InvalidArgument("pair needs nonempty phi/eta lists of equal length")
        if self.mode not in ("continuous", "discrete"):
            raise InvalidArgument("mode must be continuous or discrete")
        if not 0.0 < self.b < 1.0:
            raise InvalidArgument("need b in (0,1)")

    @property
    def M(self) -> int:
        return len(self.phis)

    def scale_factor(self) -> float:
        return self.normalizer if self.normalizer is not None else 1.0

    def to_manifest(self) -> str:
        doc = {
            "name": self.name,
            "phis": [k.name for k in self.phis],
            "etas": [k.name for k in self.etas],
            "mode": self.mode,
            "b": self.b,
            "normalizer": self.normalizer,
            "residual_history": self.residual_history,
        }
        return json.dumps(doc, indent=2)


def heat_pair(g: GroupSpec, j: int = 1, k: int = 1, mode: str = "continuous",
              b: float = 0.5) -> ReproducingPair:
    """Heat-derivative pair; carries the combined product kernel so synthesis
    runs one convolution per scale."""
    phi = heat_family(g, j)
    eta = heat_family(g, k)
    prod = heat_pair_product(g, j, k)
    return ReproducingPair([phi], [eta], mode=mode, b=b, products=[prod],
                           name=f"heat:{j},{k}")


def resolve_pair(g: GroupSpec, name: str) -> ReproducingPair:
    """Resolve 'heat:j,k' (optionally 'discrete:heat:j,k') pair names."""
    name = name.strip()
    mode = "continuous"
    if name.startswith("discrete:"):
        mode = "discrete"
        name = name[len("discrete:"):]
    if name.startswith("heat:"):
        parts = name.split(":", 1)[1].split(",")
        j, k = (int(s) for s in parts) if len(parts) == 2 else (int(parts[0]), int(parts[0]))
        return heat_pair(g, j, k, mode=mode)
    raise InvalidArgument(f"unknown pair name {name!r}")


# --------------------------------------------------------------------------
# Synthesis
# --------------------------------------------------------------------------


def _synthesis_scales(pair: ReproducingPair, eps: float, B: float,
                      per_octave: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < eps < B:
        raise InvalidArgument("need 0 < eps < B")
    if pair.mode == "discrete":
        js = []
        j = math.floor(math.log(eps) / math.log(pair.b))
        while pair.b**j >= eps * (1 - 1e-12):
            if pair.b**j <= B * (1 + 1e-12):
                js.append(j)
            j += 1
        ts = np.array(sorted(pair.b**jj for jj in js))
        return ts, np.ones(len(ts))
    count = max(2, int(round(math.log2(B / eps) * per_octave)) + 1)
    ts = np.geomspace(eps, B, count)
    step = math.log(B / eps) / (count - 1)
    ws = np.full(count, step)
    ws[0] *= 0.5
    ws[-1] *= 0.5
    return ts, ws


def _check_not_degenerate(pair: ReproducingPair) -> None:
    for phi in pair.phis:
        vals = phi(phi.base_grid.nodes())
        if float(np.max(np.abs(vals))) == 0.0:
            raise DegeneratePair(f"pair {pair.name}: phi member {phi.name} vanishes")


def synthesis_terms(
    g: GroupSpec,
    pair: ReproducingPair,
    f,
    eps: float,
    B: float,
    out_grid: GridSpec,
    per_octave: int = 4,
    use_product: bool = True,
    field_points: int | None = None,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Unnormalized per-scale fields sum_l f * phi_t * eta_t on the out grid.

    With a combined product kernel available this is one convolution per
    scale (phi_t * eta_t equals the dilated product); otherwise the two-stage
    route convolves f with phi_t on an enlarged field grid, then with eta_t.
    Returns (scale nodes, scale weights, per-scale value arrays) so callers
    can form any truncation [eps', B'] by partial summation.
    """
    _check_not_degenerate(pair)
    ts, ws = _synthesis_scales(pair, eps, B, per_octave)
    terms = [np.zeros(out_grid.size) for _ in ts]
    for ell in range(pair.M):
        if use_product and pair.products is not None:
            W = pair.products[ell]
            for i, t in enumerate(ts):
                terms[i] += convolve(g, f, W.dilate(float(t)), out_grid).values
        else:
            phi, eta = pair.phis[ell], pair.etas[ell]
            for i, t in enumerate(ts):
                eta_t = eta.dilate(float(t))
                pad = conv_support_extents(g, np.zeros(g.n), eta_t.base_grid.extents)
                fgrid = GridSpec(
                    g,
                    out_grid.extents + pad,
                    field_points or out_grid.points,
                )
                stage1 = convolve(g, f, phi.dilate(float(t)), fgrid)
                terms[i] += convolve(g, stage1, eta_t, out_grid).values
    return ts, ws, terms


def truncated_synthesis(
    g: GroupSpec,
    pair: ReproducingPair,
    f,
    eps: float,
    B: float,
    out_grid: GridSpec,
    per_octave: int = 4,
    use_product: bool = True,
) -> SampledFunction:
    """Normalizer times the scale-quadrature of the synthesis terms."""
    ts, ws, terms = synthesis_terms(g, pair, f, eps, B, out_grid, per_octave, use_product)
    acc = np.zeros(out_grid.size)
    for w, term in zip(ws, terms):
        acc += w * term
    return SampledFunction(out_grid, pair.scale_factor() * acc,
                           provenance=f"synth[{pair.name}]")


def fit_normalizer(
    g: GroupSpec,
    pair: ReproducingPair,
    probes: list[KernelSpec] | None = None,
    eps: float = 2**-5,
    B: float = 2**5,
    out_points: int = 11,
    out_radius: float = 4.0,
    per_octave: int = 4,
) -> float:
    """Least-squares scalar c minimizing sum_i ||c S1 f_i - f_i||_2^2.

    S1 is the unnormalized synthesis at the widest configured truncation;
    probes default to three Gaussian bumps of different widths.  The fitted
    value is stored on the pair.
    """
    if probes is None:
        probes = [gaussian_kernel(g, c=c, name=f"probe{c:g}") for c in (1.0, 0.6, 1.6)]
    if len(probes) < 3:
        raise InvalidArgument("normalizer fit needs at least 3 probe functions")
    out_grid = GridSpec(g, [out_radius] * g.n, out_points)
    w = out_grid.weights()
    num = 0.0
    den = 0.0
    for probe in probes:
        ts, ws, terms = synthesis_terms(g, pair, probe, eps, B, out_grid, per_octave)
        s1 = np.zeros(out_grid.size)
        for wt, term in zip(ws, terms):
            s1 += wt * term
        fv = probe(out_grid.nodes())
        num += float(np.sum(w * s1 * fv))
        den += float(np.sum(w * s1 * s1))
    if den < 1e-30:
        raise DegeneratePair(f"pair {pair.name}: synthesis energy is zero")
    c = num / den
    pair.normalizer = c
    pair.residual_history.append(
        {"event": "fit_normalizer", "eps": eps, "B": B, "normalizer": c}
    )
    return c


def synthesis_residual(
    g: GroupSpec,
    pair: ReproducingPair,
    f,
    eps: float,
    B: float,
    out_grid: GridSpec,
    per_octave: int = 4,
    terms: tuple | None = None,
) -> float:
    """Sup-norm residual ||S f - f||_inf / ||f||_inf on the output grid."""
    if terms is None:
        ts, ws, fields = synthesis_terms(g, pair, f, eps, B, out_grid, per_octave)
    else:
        ts, ws, fields = terms
    mask = (ts >= eps * (1 - 1e-12)) & (ts <= B * (1 + 1e-12))
    acc = np.zeros(out_grid.size)
    for w, fld, keep in zip(ws, fields, mask):
        if keep:
            acc += w * fld
    sf = pair.scale_factor() * acc
    fv = np.asarray(f(out_grid.nodes()), dtype=float)
    sup_f = float(np.max(np.abs(fv)))
    if sup_f == 0.0:
        raise DegeneratePair("residual of the zero function is undefined")
    res = float(np.max(np.abs(sf - fv)) / sup_f)
    pair.residual_history.append(
        {"event": "residual", "eps": float(eps), "B": float(B), "residual": res}
    )
    return res


def tail_kernel(
    g: GroupSpec,
    pair: ReproducingPair,
    out_grid: GridSpec | None = None,
    B: float | None = None,
    per_octave: int = 6,
    tail_tol: float = 0.05,
) -> KernelSpec:
    """Scale-tail aggregate of the pair products over t >= 1, unit mass.

    Pointwise evaluation of the dilated product kernels on the output grid;
    no convolutions.  Requires continuous mode and a combined product (heat
    pairs ship one).  Mass integrates to 1 within the residual reported in
    the kernel certificate.
    """
    if pair.mode != "continuous":
        raise InvalidArgument("tail kernel is defined for continuous-mode pairs")
    _check_not_degenerate(pair)
    if pair.products is None:
        raise InvalidArgument(f"pair {pair.name} has no combined product kernels")
    out_grid = out_grid or GridSpec(g, [8.0] * g.n, 17)
    if B is None:
        # scales beyond B leave roughly (R/B)^gamma of the unit mass behind;
        # 3x the gauge radius of the grid keeps that under a percent or two
        from .groups import hom_norm as _rho

        B = 3.0 * float(np.max(_rho(g, out_grid.nodes())))
    B = max(B, 8.0)
    count = max(2, int(round(math.log2(B) * per_octave)) + 1)
    ts = np.geomspace(1.0, B, count)
    step = math.log(B) / (count - 1)
    ws = np.full(count, step)
    ws[0] *= 0.5
    ws[-1] *= 0.5
    nodes = out_grid.nodes()
    acc = np.zeros(len(nodes))
    for t, w in zip(ts, ws):
        for W in pair.products:
            acc += w * W.dilate(float(t))(nodes)
    acc *= pair.scale_factor()
    zeta = SampledFunction(out_grid, acc, provenance=f"zeta[{pair.name}]")
    tail = zeta.tail_fraction()
    if tail > tail_tol:
        raise GridTooSmall(f"tail kernel boundary fraction {tail:.2e}")
    mass = zeta.integral()
    kernel = KernelSpec(g, zeta, f"zeta[{pair.name}]", moment_order=-1.0,
                        decay_note="schwartz-tail", base_grid=out_grid)
    kernel.certificate = {"mass": mass, "B": float(B), "boundary_fraction": tail}
    return kernel


# --------------------------------------------------------------------------
# Factorized families with vanishing moments
# --------------------------------------------------------------------------


@dataclass
class FactorizedFamily:
    """U = u * v with all three factors killing polynomials up to degree A."""

    order: float
    U: list[KernelSpec]
    u: list[KernelSpec]
    v: list[KernelSpec]


def factorized_family(
    g: GroupSpec,
    A: float,
    base_bumps: list[KernelSpec] | None = None,
    lattice: HomogeneityLattice | None = None,
    u_points: int = 21,
    rel_tol: float = 1e-6,
    product_rel_tol: float = 1e-4,
) -> FactorizedFamily:
    """Derivative-of-bump factors u, v and their sampled products U.

    u and v are invariant derivatives of order just above A (so their
    moments vanish on degree <= A by integration by parts); U = u * v is
    sampled by convolution and certified on the same monomial family at a
    looser tolerance reflecting the extra quadrature.
    """
    lattice = lattice or HomogeneityLattice.build(g, cutoff=max(12.0, A + 4))
    target = a_bar(lattice, A)
    max_order = int(math.floor(target + 1e-9))
    candidates = [
        I for I in multi_indices_up_to(g.n, max_order)
        if abs(g.hom_degree(I) - target) < 1e-9
    ]
    if not candidates:
        raise InvalidArgument(f"no derivative index of homogeneous degree {target}")
    J_u = candidates[0]
    J_v = candidates[1] if len(candidates) > 1 else candidates[0]
    if base_bumps is None:
        base_bumps = [gaussian_kernel(g, c=1.0, name="fbump1")]
    us, vs, Us = [], [], []
    for bump in base_bumps:
        u = vanishing_moment_kernel(g, bump, J_u, lattice=lattice, rel_tol=rel_tol)
        v = vanishing_moment_kernel(g, bump, J_v, lattice=lattice, rel_tol=rel_tol)
        extents = conv_support_extents(g, u.base_grid.extents, v.base_grid.extents)
        ugrid = GridSpec(g, extents, u_points)
        kerngrid = GridSpec(g, u.base_grid.extents, u_points)
        sampled = convolve(g, u, v, ugrid, kernel_grid=kerngrid)
        U = KernelSpec(g, sampled, f"U[{u.name}*{v.name}]",
                       moment_order=u.moment_order, decay_note="gaussian-product",
                       base_grid=ugrid)
        U.certificate = moment_certificate(g, U, min(A, u.moment_order),
                                           rel_tol=product_rel_tol)
        us.append(u)
        vs.append(v)
        Us.append(U)
    return FactorizedFamily(float(A), Us, us, vs)
