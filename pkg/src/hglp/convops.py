"""Group convolution engine and the operators built on it.

Convolution is direct quadrature per output node (the group is
noncommutative, so there is no transform shortcut).  The engine integrates
over whichever factor has the tighter support box, chunks output nodes to
bound memory, evaluates closed-form factors exactly, and reduces with
numpy's pairwise summation so results do not depend on the chunk split.
Fields f * k_t are computed once per scale and shared by the square
functions and the maximal-function stages.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .calculus import HomogeneityLattice, a_bar
from .errors import GridTooSmall, InvalidArgument, InvalidDictionary
from .grids import GridSpec, SampledFunction
from .groups import GroupSpec, gauge_from_coords, hom_norm, product_planes
from .kernels import KernelSpec, poly_modulated_bump, unit_bump
from .polynomials import Poly, PolyGauss

__all__ = [
    "ScaleGrid",
    "MaximalParams",
    "WeightSpec",
    "convolve",
    "dilate_kernel",
    "scale_fields",
    "g_function",
    "area_integral",
    "discrete_square",
    "peetre_max",
    "ball_offsets",
    "hl_maximal",
    "ball_averages",
    "grand_maximal",
    "default_dictionary",
    "scale_op",
    "weighted_lp_norm",
    "ap_constant",
    "np_for",
    "unit_weight",
    "power_weight",
]


# --------------------------------------------------------------------------
# Scale grids
# --------------------------------------------------------------------------


@dataclass
class ScaleGrid:
    """Geometric discretization of (0, inf): t = b^(j + m/u_subdiv).

    Weights are trapezoid in log t, so they sum to log(t_max / t_min) and
    sums over nodes approximate integrals against dt/t.
    """

    b: float
    j_min: int
    j_max: int
    u_subdiv: int = 4

    def __post_init__(self):
        if not 0.0 < self.b < 1.0:
            raise InvalidArgument("need b in (0,1)")
        if self.j_max <= self.j_min:
            raise InvalidArgument("need j_max > j_min")
        exps = np.arange(self.j_min * self.u_subdiv, self.j_max * self.u_subdiv + 1)
        ts = self.b ** (exps / self.u_subdiv)
        order = np.argsort(ts)
        self.ts = ts[order]
        step = math.log(1.0 / self.b) / self.u_subdiv
        ws = np.full(len(ts), step)
        ws[0] *= 0.5
        ws[-1] *= 0.5
        self.ws = ws

    @classmethod
    def from_range(cls, t_min: float, t_max: float, per_octave: int = 4) -> "ScaleGrid":
        """Octave grid [t_min, t_max]; endpoints snapped to powers of two."""
        j_max = int(round(-math.log2(t_min)))
        j_min = int(round(-math.log2(t_max)))
        return cls(0.5, j_min, j_max, per_octave)

    def clip(self, t_min: float, t_max: float) -> tuple[np.ndarray, np.ndarray]:
        mask = (self.ts >= t_min * (1 - 1e-12)) & (self.ts <= t_max * (1 + 1e-12))
        return self.ts[mask], self.ws[mask]

    def __len__(self) -> int:
        return len(self.ts)


def _scales_of(scales) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scales, ScaleGrid):
        return scales.ts, scales.ws
    ts, ws = scales
    return np.asarray(ts, dtype=float), np.asarray(ws, dtype=float)


# --------------------------------------------------------------------------
# Convolution engine
# --------------------------------------------------------------------------


def _as_evaluator(obj):
    """Normalize to (vectorized evaluator, natural grid or None)."""
    if isinstance(obj, KernelSpec):
        return obj, obj.base_grid
    if isinstance(obj, SampledFunction):
        return obj, obj.grid
    if callable(obj):
        return obj, getattr(obj, "natural_grid", None)
    raise InvalidArgument(f"cannot evaluate object of type {type(obj).__name__}")


def _eval_planes(obj, planes: list[np.ndarray]) -> np.ndarray:
    """Evaluate a field object on coordinate planes without restacking."""
    if isinstance(obj, KernelSpec):
        return obj.eval_coords(planes)
    if isinstance(obj, SampledFunction):
        return obj.grid.interpolate_coords(obj.values, planes)
    if isinstance(obj, (PolyGauss, Poly)):
        return obj.eval_coords(planes)
    return np.asarray(obj(np.stack(planes, axis=-1)), dtype=float)


def _box_volume(grid: GridSpec) -> float:
    return float(np.prod(2.0 * grid.extents))


def convolve(
    g: GroupSpec,
    f,
    kappa,
    out,
    kernel_grid: GridSpec | None = None,
    source_grid: GridSpec | None = None,
    side: str = "auto",
    chunk: int | None = None,
    tail_tol: float = 0.05,
):
    """(f * kappa)(x) = integral of f(x y^-1) kappa(y) dy at the output nodes.

    side='kernel' integrates over kappa's grid, side='source' over f's grid
    (evaluating kappa(z^-1 x) exactly); 'auto' picks the factor with the
    smaller support box.  out may be a GridSpec (returns a SampledFunction)
    or an array of points (returns values).  A GridTooSmall is raised when
    the integration factor carries more than tail_tol of its absolute mass
    on the outermost shell of its grid.
    """
    f_eval, f_grid = _as_evaluator(f)
    k_eval, k_grid = _as_evaluator(kappa)
    kernel_grid = kernel_grid or k_grid
    source_grid = source_grid or f_grid
    if side == "auto":
        if kernel_grid is None and source_grid is None:
            raise InvalidArgument("convolve needs a quadrature grid on one factor")
        if kernel_grid is None:
            side = "source"
        elif source_grid is None:
            side = "kernel"
        else:
            side = "source" if _box_volume(source_grid) < _box_volume(kernel_grid) else "kernel"
    if side not in ("kernel", "source"):
        raise InvalidArgument(f"unknown side {side!r}")

    grid_out = out if isinstance(out, GridSpec) else None
    X = grid_out.nodes() if grid_out is not None else np.atleast_2d(np.asarray(out, dtype=float))

    if side == "kernel":
        quad = kernel_grid
        Y = quad.nodes()
        fixed = np.asarray(k_eval(Y), dtype=float) * quad.weights()
        probe = f_eval
        orientation = "kernel"
    else:
        quad = source_grid
        Y = quad.nodes()
        fixed = np.asarray(f_eval(Y), dtype=float) * quad.weights()
        probe = k_eval
        orientation = "source"

    total_abs = float(np.sum(np.abs(fixed)))
    if total_abs > 0.0 and tail_tol is not None:
        tail = float(np.sum(np.abs(fixed)[quad.boundary_mask()])) / total_abs
        if tail > tail_tol:
            raise GridTooSmall(
                f"convolution ({orientation} side): boundary shell fraction {tail:.2e}"
            )

    K = len(Y)
    m_chunk = chunk or max(1, int(2_500_000 // max(K, 1)))
    vals = np.empty(len(X))
    negY = -Y
    for start in range(0, len(X), m_chunk):
        sl = slice(start, min(start + m_chunk, len(X)))
        if side == "kernel":
            planes = product_planes(g, X[sl], negY)  # (m, K) planes of x y^-1
            F = _eval_planes(probe, planes)
            vals[sl] = F @ fixed
        else:
            planes = product_planes(g, negY, X[sl])  # (K, m) planes of y^-1 x
            F = _eval_planes(probe, planes)
            vals[sl] = fixed @ F
    if grid_out is not None:
        name_f = getattr(f, "provenance", None) or getattr(f, "name", "f")
        name_k = getattr(kappa, "provenance", None) or getattr(kappa, "name", "k")
        return SampledFunction(grid_out, vals, provenance=f"{name_f}*{name_k}")
    return vals if np.asarray(out).ndim > 1 else float(vals[0])


def convolve_batch(
    g: GroupSpec,
    f,
    kernel_matrix: np.ndarray,
    kernel_grid: GridSpec,
    out_points: np.ndarray,
    chunk: int | None = None,
) -> np.ndarray:
    """f convolved with several kernels sharing one grid.

    kernel_matrix has shape (grid size, M) and already includes quadrature
    weights; returns (len(out_points), M).  This is the fast path for
    dictionary sups, where the x y^-1 sweep dominates and is shared.
    """
    f_eval, _ = _as_evaluator(f)
    Y = kernel_grid.nodes()
    K = len(Y)
    m_chunk = chunk or max(1, int(2_500_000 // max(K, 1)))
    out = np.empty((len(out_points), kernel_matrix.shape[1]))
    negY = -Y
    for start in range(0, len(out_points), m_chunk):
        sl = slice(start, min(start + m_chunk, len(out_points)))
        planes = product_planes(g, out_points[sl], negY)
        F = _eval_planes(f_eval, planes)
        out[sl] = F @ kernel_matrix
    return out


def dilate_kernel(g: GroupSpec, kernel: KernelSpec, t: float) -> KernelSpec:
    """Exact reparametrization t^{-gamma} k(A_{1/t} x); no resampling."""
    return kernel.dilate(t)


def scale_fields(
    g: GroupSpec,
    f,
    kernel: KernelSpec,
    scales,
    out_grid: GridSpec,
    **kwargs,
) -> list[SampledFunction]:
    """Cached convolution fields f * k_t, one per scale node."""
    ts, _ = _scales_of(scales)
    return [convolve(g, f, kernel.dilate(float(t)), out_grid, **kwargs) for t in ts]


# --------------------------------------------------------------------------
# Square functions
# --------------------------------------------------------------------------


def g_function(
    g: GroupSpec,
    f,
    kernel: KernelSpec,
    scales,
    out_grid: GridSpec,
    fields: list[SampledFunction] | None = None,
    mass_warn_tol: float = 1e-3,
) -> SampledFunction:
    """Square function: sqrt of the dt/t quadrature of |f * k_t|^2."""
    ts, ws = _scales_of(scales)
    if kernel.moment_order < 0 and mass_warn_tol is not None:
        mass = abs(kernel.mass())
        ref = float(np.sum(kernel.base_grid.weights() * np.abs(kernel(kernel.base_grid.nodes()))))
        if ref > 0 and mass / ref > mass_warn_tol:
            warnings.warn(
                f"kernel {kernel.name} has nonvanishing mass {mass:.2e}; "
                "the square function will not behave like one",
                stacklevel=2,
            )
    if fields is None:
        fields = scale_fields(g, f, kernel, (ts, ws), out_grid)
    acc = np.zeros(out_grid.size)
    for w, fld in zip(ws, fields):
        acc += w * fld.values**2
    return SampledFunction(out_grid, np.sqrt(acc), provenance=f"g[{kernel.name}]")


def area_integral(
    g: GroupSpec,
    f,
    kernel: KernelSpec,
    scales,
    out_grid: GridSpec,
    field_grid: GridSpec | None = None,
    fields: list[SampledFunction] | None = None,
    chunk: int = 256,
) -> SampledFunction:
    """Cone-restricted square function on the output grid.

    Aggregates |f * k_t(y)|^2 t^{-gamma} over field nodes with
    rho(x^-1 y) < t, scale-weighted by the dt/t rule, then takes the root.
    Shares the per-scale fields with g_function when passed in.
    """
    ts, ws = _scales_of(scales)
    if field_grid is None:
        pad = (g.c0 * float(ts[-1])) ** g.exponents
        field_grid = out_grid.expand(pad)
    if fields is None:
        fields = scale_fields(g, f, kernel, (ts, ws), field_grid)
    nodes = field_grid.nodes()
    wf = field_grid.weights()
    payloads = [wf * fld.values**2 for fld in fields]
    X = out_grid.nodes()
    acc = np.zeros(len(X))
    for sl, D in _gauge_chunks(g, X, nodes, chunk):
        for t, w, payload in zip(ts, ws, payloads):
            mask = D < t
            acc[sl] += w * t ** (-g.gamma) * (mask @ payload)
    return SampledFunction(out_grid, np.sqrt(acc), provenance=f"S[{kernel.name}]")


def discrete_square(
    g: GroupSpec,
    f,
    kernel: KernelSpec,
    b: float,
    q: float,
    j_range: tuple[int, int],
    out_grid: GridSpec,
    fields: list[SampledFunction] | None = None,
) -> SampledFunction:
    """l^q aggregation of |f * k_{b^j}| over the j range."""
    if q <= 0:
        raise InvalidArgument("need q > 0")
    if not 0.0 < b < 1.0:
        raise InvalidArgument("need b in (0,1)")
    js = range(j_range[0], j_range[1] + 1)
    ts = [float(b) ** j for j in js]
    if fields is None:
        fields = [convolve(g, f, kernel.dilate(t), out_grid) for t in ts]
    acc = np.zeros(out_grid.size)
    for fld in fields:
        acc += np.abs(fld.values) ** q
    return SampledFunction(out_grid, acc ** (1.0 / q), provenance=f"dsq[{kernel.name}]")


# --------------------------------------------------------------------------
# Maximal functions
# --------------------------------------------------------------------------


@dataclass
class MaximalParams:
    """Peetre exponent N, scale R, optional r with N = gamma / r, search radius."""

    N: float
    R: float = 1.0
    r: float | None = None
    search_extent: float = 4.0

    def __post_init__(self):
        if self.N <= 0 or self.R <= 0 or self.search_extent <= 0:
            raise InvalidArgument("maximal parameters must be positive")
        if self.r is not None and self.r <= 0:
            raise InvalidArgument("need r > 0")


def ball_offsets(
    g: GroupSpec,
    radius: float,
    points: int = 13,
    scales=(1.0,),
) -> np.ndarray:
    """Union of dilated gauge-ball lattices around the origin (origin included)."""
    base = GridSpec.from_radius(g, radius, points)
    nodes = base.nodes()
    nodes = nodes[hom_norm(g, nodes) <= radius * 1.0001]
    parts = [nodes * (float(s) ** g.exponents) for s in scales]
    return np.unique(np.concatenate(parts), axis=0)


def peetre_max(
    g: GroupSpec,
    F: SampledFunction,
    params: MaximalParams,
    out_grid: GridSpec | None = None,
    offsets: np.ndarray | None = None,
    chunk: int | None = None,
) -> SampledFunction:
    """Discrete sup of |F(x y^-1)| / (1 + R rho(y))^N over grid offsets y.

    A lower-bound surrogate for the sup over the whole group; the truncation
    bound (1 + R * extent)^{-N} * sup|F| is recorded in the output metadata.
    """
    out_grid = out_grid or F.grid
    if offsets is None:
        offsets = ball_offsets(
            g, params.search_extent, scales=(1.0, min(1.0, 1.0 / params.R))
        )
    damp = (1.0 + params.R * hom_norm(g, offsets)) ** (-params.N)
    X = out_grid.nodes()
    K = len(offsets)
    m_chunk = chunk or max(1, int(2_000_000 // max(K, 1)))
    vals = np.empty(len(X))
    negO = -offsets
    for start in range(0, len(X), m_chunk):
        sl = slice(start, min(start + m_chunk, len(X)))
        planes = product_planes(g, X[sl], negO)
        FV = np.abs(_eval_planes(F, planes))
        FV *= damp[None, :]
        vals[sl] = np.max(FV, axis=1)
    out = SampledFunction(out_grid, vals, provenance=f"peetre[{F.provenance}]")
    out.meta["truncation_bound"] = float(
        (1.0 + params.R * params.search_extent) ** (-params.N) * F.sup_norm()
    )
    return out


def _gauge_chunks(g: GroupSpec, X: np.ndarray, Y: np.ndarray, chunk: int):
    """Yields (slice, D) with D[i, j] = rho(X_i^{-1} Y_j), the left-invariant
    distance between X_i and Y_j (equal to rho(Y_j^{-1} X_i) by inverse
    symmetry of the gauge)."""
    for start in range(0, len(X), chunk):
        sl = slice(start, min(start + chunk, len(X)))
        planes = product_planes(g, -X[sl], Y)
        yield sl, gauge_from_coords(g, planes)


def ball_averages(
    g: GroupSpec,
    field_grid: GridSpec,
    payloads: list[np.ndarray],
    centers: np.ndarray,
    radii: np.ndarray,
    chunk: int = 512,
) -> np.ndarray:
    """Averages of each payload over the gauge balls B(center, radius).

    Returns (n_centers, n_radii, n_payloads); empty balls yield zero.  The
    measure of a ball is the summed quadrature weight of its member nodes,
    so constants average to themselves exactly.
    """
    nodes = field_grid.nodes()
    w = field_grid.weights()
    stack = np.stack([w * p for p in payloads], axis=1)
    out = np.zeros((len(centers), len(radii), len(payloads)))
    for sl, D in _gauge_chunks(g, centers, nodes, chunk):
        for ri, r in enumerate(radii):
            mask = (D < r).astype(float)
            den = mask @ w
            num = mask @ stack
            good = den > 0
            out[sl, ri, :] = np.where(good[:, None], num / np.maximum(den, 1e-300)[:, None], 0.0)
    return out


def hl_maximal(
    g: GroupSpec,
    F: SampledFunction,
    radii,
    out_grid: GridSpec | None = None,
    centers: np.ndarray | None = None,
    chunk: int = 512,
) -> SampledFunction:
    """Centered-family surrogate of the maximal average sup_{B containing x}.

    Balls run over (centers x radii); a ball counts for x when
    rho(x^-1 c) < r.  Centers default to the output nodes, so every x sees
    in particular the balls centered at itself.
    """
    out_grid = out_grid or F.grid
    radii = np.asarray(sorted(radii), dtype=float)
    if np.any(radii <= 0):
        raise InvalidArgument("radii must be positive")
    X = out_grid.nodes()
    centers = X if centers is None else np.asarray(centers, dtype=float)
    avg = ball_averages(g, F.grid, [np.abs(F.values)], centers, radii, chunk)[:, :, 0]
    vals = np.zeros(len(X))
    for sl, D in _gauge_chunks(g, X, centers, chunk):
        for ri, r in enumerate(radii):
            inside = D < r
            contrib = np.where(inside, avg[None, :, ri], 0.0)
            vals[sl] = np.maximum(vals[sl], np.max(contrib, axis=1))
    return SampledFunction(out_grid, vals, provenance=f"M[{F.provenance}]")


def default_dictionary(g: GroupSpec, N: int, size: int = 8) -> list[KernelSpec]:
    """Normalized test-function dictionary for the grand maximal surrogate.

    Bump, coordinate-modulated bumps, a quadratic and a mixed modulation,
    one sign-oscillating cubic member, and a wide bump; all scaled to unit
    weighted-derivative seminorm at level N.
    """
    members: list[KernelSpec] = [unit_bump(g)]
    for k in range(g.n):
        mono = tuple(1 if i == k else 0 for i in range(g.n))
        members.append(poly_modulated_bump(g, mono, name=f"x{k + 1}bump"))
    e1 = tuple(2 if i == 0 else 0 for i in range(g.n))
    members.append(poly_modulated_bump(g, e1, name="x1x1bump"))
    if g.n >= 2:
        mixed = tuple(1 if i in (0, 1) else 0 for i in range(g.n))
        members.append(poly_modulated_bump(g, mixed, name="x1x2bump"))
    osc = PolyGauss.gaussian(g.n).mul_poly(
        Poly.monomial(tuple(3 if i == 0 else 0 for i in range(g.n)))
        - Poly.monomial(tuple(1 if i == 0 else 0 for i in range(g.n)), 1.5)
    )
    members.append(KernelSpec(g, osc, "oscbump", symbolic=osc))
    members.append(gaussian_wide(g))
    members = members[:size]
    return [m.normalized(N) for m in members]


def gaussian_wide(g: GroupSpec) -> KernelSpec:
    sym = PolyGauss.gaussian(g.n, c=0.35)
    return KernelSpec(g, sym, "widebump", symbolic=sym)


def grand_maximal(
    g: GroupSpec,
    f,
    dictionary: list[KernelSpec],
    N: int,
    scales,
    out_grid: GridSpec,
    seminorm_tol: float = 1e-6,
) -> SampledFunction:
    """Lower-bound surrogate of the grand maximal function.

    Sup of |f * K_t| over the (finite) dictionary and the scale nodes.  All
    members must share the base quadrature grid and satisfy the seminorm
    normalization; the sweep shares one x y^-1 pass per scale across the
    whole dictionary.
    """
    if not dictionary:
        raise InvalidDictionary("empty dictionary")
    base = dictionary[0].base_grid
    for m in dictionary:
        if not m.base_grid.same_geometry(base):
            raise InvalidDictionary("dictionary members must share one base grid")
        if m.seminorm(N) > 1.0 + seminorm_tol:
            raise InvalidDictionary(f"member {m.name} is not normalized at level {N}")
    ts, _ = _scales_of(scales)
    nodes = base.nodes()
    V = np.stack([m(nodes) for m in dictionary], axis=1) * base.weights()[:, None]
    X = out_grid.nodes()
    best = np.zeros(len(X))
    for t in ts:
        # kernel values at the dilated nodes times dilated weights reduce to
        # the undilated matrix: K_t(A_t y) w_t(A_t y) = K(y) w(y)
        grid_t = base.dilate(float(t))
        conv = convolve_batch(g, f, V, grid_t, X)
        best = np.maximum(best, np.max(np.abs(conv), axis=1))
    name = getattr(f, "name", getattr(f, "provenance", "f"))
    return SampledFunction(out_grid, best, provenance=f"grandmax[{name}]")


# --------------------------------------------------------------------------
# Scaling operator
# --------------------------------------------------------------------------


def scale_op(g: GroupSpec, t: float, f):
    """(T_t f)(x) = f(A_t x) as an exact reparametrization."""
    if t <= 0:
        raise InvalidArgument("need t > 0")
    if isinstance(f, SampledFunction):
        return SampledFunction(f.grid.dilate(1.0 / t), f.values.copy(),
                               provenance=f"T{t:g}[{f.provenance}]")
    if isinstance(f, KernelSpec):
        return f.reparametrized(float(t) ** g.exponents, f"T{t:g}[{f.name}]")
    texp = float(t) ** g.exponents
    return lambda pts, _f=f, _s=texp: _f(np.asarray(pts, dtype=float) * _s)


# --------------------------------------------------------------------------
# Weights
# --------------------------------------------------------------------------


@dataclass
class WeightSpec:
    """Strictly positive density with its intended Muckenhoupt class."""

    name: str
    evaluator: object
    p_class: float | None = None

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        vals = np.asarray(self.evaluator(grid.nodes()), dtype=float)
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise InvalidArgument(f"weight {self.name} is not strictly positive on the grid")
        return vals


def unit_weight() -> WeightSpec:
    return WeightSpec("1", lambda pts: np.ones(np.asarray(pts).shape[0]))


def power_weight(g: GroupSpec, alpha: float, floor: float = 1e-2,
                 p_class: float | None = None) -> WeightSpec:
    """rho^alpha with the gauge floored near the origin (integrable there for
    alpha > -gamma; the floor keeps the origin node finite)."""

    def ev(pts):
        return np.maximum(hom_norm(g, np.asarray(pts, dtype=float)), floor) ** alpha

    return WeightSpec(f"rho^{alpha:g}", ev, p_class)


def weighted_lp_norm(F: SampledFunction, w: WeightSpec | None, p: float) -> float:
    """(integral |F|^p w)^(1/p) on F's grid (quasi-norm for p < 1)."""
    if p <= 0:
        raise InvalidArgument("need p > 0")
    wv = w.on_grid(F.grid) if w is not None else 1.0
    return float(np.sum(F.grid.weights() * wv * np.abs(F.values) ** p) ** (1.0 / p))


def ap_constant(
    g: GroupSpec,
    w: WeightSpec,
    p: float,
    field_grid: GridSpec,
    centers: np.ndarray | None = None,
    radii=None,
) -> float:
    """Sampled sup of (avg_B w) (avg_B w^{-1/(p-1)})^{p-1} over a ball family."""
    if p <= 1:
        raise InvalidArgument("the weight class needs p > 1")
    wv = w.on_grid(field_grid)
    dual = wv ** (-1.0 / (p - 1.0))
    if centers is None:
        step = max(1, field_grid.size // 600)
        centers = field_grid.nodes()[::step]
    if radii is None:
        radii = np.geomspace(float(np.min(field_grid.steps)) * 2, float(np.min(field_grid.extents)), 8)
    avgs = ball_averages(g, field_grid, [wv, dual], centers, np.asarray(radii))
    ratios = avgs[:, :, 0] * avgs[:, :, 1] ** (p - 1.0)
    return float(np.max(ratios))


def np_for(g: GroupSpec, p: float, lattice: HomogeneityLattice | None = None) -> int:
    """Smallest admissible integer derivative order for the p-range norm."""
    if not 0.0 < p <= 1.0:
        raise InvalidArgument("need 0 < p <= 1")
    lattice = lattice or HomogeneityLattice.build(g, cutoff=max(16.0, g.gamma * (1 / p - 1) + 4))
    threshold = g.gamma * (1.0 / p - 1.0)
    m = a_bar(lattice, threshold)
    return int(math.ceil(m - 1e-9))
