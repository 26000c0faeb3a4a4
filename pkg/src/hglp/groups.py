"""Homogeneous groups with diagonal dilations.

A group here is R^n with a polynomial multiplication whose k-th coordinate is
x_k + y_k + R_k(x, y), where R_k mixes only lower coordinates and every term
c * x^I y^J is balanced in homogeneous degree: a(I) + a(J) = a_k.  The
dilations A_t x = (t^{a_1} x_1, ..., t^{a_n} x_n) are then automorphisms and
Lebesgue measure is a bi-invariant Haar measure.

The gauge rho is defined implicitly: rho(x) is the unique t > 0 with
|A_{1/t} x| = 1 in the Euclidean norm, so the unit sphere of rho is S^{n-1}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GroupSpecInvalid, InvalidArgument, NumericFailure
from .polynomials import Poly

__all__ = [
    "StructureTerm",
    "GroupSpec",
    "PolarQuadrature",
    "abelian",
    "heisenberg",
    "group_from_name",
    "multiply",
    "inverse",
    "dilate",
    "hom_norm",
    "product_planes",
    "gauge_from_coords",
    "polar_quadrature",
    "polar_integrate",
    "validate_group",
    "ValidationReport",
]


@dataclass(frozen=True)
class StructureTerm:
    """One monomial c * x^I * y^J feeding coordinate k of the product."""

    k: int
    coeff: float
    I: tuple[int, ...]
    J: tuple[int, ...]


class GroupSpec:
    """Dimension, dilation exponents and structure polynomials of one group."""

    def __init__(
        self,
        exponents: list[float],
        structure_terms: list[StructureTerm] | None = None,
        name: str = "custom",
        c0: float = 1.0,
    ):
        self.n = len(exponents)
        if self.n < 1:
            raise InvalidArgument("need dimension >= 1")
        self.exponents = np.asarray(exponents, dtype=float)
        if abs(self.exponents[0] - 1.0) > 0:
            raise InvalidArgument("first dilation exponent must equal 1")
        if np.any(np.diff(self.exponents) < 0):
            raise InvalidArgument("dilation exponents must be nondecreasing")
        self.gamma = float(np.sum(self.exponents))
        self.name = name
        self.c0 = float(c0)
        self.structure_terms = tuple(structure_terms or ())
        for term in self.structure_terms:
            if term.k <= 0 or term.k >= self.n:
                raise InvalidArgument(f"structure term targets coordinate {term.k}")
            if sum(term.I) == 0 or sum(term.J) == 0:
                raise InvalidArgument("structure terms need |I| != 0 and |J| != 0")
            if any(term.I[j] and j >= term.k for j in range(self.n)) or any(
                term.J[j] and j >= term.k for j in range(self.n)
            ):
                raise InvalidArgument("structure terms may only use lower coordinates")
            aI = float(np.dot(term.I, self.exponents))
            aJ = float(np.dot(term.J, self.exponents))
            if abs(aI + aJ - self.exponents[term.k]) > 1e-12:
                raise InvalidArgument(
                    f"unbalanced structure term on coordinate {term.k}: "
                    f"a(I)+a(J)={aI + aJ} != {self.exponents[term.k]}"
                )
        self._isotropic = bool(np.all(self.exponents == 1.0))
        ones = [k for k in range(self.n) if self.exponents[k] == 1.0]
        twos = [k for k in range(self.n) if self.exponents[k] == 2.0]
        self._two_level = (ones, twos) if len(ones) + len(twos) == self.n and twos else None

    # -- basic predicates -------------------------------------------------

    @property
    def is_abelian(self) -> bool:
        return len(self.structure_terms) == 0

    def hom_degree(self, index) -> float:
        """Homogeneous degree a(I) = sum a_k * i_k of a multi-index."""
        index = np.asarray(index, dtype=float)
        if index.shape[-1] != self.n:
            raise InvalidArgument("multi-index length mismatch")
        return float(np.dot(index, self.exponents))

    # -- structure polynomials as Poly objects ----------------------------

    def product_polys(self) -> list[Poly]:
        """Coordinates of x*y as polynomials in 2n variables (x then y)."""
        out = []
        for k in range(self.n):
            p = Poly(2 * self.n, {})
            p = p + Poly.coordinate(2 * self.n, k)
            p = p + Poly.coordinate(2 * self.n, self.n + k)
            for term in self.structure_terms:
                if term.k != k:
                    continue
                mono = tuple(term.I) + tuple(term.J)
                p = p + Poly(2 * self.n, {mono: term.coeff})
            out.append(p)
        return out

    def left_translation_polys(self, x0: np.ndarray) -> list[Poly]:
        """Coordinates of x0 * y as polynomials in y (n variables)."""
        x0 = np.asarray(x0, dtype=float)
        out = []
        for k in range(self.n):
            p = Poly.const(self.n, float(x0[k])) + Poly.coordinate(self.n, k)
            for term in self.structure_terms:
                if term.k != k:
                    continue
                cx = term.coeff * float(np.prod(x0 ** np.asarray(term.I)))
                if cx != 0.0:
                    p = p + Poly(self.n, {tuple(term.J): cx})
            out.append(p)
        return out

    def right_translation_polys(self, y0: np.ndarray) -> list[Poly]:
        """Coordinates of x * y0 as polynomials in x."""
        y0 = np.asarray(y0, dtype=float)
        out = []
        for k in range(self.n):
            p = Poly.const(self.n, float(y0[k])) + Poly.coordinate(self.n, k)
            for term in self.structure_terms:
                if term.k != k:
                    continue
                cy = term.coeff * float(np.prod(y0 ** np.asarray(term.J)))
                if cy != 0.0:
                    p = p + Poly(self.n, {tuple(term.I): cy})
            out.append(p)
        return out

    def dilation_polys(self, t: float) -> list[Poly]:
        """Coordinates of A_t x as (monomial) polynomials in x."""
        return [
            Poly(self.n, {tuple(1 if i == k else 0 for i in range(self.n)): t ** self.exponents[k]})
            for k in range(self.n)
        ]

    # -- vector-field coefficients ----------------------------------------

    def left_field_coeffs(self, j: int) -> dict[int, Poly]:
        """Polynomial coefficients q_{jk}(x) of X_j = d_j + sum_k q_{jk} d_k.

        X_j f(x) = [d/dt f(x (t e_j))]_{t=0}; the coefficient on d_k picks the
        structure terms of coordinate k with J = e_j.
        """
        coeffs: dict[int, Poly] = {}
        for term in self.structure_terms:
            if sum(term.J) == 1 and term.J[j] == 1:
                p = Poly(self.n, {tuple(term.I): term.coeff})
                coeffs[term.k] = coeffs.get(term.k, Poly.zero(self.n)) + p
        return coeffs

    def right_field_coeffs(self, j: int) -> dict[int, Poly]:
        """Same for Y_j = d_j + sum_k q_{jk} d_k with I = e_j terms."""
        coeffs: dict[int, Poly] = {}
        for term in self.structure_terms:
            if sum(term.I) == 1 and term.I[j] == 1:
                p = Poly(self.n, {tuple(term.J): term.coeff})
                coeffs[term.k] = coeffs.get(term.k, Poly.zero(self.n)) + p
        return coeffs

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        polys: dict[int, list] = {}
        for t in self.structure_terms:
            polys.setdefault(t.k + 1, []).append(
                {"coeff": t.coeff, "I": list(t.I), "J": list(t.J)}
            )
        doc = {
            "n": self.n,
            "exponents": [float(a) for a in self.exponents],
            "structure_polys": [
                {"k": k, "terms": terms} for k, terms in sorted(polys.items())
            ],
            "name": self.name,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GroupSpec":
        doc = json.loads(text)
        terms = []
        for entry in doc.get("structure_polys", []):
            k = int(entry["k"]) - 1
            for t in entry["terms"]:
                terms.append(StructureTerm(k, float(t["coeff"]), tuple(t["I"]), tuple(t["J"])))
        return cls(doc["exponents"], terms, name=doc.get("name", "custom"))

    def __repr__(self) -> str:
        return f"GroupSpec({self.name}, n={self.n}, a={list(self.exponents)}, gamma={self.gamma})"


def abelian(n: int, exponents: list[float] | None = None) -> GroupSpec:
    """R^n with vector addition; isotropic dilations unless exponents given."""
    exps = [1.0] * n if exponents is None else list(exponents)
    return GroupSpec(exps, [], name=f"abelian:{n}")


def heisenberg() -> GroupSpec:
    """The 3-dimensional group with (x1,x2) * twist feeding x3."""
    terms = [
        StructureTerm(2, +0.5, (1, 0, 0), (0, 1, 0)),
        StructureTerm(2, -0.5, (0, 1, 0), (1, 0, 0)),
    ]
    return GroupSpec([1.0, 1.0, 2.0], terms, name="heisenberg")


def group_from_name(name: str) -> GroupSpec:
    """Resolve 'abelian:n' / 'heisenberg' to a built-in GroupSpec."""
    name = name.strip().lower()
    if name == "heisenberg":
        return heisenberg()
    if name.startswith("abelian:"):
        return abelian(int(name.split(":", 1)[1]))
    raise InvalidArgument(f"unknown group name {name!r}")


# --------------------------------------------------------------------------
# Group operations (vectorized over leading axes)
# --------------------------------------------------------------------------


def _check_dim(g: GroupSpec, x: np.ndarray, who: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != g.n:
        raise InvalidArgument(f"{who}: expected last axis {g.n}, got {x.shape[-1]}")
    return x


def multiply(g: GroupSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Group product; x, y broadcast over leading axes, last axis is coords."""
    x = _check_dim(g, x, "multiply x")
    y = _check_dim(g, y, "multiply y")
    z = x + y
    if g.structure_terms:
        # evaluated in increasing k; terms only read the raw x, y coordinates
        for term in g.structure_terms:
            mono = np.full(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]), term.coeff)
            for j, e in enumerate(term.I):
                if e == 1:
                    mono = mono * x[..., j]
                elif e > 1:
                    mono = mono * x[..., j] ** e
            for j, e in enumerate(term.J):
                if e == 1:
                    mono = mono * y[..., j]
                elif e > 1:
                    mono = mono * y[..., j] ** e
            z[..., term.k] = z[..., term.k] + mono
    return z


def inverse(x: np.ndarray) -> np.ndarray:
    """Group inverse is coordinate negation."""
    return -np.asarray(x, dtype=float)


def product_planes(g: GroupSpec, X: np.ndarray, Y: np.ndarray) -> list[np.ndarray]:
    """Coordinates of X_i * Y_j as n contiguous (len(X), len(Y)) planes.

    The convolution sweeps live on these planes: outer sums plus one outer
    product per structure term keep every pass contiguous, which is what the
    per-node quadrature spends its time on.
    """
    planes = [np.add.outer(X[:, k], Y[:, k]) for k in range(g.n)]
    for term in g.structure_terms:
        a = np.full(len(X), term.coeff)
        for j, e in enumerate(term.I):
            if e == 1:
                a = a * X[:, j]
            elif e > 1:
                a = a * X[:, j] ** e
        b = np.ones(len(Y))
        for j, e in enumerate(term.J):
            if e == 1:
                b = b * Y[:, j]
            elif e > 1:
                b = b * Y[:, j] ** e
        planes[term.k] += np.multiply.outer(a, b)
    return planes


def dilate(g: GroupSpec, t: float, x: np.ndarray) -> np.ndarray:
    """A_t x = (t^{a_k} x_k)."""
    if t <= 0:
        raise InvalidArgument("dilation parameter must be positive")
    x = _check_dim(g, x, "dilate")
    return x * (float(t) ** g.exponents)


def hom_norm(g: GroupSpec, x: np.ndarray) -> np.ndarray:
    """Gauge rho(x): unique t > 0 with |A_{1/t} x| = 1, rho(0) = 0.

    For isotropic exponents this is the Euclidean norm.  Otherwise the root
    of F(t) = sum x_k^2 t^{-2 a_k} - 1 is found by bracketed Newton iteration:
    F is decreasing and convex, so Newton from the left bracket endpoint
    t0 = max_k |x_k|^{1/a_k} converges monotonically.  Relative tolerance
    1e-12 before hitting the iteration cap.
    """
    x = _check_dim(g, x, "hom_norm")
    scalar = x.ndim == 1
    coords = [np.ascontiguousarray(np.atleast_2d(x)[..., k]) for k in range(g.n)]
    rho = gauge_from_coords(g, coords)
    return rho.reshape(x.shape[:-1]) if not scalar else float(rho.reshape(-1)[0])


def gauge_from_coords(g: GroupSpec, coords: list[np.ndarray]) -> np.ndarray:
    """Gauge evaluated from per-coordinate arrays (any common shape).

    Isotropic exponents reduce to the Euclidean norm and the two-level
    pattern a_k in {1, 2} has the closed form t^2 = (q + sqrt(q^2 + 4 z)) / 2
    with q, z the squared masses of the two strata (same root, evaluated
    exactly); otherwise a monotone Newton iteration from the bracket
    endpoint max_k |x_k|^{1/a_k} is used, to relative tolerance 1e-12.
    """
    if g._isotropic:
        acc = coords[0] ** 2
        for c in coords[1:]:
            acc += c**2
        return np.sqrt(acc, out=acc)
    if g._two_level is not None:
        ones, twos = g._two_level
        q = np.zeros(np.broadcast_shapes(*(np.shape(c) for c in coords)))
        for k in ones:
            q += coords[k] ** 2
        z = np.zeros_like(q)
        for k in twos:
            z += coords[k] ** 2
        disc = np.sqrt(q * q + 4.0 * z)
        return np.sqrt(0.5 * (q + disc))
    x2 = [c.astype(float) ** 2 for c in coords]
    t0 = x2[0] ** (0.5 / g.exponents[0])
    for k in range(1, g.n):
        np.maximum(t0, x2[k] ** (0.5 / g.exponents[k]), out=t0)
    nonzero = t0 > 0.0
    t = np.where(nonzero, t0, 1.0)
    a2 = 2.0 * g.exponents
    for _ in range(60):
        F = np.full(t.shape, -1.0)
        mdF = np.zeros(t.shape)
        for k in range(g.n):
            term = x2[k] / t ** a2[k]
            F += term
            mdF += a2[k] * term
        mdF /= t
        t_new = t + np.where(nonzero, F / np.maximum(mdF, 1e-300), 0.0)
        moved = np.max(np.abs(t_new - t) / np.maximum(t, 1e-300))
        t = t_new
        if moved < 1e-14:
            break
    rho = np.where(nonzero, t, 0.0)
    if not np.all(np.isfinite(rho)):
        raise NumericFailure("hom_norm produced non-finite values")
    return rho


# --------------------------------------------------------------------------
# Polar quadrature
# --------------------------------------------------------------------------


@dataclass
class PolarQuadrature:
    """Sphere nodes/weights (carrying the area density) plus a radial grid.

    sphere_weights absorb both the Lebesgue surface element of S^{n-1} and
    the anisotropy density, so integrals read sum_theta sum_t w_theta w_t
    f(A_t theta) with w_t = t^gamma * (log-spacing weight).
    """

    sphere_nodes: np.ndarray
    sphere_weights: np.ndarray
    radial_nodes: np.ndarray
    radial_weights: np.ndarray
    group: GroupSpec = field(repr=False, default=None)


def _sphere_grid(n: int, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Product quadrature on S^{n-1}: Gauss-Legendre in polar angles, uniform
    in the final azimuthal angle.  Returns nodes (N, n) and Lebesgue surface
    weights (N,)."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        m = max(8, 4 * resolution)
        phi = np.arange(m) * (2 * np.pi / m)
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return nodes, np.full(m, 2 * np.pi / m)
    # recursive product: x = (cos(phi) , sin(phi) * y), y on S^{n-2},
    # surface measure sin^{n-2}(phi) dphi dS_{n-2}
    sub_nodes, sub_w = _sphere_grid(n - 1, resolution)
    m = max(8, 4 * resolution)
    xs, ws = np.polynomial.legendre.leggauss(m)
    phi = np.arccos(xs)  # GL in cos(phi) removes one sine factor
    sinphi = np.sqrt(1.0 - xs**2)
    nodes = []
    weights = []
    for p, s, w in zip(phi, sinphi, ws):
        block = np.concatenate(
            [np.full((len(sub_nodes), 1), np.cos(p)), s * sub_nodes], axis=1
        )
        nodes.append(block)
        # dS = sin^{n-2} dphi dS'; with u = cos(phi), du = -sin dphi, so
        # sin^{n-2} dphi = sin^{n-3} du; n=3 gives plain du.
        weights.append(w * s ** (n - 3) * sub_w)
    return np.concatenate(nodes), np.concatenate(weights)


def polar_quadrature(
    g: GroupSpec,
    radius: float = 8.0,
    radial_points: int = 160,
    sphere_resolution: int = 8,
    inner_ratio: float = 1e-4,
) -> PolarQuadrature:
    """Build the polar rule for integrals over {rho <= radius}.

    The anisotropy density on the sphere is the Jacobian of (t, theta) ->
    A_t theta at t = 1, evaluated numerically as |det[D theta, v_1, ...,
    v_{n-1}]| with D = diag(a_k) and v_i an orthonormal tangent frame.
    """
    theta, w0 = _sphere_grid(g.n, sphere_resolution)
    dens = np.empty(len(theta))
    for i, th in enumerate(theta):
        if g.n == 1:
            dens[i] = abs(g.exponents[0] * th[0])
            continue
        # orthonormal tangent frame at th: SVD rows orthogonal to th
        _, _, vh = np.linalg.svd(np.atleast_2d(th))
        mat = np.column_stack([g.exponents * th] + [vh[j] for j in range(1, g.n)])
        dens[i] = abs(np.linalg.det(mat))
    sphere_w = w0 * dens
    # geometric radial grid on (inner_ratio * radius, radius]
    s = np.linspace(math.log(radius * inner_ratio), math.log(radius), radial_points)
    t = np.exp(s)
    wt = np.full(radial_points, s[1] - s[0])
    wt[0] *= 0.5
    wt[-1] *= 0.5
    radial_w = wt * t**g.gamma  # t^{gamma-1} dt = t^gamma d(log t)
    return PolarQuadrature(theta, sphere_w, t, radial_w, group=g)


def polar_integrate(g: GroupSpec, f, quad: PolarQuadrature) -> float:
    """Integral of f over {rho <= R} using the polar rule."""
    pts = quad.radial_nodes[:, None, None] ** g.exponents * quad.sphere_nodes[None, :, :]
    vals = np.asarray(f(pts.reshape(-1, g.n)), dtype=float).reshape(pts.shape[:2])
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise NumericFailure(
            f"non-finite integrand at t={quad.radial_nodes[bad[0]]:g}, node {bad[1]}"
        )
    return float(np.sum(quad.radial_weights[:, None] * quad.sphere_weights[None, :] * vals))


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass
class ValidationReport:
    group: str
    associativity_defect: float
    automorphism_defect: float
    scaling_defect: float
    identity_defect: float
    inverse_defect: float
    norm_homogeneity_defect: float
    norm_symmetry_defect: float
    haar_defect: float
    c0_hat: float

    def max_algebra_defect(self) -> float:
        return max(
            self.associativity_defect,
            self.automorphism_defect,
            self.scaling_defect,
            self.identity_defect,
            self.inverse_defect,
        )


def validate_group(
    g: GroupSpec,
    sample_count: int = 10_000,
    seed: int = 0,
    haar_grid: int = 33,
    margin: float = 1.05,
    hard_threshold: float = 1e-9,
) -> ValidationReport:
    """Sample-based check of the group axioms; stores the fitted c0 on g.

    Raises GroupSpecInvalid when the algebraic defects exceed hard_threshold
    (they are exact polynomial identities, so anything above rounding noise
    means the structure terms are wrong).
    """
    if sample_count < 1:
        raise InvalidArgument("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-5, 5, size=(sample_count, g.n))
    y = rng.uniform(-5, 5, size=(sample_count, g.n))
    z = rng.uniform(-5, 5, size=(sample_count, g.n))
    t = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))

    assoc = float(
        np.max(np.abs(multiply(g, multiply(g, x, y), z) - multiply(g, x, multiply(g, y, z))))
    )
    auto = float(
        np.max(
            np.abs(dilate(g, t, multiply(g, x, y)) - multiply(g, dilate(g, t, x), dilate(g, t, y)))
        )
    )
    s = 1.7
    scaling = float(np.max(np.abs(dilate(g, s, dilate(g, t, x)) - dilate(g, s * t, x))))
    ident = float(np.max(np.abs(multiply(g, x, np.zeros(g.n)) - x)))
    inv = float(np.max(np.abs(multiply(g, x, inverse(x)))))

    rho_x = hom_norm(g, x)
    rho_sx = hom_norm(g, dilate(g, 3.0, x))
    hom_defect = float(np.max(np.abs(rho_sx - 3.0 * rho_x) / np.maximum(3.0 * rho_x, 1e-30)))
    sym_defect = float(np.max(np.abs(hom_norm(g, inverse(x)) - rho_x)))

    rho_y = hom_norm(g, y)
    ratios = hom_norm(g, multiply(g, x, y)) / np.maximum(rho_x + rho_y, 1e-30)
    # axis-aligned and antipodal pairs stress the quasi-triangle constant
    extremes = []
    for k in range(g.n):
        e = np.zeros(g.n)
        e[k] = 5.0
        extremes.extend([(e, e), (e, -e)])
    for ex, ey in extremes:
        ratios = np.append(
            ratios,
            hom_norm(g, multiply(g, ex, ey)) / max(hom_norm(g, ex) + hom_norm(g, ey), 1e-30),
        )
    c0_hat = float(np.max(ratios))
    g.c0 = max(1.0, c0_hat * margin)

    haar = _haar_defect(g, haar_grid)

    report = ValidationReport(
        group=g.name,
        associativity_defect=assoc,
        automorphism_defect=auto,
        scaling_defect=scaling,
        identity_defect=ident,
        inverse_defect=inv,
        norm_homogeneity_defect=hom_defect,
        norm_symmetry_defect=sym_defect,
        haar_defect=haar,
        c0_hat=c0_hat,
    )
    if report.max_algebra_defect() > hard_threshold:
        raise GroupSpecInvalid(f"algebraic defect {report.max_algebra_defect():.3e} on {g.name}")
    return report


def _haar_defect(g: GroupSpec, points_per_axis: int) -> float:
    """|int f(a y) dy - int f| / int |f| for a translated Gaussian, trapezoid grid.

    The integrand decays like a Euclidean Gaussian, so the quadrature box is
    a cube; a rho-adapted box would undersample the higher-exponent axes.
    """
    from .grids import GridSpec  # local import to avoid a cycle

    grid = GridSpec(g, [7.0] * g.n, points_per_axis)
    a = np.full(g.n, 0.4)
    nodes = grid.nodes()
    f0 = np.exp(-np.sum(nodes**2, axis=-1))
    shifted = multiply(g, a, nodes)
    fa = np.exp(-np.sum(shifted**2, axis=-1))
    w = grid.weights()
    base = float(np.sum(w * f0))
    trans = float(np.sum(w * fa))
    return abs(trans - base) / float(np.sum(w * np.abs(f0)))
