"""Anisotropic Cartesian grids, sampled fields, interpolation and field IO."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .groups import GroupSpec

__all__ = ["GridSpec", "SampledFunction"]


class GridSpec:
    """Symmetric anisotropic lattice with trapezoid quadrature weights.

    Axis k spans [-extent_k, extent_k] with an odd point count, so the origin
    is always a node.  from_radius() sets extent_k = R^{a_k}, matching the
    anisotropy of the dilations.
    """

    def __init__(self, group: GroupSpec, extents, points):
        self.group = group
        self.extents = np.asarray(extents, dtype=float)
        if np.isscalar(points):
            points = [int(points)] * group.n
        self.points = tuple(int(m) for m in points)
        if len(self.extents) != group.n or len(self.points) != group.n:
            raise InvalidArgument("extents/points length must match group dimension")
        if any(m < 3 or m % 2 == 0 for m in self.points):
            raise InvalidArgument("per-axis point counts must be odd and >= 3")
        if np.any(self.extents <= 0):
            raise InvalidArgument("extents must be positive")
        self.axes = [np.linspace(-e, e, m) for e, m in zip(self.extents, self.points)]
        self.steps = np.array([ax[1] - ax[0] for ax in self.axes])
        self._nodes: np.ndarray | None = None
        self._weights: np.ndarray | None = None

    @classmethod
    def from_radius(cls, group: GroupSpec, radius: float, points) -> "GridSpec":
        extents = radius ** group.exponents
        return cls(group, extents, points)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    def nodes(self) -> np.ndarray:
        """All lattice points, shape (size, n), row-major in axis order."""
        if self._nodes is None:
            mesh = np.meshgrid(*self.axes, indexing="ij")
            self._nodes = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        return self._nodes

    def weights(self) -> np.ndarray:
        """Flattened tensor-product trapezoid weights."""
        if self._weights is None:
            per_axis = []
            for ax, h in zip(self.axes, self.steps):
                w = np.full(len(ax), h)
                w[0] *= 0.5
                w[-1] *= 0.5
                per_axis.append(w)
            w = per_axis[0]
            for wa in per_axis[1:]:
                w = np.multiply.outer(w, wa)
            self._weights = w.reshape(-1)
        return self._weights

    def dilate(self, t: float) -> "GridSpec":
        """Image grid A_t(self); same counts, extents scaled by t^{a_k}."""
        if t <= 0:
            raise InvalidArgument("dilation parameter must be positive")
        return GridSpec(self.group, self.extents * t**self.group.exponents, self.points)

    def expand(self, pad) -> "GridSpec":
        """Additive enlargement of the extents (same point counts)."""
        return GridSpec(self.group, self.extents + np.asarray(pad, dtype=float), self.points)

    def refine(self, factor: float) -> "GridSpec":
        pts = [int(2 * round((m * factor) // 2) + 1) for m in self.points]
        return GridSpec(self.group, self.extents, pts)

    def interpolate(self, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Multilinear interpolation of a flat value array; zero outside."""
        pts = np.asarray(pts, dtype=float)
        coords = [np.ascontiguousarray(pts[..., k]) for k in range(self.group.n)]
        return self.interpolate_coords(values, coords)

    def interpolate_coords(self, values: np.ndarray, coords: list[np.ndarray]) -> np.ndarray:
        """Multilinear interpolation from per-coordinate arrays; zero outside."""
        n = self.group.n
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
        flatc = [np.broadcast_to(c, shape).reshape(-1) for c in coords]
        idx = []
        frac = []
        inside = np.ones(shape, dtype=bool).reshape(-1)
        for k in range(n):
            x = (flatc[k] + self.extents[k]) / self.steps[k]
            inside &= (x >= 0.0) & (x <= self.points[k] - 1)
            xc = np.clip(x, 0.0, self.points[k] - 1 - 1e-12)
            i0 = np.floor(xc).astype(np.int64)
            np.minimum(i0, self.points[k] - 2, out=i0)
            idx.append(i0)
            frac.append(xc - i0)
        flat_vals = values.reshape(-1)
        out = np.zeros(len(flatc[0]))
        for corner in range(1 << n):
            w = None
            lin = np.zeros(len(flatc[0]), dtype=np.int64)
            for k in range(n):
                bit = (corner >> k) & 1
                wk = frac[k] if bit else (1.0 - frac[k])
                w = wk.copy() if w is None else w * wk
                lin *= self.points[k]
                lin += idx[k] + bit
            out += w * flat_vals[lin]
        out[~inside] = 0.0
        return out.reshape(shape)

    def boundary_mask(self) -> np.ndarray:
        """True on the outermost shell of nodes (used for tail-mass estimates)."""
        masks = []
        for k, m in enumerate(self.points):
            ax_idx = np.arange(m)
            masks.append((ax_idx == 0) | (ax_idx == m - 1))
        mesh = np.meshgrid(*masks, indexing="ij")
        out = np.zeros(self.shape, dtype=bool)
        for mk in mesh:
            out |= mk
        return out.reshape(-1)

    def same_geometry(self, other: "GridSpec") -> bool:
        return (
            self.points == other.points
            and np.allclose(self.extents, other.extents, rtol=1e-12, atol=0)
        )

    def __repr__(self) -> str:
        ext = ",".join(f"{e:g}" for e in self.extents)
        pts = "x".join(str(m) for m in self.points)
        return f"GridSpec([{ext}], {pts})"


@dataclass
class SampledFunction:
    """Values of a function on a GridSpec, flat row-major storage."""

    grid: GridSpec
    values: np.ndarray
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.size:
            raise InvalidArgument(
                f"value count {self.values.size} does not match grid size {self.grid.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgument("sampled values must be finite")

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.grid.interpolate(self.values, pts)

    def integral(self) -> float:
        return float(np.sum(self.grid.weights() * self.values))

    def lp_norm(self, p: float, weight: np.ndarray | None = None) -> float:
        w = self.grid.weights() if weight is None else self.grid.weights() * weight
        return float(np.sum(w * np.abs(self.values) ** p) ** (1.0 / p))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def tail_fraction(self) -> float:
        """Mass fraction |values| carried by the outermost node shell."""
        absw = self.grid.weights() * np.abs(self.values)
        total = float(np.sum(absw))
        if total == 0.0:
            return 0.0
        return float(np.sum(absw[self.grid.boundary_mask()])) / total

    def scaled(self, c: float) -> "SampledFunction":
        return SampledFunction(self.grid, c * self.values, self.provenance, dict(self.meta))

    # -- export -------------------------------------------------------------

    def to_csv(self, path: str) -> None:
        nodes = self.grid.nodes()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(f"x{k + 1}" for k in range(self.grid.group.n)) + ",value\n")
            for row, v in zip(nodes, self.values):
                fh.write(",".join(f"{c:.12g}" for c in row) + f",{v:.17g}\n")

    def to_binary(self, path: str) -> None:
        """Header: magic, n, per-axis counts, extents; payload float64 row-major."""
        with open(path, "wb") as fh:
            fh.write(b"HGLP")
            fh.write(struct.pack("<i", self.grid.group.n))
            fh.write(struct.pack(f"<{self.grid.group.n}i", *self.grid.points))
            fh.write(struct.pack(f"<{self.grid.group.n}d", *self.grid.extents))
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path: str, group: GroupSpec) -> "SampledFunction":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != b"HGLP":
                raise InvalidArgument(f"{path}: not a field file")
            (n,) = struct.unpack("<i", fh.read(4))
            if n != group.n:
                raise InvalidArgument(f"{path}: dimension {n} != group dimension {group.n}")
            points = struct.unpack(f"<{n}i", fh.read(4 * n))
            extents = struct.unpack(f"<{n}d", fh.read(8 * n))
            grid = GridSpec(group, extents, points)
            values = np.frombuffer(fh.read(8 * grid.size), dtype="<f8")
        return cls(grid, values.copy(), provenance=f"loaded:{path}")
