"""Tensor-product grids and second-order discrete calculus.

Spatial layer for the flow laboratory: 1D intervals and 2D boxes sampled
on tensor grids (uniform, or geometrically graded along one axis), plus
the discrete gradient, conservative divergence and masked trapezoid
quadrature that every higher layer builds on.

Conventions:
  * fields are stored as arrays of shape ``grid.shape`` (1D: ``(nx,)``,
    2D: ``(nx, ny)`` with axis 0 = x, axis 1 = y),
  * gradient/divergence are second order: central stencils at interior
    nodes, one-sided three-point stencils at boundary nodes,
  * divergence is flux-difference ("conservative") at interior nodes:
    node components are averaged to staggered midpoints and differenced,
  * quadrature is trapezoid; cells straddling a region boundary get
    fractional weights from a linear interpolation of the region's level
    function (cut cells).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np


class InvalidGridError(ValueError):
    """Grid cannot support second-order stencils (or axes are malformed)."""


class EmptyRegionError(ValueError):
    """Quadrature region selects no part of the grid."""


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid described by per-axis node coordinates.

    Axes must be strictly increasing with at least 3 nodes each so central
    stencils exist at one interior node or more.  Instances are immutable
    and safe to share across threads.
    """

    axes: tuple

    def __post_init__(self):
        axes = self.axes if isinstance(self.axes, tuple) else tuple(self.axes)
        if not axes:
            raise InvalidGridError("grid needs at least one axis")
        if len(axes) > 2:
            raise InvalidGridError("only 1D and 2D grids are supported")
        frozen = []
        for ax in axes:
            ax = np.asarray(ax, dtype=float)
            if ax.ndim != 1 or ax.size < 3:
                raise InvalidGridError("each axis needs at least 3 nodes")
            if not np.all(np.isfinite(ax)):
                raise InvalidGridError("axis nodes must be finite")
            if not np.all(np.diff(ax) > 0):
                raise InvalidGridError("axis nodes must be strictly increasing")
            frozen.append(_freeze(ax))
        object.__setattr__(self, "axes", tuple(frozen))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(ax.size for ax in self.axes)

    @property
    def counts(self) -> tuple:
        return self.shape

    @property
    def lower(self) -> tuple:
        return tuple(float(ax[0]) for ax in self.axes)

    @property
    def upper(self) -> tuple:
        return tuple(float(ax[-1]) for ax in self.axes)

    @property
    def num_points(self) -> int:
        return int(np.prod(self.shape))

    @property
    def min_spacing(self) -> float:
        return min(float(np.diff(ax).min()) for ax in self.axes)

    def points(self) -> np.ndarray:
        """All node coordinates: shape ``(nx,)`` in 1D, ``(nx, ny, 2)`` in 2D."""
        if self.dim == 1:
            return self.axes[0].copy()
        X, Y = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return np.stack([X, Y], axis=-1)

    def radii(self) -> np.ndarray:
        """Euclidean distance of every node from the origin."""
        if self.dim == 1:
            return np.abs(self.axes[0])
        pts = self.points()
        return np.sqrt(pts[..., 0] ** 2 + pts[..., 1] ** 2)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if self.dim == 1:
            mask[0] = mask[-1] = True
        else:
            mask[0, :] = mask[-1, :] = True
            mask[:, 0] = mask[:, -1] = True
        return mask

    def interior_mask(self, cells: int = 1) -> np.ndarray:
        """Nodes at least ``cells`` nodes away from every boundary face."""
        mask = np.zeros(self.shape, dtype=bool)
        sl = tuple(slice(cells, n - cells) for n in self.shape)
        mask[sl] = True
        return mask

    def nearest_index(self, point) -> tuple:
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        return tuple(int(np.argmin(np.abs(ax - p))) for ax, p in zip(self.axes, pt))

    def covers(self, lower, upper, tol: float = 1e-12) -> bool:
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        return all(
            ax[0] <= lo[d] + tol and ax[-1] >= hi[d] - tol
            for d, ax in enumerate(self.axes)
        )


class UniformGrid(Grid):
    """Uniform tensor grid over a box, ``count`` nodes per axis.

    ``(upper - lower) == (count - 1) * spacing`` holds to rounding on each
    axis by construction.
    """

    def __init__(self, bounds, counts):
        bounds = self._normalize_bounds(bounds)
        counts = (counts,) if np.isscalar(counts) else tuple(int(c) for c in counts)
        if len(bounds) != len(counts):
            raise InvalidGridError("bounds and counts must have equal length")
        axes = []
        for (lo, hi), n in zip(bounds, counts):
            if not hi > lo:
                raise InvalidGridError(f"need upper > lower, got ({lo}, {hi})")
            if n < 3:
                raise InvalidGridError(f"need at least 3 nodes per axis, got {n}")
            axes.append(np.linspace(lo, hi, n))
        super().__init__(tuple(axes))

    @staticmethod
    def _normalize_bounds(bounds):
        bounds = tuple(bounds)
        if len(bounds) == 2 and np.isscalar(bounds[0]):
            return (tuple(float(b) for b in bounds),)
        return tuple((float(lo), float(hi)) for lo, hi in bounds)

    @classmethod
    def from_spacing(cls, lower, spacing, count):
        """1D grid with nodes exactly ``lower + i * spacing``.

        Keeps designated nodes (integer multiples of ``spacing``) exactly
        representable, which downstream code relies on for probe points and
        snapshot-aligned masks.
        """
        count = int(count)
        if count < 3:
            raise InvalidGridError("need at least 3 nodes")
        if not spacing > 0:
            raise InvalidGridError("spacing must be positive")
        axis = float(lower) + float(spacing) * np.arange(count)
        grid = cls.__new__(cls)
        Grid.__init__(grid, (axis,))
        return grid

    @classmethod
    def centered(cls, spacing, half_count):
        """1D grid with nodes exactly ``spacing * k`` for ``k = -half_count
        .. half_count``; exactly mirror-symmetric about the origin."""
        if not spacing > 0:
            raise InvalidGridError("spacing must be positive")
        half_count = int(half_count)
        if half_count < 1:
            raise InvalidGridError("need at least 3 nodes")
        axis = float(spacing) * np.arange(-half_count, half_count + 1)
        grid = cls.__new__(cls)
        Grid.__init__(grid, (axis,))
        return grid

    @property
    def spacings(self) -> tuple:
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)


class GradedGrid(Grid):
    """1D grid geometrically stretched away from a focus node.

    Cell widths grow by ``ratio`` per cell moving away from ``focus``;
    the focus and both endpoints are nodes.  Same operation contracts
    as :class:`UniformGrid`; refining ``count`` at fixed ``ratio``-profile
    keeps the stretch map smooth, so second-order stencil accuracy is
    retained in refinement studies.
    """

    def __init__(self, lower: float, upper: float, focus: float, count: int, ratio: float):
        lower, upper, focus = float(lower), float(upper), float(focus)
        count = int(count)
        if not upper > lower:
            raise InvalidGridError("need upper > lower")
        if not lower <= focus <= upper:
            raise InvalidGridError("focus must lie inside the interval")
        if count < 3:
            raise InvalidGridError("need at least 3 nodes")
        if not ratio >= 1.0:
            raise InvalidGridError("ratio must be >= 1")
        total = upper - lower
        ncells = count - 1
        n_right = int(round(ncells * (upper - focus) / total))
        n_right = min(max(n_right, 0 if focus == upper else 1), ncells)
        n_left = ncells - n_right
        if focus == lower:
            n_left, n_right = 0, ncells

        def side(length: float, n: int) -> np.ndarray:
            if n == 0:
                return np.zeros(0)
            if ratio == 1.0:
                widths = np.full(n, length / n)
            else:
                base = length * (ratio - 1.0) / (ratio**n - 1.0)
                widths = base * ratio ** np.arange(n)
            return np.cumsum(widths)

        right = focus + side(upper - focus, n_right)
        left = focus - side(focus - lower, n_left)[::-1]
        axis = np.concatenate([left, [focus], right])
        axis[0], axis[-1] = lower, upper
        super().__init__((axis,))
        object.__setattr__(self, "focus", focus)
        object.__setattr__(self, "ratio", float(ratio))


@dataclass(frozen=True)
class ScalarField:
    """Real-valued samples on a grid at one time instant."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(
                f"values shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "time", float(self.time))

    def with_values(self, values, time=None) -> "ScalarField":
        return ScalarField(self.grid, values, self.time if time is None else time)

    def shifted(self, offset: float) -> "ScalarField":
        return ScalarField(self.grid, self.values + offset, self.time)


@dataclass(frozen=True)
class VectorField:
    """One real component per axis per node; components stacked on axis 0."""

    grid: Grid
    components: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        expected = (self.grid.dim,) + self.grid.shape
        if comps.shape != expected:
            raise ValueError(f"components shape {comps.shape}, expected {expected}")
        if not np.all(np.isfinite(comps)):
            raise ValueError("vector components must be finite")
        object.__setattr__(self, "components", _freeze(comps))
        object.__setattr__(self, "time", float(self.time))

    def norm_squared(self) -> np.ndarray:
        return np.sum(self.components**2, axis=0)


# ---------------------------------------------------------------------------
# stencils


def _onesided_first_weights(x0: float, x1: float, x2: float) -> tuple:
    # d/dx of the quadratic through (x0, x1, x2), evaluated at x0
    w0 = (2 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2))
    w1 = (x0 - x2) / ((x1 - x0) * (x1 - x2))
    w2 = (x0 - x1) / ((x2 - x0) * (x2 - x1))
    return w0, w1, w2


def _first_derivative(values: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    shape = (-1,) + (1,) * (v.ndim - 1)
    wm = (-hp / (hm * (hm + hp))).reshape(shape)
    w0 = ((hp - hm) / (hm * hp)).reshape(shape)
    wp = (hm / (hp * (hm + hp))).reshape(shape)
    out[1:-1] = wm * v[:-2] + w0 * v[1:-1] + wp * v[2:]
    a0, a1, a2 = _onesided_first_weights(x[0], x[1], x[2])
    out[0] = a0 * v[0] + a1 * v[1] + a2 * v[2]
    b0, b1, b2 = _onesided_first_weights(x[-1], x[-2], x[-3])
    out[-1] = b0 * v[-1] + b1 * v[-2] + b2 * v[-3]
    return np.moveaxis(out, 0, axis)


def _second_derivative(values: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    shape = (-1,) + (1,) * (v.ndim - 1)
    wm = (2.0 / (hm * (hm + hp))).reshape(shape)
    w0 = (-2.0 / (hm * hp)).reshape(shape)
    wp = (2.0 / (hp * (hm + hp))).reshape(shape)
    out[1:-1] = wm * v[:-2] + w0 * v[1:-1] + wp * v[2:]

    def onesided(nodes, idx):
        # second-derivative weights at nodes[0] from a cubic through 4 nodes
        d = nodes - nodes[0]
        A = np.vstack([d**m for m in range(4)])
        rhs = np.array([0.0, 0.0, 2.0, 0.0])
        w = np.linalg.solve(A, rhs)
        return sum(w[k] * v[idx[k]] for k in range(4))

    out[0] = onesided(x[:4], [0, 1, 2, 3])
    out[-1] = onesided(x[-1:-5:-1], [-1, -2, -3, -4])
    return np.moveaxis(out, 0, axis)


def gradient(f: ScalarField) -> VectorField:
    """Second-order discrete gradient (central interior, one-sided ends)."""
    comps = np.stack(
        [_first_derivative(f.values, f.grid.axes[d], d) for d in range(f.grid.dim)]
    )
    return VectorField(f.grid, comps, f.time)


def divergence(F: VectorField) -> ScalarField:
    """Conservative divergence: staggered midpoint fluxes, differenced.

    Interior nodes see ``(mean(F_i, F_{i+1}) - mean(F_{i-1}, F_i)) / h_bar``
    per axis, which telescopes over any interior span; boundary nodes use
    one-sided second-order stencils.
    """
    grid = F.grid
    total = np.zeros(grid.shape)
    for d in range(grid.dim):
        x = grid.axes[d]
        comp = np.moveaxis(F.components[d], d, 0)
        out = np.empty_like(comp)
        mid = 0.5 * (comp[:-1] + comp[1:])
        hbar = (0.5 * (x[2:] - x[:-2])).reshape((-1,) + (1,) * (comp.ndim - 1))
        out[1:-1] = (mid[1:] - mid[:-1]) / hbar
        a0, a1, a2 = _onesided_first_weights(x[0], x[1], x[2])
        out[0] = a0 * comp[0] + a1 * comp[1] + a2 * comp[2]
        b0, b1, b2 = _onesided_first_weights(x[-1], x[-2], x[-3])
        out[-1] = b0 * comp[-1] + b1 * comp[-2] + b2 * comp[-3]
        total += np.moveaxis(out, 0, d)
    return ScalarField(grid, total, F.time)


def staggered_slopes(values: np.ndarray, x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Difference quotients at cell midpoints along one axis."""
    v = np.moveaxis(values, axis, 0)
    h = (x[1:] - x[:-1]).reshape((-1,) + (1,) * (v.ndim - 1))
    return np.moveaxis((v[1:] - v[:-1]) / h, 0, axis)


def staggered_average(values: np.ndarray, axis: int = 0) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    return np.moveaxis(0.5 * (v[:-1] + v[1:]), 0, axis)


def flux_divergence(flux_mid: np.ndarray, x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Difference midpoint fluxes back to interior nodes (boundary rows 0)."""
    fl = np.moveaxis(flux_mid, axis, 0)
    out = np.zeros((fl.shape[0] + 1,) + fl.shape[1:])
    hbar = (0.5 * (x[2:] - x[:-2])).reshape((-1,) + (1,) * (fl.ndim - 1))
    out[1:-1] = (fl[1:] - fl[:-1]) / hbar
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class Ball:
    """Euclidean ball used as a quadrature region (an interval in 1D).

    ``level(points) >= 0`` inside; the zero crossing is where cut cells
    interpolate the boundary.
    """

    radius: float
    center: tuple = (0.0, 0.0)

    def level(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 or pts.shape[-1] != 2:
            c = np.asarray(self.center).reshape(-1)[0]
            return self.radius - np.abs(pts - c)
        c = np.asarray(self.center, dtype=float)
        return self.radius - np.sqrt(np.sum((pts - c) ** 2, axis=-1))


Region = Union[Ball, Callable[[np.ndarray], np.ndarray], np.ndarray, None]


def _level_array(grid: Grid, region: Region) -> np.ndarray:
    if region is None:
        return np.ones(grid.shape)
    if isinstance(region, np.ndarray):
        if region.dtype == bool:
            return np.where(region, 1.0, -1.0)
        return np.asarray(region, dtype=float)
    level = region.level if hasattr(region, "level") else region
    return np.asarray(level(grid.points()), dtype=float)


def region_mask(grid: Grid, region: Region) -> np.ndarray:
    """Boolean node mask of a region (level >= 0)."""
    return _level_array(grid, region) >= 0.0


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    return w

def _integrate_row(f: np.ndarray, x: np.ndarray, phi: np.ndarray) -> tuple:
    """Cut-cell trapezoid along one axis; returns (integral, hit_anything)."""
    inside = phi >= 0.0
    dx = x[1:] - x[:-1]
    fl, fr = f[:-1], f[1:]
    il, ir = inside[:-1], inside[1:]
    total = float(np.sum(np.where(il & ir, 0.5 * dx * (fl + fr), 0.0)))
    hit = bool(np.any(inside))

    cut_l = il & ~ir  # inside on the left, boundary crossing inside the cell
    if np.any(cut_l):
        theta = phi[:-1][cut_l] / (phi[:-1][cut_l] - phi[1:][cut_l])
        fcut = fl[cut_l] + theta * (fr[cut_l] - fl[cut_l])
        total += float(np.sum(0.5 * theta * dx[cut_l] * (fl[cut_l] + fcut)))
    cut_r = ~il & ir
    if np.any(cut_r):
        theta = phi[1:][cut_r] / (phi[1:][cut_r] - phi[:-1][cut_r])
        fcut = fr[cut_r] + theta * (fl[cut_r] - fr[cut_r])
        total += float(np.sum(0.5 * theta * dx[cut_r] * (fr[cut_r] + fcut)))
    return total, hit


def quadrature(f: ScalarField, region: Region = None) -> float:
    """Trapezoid integral of ``f`` over a region, with cut-cell weights.

    Raises :class:`EmptyRegionError` when the region misses the grid.
    """
    grid = f.grid
    phi = _level_array(grid, region)
    if grid.dim == 1:
        total, hit = _integrate_row(f.values, grid.axes[0], phi)
        if not hit:
            raise EmptyRegionError("region contains no grid nodes")
        return total
    x, y = grid.axes
    wy = trapezoid_weights(y)
    rows = np.zeros(y.size)
    hit_any = False
    for j in range(y.size):
        rows[j], hit = _integrate_row(f.values[:, j], x, phi[:, j])
        hit_any = hit_any or hit
    if not hit_any:
        raise EmptyRegionError("region contains no grid nodes")
    return float(np.sum(wy * rows))
