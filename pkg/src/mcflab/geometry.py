"""Derived geometric quantities of a graph and heat-operator residuals.

For a graph ``y = u(x, t)`` the derived fields are the volume element
``v = sqrt(1 + |du|^2)`` (also the reciprocal of the vertical component of
the unit normal), the scalar mean curvature ``H = -div(du / v)``, the
squared second fundamental form ``|A|^2`` (curves only), and the intrinsic
Laplace-Beltrami operator in conservative form.

Residual checkers verify, on trajectory snapshots, the exact evolution
identities satisfied by flows ``u_t = v * div(du / v)``:

  * ``(d/dt - Lap) v            = -|A|^2 v - 2 |grad v|^2 / v``
  * ``(d/dt - Lap) (1-|x|^2-2nt) = -2 |du|^2 / v^2  (<= 0)``
  * ``(d/dt - Lap) e^(a y^2/t)  = -(e^(a y^2/t)/t^2) [a y^2 + 4 a^2 y^2 |grad y|^2
                                     + 2 a t |grad y|^2]``

where ``d/dt`` follows the normal motion of the surface.  In graph
coordinates that is the vertical derivative plus the horizontal drift
``(H/v) <du, d(.)>`` of normally-moving points; the identities fail
without the drift term.  ``|grad y|^2 = |du|^2 / v^2`` since the vertical
component of the unit normal is ``1/v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import (
    Grid,
    ScalarField,
    VectorField,
    _first_derivative,
    _second_derivative,
    divergence,
    flux_divergence,
    gradient,
    staggered_average,
    staggered_slopes,
)

# beyond this slope, form v as |du| * sqrt(1 + 1/|du|^2) to avoid overflow
_BIG_SLOPE = 1e8


def volume_element(slope_sq: np.ndarray) -> np.ndarray:
    """sqrt(1 + s) for s = |du|^2, stable against squaring overflow."""
    s = np.asarray(slope_sq, dtype=float)
    out = np.sqrt(1.0 + np.minimum(s, _BIG_SLOPE**2))
    big = s > _BIG_SLOPE**2
    if np.any(big):
        m = np.sqrt(s[big])
        out = out.copy()
        out[big] = m * np.sqrt(1.0 + 1.0 / s[big])
    return out


@dataclass(frozen=True)
class GeometryFields:
    """Bundle of v, H, du and (curves only) |A|^2 for one snapshot."""

    v: ScalarField
    H: ScalarField
    du: VectorField
    A2: Optional[ScalarField] = None


def _node_flux(du_comps: np.ndarray, v_nodes: np.ndarray) -> np.ndarray:
    return du_comps / v_nodes


def _midpoint_v(u: np.ndarray, grid: Grid, axis: int) -> tuple:
    """(slope along axis, v) at the cell midpoints of one axis."""
    x = grid.axes[axis]
    p = staggered_slopes(u, x, axis)
    s2 = p**2
    for other in range(grid.dim):
        if other == axis:
            continue
        q = _first_derivative(u, grid.axes[other], other)
        s2 = s2 + staggered_average(q, axis) ** 2
    return p, volume_element(s2)


def _conservative_H(u: np.ndarray, grid: Grid, du: np.ndarray, v: np.ndarray) -> np.ndarray:
    """H = -div(du/v); flux form at interior nodes, one-sided at the boundary."""
    out = np.zeros(grid.shape)
    for axis in range(grid.dim):
        p, vm = _midpoint_v(u, grid, axis)
        out += flux_divergence(p / vm, grid.axes[axis], axis)
    bnd = grid.boundary_mask()
    fallback = divergence(
        VectorField(grid, _node_flux(du, v))
    ).values
    out[bnd] = fallback[bnd]
    return -out


def compute_geometry(u: ScalarField) -> GeometryFields:
    """Volume element, mean curvature and gradient of a graph snapshot.

    ``v**2 == 1 + |du|^2`` holds pointwise by construction.  ``H`` uses the
    conservative (staggered-flux) divergence at interior nodes, so that
    ``u_t = -v H`` matches the solver's spatial operator.  For curves,
    ``|A|^2 = (u'')^2 / v^6``.
    """
    grid = u.grid
    du = gradient(u)
    v = volume_element(du.norm_squared())
    H = _conservative_H(u.values, grid, du.components, v)
    a2 = None
    if grid.dim == 1:
        upp = _second_derivative(u.values, grid.axes[0], 0)
        a2 = ScalarField(grid, (upp / v**3) ** 2, u.time)
    return GeometryFields(
        v=ScalarField(grid, v, u.time),
        H=ScalarField(grid, H, u.time),
        du=du,
        A2=a2,
    )


def inverse_metric_apply(du: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Apply G = I - du (x) du / v^2 to a stacked vector field w."""
    proj = np.sum(du * w, axis=0) / v**2
    return w - du * proj


def tangential_gradient_sq(du: np.ndarray, v: np.ndarray, df: np.ndarray) -> np.ndarray:
    """|grad_M f|^2 = <G df, df> for the induced metric of the graph."""
    return np.sum(df * inverse_metric_apply(du, v, df), axis=0)


def laplace_beltrami(u: ScalarField, f: ScalarField) -> ScalarField:
    """Intrinsic Laplacian of ``f`` on the graph of ``u``.

    Conservative nonparametric form ``(1/v) div(v G df)`` with
    ``G = I - du (x) du / v^2``; flux form at interior nodes (midpoint
    metric factors), one-sided node-flux derivatives at boundary nodes.
    """
    if u.grid is not f.grid and u.grid.shape != f.grid.shape:
        raise ValueError("u and f must live on the same grid")
    grid = u.grid
    du = gradient(u).components
    v = volume_element(np.sum(du**2, axis=0))
    df = gradient(f).components

    out = np.zeros(grid.shape)
    if grid.dim == 1:
        x = grid.axes[0]
        p, vm = _midpoint_v(u.values, grid, 0)
        fp = staggered_slopes(f.values, x, 0)
        out += flux_divergence(fp / vm, x, 0)
    else:
        for axis in range(grid.dim):
            x = grid.axes[axis]
            p, vm = _midpoint_v(u.values, grid, axis)
            other = 1 - axis
            q_mid = staggered_average(
                _first_derivative(u.values, grid.axes[other], other), axis
            )
            fp = staggered_slopes(f.values, x, axis)
            fq = staggered_average(
                _first_derivative(f.values, grid.axes[other], other), axis
            )
            # v * (G @ df) along this axis, with G entries from midpoint slopes
            flux = (fp * (1.0 + q_mid**2) - fq * p * q_mid) / vm
            out += flux_divergence(flux, x, axis)

    # boundary nodes: one-sided derivative of the node-sampled flux
    W = v * inverse_metric_apply(du, v, df)
    fallback = divergence(VectorField(grid, W)).values
    bnd = grid.boundary_mask()
    out[bnd] = fallback[bnd]
    return ScalarField(grid, out / v, u.time)


# ---------------------------------------------------------------------------
# heat-operator residuals on trajectories


def _neighbor_snapshots(traj, t: float):
    times = traj.times
    idx = int(np.argmin(np.abs(times - t)))
    if abs(times[idx] - t) > 1e-10 * max(1.0, abs(t)):
        raise ValueError(f"no snapshot at t={t}; have {times}")
    if idx == 0 or idx == len(times) - 1:
        raise ValueError(f"t={t} is a trajectory endpoint; need neighbors on both sides")
    return traj.snapshots[idx - 1], traj.snapshots[idx], traj.snapshots[idx + 1]


def _central_time_weights(tm: float, t0: float, tp: float) -> tuple:
    # derivative at t0 of the quadratic through the three times
    hm, hp = t0 - tm, tp - t0
    return (-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp)))


def flow_heat_operator(traj, t: float, field_of) -> tuple:
    """(d/dt - Lap) of a spacetime field along the flow, on one snapshot.

    ``field_of(snapshot) -> ndarray`` samples the field on a snapshot.  The
    time derivative follows normally-moving surface points: central time
    difference at fixed x plus the horizontal drift ``(H/v) <du, d(field)>``.
    Returns ``(operator values, middle geometry)``.
    """
    prev, mid, nxt = _neighbor_snapshots(traj, t)
    wm, w0, wp = _central_time_weights(prev.time, mid.time, nxt.time)
    f_prev, f_mid, f_next = field_of(prev), field_of(mid), field_of(nxt)
    dfdt = wm * f_prev + w0 * f_mid + wp * f_next

    geo = compute_geometry(mid)
    du = geo.du.components
    v = geo.v.values
    drift = geo.H.values / v * du  # horizontal velocity of normal motion
    dfield = np.stack(
        [_first_derivative(f_mid, mid.grid.axes[d], d) for d in range(mid.grid.dim)]
    )
    advect = np.sum(drift * dfield, axis=0)
    lap = laplace_beltrami(mid, ScalarField(mid.grid, f_mid, mid.time)).values
    return dfdt + advect - lap, geo


def heat_residual_v(traj, t: float) -> ScalarField:
    """Residual of the volume-element evolution identity (curves only).

    ``(d/dt - Lap) v + |A|^2 v + 2 |grad v|^2 / v`` on the snapshot at ``t``;
    zero for exact flows, O(h^2 + dt^2) on discrete ones.
    """
    mid = traj.at_time(t)
    if mid.grid.dim != 1:
        raise ValueError("the |A|^2 form of the identity is implemented for curves only")

    def field_of(snap):
        g = gradient(snap)
        return volume_element(g.norm_squared())

    op, geo = flow_heat_operator(traj, t, field_of)
    v = geo.v.values
    dv = np.stack(
        [_first_derivative(v, mid.grid.axes[d], d) for d in range(mid.grid.dim)]
    )
    grad_v_sq = tangential_gradient_sq(geo.du.components, v, dv)
    res = op + geo.A2.values * v + 2.0 * grad_v_sq / v
    return ScalarField(mid.grid, res, t)


def heat_residual_v_weak(traj, t: float) -> ScalarField:
    """Inequality form ``(d/dt - Lap) v + 2|grad v|^2/v`` (any dimension).

    Equals ``-|A|^2 v <= 0`` for exact flows; used where the full identity
    is unavailable (n = 2).
    """
    mid = traj.at_time(t)

    def field_of(snap):
        g = gradient(snap)
        return volume_element(g.norm_squared())

    op, geo = flow_heat_operator(traj, t, field_of)
    v = geo.v.values
    dv = np.stack(
        [_first_derivative(v, mid.grid.axes[d], d) for d in range(mid.grid.dim)]
    )
    grad_v_sq = tangential_gradient_sq(geo.du.components, v, dv)
    return ScalarField(mid.grid, op + 2.0 * grad_v_sq / v, t)


def conic_cutoff(grid: Grid, t: float, n: Optional[int] = None) -> np.ndarray:
    """Space-time cutoff ``1 - |x|^2 - 2 n t`` sampled on a grid."""
    n = grid.dim if n is None else n
    return 1.0 - grid.radii() ** 2 - 2.0 * n * t


def heat_residual_eta(traj, t: float) -> ScalarField:
    """(d/dt - Lap) of the conic cutoff; ``<= 0`` up to truncation.

    The exact value on a flow is ``-2 |du|^2 / v^2``.
    """
    mid = traj.at_time(t)
    n = mid.grid.dim

    def field_of(snap):
        return conic_cutoff(snap.grid, snap.time, n)

    op, _ = flow_heat_operator(traj, t, field_of)
    return ScalarField(mid.grid, op, t)


def heat_residual_exp(traj, t: float, a: float) -> ScalarField:
    """Residual of the exponential-weight identity at snapshot ``t``.

    Compares ``(d/dt - Lap) e^(a y^2 / t)`` against its closed form, using
    ``y = u`` and ``|grad y|^2 = |du|^2 / v^2``.  Requires ``t > 0`` (with
    both neighbor snapshots at positive times) and ``a <= -2``.
    """
    if not a <= -2.0:
        raise ValueError(f"exponential check expects a <= -2, got {a}")
    prev, mid, _ = _neighbor_snapshots(traj, t)
    if prev.time <= 0.0:
        raise ValueError("exponential check needs all differencing times > 0")

    def field_of(snap):
        return np.exp(a * snap.values**2 / snap.time)

    op, geo = flow_heat_operator(traj, t, field_of)
    u = mid.values
    v = geo.v.values
    grad_y_sq = geo.du.norm_squared() / v**2
    F = np.exp(a * u**2 / t)
    rhs = -(F / t**2) * (
        a * u**2 + 4.0 * a**2 * u**2 * grad_y_sq + 2.0 * a * t * grad_y_sq
    )
    return ScalarField(mid.grid, op - rhs, t)


def phi_v_max(traj, a: float) -> float:
    """Max of ``eta * e^(a u^2 / t) * v`` over snapshots with t > 0.

    ``eta = 1 - |x|^2 - 2 n t`` restricted to where it is positive.  The
    trajectory must already be translated so ``u >= 1`` everywhere (the
    maximum-principle bound assumes it); violations raise ``ValueError``.
    For exact flows with ``a <= -2`` the result never exceeds 5.
    """
    grid = traj.snapshots[0].grid
    n = grid.dim
    low = min(float(s.values.min()) for s in traj.snapshots)
    if low < 1.0 - 1e-12:
        raise ValueError(
            f"trajectory must satisfy u >= 1 (translate first); min is {low}"
        )
    best = None
    for snap in traj.snapshots:
        if snap.time <= 0.0:
            continue
        eta = conic_cutoff(grid, snap.time, n)
        mask = eta > 0.0
        if not np.any(mask):
            continue
        g = gradient(snap)
        v = volume_element(g.norm_squared())
        vals = eta[mask] * np.exp(a * snap.values[mask] ** 2 / snap.time) * v[mask]
        m = float(vals.max())
        best = m if best is None else max(best, m)
    if best is None:
        raise ValueError("no snapshot with t > 0 intersects the support of the cutoff")
    return best
