"""Evaluators and pass/fail checkers for the quantitative estimates.

Covers the explicit interior gradient bounds, the shrinking-sphere height
bound, the measured graph area and its fitted constant, the Stokes area
inequality for arbitrary graphs, the saturating-ODE comparison lemma, and
the exact energy identity for the tent-weighted area.

Two distinct cutoffs appear and are never interchanged: the space-time
conic cutoff ``1 - |x|^2 - 2nt`` (lives with the geometry residuals) and
the spatial tent ``max(1 - |x|, 0)`` used by the energy identity here.

Slack policy: checks that compare quadrature/differencing output estimate
their own numerical error from one grid (or sample) coarsening and allow
ten times that estimate, rather than a hard-coded constant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .explicit import ParameterError
from .geometry import compute_geometry, volume_element
from .grid import (
    Ball,
    Grid,
    ScalarField,
    _first_derivative,
    gradient,
    quadrature,
    trapezoid_weights,
)
from .solver import FlowTrajectory


class PreconditionError(ValueError):
    """Input violates an operation's stated precondition."""


class InstanceRejected(Exception):
    """ODE sample fails the comparison hypothesis; not a check failure."""

    def __init__(self, message: str, excess: float, at_time: float):
        super().__init__(message)
        self.excess = excess
        self.at_time = at_time


@dataclass(frozen=True)
class EstimateReport:
    """Measured quantity against a theoretical bound.

    ``direction="upper"``: pass iff measured <= bound + slack;
    ``direction="lower"``: pass iff measured >= bound - slack.
    ``margin`` is the signed distance to the bound (positive = safe).
    """

    name: str
    measured: float
    bound: float
    direction: str = "upper"
    slack: float = 0.0
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.direction not in ("upper", "lower"):
            raise ValueError("direction must be 'upper' or 'lower'")
        object.__setattr__(self, "measured", float(self.measured))
        object.__setattr__(self, "bound", float(self.bound))
        object.__setattr__(self, "slack", float(self.slack))

    @property
    def margin(self) -> float:
        if self.direction == "upper":
            return self.bound - self.measured
        return self.measured - self.bound

    @property
    def passed(self) -> bool:
        return self.margin >= -self.slack

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "bound": self.bound,
            "margin": self.margin,
            "slack": self.slack,
            "direction": self.direction,
            "pass": self.passed,
            "context": dict(sorted(self.context.items())),
        }


def reports_to_json(reports: Sequence[EstimateReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)


_CSV_HEADER = "name,measured,bound,margin,slack,direction,pass,context\n"


def reports_to_csv(reports: Sequence[EstimateReport]) -> str:
    lines = [_CSV_HEADER]
    for r in reports:
        ctx = ";".join(f"{k}={v!r}" for k, v in sorted(r.context.items()))
        lines.append(
            f"{r.name},{r.measured!r},{r.bound!r},{r.margin!r},"
            f"{r.slack!r},{r.direction},{int(r.passed)},{ctx}\n"
        )
    return "".join(lines)


# ---------------------------------------------------------------------------
# closed-form bounds


def gradient_bound_explicit(n: int, r: float, sup_u: float) -> float:
    """Explicit interior bound on ``log(1 + |du|^2(0, r^2/(4n)))``.

    ``2 log 10 + 16 n (1 + 2 sup|u| / r)^2`` with the sup of ``|u|`` taken
    over ``B_r x [0, r^2]``.  Invariant under ``(r, sup) -> (c r, c sup)``.
    """
    if not r > 0:
        raise ParameterError("r must be positive")
    if sup_u < 0:
        raise ParameterError("sup_u must be nonnegative")
    return 2.0 * math.log(10.0) + 16.0 * n * (1.0 + 2.0 * sup_u / r) ** 2


def gradient_bound_chained(n: int, r: float, sup_u0: float) -> float:
    """Gradient bound in terms of initial data only.

    Chains the explicit bound with the sphere height bound at
    ``rho = sqrt(2n+1)``: the future sup over ``B_r x [0, r^2]`` is at most
    ``sqrt(2n+1) r + sup|u(.,0)|``, giving
    ``2 log 10 + 16 n (1 + 2 (sqrt(2n+1) + sup_u0 / r))^2``.
    """
    if not r > 0:
        raise ParameterError("r must be positive")
    if sup_u0 < 0:
        raise ParameterError("sup_u0 must be nonnegative")
    root = math.sqrt(2.0 * n + 1.0)
    return 2.0 * math.log(10.0) + 16.0 * n * (1.0 + 2.0 * (root + sup_u0 / r)) ** 2


def eh_bound_comparison(n: int, r: float, sup_u0: float, sup_du0: float,
                        C: float) -> float:
    """Initial-gradient-dependent bound of Korevaar type, for side-by-side
    reporting: ``1/2 log(1 + sup|du0|^2) + C (1 + sup|u0| / r)^2``.

    Unlike the explicit bound above it diverges as ``sup_du0 -> inf``; the
    constant ``C`` is caller-supplied.
    """
    if not r > 0:
        raise ParameterError("r must be positive")
    if sup_du0 > 1e150:  # avoid squaring overflow; log1p(s^2) ~ 2 log s
        log_term = math.log(sup_du0)
    else:
        log_term = 0.5 * math.log1p(sup_du0**2)
    return log_term + C * (1.0 + sup_u0 / r) ** 2


def height_bound(n: int, r: float, rho: float, sup_initial: float) -> tuple:
    """Sphere-barrier height bounds ``(exact, simplified)``.

    ``exact = r (rho - sqrt(rho^2 - (2n+1))) + sup_initial`` and
    ``simplified = (2n+1) r / rho + sup_initial``; exact <= simplified.
    """
    if not rho >= math.sqrt(2 * n + 1) * (1.0 - 1e-12):
        raise ParameterError(f"rho must be >= sqrt(2n+1) = {math.sqrt(2 * n + 1):.6f}")
    exact = r * (rho - math.sqrt(max(rho**2 - (2 * n + 1), 0.0))) + sup_initial
    simplified = (2 * n + 1) * r / rho + sup_initial
    return exact, simplified


# ---------------------------------------------------------------------------
# measured quantities


def area_measurement(u: ScalarField, r: float) -> float:
    """Graph area over the half-radius ball: quadrature of ``v`` on ``B_{r/2}``."""
    half = 0.5 * r
    if not u.grid.covers([-half] * u.grid.dim, [half] * u.grid.dim):
        raise PreconditionError(f"grid does not cover B_{{{half}}}")
    v = volume_element(gradient(u).norm_squared())
    return quadrature(ScalarField(u.grid, v, u.time), Ball(half))


def log_gradient_at_center(traj: FlowTrajectory, n: int, r: float) -> float:
    """``log(1 + |du|^2)`` at the node nearest the origin, snapshot nearest
    ``r^2 / (4n)`` (the snapshot schedule should land on it exactly)."""
    t_star = r**2 / (4.0 * n)
    snap = traj.at_time(t_star)
    idx = snap.grid.nearest_index([0.0] * snap.grid.dim)
    g = gradient(snap)
    return float(np.log1p(g.norm_squared()[idx]))


def sup_over_ball(traj: FlowTrajectory, radius: float, t_max: float) -> float:
    """Sup of ``|u|`` over grid nodes in ``B_radius`` and snapshots in [0, t_max]."""
    grid = traj.grid
    mask = grid.radii() <= radius + 1e-12
    best = 0.0
    for snap in traj.snapshots:
        if snap.time > t_max + 1e-12:
            continue
        best = max(best, float(np.abs(snap.values[mask]).max()))
    return best


def area_constant_fit(reports: Iterable[tuple]) -> float:
    """Smallest ``C`` with ``area <= C r^n (1 + sup_u0 / r)^2`` across reports.

    Each report is ``(n, r, sup_u0, measured_area)``; all must share ``n``.
    """
    items = list(reports)
    if not items:
        raise ValueError("area_constant_fit needs at least one report")
    dims = {item[0] for item in items}
    if len(dims) != 1:
        raise ValueError("all reports must share one dimension n")
    best = 0.0
    for n, r, sup_u0, measured in items:
        best = max(best, measured / (r**n * (1.0 + sup_u0 / r) ** 2))
    return best


# ---------------------------------------------------------------------------
# Stokes area inequality


def _coarsen(f: ScalarField) -> Optional[ScalarField]:
    if any((c - 1) % 2 != 0 for c in f.grid.counts):
        return None
    axes = tuple(ax[::2] for ax in f.grid.axes)
    sl = tuple(slice(None, None, 2) for _ in f.grid.counts)
    return ScalarField(Grid(axes), f.values[sl], f.time)


def _stokes_integrals(w: ScalarField, phi: ScalarField) -> tuple:
    geo = compute_geometry(w)
    sup_w = float(np.abs(w.values).max())
    phi2 = ScalarField(w.grid, phi.values**2, w.time)
    dphi2 = gradient(phi2)
    lhs = quadrature(ScalarField(w.grid, phi2.values * geo.v.values))
    t1 = quadrature(phi2)
    t2 = sup_w * quadrature(
        ScalarField(w.grid, np.sqrt(dphi2.norm_squared()))
    )
    t3 = sup_w * quadrature(
        ScalarField(w.grid, phi2.values * np.abs(geo.H.values))
    )
    return lhs, t1, t2, t3


def stokes_area_check(w: ScalarField, phi: ScalarField,
                      slack: Optional[float] = None) -> EstimateReport:
    """Area bound for arbitrary graphs via Stokes' theorem.

    Checks ``int phi^2 v <= int phi^2 + sup|w| int |d(phi^2)|
    + sup|w| int phi^2 |H|`` by quadrature.  ``phi`` must vanish on the
    grid boundary (compact support).  Slack defaults to 10x the
    coarsening-estimated quadrature error.
    """
    bnd = w.grid.boundary_mask()
    if np.any(np.abs(phi.values[bnd]) > 1e-12):
        raise PreconditionError("phi must vanish on the grid boundary")
    lhs, t1, t2, t3 = _stokes_integrals(w, phi)
    rhs = t1 + t2 + t3
    if slack is None:
        wc, pc = _coarsen(w), _coarsen(phi)
        if wc is not None and pc is not None:
            coarse = _stokes_integrals(wc, pc)
            est = sum(abs(a - b) for a, b in zip((lhs, t1, t2, t3), coarse))
            slack = 10.0 * est + 1e-12
        else:
            slack = 1e-5 * (abs(lhs) + abs(rhs) + 1.0)
    return EstimateReport(
        name="stokes-area",
        measured=lhs,
        bound=rhs,
        direction="upper",
        slack=slack,
        context={"sup_w": float(np.abs(w.values).max()), "h": w.grid.min_spacing},
    )


# ---------------------------------------------------------------------------
# ODE comparison lemma


@dataclass(frozen=True)
class ODEInstance:
    """Sampled nonnegative function tested against ``f^2 <= -a f' + b``."""

    a: float
    b: float
    T: float
    times: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.T > 0):
            raise ParameterError("need a, b, T > 0")
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if t.size != f.size or t.size < 100:
            raise ParameterError("need >= 100 aligned samples")
        if abs(t[0]) > 1e-12 or abs(t[-1] - self.T) > 1e-9 * max(1.0, self.T):
            raise ParameterError("samples must span [0, T]")
        if np.any(f < 0):
            raise ParameterError("f must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "f", f)


def ode_bound(a: float, b: float, T: float) -> float:
    """Comparison-lemma bound ``sqrt(2b) + 2a/T`` on ``f(T)``."""
    if not (a > 0 and b > 0 and T > 0):
        raise ParameterError("need a, b, T > 0")
    return math.sqrt(2.0 * b) + 2.0 * a / T


def saturating_oracle(a, b, T, f0, steps: int = 10**6,
                      samples: int = 2001) -> list:
    """Brute-force RK4 integration of ``f' = (b - f^2)/a`` as an oracle.

    Parameters may be arrays (one instance per entry).  Returns a list of
    :class:`ODEInstance` subsampled to ``samples`` points.  Solutions of
    this ODE satisfy the comparison hypothesis with equality, so they are
    exactly the saturating test family.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    f0 = np.atleast_1d(np.asarray(f0, dtype=float))
    m = a.size
    if steps % (samples - 1) != 0:
        raise ParameterError("steps must be a multiple of samples - 1")
    keep = steps // (samples - 1)
    dt = T / steps
    y = f0.copy()
    out = np.empty((samples, m))
    out[0] = y

    def rate(f):
        return (b - f * f) / a

    row = 1
    for k in range(steps):
        k1 = rate(y)
        k2 = rate(y + 0.5 * dt * k1)
        k3 = rate(y + 0.5 * dt * k2)
        k4 = rate(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % keep == 0:
            out[row] = y
            row += 1
    instances = []
    for i in range(m):
        times = np.linspace(0.0, T[i], samples)
        instances.append(ODEInstance(a[i], b[i], T[i], times, out[:, i]))
    return instances


def _central_derivative(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    return _first_derivative(f, t, 0)[1:-1]


def ode_check(inst: ODEInstance, slack: float = 1e-6) -> EstimateReport:
    """Verify the hypothesis on samples, then check ``f(T)`` against the bound.

    The hypothesis ``f^2 <= -a f' + b`` is tested at interior sample points
    with ``f'`` by central differences, allowing 10x the differencing error
    estimated from a stride-2 re-evaluation; a violation raises
    :class:`InstanceRejected` (a distinct signal, not a failed check).
    """
    fp = _central_derivative(inst.f, inst.times)
    fp2 = _central_derivative(inst.f[::2], inst.times[::2])
    # d/dt estimates at shared points t[2], t[4], ...
    shared_fine = fp[1::2][: fp2.size]
    diff = float(np.abs(shared_fine - fp2[: shared_fine.size]).max())
    hyp_slack = 10.0 * inst.a * diff + 1e-12
    lhs = inst.f[1:-1] ** 2
    rhs = -inst.a * fp + inst.b
    excess = lhs - rhs
    worst = int(np.argmax(excess))
    if excess[worst] > hyp_slack:
        raise InstanceRejected(
            f"hypothesis violated by {excess[worst]:.3e} at t={inst.times[1 + worst]:.4g}",
            float(excess[worst]),
            float(inst.times[1 + worst]),
        )
    bound = ode_bound(inst.a, inst.b, inst.T)
    return EstimateReport(
        name="ode-comparison",
        measured=float(inst.f[-1]),
        bound=bound,
        direction="upper",
        slack=slack,
        context={"a": inst.a, "b": inst.b, "T": inst.T, "hyp_slack": hyp_slack},
    )


# ---------------------------------------------------------------------------
# energy identity


def tent_cutoff(grid: Grid) -> np.ndarray:
    """Spatial tent ``max(1 - |x|, 0)``."""
    return np.maximum(1.0 - grid.radii(), 0.0)


def _tent_gradient(grid: Grid) -> np.ndarray:
    """Gradient of the tent where it is positive; 0 at the origin kink
    (the two-sided average, which keeps trapezoid sums second order)."""
    eta = tent_cutoff(grid)
    if grid.dim == 1:
        x = grid.axes[0]
        d = np.where((eta > 0.0) & (x != 0.0), -np.sign(x), 0.0)
        return d[np.newaxis]
    pts = grid.points()
    rad = grid.radii()
    safe = np.where(rad > 0.0, rad, 1.0)
    d = np.where((eta > 0.0) & (rad > 0.0), -1.0 / safe, 0.0)
    return np.stack([pts[..., 0] * d, pts[..., 1] * d])


def energy_identity_series(traj: FlowTrajectory) -> dict:
    """Weighted area ``f(t) = int eta^4 v`` and the exact identity's RHS.

    RHS(t) = ``-int eta^4 H^2 v + 4 int H eta^3 <d eta, du>``; for exact
    flows ``f'(t)`` equals it.  Returns times, f, central-difference f',
    and RHS at interior snapshot times.
    """
    grid = traj.grid
    if not grid.covers([-1.0] * grid.dim, [1.0] * grid.dim):
        raise PreconditionError("grid must cover B_1 (the tent support)")
    eta = tent_cutoff(grid)
    deta = _tent_gradient(grid)
    times = traj.times
    fvals, rhsvals = [], []
    for snap in traj.snapshots:
        geo = compute_geometry(snap)
        fvals.append(quadrature(ScalarField(grid, eta**4 * geo.v.values)))
        pairing = np.sum(deta * geo.du.components, axis=0)
        term1 = quadrature(
            ScalarField(grid, eta**4 * geo.H.values**2 * geo.v.values)
        )
        term2 = quadrature(
            ScalarField(grid, geo.H.values * eta**3 * pairing)
        )
        rhsvals.append(-term1 + 4.0 * term2)
    f = np.array(fvals)
    rhs = np.array(rhsvals)
    fprime = _first_derivative(f, times, 0)[1:-1]
    return {
        "times": times[1:-1],
        "f": f,
        "fprime": fprime,
        "rhs": rhs[1:-1],
        "residuals": np.abs(fprime - rhs[1:-1]),
    }


def energy_identity_check(traj: FlowTrajectory, tol: float = math.inf) -> EstimateReport:
    """Max |f'(t) - RHS(t)| over interior snapshot times, vs ``tol``."""
    if len(traj.snapshots) < 3:
        raise PreconditionError("need at least 3 snapshots to difference f(t)")
    series = energy_identity_series(traj)
    return EstimateReport(
        name="energy-identity",
        measured=float(series["residuals"].max()),
        bound=tol,
        direction="upper",
        slack=0.0,
        context={
            "snapshots": len(traj.snapshots),
            "h": traj.grid.min_spacing,
        },
    )
