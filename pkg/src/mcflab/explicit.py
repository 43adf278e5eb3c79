"""Closed-form flow solutions and barriers.

Houses the grim reaper translating soliton and its rescalings/translates,
the alternating up/down translator family used in the area-sharpness
construction, shrinking-sphere height barriers, and the engineered
compactly supported initial data squeezed strictly between barrier pairs.

All evaluators are lazy (nothing is sampled onto a grid except during
construction-time verification) so the logarithmic blow-ups at domain
endpoints never materialize as non-finite samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, ScalarField


class DomainError(ValueError):
    """Evaluation point outside an evaluator's open domain."""


class ParameterError(ValueError):
    """Parameter outside the range an operation supports."""


class ConstructionError(RuntimeError):
    """Grid verification of engineered initial data failed."""


@dataclass(frozen=True)
class GrimReaper:
    """Speed-``lam`` vertical translator on the open strip ``(shift, shift + pi/lam)``.

    The profile is ``sign * (lam*t - log(sin(lam*(x - shift)))/lam - offset)``:
    ``sign=+1`` translates upward with speed ``lam``, ``sign=-1`` downward.
    Parabolic rescaling identity: the ``lam``-profile equals
    ``u(x, t) = u1(lam*x, lam^2 t)/lam`` where ``u1`` is the unit-speed one.
    """

    lam: float
    shift: float = 0.0
    offset: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lam must be positive, got {self.lam}")
        if self.sign not in (-1, 1):
            raise ParameterError(f"sign must be +1 or -1, got {self.sign}")

    @property
    def domain(self) -> tuple:
        return (self.shift, self.shift + math.pi / self.lam)

    def _angle(self, x):
        x = np.asarray(x, dtype=float)
        xi = self.lam * (x - self.shift)
        if np.any(xi <= 0.0) or np.any(xi >= math.pi):
            raise DomainError(
                f"x outside open strip ({self.domain[0]}, {self.domain[1]})"
            )
        return xi

    def value(self, x, t):
        xi = self._angle(x)
        val = self.sign * (
            self.lam * t - np.log(np.sin(xi)) / self.lam - self.offset
        )
        return float(val) if np.isscalar(x) else val

    def slope(self, x, t=0.0):
        xi = self._angle(x)
        s = self.sign * (-1.0 / np.tan(xi))
        return float(s) if np.isscalar(x) else s

    def eval(self, x, t) -> tuple:
        """(value, slope) at one point; errors instead of returning +-inf."""
        return self.value(x, t), self.slope(x, t)

    def trace(self, points, t):
        """Boundary-data callable form (same as :meth:`value`)."""
        return self.value(points, t)

    def sample(self, grid: Grid, t: float) -> ScalarField:
        return ScalarField(grid, self.value(grid.axes[0], t), t)


def grim_reaper_eval(g: GrimReaper, x: float, t: float) -> tuple:
    return g.eval(x, t)


def barrier_pair(lam: float) -> tuple:
    """Upper/lower translating barriers for the gradient-sharpness run.

    Upper barrier on ``(-pi/lam, 0)``: the upward ``lam``-reaper shifted left
    by ``pi/lam`` and dropped by ``3*lam``.  Lower barrier on ``(0, pi/lam)``:
    the reflected (downward) reaper raised by ``3*lam``.  At ``t=0`` the
    upper one is ``>= -3*lam`` and the lower one ``<= 3*lam`` everywhere.
    """
    if not lam > 1:
        raise ParameterError(f"barrier pair needs lam > 1, got {lam}")
    upper = GrimReaper(lam=lam, shift=-math.pi / lam, offset=3.0 * lam, sign=1)
    lower = GrimReaper(lam=lam, shift=0.0, offset=3.0 * lam, sign=-1)
    return upper, lower


@dataclass(frozen=True)
class AlternatingFamily:
    """Translators alternating up/down on the intervals ``(j*pi/k, (j+1)*pi/k)``.

    Member ``j`` is ``(-1)^j * (reaper_k(x - j*pi/k, t) - 2k)``; at ``t=1``
    it attains ``(-1)^(j+1) * k`` at its midpoint.
    """

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ParameterError(f"k must be an integer >= 2, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    def member(self, j: int) -> GrimReaper:
        if not -self.k <= j <= self.k:
            raise ParameterError(f"member index {j} outside [-{self.k}, {self.k}]")
        return GrimReaper(
            lam=float(self.k),
            shift=j * math.pi / self.k,
            offset=2.0 * self.k,
            sign=1 if j % 2 == 0 else -1,
        )

    def eval(self, j: int, x, t):
        return self.member(j).value(x, t)

    def midpoint(self, j: int) -> float:
        return (j + 0.5) * math.pi / self.k


def alternating_eval(fam: AlternatingFamily, j: int, x: float, t: float) -> float:
    return fam.eval(j, x, t)


@dataclass(frozen=True)
class SphereBarrier:
    """Hemisphere of the shrinking-sphere solution, radius ``sqrt(rho^2 - 2nt)``.

    ``sign=-1`` gives the lower hemisphere (an upper barrier when placed
    above a graph), ``sign=+1`` the upper hemisphere.
    """

    rho: float
    center_height: float
    n: int
    sign: int = -1

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ParameterError(f"dimension must be 1 or 2, got {self.n}")
        if not self.rho >= math.sqrt(2 * self.n + 1):
            raise ParameterError(
                f"rho must be >= sqrt(2n+1) = {math.sqrt(2 * self.n + 1):.6f}"
            )
        if self.sign not in (-1, 1):
            raise ParameterError("sign must be +1 or -1")

    def radius(self, t: float) -> float:
        r2 = self.rho**2 - 2.0 * self.n * t
        if r2 <= 0.0:
            raise DomainError(f"sphere has collapsed by t={t}")
        return math.sqrt(r2)

    def height(self, x, t):
        r = self.radius(t)
        x = np.asarray(x, dtype=float)
        d2 = x**2 if x.ndim <= 1 and self.n == 1 else np.sum(x**2, axis=-1)
        if np.any(d2 > r * r):
            raise DomainError(f"|x| exceeds sphere radius {r} at t={t}")
        out = self.center_height + self.sign * np.sqrt(r * r - d2)
        return float(out) if out.ndim == 0 else out


def sphere_barrier_height(b: SphereBarrier, x, t: float):
    return b.height(x, t)


# ---------------------------------------------------------------------------
# engineered initial data


def _smoothstep(s: np.ndarray) -> np.ndarray:
    # C^infinity 0->1 transition over [0, 1]
    s = np.asarray(s, dtype=float)
    a = np.zeros_like(s)
    pos = s > 0.0
    a[pos] = np.exp(-1.0 / s[pos])
    b = np.zeros_like(s)
    neg = s < 1.0
    b[neg] = np.exp(-1.0 / (1.0 - s[neg]))
    return a / (a + b)


def plateau(x: np.ndarray, left: float, right: float, delta: float) -> np.ndarray:
    """Smooth compactly supported plateau: 1 on ``[left+delta, right-delta]``,
    0 outside ``(left, right)``, C^infinity shoulders of width ``delta``."""
    x = np.asarray(x, dtype=float)
    return _smoothstep((x - left) / delta) * _smoothstep((right - x) / delta)


def _shrink_until(build_and_check, delta0: float, delta_min: float):
    delta = delta0
    last_reason = "no attempt made"
    while delta >= delta_min:
        field, reason = build_and_check(delta)
        if field is not None:
            return field
        last_reason = reason
        delta *= 0.5
    raise ConstructionError(
        "initial data verification failed down to shoulder width "
        f"{delta:.3e}: {last_reason}; refine the grid"
    )


def initial_data_gradient_sharpness(lam: float, grid: Grid) -> ScalarField:
    """Odd compactly supported data strictly between the two translator barriers.

    A smooth plateau of height ``3*lam + lam/4`` on ``(0, pi/lam)`` (negated
    and mirrored on ``(-pi/lam, 0)``), shoulders shrunk geometrically until
    every grid node strictly satisfies the barrier inequalities.  The barrier
    floors force the data to hug its full interval, so a narrow centered bump
    cannot qualify; the plateau does.
    """
    if not lam > 1:
        raise ParameterError(f"lam must be > 1, got {lam}")
    if grid.dim != 1:
        raise ParameterError("gradient-sharpness data is one-dimensional")
    L = math.pi / lam
    if not grid.covers(-4 * L, 4 * L):
        raise ParameterError(f"grid must span at least [-4pi/lam, 4pi/lam] = [±{4 * L:.4f}]")
    x = grid.axes[0]
    amp = 3.0 * lam + lam / 4.0
    upper, lower = barrier_pair(lam)
    neg = (x > -L) & (x < 0.0)
    pos = (x > 0.0) & (x < L)
    if neg.sum() < 8 or pos.sum() < 8:
        raise ConstructionError("grid too coarse: need >= 8 nodes inside each barrier interval")

    def attempt(delta):
        w = amp * (plateau(x, 0.0, L, delta) - plateau(-x, 0.0, L, delta))
        if not np.all(w[neg] < upper.value(x[neg], 0.0)):
            return None, "data not strictly below the upper barrier"
        if not np.all(w[pos] > lower.value(x[pos], 0.0)):
            return None, "data not strictly above the lower barrier"
        m = np.max(np.abs(w))
        if not (3.0 * lam < m <= 4.0 * lam):
            return None, f"sup-norm {m:.4f} outside (3 lam, 4 lam]"
        if np.any(w[np.abs(x) >= L] != 0.0):
            return None, "support leaks outside [-pi/lam, pi/lam]"
        return ScalarField(grid, w, 0.0), ""

    return _shrink_until(attempt, delta0=L / 3.0, delta_min=grid.min_spacing / 8.0)


def initial_data_area_sharpness(k: int, grid: Grid) -> ScalarField:
    """Alternating plateaus of height ``2k + k/4`` strictly between the
    alternating translator family, supported in ``[-pi, pi]``.

    Ordering is grid-verified against every family member whose interval
    lies inside the support, i.e. ``j = -k .. k-1`` (members beyond the
    support sit below zero where the data vanishes, so they are not part
    of the squeeze).
    """
    fam = AlternatingFamily(k)
    k = fam.k
    if grid.dim != 1:
        raise ParameterError("area-sharpness data is one-dimensional")
    if not grid.covers(-math.pi, math.pi):
        raise ParameterError("grid must span at least [-pi, pi]")
    x = grid.axes[0]
    amp = 2.0 * k + k / 4.0
    width = math.pi / k

    def attempt(delta):
        w = np.zeros_like(x)
        for j in range(-k, k):
            sign_j = -1.0 if j % 2 == 0 else 1.0
            w += sign_j * amp * plateau(x, j * width, (j + 1) * width, delta)
        for j in range(-k, k):
            member = fam.member(j)
            inside = (x > j * width) & (x < (j + 1) * width)
            if inside.sum() < 8:
                raise ConstructionError(
                    "grid too coarse: need >= 8 nodes inside each member interval"
                )
            bvals = member.value(x[inside], 0.0)
            if j % 2 == 0:
                if not np.all(w[inside] < bvals):
                    return None, f"data not strictly below member {j}"
            else:
                if not np.all(w[inside] > bvals):
                    return None, f"data not strictly above member {j}"
        m = np.max(np.abs(w))
        if not (2.0 * k < m <= 3.0 * k):
            return None, f"sup-norm {m:.4f} outside (2k, 3k]"
        if np.any(w[np.abs(x) >= math.pi] != 0.0):
            return None, "support leaks outside [-pi, pi]"
        return ScalarField(grid, w, 0.0), ""

    return _shrink_until(attempt, delta0=width / 3.0, delta_min=grid.min_spacing / 8.0)
