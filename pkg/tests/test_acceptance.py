"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Tolerances are pinned here, not tuned at runtime.
"""

import math
import time

import numpy as np
import pytest

from mcflab.estimates import (
    InstanceRejected,
    ode_check,
    reports_to_csv,
    saturating_oracle,
    stokes_area_check,
)
from mcflab.experiments import (
    run_convergence,
    run_estimate_suite,
    run_identity_suite,
    run_sharpness_area,
    run_sharpness_gradient,
)
from mcflab.explicit import plateau
from mcflab.grid import ScalarField, UniformGrid


def _announce(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num:02d} {name}: {status}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def estimate_suite_bundle():
    return run_estimate_suite(n=1, seed=11, count=20)


def test_criterion_01_grim_reaper_reproduction():
    t0 = time.monotonic()
    bundle = run_convergence(problem="grim-reaper", levels=(200, 400, 800),
                             t_end=0.5, scheme="semi-implicit")
    elapsed = time.monotonic() - t0
    orders = bundle.tables["orders"]
    finest = bundle.tables["errors"][-1]
    ok = all(1.7 <= o <= 2.3 for o in orders) and finest <= 1e-4 and elapsed < 60
    _announce(1, "grim-reaper reproduction", ok,
              f"orders={[f'{o:.2f}' for o in orders]}, finest={finest:.2e}, "
              f"runtime={elapsed:.1f}s")


def test_criterion_02_gradient_sharpness_lam2():
    t0 = time.monotonic()
    bundle = run_sharpness_gradient(2.0, points_per_probe=16, tol=0.05)
    elapsed = time.monotonic() - t0
    lam = 2.0
    quot = next(r for r in bundle.reports if r.name == "difference-quotient")
    sup_lo = next(r for r in bundle.reports if r.name == "initial-sup-above-3lam")
    sup_hi = next(r for r in bundle.reports if r.name == "initial-sup-at-most-4lam")
    barriers = [r for r in bundle.reports if r.name.endswith("barrier-ordering")]
    threshold = 0.95 * lam * math.exp(lam * lam)  # 0.95 * 2 e^4 = 103.7
    ok = (
        quot.measured >= threshold
        and all(b.measured >= -b.slack for b in barriers)
        and sup_lo.passed and sup_hi.passed
        and elapsed < 600
    )
    _announce(2, "gradient-estimate sharpness (lam=2)", ok,
              f"quotient={quot.measured:.1f} (>= {threshold:.1f}), "
              f"min barrier gaps={[f'{b.measured:.3f}' for b in barriers]}, "
              f"sup0={sup_lo.measured:.2f} in (6, 8], runtime={elapsed:.0f}s")


def test_criterion_03_area_sharpness_k2():
    t0 = time.monotonic()
    bundle = run_sharpness_area(2, nodes_per_pi=1024, tol=0.05)
    elapsed = time.monotonic() - t0
    length = next(r for r in bundle.reports if r.name == "length-lower-bound")
    mids = [r for r in bundle.reports if r.name.startswith("midpoint-crossing")]
    # even members must dip below -0.95 k, odd rise above +0.95 k
    signs_ok = all(
        (m.measured <= -0.95 * 2.0) if m.direction == "upper" else
        (m.measured >= 0.95 * 2.0)
        for m in mids
    )
    ok = length.measured >= 0.95 * 12.0 and signs_ok and elapsed < 600
    _announce(3, "area-estimate sharpness (k=2)", ok,
              f"length={length.measured:.2f} (>= 11.4), "
              f"midpoints={[f'{m.measured:+.2f}' for m in mids]}, "
              f"runtime={elapsed:.0f}s")


def test_criterion_04_gradient_estimate_suite(estimate_suite_bundle):
    reports = [r for r in estimate_suite_bundle.reports
               if r.name.endswith("gradient-explicit")]
    assert len(reports) == 20
    violations = [r for r in reports if not r.passed]
    min_margin = min(r.margin for r in reports)
    ok = not violations and min_margin > 10.0
    _announce(4, "explicit gradient bound, 20 random flows", ok,
              f"violations={len(violations)}, min margin={min_margin:.1f}")


def test_criterion_05_cutoff_volume_invariant(estimate_suite_bundle):
    reports = [r for r in estimate_suite_bundle.reports
               if r.name.endswith("cutoff-volume")]
    assert len(reports) == 20
    worst = max(r.measured for r in reports)
    ok = worst <= 5.0 * 1.01
    _announce(5, "weighted volume-element maximum <= 5", ok,
              f"worst={worst:.4f} (cap {5.0 * 1.01})")


def test_criterion_06_height_bound(estimate_suite_bundle):
    reports = [r for r in estimate_suite_bundle.reports if r.name.endswith("-height")]
    assert len(reports) == 20
    violations = [r for r in reports if r.measured > r.bound + 1e-3]
    ok = not violations
    worst = max(r.measured - r.bound for r in reports)
    _announce(6, "sphere height bound", ok,
              f"violations={len(violations)}, worst excess={worst:.2e}")


def test_criterion_07_stokes_area_inequality():
    grid = UniformGrid((-1.0, 1.0), 801)  # h = 1/400
    x = grid.axes[0]
    rng = np.random.default_rng(2026)
    violations = 0
    for _ in range(50):
        w = np.zeros_like(x)
        for m in range(1, 7):
            w += rng.normal() * np.sin(m * math.pi * x + rng.uniform(0, 2 * math.pi)) / m
        w *= rng.uniform(0.2, 2.0)
        phi = plateau(x, -0.9, 0.9, rng.uniform(0.2, 0.4))
        phi *= 1.0 + 0.3 * np.cos(rng.integers(1, 5) * x)
        rep = stokes_area_check(ScalarField(grid, w), ScalarField(grid, phi))
        violations += not rep.passed
    ok = violations == 0
    _announce(7, "Stokes area inequality, 50 random pairs", ok,
              f"violations={violations}")


def test_criterion_08_ode_comparison_lemma():
    rng = np.random.default_rng(808)
    count = 100
    a = rng.uniform(0.1, 10.0, count)
    b = rng.uniform(0.1, 10.0, count)
    T = rng.uniform(0.1, 10.0, count)
    f0 = rng.uniform(0.0, 10.0, count) * np.sqrt(b)
    instances = saturating_oracle(a, b, T, f0, steps=10**6)
    rejected = violations = 0
    for inst in instances:
        try:
            rep = ode_check(inst, slack=1e-6)
        except InstanceRejected:
            rejected += 1
            continue
        violations += not rep.passed
    ok = violations == 0
    _announce(8, "ODE comparison lemma, saturating oracle", ok,
              f"violations={violations}, rejected={rejected}/{count} "
              f"(rate {rejected / count:.2f})")


@pytest.fixture(scope="module")
def identity_bundle():
    return run_identity_suite()


def test_criterion_09_energy_identity(identity_bundle):
    residuals = identity_bundle.tables["energy_residuals"]
    orders = [math.log2(residuals[i] / residuals[i + 1])
              for i in range(len(residuals) - 1)]
    ok = all(o >= 1.7 for o in orders) and residuals[-1] <= 1e-3
    _announce(9, "energy identity refinement", ok,
              f"orders={[f'{o:.2f}' for o in orders]}, finest={residuals[-1]:.2e}")


def test_criterion_10_heat_operator_identities(identity_bundle):
    t = identity_bundle.tables

    def orders(vals):
        return [math.log2(vals[i] / vals[i + 1]) for i in range(len(vals) - 1)]

    ov = orders(t["res_v"])
    oe = orders(t["res_exp"])
    oc = orders(t["res_eta_dev"])
    eta_max = max(t["eta_max"])
    ok = (all(o >= 1.7 for o in ov + oe + oc) and eta_max <= 1e-6)
    _announce(10, "heat-operator identity residuals", ok,
              f"v-orders={[f'{o:.2f}' for o in ov]}, exp-orders={[f'{o:.2f}' for o in oe]}, "
              f"cutoff-orders={[f'{o:.2f}' for o in oc]}, sign-check max={eta_max:.2e}")


def test_criterion_11_determinism(tmp_path):
    from mcflab.cli import main

    for name in ("one", "two"):
        code = main(["estimate-suite", "--n", "1", "--count", "5", "--seed", "42",
                     "--nodes", "401", "--output", str(tmp_path / name)])
        assert code == 0
    b1 = (tmp_path / "one" / "report.csv").read_bytes()
    b2 = (tmp_path / "two" / "report.csv").read_bytes()
    ok = b1 == b2 and len(b1) > 0
    _announce(11, "seeded reruns are byte-identical", ok,
              f"report.csv bytes={len(b1)}")
