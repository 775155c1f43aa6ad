import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hicontrast import assemble_forms, classical_model, default_model, homogenize
from hicontrast.errors import DegenerateFit
from hicontrast.estimator import (
    ThetaGrid,
    default_theta_grid,
    fiber_distance,
    fit_rate,
    inner_closeness,
    inner_theta_grid,
    naive_distance,
    naive_matching_sweep,
    outer_expansion_check,
    parallel_map,
    radial_samples,
    region_of,
    sweep,
    zone_radius,
)
from hicontrast.oracles import brute_force_fiber

EPS = (0.5, 0.25, 0.125, 0.0625)


def test_fit_rate_examples():
    assert fit_rate([(e, e) for e in EPS]).slope == pytest.approx(1.0, abs=1e-12)
    assert fit_rate([(e, e**0.5) for e in EPS]).slope == pytest.approx(0.5, abs=1e-12)
    flat = fit_rate([(e, 3.0) for e in EPS])
    assert flat.slope == 0.0 and flat.flat and math.isnan(flat.r2)
    with pytest.raises(DegenerateFit):
        fit_rate([(e, e) for e in EPS[:3]])
    with pytest.raises(DegenerateFit):
        fit_rate([(0.5, 1.0), (0.25, 0.0), (0.125, 1.0), (0.0625, 1.0)])


@given(st.floats(-2, 3), st.floats(1e-3, 1e3), st.integers(4, 9))
def test_fit_rate_power_laws(p, c, k):
    eps = 2.0 ** -np.arange(1, k + 1)
    fit = fit_rate(zip(eps, c * eps**p))
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log(c), abs=1e-9)
    lo, hi = fit.band()
    assert lo <= fit.slope <= hi


def test_grid_structure():
    eps = 0.125
    g = default_theta_grid(eps, radii=10)
    assert np.any(np.all(g.points == 0, axis=1))
    for d in ((1.0, 0.0), (0.0, 1.0)):
        cross = g.points[:, 0] * d[1] - g.points[:, 1] * d[0]
        on_axis = g.points[np.abs(cross) < 1e-12]
        assert np.isclose(np.abs(on_axis @ d).max(), np.pi / eps)
    assert set(g.regions) == {"inner", "transition", "outer"}
    r = radial_samples(10.0, 20)
    assert r[0] == pytest.approx(1e-2) and r[-1] == pytest.approx(10.0)
    assert np.all(np.diff(r) > 0)
    assert zone_radius(0.5, np.array([1.0, 1.0]) / np.sqrt(2)) == pytest.approx(2 * np.pi * np.sqrt(2))
    assert region_of(0.25, (1.0, 0.0)) == "inner"
    assert region_of(0.25, (1.5, 0.0)) == "transition"
    assert region_of(0.25, (2.0, 0.0)) == "outer"


def test_parallel_map_preserves_order():
    assert parallel_map(lambda x: x * x, range(20), threads=4) == [x * x for x in range(20)]


def test_distance_bounds_and_constant_input(default16):
    forms, _, hom = default16
    d = fiber_distance(forms, hom, 0.25, (0.0, 0.0))
    assert 0.0 < d <= 2.0


def test_distance_matches_brute_force_classical():
    m = classical_model(8)
    forms = assemble_forms(m)
    _, hom = homogenize(forms)
    ref = brute_force_fiber(m, 0.25, (1.0, 0.0)).distance()
    assert fiber_distance(forms, hom, 0.25, (1.0, 0.0)) == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("theta", [(0.0, 0.0), (0.7, -2.0), (5.0, 3.0)])
def test_distance_matches_brute_force_default(theta):
    m = default_model(8)
    forms = assemble_forms(m)
    _, hom = homogenize(forms)
    dense = brute_force_fiber(m, 0.25, theta)
    assert dense.hermiticity_defect("fine") < 1e-12
    assert dense.hermiticity_defect("hom") < 1e-12
    ref = dense.distance()
    for method in ("lanczos", "dense"):
        assert fiber_distance(forms, hom, 0.25, theta, method) == pytest.approx(ref, abs=1e-8)


def test_phase_invariance(default16):
    """Shifting theta by 2 pi / eps along an axis reproduces the same fibre."""
    forms, _, hom = default16
    eps = 0.25
    base = (1.3, -0.4)
    a = fiber_distance(forms, hom, eps, base)
    for shift in ((2 * np.pi / eps, 0.0), (0.0, -2 * np.pi / eps)):
        b = fiber_distance(forms, hom, eps, np.add(base, shift))
        assert b == pytest.approx(a, rel=1e-9)


def test_sweep_sup_and_subgrid(default16):
    forms, _, hom = default16
    grid = default_theta_grid(0.25, radii=6)
    full = sweep(forms, hom, 0.25, grid, threads=2)
    assert full.sup == max(r.distance for r in full.rows)
    assert all(v <= full.sup for v in full.region_max.values())
    mask = np.arange(len(grid)) % 3 == 0
    sub = sweep(forms, hom, 0.25, grid.subset(mask))
    assert sub.sup <= full.sup
    single = sweep(forms, hom, 0.25, ThetaGrid.from_points(0.25, [[0.0, 0.0]]))
    assert single.sup == fiber_distance(forms, hom, 0.25, (0.0, 0.0))
    # threads do not change the numbers
    assert sweep(forms, hom, 0.25, grid, threads=1).rows == full.rows


def test_distance_monotone_in_eps(default32):
    forms, _, hom = default32
    d = [fiber_distance(forms, hom, e, (0.5, 0.5)) for e in (0.5, 0.25, 0.125, 0.0625)]
    assert all(b <= 1.1 * a for a, b in zip(d, d[1:]))


def test_naive_inner_grid_matches_zero_eps(default16):
    """Below the threshold the composite approximation is the eps = 0 homogenised fibre."""
    from hicontrast.estimator import fine_part, hom_part, mass_norm_of_difference
    from hicontrast.fibers import fine_fiber, hom_fiber

    forms, _, hom = default16
    eps = 0.25
    for t in inner_theta_grid(eps).points:
        ref = mass_norm_of_difference(
            forms, fine_part(fine_fiber(forms, eps, t)), [hom_part(hom_fiber(forms, hom, eps, t, True))]
        )
        assert naive_distance(forms, hom, eps, t, 0.5) == pytest.approx(ref, rel=1e-10)
    # and it stays within the eps-closeness bound of the full method
    full = sweep(forms, hom, eps, inner_theta_grid(eps)).sup
    naive = naive_matching_sweep(forms, hom, eps, 0.5, inner_theta_grid(eps)).sup
    assert abs(naive - full) <= inner_closeness(forms, hom, eps) + 1e-12


def test_naive_alpha_ordering(default16):
    """Smaller alpha should converge more slowly (order eps^alpha)."""
    forms, _, hom = default16
    slopes = {}
    for alpha in (0.25, 0.75):
        pairs = [
            (e, naive_matching_sweep(forms, hom, e, alpha, default_theta_grid(e, 12)).sup) for e in EPS
        ]
        slopes[alpha] = fit_rate(pairs).slope
    assert slopes[0.25] < slopes[0.75], slopes


def test_naive_rejects_bad_alpha(default16):
    forms, _, hom = default16
    with pytest.raises(ValueError):
        naive_matching_sweep(forms, hom, 0.25, 1.0)


def test_inner_closeness_first_order(default16):
    forms, _, hom = default16
    vals = [inner_closeness(forms, hom, e) for e in EPS]
    assert fit_rate(zip(EPS, vals)).slope == pytest.approx(1.0, abs=0.15)


def test_outer_expansion(default32):
    forms, _, _ = default32
    k = (np.pi, np.pi)
    zero = outer_expansion_check(forms, k, 0.05, 1, np.zeros(forms.N))
    assert zero.error == 0.0
    e0 = outer_expansion_check(forms, k, 0.05, 0).error
    e1 = outer_expansion_check(forms, k, 0.05, 1).error
    half = outer_expansion_check(forms, k, 0.025, 1).error
    assert 16 / 3 <= e1 / half <= 16 * 3
    assert e1 < e0
    with pytest.raises(ValueError):
        outer_expansion_check(forms, (0.0, 0.0), 0.05, 1)


def test_outer_expansion_ratio_against_kappa(default32):
    """N = 1 over N = 0 error ratio against (eps / |kappa|)^2, within a factor 4."""
    forms, _, _ = default32
    k = (np.pi, np.pi)
    e0 = outer_expansion_check(forms, k, 0.05, 0).error
    e1 = outer_expansion_check(forms, k, 0.05, 1).error
    predicted = (0.05 / np.hypot(*k)) ** 2
    assert predicted / 4 <= e1 / e0 <= 4 * predicted, (e1 / e0, predicted)
