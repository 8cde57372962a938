import csv
import json
import math

import numpy as np
import pytest

from agp_forge.agp import AgpBasis, AgpSolver
from agp_forge.models import single_spin_system
from agp_forge.qpt import (
    ScanRecord,
    fit_scaling,
    hs_norm_per_dim,
    ising_solver,
    orbit_coefficient_sum,
    peak_scan,
    restriction_scan,
    size_scan,
    write_fit,
    write_records,
)


def test_zero_agp_has_zero_norm():
    sol = ising_solver(6).solve(0.5)
    sol.alpha = np.zeros_like(sol.alpha)
    assert hs_norm_per_dim(sol) == 0.0
    assert orbit_coefficient_sum(sol) == 0.0


def test_rotating_spin_norm():
    H = single_spin_system(math.sin, lambda lam: 0.0, math.cos,
                           (math.cos, lambda lam: 0.0, lambda lam: -math.sin(lam)))
    sol = AgpSolver(H, AgpBasis.from_labels(["Y"])).solve(0.3)
    assert hs_norm_per_dim(sol) == pytest.approx(0.25)
    assert hs_norm_per_dim(sol, dlambda=0.1) == pytest.approx(0.0025)


def test_norm_counts_orbit_sizes():
    L = 8
    sol = ising_solver(L).solve(0.4)
    sizes = [len(o) for o in sol.basis.orbits]
    assert sizes == [2 * L] * (L - 1)
    assert hs_norm_per_dim(sol) == pytest.approx(2 * L * orbit_coefficient_sum(sol))


def test_critical_enhancement_at_l20():
    a, b = size_scan(0.5, [20])[0], size_scan(0.45, [20])[0]
    assert a.hs_norm_per_dim > b.hs_norm_per_dim
    assert a.mode == "exact" and a.residual < 1e-9


def test_single_size_scan_matches_direct():
    rec = size_scan(0.5, [12])
    assert len(rec) == 1
    assert rec[0].hs_norm_per_dim == pytest.approx(hs_norm_per_dim(ising_solver(12).solve(0.5)), rel=1e-14)


def test_residual_skipped_for_large_chains():
    rec = size_scan(0.5, [80])[0]
    assert math.isnan(rec.residual)


def test_fixed_restriction_policy():
    rec = size_scan(0.5, [10, 20], K_policy=3)
    assert [r.K for r in rec] == [3, 3]
    assert rec[0].restriction_rate == pytest.approx(4 / 9)


def test_full_restriction_equals_exact():
    L = 10
    full = restriction_scan(0.5, L, [L - 2])[0]
    assert full.restriction_rate == 1.0
    assert full.hs_norm_per_dim == pytest.approx(size_scan(0.5, [L])[0].hs_norm_per_dim, rel=1e-10)


def test_restriction_scan_validates_k():
    with pytest.raises(ValueError, match="L-2"):
        restriction_scan(0.5, 6, [5])


@pytest.mark.parametrize("g", [0.5, 0.48, 0.45])
def test_restriction_scan_monotone(g):
    recs = restriction_scan(g, 10)
    norms = [r.hs_norm_per_dim for r in recs]
    assert all(b >= a for a, b in zip(norms, norms[1:]))


def test_restriction_scaling_linear_at_critical_point():
    fit = fit_scaling(restriction_scan(0.5, 10), "rate")
    assert fit.r_squared > 0.98 and fit.slope > 0


def test_restriction_profile_weaker_off_critical():
    crit = fit_scaling(restriction_scan(0.5, 10), "rate")
    off = fit_scaling(restriction_scan(0.45, 10), "rate")
    assert off.slope < crit.slope
    assert off.r_squared < crit.r_squared


def test_fit_exact_line_and_constant():
    recs = [ScanRecord(0.5, L, None, 3.0 * L + 1.0) for L in (10, 20, 30, 40)]
    f = fit_scaling(recs)
    assert f.slope == pytest.approx(3.0) and f.intercept == pytest.approx(1.0) and f.r_squared == pytest.approx(1.0)
    const = fit_scaling([ScanRecord(0.5, L, None, 2.0) for L in (10, 20, 30)])
    assert const.slope == 0.0
    with pytest.raises(ValueError):
        fit_scaling(recs[:2])


def test_orbit_sum_scales_linearly_at_critical_point():
    recs = size_scan(0.5, list(range(20, 201, 20)), residual_max_L=0)
    f = fit_scaling(recs, "L", "orbit_sum")
    assert f.r_squared > 0.999
    assert f.slope == pytest.approx(1 / 12, rel=2e-2)


def test_peak_near_half():
    g_grid = np.round(np.arange(0.40, 0.61, 0.01), 2)
    recs = peak_scan(20, g_grid)
    best = max(recs, key=lambda r: r.hs_norm_per_dim)
    assert best.g == pytest.approx(0.5)


def test_writers(tmp_path):
    recs = restriction_scan(0.5, 6)
    p = write_records(recs, tmp_path / "r.csv")
    rows = list(csv.DictReader(p.open()))
    assert len(rows) == 5 and rows[0]["K"] == "0"
    q = write_fit(fit_scaling(recs, "rate"), tmp_path / "f.json", g=0.5)
    d = json.loads(q.read_text())
    assert d["g"] == 0.5 and d["n"] == 5
