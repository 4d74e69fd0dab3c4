"""Acceptance suite: one pass/fail line per criterion at the stated tolerances."""

import time

import numpy as np
import pytest
from scipy.optimize import brentq

from isoband import (
    BandStructure,
    CoefficientSet,
    DeltaLine,
    MetricField,
    SolverConfig,
    StripProblem,
    TorusGrid,
    band_oscillation,
    corner_exponent,
    evaluate,
    identity_residuals,
    metric_to_beltrami,
    pushforward,
    renormalize,
    solve_bands,
    solve_periodic_beltrami,
    thomas_bound,
    uniform_k_grid,
    verify_reflection_equivalence,
)
from isoband.boundary import DIRICHLET, NEUMANN, sandwich_spectra_strip
from isoband.floquet import plane_wave_modes, sandwich_spectra_torus
from isoband.pipeline import PROBLEM_PRESETS, preset_spec, run_pipeline
from isoband.presets import MIRROR_SYMMETRIC, ROTATED_ANISOTROPIC, ScalarSpec


def _solve(fn, n):
    grid = TorusGrid(n, n)
    G = MetricField.from_function(grid, fn)
    return solve_periodic_beltrami(metric_to_beltrami(G), SolverConfig()), G


def test_a1_constant_metric_linear_map(acceptance):
    worst, slowest = 0.0, 0.0
    grid = TorusGrid(128, 128)
    for t in (1.0, 0.5, 0.25):
        G = MetricField.constant(grid, np.diag([t, 1 / t]))
        t0 = time.perf_counter()
        fmap = solve_periodic_beltrami(metric_to_beltrami(G))
        slowest = max(slowest, time.perf_counter() - t0)
        q = (1 - t) / (1 + t)
        worst = max(worst, abs(fmap.alpha - 1 / (1 + q)), abs(fmap.beta - q / (1 + q)),
                    abs(fmap.kappa - 2j * np.pi * t))
    ok = acceptance("A1 constant-metric Beltrami", worst < 1e-10 and slowest < 1.0,
                    f"max error {worst:.2e} (tol 1e-10), slowest solve {slowest:.3f}s (< 1s)")
    assert ok


def test_a2_identity_suite(acceptance, rng):
    t0 = time.perf_counter()
    z = 2 * np.pi * (rng.random(2000) + 1j * rng.random(2000))
    worst, worst_ratio = 0.0, np.inf
    for name, fn in ROTATED_ANISOTROPIC.items():
        coarse_map, coarse_G = _solve(fn, 128)
        fine_map, fine_G = _solve(fn, 256)
        on_grid = identity_residuals(coarse_map, coarse_G)
        coarse = identity_residuals(coarse_map, coarse_G, points=z, method="bulk")
        fine = identity_residuals(fine_map, fine_G, points=z, method="bulk")
        worst = max(worst, max(on_grid.values()), max(coarse.values()))
        worst_ratio = min(worst_ratio, min(coarse[k] / fine[k] for k in coarse))
    elapsed = time.perf_counter() - t0
    ok = acceptance("A2 identity suite", worst < 1e-6 and worst_ratio >= 2 and elapsed < 30,
                    f"max residual at 128^2 {worst:.2e} (tol 1e-6), min refinement ratio {worst_ratio:.1f} (>= 2), "
                    f"{elapsed:.1f}s (< 30s)")
    assert ok


def test_a3_periodicity_and_symmetry(acceptance, rng):
    z = 2 * np.pi * (rng.random(1000) + 1j * rng.random(1000))
    per = 0.0
    for fn in list(ROTATED_ANISOTROPIC.values()) + list(MIRROR_SYMMETRIC.values()):
        fmap, _ = _solve(fn, 128)
        f = evaluate(fmap, z)
        per = max(per, np.abs(evaluate(fmap, z + 2 * np.pi) - f - 2 * np.pi).max(),
                  np.abs(evaluate(fmap, z + 2j * np.pi) - f - fmap.kappa).max())
    sym = 0.0
    for fn in MIRROR_SYMMETRIC.values():
        fmap, _ = _solve(fn, 128)
        f_pi = evaluate(fmap, np.array([np.pi * 1j]))[0]
        sym = max(sym, abs(fmap.kappa.real), abs(fmap.kappa - 2j * f_pi.imag))
    ok = acceptance("A3 periodicity and mirror symmetry", per < 1e-8 and sym < 1e-8,
                    f"periodicity {per:.2e}, symmetry {sym:.2e} (tol 1e-8)")
    assert ok


def _equivalence_gap(n, M, k_grid, n_bands=10):
    fn = ROTATED_ANISOTROPIC["rotated-anisotropic-a"]
    fmap, G = _solve(fn, n)
    x1, x2 = G.grid.mesh()
    src = CoefficientSet(G.grid, metric=G, a1=0.2 * np.cos(x2), a2=0.1 * np.sin(x1),
                         V=np.cos(x1) + 0.5 * np.sin(x1 + x2))
    target = pushforward(renormalize(fmap), src)
    a = solve_bands(src, k_grid, n_bands, M, jobs=4).bands
    b = solve_bands(target, k_grid, n_bands, M, jobs=4).bands
    return np.abs(a - b).max()


def test_a4_unitary_equivalence(acceptance):
    t0 = time.perf_counter()
    k = uniform_k_grid(17)
    coarse = _equivalence_gap(128, 8, k)
    fine = _equivalence_gap(256, 16, k)
    elapsed = time.perf_counter() - t0
    ok = acceptance("A4 unitary equivalence", fine < 1e-4 and coarse / fine >= 2 and elapsed < 300,
                    f"gap at 256^2/M=16 {fine:.2e} (tol 1e-4), refinement factor {coarse / fine:.1e} (>= 2), "
                    f"{elapsed:.1f}s (< 300s)")
    assert ok


def _circle_delta_levels(sigma, count):
    even = [brentq(lambda x: x * np.tan(np.pi * x) - sigma / 2, j + 1e-12, j + 0.5 - 1e-12) ** 2
            for j in range(count)]
    return np.sort(even + [float(n * n) for n in range(1, count + 1)])[:count]


_A5 = {}


def _a5_line(acceptance):
    if len(_A5) == 3:
        ok = all(v[0] for v in _A5.values())
        acceptance("A5 Floquet oracles", ok, "; ".join(v[1] for v in _A5.values()))


def test_a5_free_and_constant_fibers(acceptance):
    k_grid = [0.0, 0.3, 0.5]
    m, n = plane_wave_modes(6)
    worst = 0.0
    for A in (np.eye(2), np.diag([0.5, 2.0]), np.array([[1.3, 0.4], [0.4, 0.8]])):
        cs = CoefficientSet(TorusGrid(32, 32), A=A)
        bands = solve_bands(cs, k_grid, 12, 6).bands
        for kk, row in zip(k_grid, bands):
            K1 = m + kk
            exact = np.sort(A[0, 0] * K1 ** 2 + 2 * A[0, 1] * K1 * n + A[1, 1] * n ** 2)[:12]
            worst = max(worst, np.abs(row - exact).max())
    _A5["free"] = (worst < 1e-10, f"free/constant-A {worst:.1e} (tol 1e-10)")
    _a5_line(acceptance)
    assert worst < 1e-10


def test_a5_delta_line_oracle(acceptance):
    cs = CoefficientSet(TorusGrid(16, 128), delta_lines=(DeltaLine(np.pi, 1.0),))
    vals = solve_bands(cs, [0.0], 4, (0, 16)).bands[0]
    err = np.abs(vals - _circle_delta_levels(1.0, 4)).max()
    _A5["delta"] = (err < 1e-6, f"delta line at M=16 {err:.1e} (tol 1e-6)")
    _a5_line(acceptance)
    assert err < 1e-6


def test_a5_cosine_potential_monotone(acceptance):
    grid = TorusGrid(64, 64)
    x1, x2 = grid.mesh()
    ok = True
    for V in (2 * np.cos(x1), 2 * np.cos(x1) + np.cos(x1 + x2)):
        cs = CoefficientSet(grid, V=V)
        vals = [solve_bands(cs, [0.3], 5, M).bands[0] for M in (1, 2, 4, 8)]
        diffs = [np.abs(b - a).max() for a, b in zip(vals, vals[1:])]
        ok &= bool(diffs[0] > diffs[1] > diffs[2])
    _A5["cosine"] = (ok, f"cosine monotone over M=1,2,4,8: {ok}")
    _a5_line(acceptance)
    assert ok


def test_a6_thomas_bound(acceptance):
    ys = np.array([4.0, 8.0, 16.0, 32.0])
    grid = TorusGrid(16, 256)
    ratios = thomas_bound(CoefficientSet(grid), 0.5, ys, 0.0, (2, 40)) / ys
    x1, _ = grid.mesh()
    s_v = thomas_bound(CoefficientSet(grid, V=np.cos(x1)), 0.5, ys[1:], 0.0, (2, 40))
    ok = bool(np.all((ratios >= 0.9) & (ratios <= 1.1)) and np.all(s_v >= 0.8 * ys[1:]))
    acceptance("A6 Thomas bound", ok,
               f"free s/y in [{ratios.min():.4f}, {ratios.max():.4f}] (within [0.9, 1.1]), "
               f"with |V|=1 min s/y = {np.min(s_v / ys[1:]):.4f} (>= 0.8)")
    assert ok


def test_a7_reflection_equivalence(acceptance):
    t0 = time.perf_counter()
    cases = {
        "free": {},
        "cosine": {"V": lambda x1, x2: np.cos(x1) + 0 * x2},
        "odd-a2": {"a2": lambda x1, x2: np.sin(x2) + 0 * x1},
    }
    worst = {}
    for name, kw in cases.items():
        for bc in (DIRICHLET, NEUMANN):
            sp = StripProblem(bc, n1=32, n2=128, **kw)
            rep = verify_reflection_equivalence(sp, uniform_k_grid(5, half=True), 10, (4, 16))
            m = max(rep.metrics[k] for k in ("union_vs_doubled", "dirichlet_vs_odd", "neumann_vs_even"))
            worst[name] = max(worst.get(name, 0.0), m)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-8 and elapsed < 120
    acceptance("A7 reflection equivalence", ok,
               ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (tol 1e-8), {elapsed:.1f}s (< 120s)")
    assert ok


def test_a8_sandwich_reduction(acceptance):
    grid = TorusGrid(64, 64)
    x1, _ = grid.mesh()
    left, right = sandwich_spectra_torus(np.exp(0.1 * np.sin(x1)), 0.3, 10, 8)
    torus = np.abs(left - right).max()
    omega = ScalarSpec.from_json({"constant": 1.0, "poly_x2": [0.0, 0.2 * np.pi, -0.2]})
    left, right = sandwich_spectra_strip(omega, 0.3, 10, (4, 16), V=lambda a, b: np.cos(a) + 0 * b)
    strip = np.abs(left - right).max()
    ok = torus < 1e-6 and strip < 1e-6
    acceptance("A8 sandwich reduction", ok, f"torus {torus:.1e}, strip with Robin edges {strip:.1e} (tol 1e-6)")
    assert ok


def test_a9_absolute_continuity_witness(acceptance):
    worst_name, worst = None, np.inf
    for name in PROBLEM_PRESETS:
        rep = run_pipeline(preset_spec(name, kPoints=33), None, jobs=4)
        low = min(rep.oscillation)
        if low < worst:
            worst_name, worst = name, low
    k = uniform_k_grid(33)
    control = band_oscillation(BandStructure(k, np.tile(np.arange(1.0, 6.0), (33, 1))))
    ok = worst > 1e-6 and control.flagged == (0, 1, 2, 3, 4)
    acceptance("A9 band oscillation", ok,
               f"{len(PROBLEM_PRESETS)} presets, smallest oscillation {worst:.3e} ({worst_name}) (> 1e-6); "
               f"constant-fiber control flagged {len(control.flagged)}/5")
    assert ok


def test_a10_corner_exponent(acceptance, rng):
    exact = (corner_exponent(1, 1, 0) == 1.0 and corner_exponent(1, 1j, 0) == 0.5
             and corner_exponent(1, -1, 0) == 2.0)
    worst = 0.0
    for _ in range(1000):
        gm, gp = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        rot = np.exp(1j * rng.uniform(0, 2 * np.pi))
        d = abs(corner_exponent(rot * gm, rot * gp, 0) - corner_exponent(gm, gp, 0))
        worst = max(worst, min(d, abs(d - 2)))
    ok = exact and worst < 1e-12
    acceptance("A10 corner exponent", ok, f"cases nu = 1, 1/2, 2 exact: {exact}; rotation invariance {worst:.1e} (tol 1e-12)")
    assert ok
