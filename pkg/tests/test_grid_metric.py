import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoband import MetricField, TorusGrid, beltrami_to_metric, metric_to_beltrami, normalize_det, validate_metric
from isoband import fieldio
from isoband.errors import DegenerateEllipticityError, InvalidMetricError, StructuralError
from isoband.grid import (
    evaluate_fourier,
    fourier_coefficients,
    from_fourier,
    interpolate_periodic,
    spectral_divergence,
    spectral_gradient,
    torus_integral,
    upsample,
)
from isoband.metric import BeltramiCoefficient, sqrt_metric
from isoband.presets import ROTATED_ANISOTROPIC, ScalarSpec, metric_preset


def test_grid_rejects_bad_sizes():
    for n in (6, 12, 100):
        with pytest.raises(StructuralError):
            TorusGrid(n, 16)


def test_fourier_round_trip(rng):
    u = rng.standard_normal((16, 32))
    assert np.allclose(from_fourier(fourier_coefficients(u)).real, u, atol=1e-14)


def test_spectral_gradient_of_trig_polynomial():
    grid = TorusGrid(32, 32)
    x1, x2 = grid.mesh()
    u = np.sin(2 * x1 + x2) + np.cos(3 * x2)
    d1, d2 = spectral_gradient(u, grid)
    assert np.abs(d1 - 2 * np.cos(2 * x1 + x2)).max() < 1e-12
    assert np.abs(d2 - np.cos(2 * x1 + x2) + 3 * np.sin(3 * x2)).max() < 1e-12


def test_divergence_integrates_to_zero(rng):
    grid = TorusGrid(32, 32)
    v1 = from_fourier(fourier_coefficients(rng.standard_normal(grid.shape))).real
    v2 = rng.standard_normal(grid.shape)
    assert abs(torus_integral(spectral_divergence(v1, v2, grid), grid)) < 1e-10


def test_off_grid_evaluation_matches_closed_form(rng):
    grid = TorusGrid(32, 32)
    x1, x2 = grid.mesh()
    u = np.cos(x1 - 2 * x2) + 0.5 * np.sin(3 * x1)
    p1, p2 = rng.uniform(0, 2 * np.pi, (2, 50))
    exact = np.cos(p1 - 2 * p2) + 0.5 * np.sin(3 * p1)
    assert np.abs(evaluate_fourier(fourier_coefficients(u), p1, p2).real - exact).max() < 1e-12
    # Spline on the 4x upsampled field: accuracy limited by the cubic interpolant.
    assert np.abs(interpolate_periodic(u, p1, p2) - exact).max() < 1e-4


def test_upsample_preserves_samples(rng):
    u = np.real(from_fourier(fourier_coefficients(rng.standard_normal((16, 16)))))
    assert np.allclose(upsample(u, 4)[::4, ::4], u, atol=1e-13)


def test_validate_metric_flags_indefinite():
    grid = TorusGrid(16, 16)
    x1, _ = grid.mesh()
    G = MetricField(grid, 1 + 0 * x1, 1.5 + 0 * x1, 1 + 0 * x1)
    rep = validate_metric(G)
    assert not rep.passed
    assert "ellipticity" in {r for r, _, _ in rep.violations}


def test_validate_metric_flags_varying_det():
    grid = TorusGrid(16, 16)
    x1, _ = grid.mesh()
    G = MetricField(grid, 2 + np.cos(x1), 0 * x1, 1 + 0 * x1)
    assert "det_constancy" in {r for r, _, _ in validate_metric(G).violations}


def test_normalize_det_scales_constant_det():
    grid = TorusGrid(16, 16)
    G = MetricField.from_function(grid, metric_preset("constant", {"matrix": [[2.0, 1.0], [1.0, 3.0]]}))
    G1, s = normalize_det(G)
    assert s == pytest.approx(np.sqrt(5.0))
    assert np.abs(G1.det - 1).max() < 1e-14


def test_identity_metric_has_zero_q():
    grid = TorusGrid(16, 16)
    q = metric_to_beltrami(MetricField.constant(grid, np.eye(2)))
    assert q.sup_norm < 1e-15


def test_diag_metric_q_closed_form():
    grid = TorusGrid(16, 16)
    for t in (0.5, 0.25, 2.0):
        q = metric_to_beltrami(MetricField.constant(grid, np.diag([t, 1 / t])))
        assert np.abs(q.q - (1 - t) / (1 + t)).max() < 1e-15


def test_near_degenerate_metric_rejected():
    grid = TorusGrid(16, 16)
    t = 1e-14
    with pytest.raises(DegenerateEllipticityError):
        metric_to_beltrami(MetricField.constant(grid, np.diag([t, 1 / t])))


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 0.95), st.floats(-np.pi, np.pi))
def test_q_metric_round_trip(r, phase):
    grid = TorusGrid(8, 8)
    q = BeltramiCoefficient(grid, np.full(grid.shape, r * np.exp(1j * phase)))
    G = beltrami_to_metric(q)
    assert np.abs(G.det - 1).max() < 1e-9
    back = metric_to_beltrami(G)
    assert np.abs(back.q - q.q).max() < 1e-9 * max(1.0, 1 / (1 - r))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5), st.floats(-2, 2), st.floats(0.1, 5))
def test_sqrt_metric_squares_back(a, b, c):
    if a * c - b * b < 0.05:
        return
    grid = TorusGrid(8, 8)
    G = MetricField.constant(grid, [[a, b], [b, c]])
    F = sqrt_metric(G)
    FF = F.matrices() @ F.matrices()
    assert np.abs(FF - G.matrices()).max() < 1e-12 * max(a, c)


def test_rotated_presets_have_unit_det():
    grid = TorusGrid(32, 32)
    for fn in ROTATED_ANISOTROPIC.values():
        G = MetricField.from_function(grid, fn)
        assert np.abs(G.det - 1).max() < 1e-13
        assert validate_metric(G).passed


def test_scalar_spec_derivatives_match_finite_differences():
    spec = ScalarSpec.from_json({"constant": 0.3, "terms": [[1, 2, 0.4, -0.2]], "poly_x2": [0, 0.1, -0.05], "exp": True})
    x1, x2, h = 0.7, 1.1, 1e-5
    d1, d2 = spec.gradient(x1, x2)
    assert d1 == pytest.approx((spec(x1 + h, x2) - spec(x1 - h, x2)) / (2 * h), rel=1e-8)
    assert d2 == pytest.approx((spec(x1, x2 + h) - spec(x1, x2 - h)) / (2 * h), rel=1e-8)
    h11, h12, h22 = spec.hessian(x1, x2)
    g1p, _ = spec.gradient(x1 + h, x2)
    g1m, _ = spec.gradient(x1 - h, x2)
    _, g2p = spec.gradient(x1, x2 + h)
    _, g2m = spec.gradient(x1, x2 - h)
    assert h11 == pytest.approx((g1p - g1m) / (2 * h), rel=1e-7)
    assert h22 == pytest.approx((g2p - g2m) / (2 * h), rel=1e-7)
    assert h12 == pytest.approx((spec.gradient(x1, x2 + h)[0] - spec.gradient(x1, x2 - h)[0]) / (2 * h), rel=1e-7)


def test_field_file_round_trip(tmp_path, rng):
    grid = TorusGrid(16, 8)
    comps = rng.standard_normal((3, 16, 8))
    path = fieldio.write_fields(tmp_path / "g.isob", grid, comps)
    g2, back = fieldio.read_fields(path)
    assert g2 == grid
    assert np.array_equal(back, comps)


def test_field_file_rejects_corruption(tmp_path):
    grid = TorusGrid(8, 8)
    path = fieldio.write_fields(tmp_path / "v.isob", grid, [np.zeros((8, 8))])
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(StructuralError):
        fieldio.read_fields(path)
    path.write_bytes(b"XXXX" + b"\0" * 100)
    with pytest.raises(StructuralError):
        fieldio.read_fields(path)


def test_bands_csv_round_trip_is_exact(tmp_path, rng):
    k = np.linspace(0, 0.5, 5)
    bands = rng.random((5, 3))
    path = fieldio.write_bands_csv(tmp_path / "b.csv", k, bands)
    assert path.read_text().splitlines()[0] == "k,band1,band2,band3"
    k2, b2 = fieldio.read_bands_csv(path)
    assert np.array_equal(k2, k) and np.array_equal(b2, bands)


def test_metric_shape_mismatch_is_structural():
    grid = TorusGrid(8, 8)
    with pytest.raises((StructuralError, InvalidMetricError, ValueError)):
        validate_metric(MetricField(grid, np.ones((8, 8)), np.zeros((8, 4)), np.ones((8, 8))))
