"""Evaluation, differentiation and inversion of solved isothermal maps."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .beltrami import IsothermalMap
from .errors import DegenerateLatticeError, InversionError, OrientationError
from .grid import (
    DIRECT_EVALUATION_LIMIT,
    TWO_PI,
    PeriodicInterpolator,
    evaluate_fourier,
    from_fourier,
    interpolate_periodic,
)
from .metric import MetricField, ValidationReport

GPER_TOL = 1e-8
IDENTITY_NAMES = ("beltrami", "laplace2", "orthog", "jacob", "changeg")


class _MapEvaluator:
    """Per-map cache of coefficient tables and bulk interpolators."""

    def __init__(self, fmap: IsothermalMap):
        self.fmap = fmap
        self.dz_hat, self.dzb_hat = fmap._derivative_coeffs
        self._interp = {}

    def interpolator(self, name: str) -> PeriodicInterpolator:
        if name not in self._interp:
            if name == "p":
                values = from_fourier(self.fmap.p_hat)
            elif name == "fz":
                values = from_fourier(self.dz_hat)
            else:
                values = from_fourier(self.dzb_hat)
            self._interp[name] = PeriodicInterpolator(values)
        return self._interp[name]

    def periodic(self, name: str, z: np.ndarray, method: str | None = None) -> np.ndarray:
        table = {"p": self.fmap.p_hat, "fz": self.dz_hat, "fzb": self.dzb_hat}[name]
        if method is None:
            method = "direct" if z.size < DIRECT_EVALUATION_LIMIT else "bulk"
        if method == "direct":
            return evaluate_fourier(table, z.real, z.imag)
        return self.interpolator(name)(z.real, z.imag)


def _evaluator(fmap: IsothermalMap) -> _MapEvaluator:
    ev = fmap.__dict__.get("_evaluator")
    if ev is None:
        ev = _MapEvaluator(fmap)
        object.__setattr__(fmap, "_evaluator", ev)
    return ev


def evaluate(fmap: IsothermalMap, z, method: str | None = None):
    """f(z) = alpha z + beta conj(z) + p(z) - p(0).

    ``method`` is "direct" (Fourier summation), "bulk" (refined grid plus
    cubic spline) or None to choose by the number of points.
    """
    z = np.asarray(z, dtype=complex)
    p = _evaluator(fmap).periodic("p", z.ravel(), method).reshape(z.shape)
    out = fmap.alpha * z + fmap.beta * np.conj(z) + p - fmap.p0
    return complex(out) if out.ndim == 0 else out


def derivatives(fmap: IsothermalMap, z, method: str | None = None):
    """(d_z f, d_zbar f) at arbitrary points."""
    z = np.asarray(z, dtype=complex)
    ev = _evaluator(fmap)
    flat = z.ravel()
    fz = fmap.alpha + ev.periodic("fz", flat, method).reshape(z.shape)
    fzb = fmap.beta + ev.periodic("fzb", flat, method).reshape(z.shape)
    return fz, fzb


def df_from_wirtinger(fz, fzb) -> np.ndarray:
    """Real 2x2 Jacobian from Wirtinger derivatives, shape (..., 2, 2)."""
    s = fz + fzb
    d = fz - fzb
    row1 = np.stack([s.real, -d.imag], -1)
    row2 = np.stack([s.imag, d.real], -1)
    return np.stack([row1, row2], -2)


def jacobian_matrix(fmap: IsothermalMap, z, method: str | None = None):
    """(Df, J) at ``z``; raises when the Jacobian is not positive."""
    fz, fzb = derivatives(fmap, z, method)
    J = np.abs(fz) ** 2 - np.abs(fzb) ** 2
    if np.any(J <= 0):
        bad = np.asarray(z).ravel()[np.argmin(np.ravel(J))]
        raise OrientationError(f"non-positive Jacobian {np.min(J):.3e} at z = {bad}")
    return df_from_wirtinger(fz, fzb), J


def _linear_inverse(fmap: IsothermalMap, w):
    a, b = fmap.alpha, fmap.beta
    return (np.conj(a) * w - b * np.conj(w)) / (abs(a) ** 2 - abs(b) ** 2)


def invert(fmap: IsothermalMap, w, tol: float = 1e-12, max_steps: int = 60, method: str | None = None):
    """Solve f(z) = w by damped Newton seeded with the inverse linear part."""
    w = np.asarray(w, dtype=complex)
    scalar = w.ndim == 0
    w = np.atleast_1d(w).ravel()
    if method is None:
        # Keep one evaluation path for the whole batch so residuals stay comparable.
        method = "direct" if w.size < DIRECT_EVALUATION_LIMIT else "bulk"
    z = _linear_inverse(fmap, w)
    r = evaluate(fmap, z, method) - w
    err = np.abs(r)
    scale = 1.0 + np.abs(w)
    active = err > tol * scale
    for _ in range(max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        fz, fzb = derivatives(fmap, z[idx], method)
        det = np.abs(fz) ** 2 - np.abs(fzb) ** 2
        step = (np.conj(fz) * r[idx] - fzb * np.conj(r[idx])) / det
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        z_new = z[idx].copy()
        r_new = r[idx].copy()
        for _ in range(12):
            trial = z[idx][pending] - t[pending] * step[pending]
            r_trial = evaluate(fmap, trial, method) - w[idx][pending]
            ok = (np.abs(r_trial) < err[idx][pending]) | (np.abs(r_trial) <= tol * scale[idx][pending])
            sub = np.nonzero(pending)[0]
            z_new[sub[ok]] = trial[ok]
            r_new[sub[ok]] = r_trial[ok]
            pending[sub[ok]] = False
            if not pending.any():
                break
            t[pending] *= 0.5
        if pending.any():
            raise InversionError(
                f"Newton step failed to reduce the residual at w = {w[idx][pending][0]}",
                location=complex(w[idx][pending][0]),
            )
        z[idx] = z_new
        r[idx] = r_new
        err[idx] = np.abs(r_new)
        active = err > tol * scale
    if active.any():
        k = int(np.argmax(np.where(active, err, -1)))
        raise InversionError(f"inversion residual {err[k]:.3e} above tolerance at w = {w[k]}", location=complex(w[k]))
    return complex(z[0]) if scalar else z


def _apply_real(M: np.ndarray, w):
    x = M[0, 0] * w.real + M[0, 1] * w.imag
    y = M[1, 0] * w.real + M[1, 1] * w.imag
    return x + 1j * y


@dataclass(frozen=True, eq=False)
class RenormalizedMap:
    """g = R o f, mapping the lattice generated by (2 pi, kappa) onto 2 pi Z^2."""

    base: IsothermalMap
    R: np.ndarray
    A: np.ndarray

    @cached_property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @property
    def det_R(self) -> float:
        return float(np.linalg.det(self.R))

    @property
    def grid(self):
        return self.base.grid

    def evaluate(self, z, method: str | None = None):
        return _apply_real(self.R, np.asarray(evaluate(self.base, z, method)))

    def jacobian(self, z, method: str | None = None):
        """(Dg, J_g) with Dg = R Df and J_g = det R * J_f."""
        Df, J = jacobian_matrix(self.base, z, method)
        return self.R @ Df, self.det_R * J

    def invert(self, y, tol: float = 1e-12, method: str | None = None):
        w = _apply_real(self.R_inv, np.asarray(y, dtype=complex))
        return invert(self.base, w, tol=tol, method=method)


def renormalize(fmap: IsothermalMap, check_points: int = 16) -> RenormalizedMap:
    kappa = fmap.kappa
    if abs(kappa.imag) < 1e-8:
        raise DegenerateLatticeError(f"Im kappa = {kappa.imag:.3e}")
    H = np.array([[TWO_PI, kappa.real], [0.0, kappa.imag]])
    R = TWO_PI * np.linalg.inv(H)
    A = R @ R.T / np.linalg.det(R)
    A = 0.5 * (A + A.T)
    rmap = RenormalizedMap(fmap, R, A)
    if check_points:
        rng = np.random.default_rng(0)
        z = TWO_PI * (rng.random(check_points) + 1j * rng.random(check_points))
        g0 = rmap.evaluate(z)
        e1 = rmap.evaluate(z + TWO_PI) - g0 - TWO_PI
        e2 = rmap.evaluate(z + 1j * TWO_PI) - g0 - 1j * TWO_PI
        worst = max(np.abs(e1).max(), np.abs(e2).max())
        if worst > GPER_TOL * (1 + TWO_PI):
            raise DegenerateLatticeError(f"renormalized map is not lattice periodic (error {worst:.3e})")
    return rmap


def _metric_at(G: MetricField, z, metric_fn):
    if metric_fn is not None:
        g11, g12, g22 = metric_fn(z.real, z.imag)
        return [np.broadcast_to(v, z.shape) for v in (g11, g12, g22)]
    if z.shape == G.grid.shape and np.allclose(z, G.grid.points()):
        return [G.g11, G.g12, G.g22]
    return [interpolate_periodic(c, z.real, z.imag) for c in (G.g11, G.g12, G.g22)]


def identity_residuals(fmap: IsothermalMap, G: MetricField, points=None, metric_fn=None,
                       method: str | None = None) -> dict:
    """Worst absolute residual of each identity linking f and G.

    With ``points`` omitted the grid samples are used; otherwise derivatives
    are evaluated at the given complex points and G either from ``metric_fn``
    (callable of x1, x2 returning g11, g12, g22) or by periodic interpolation.
    ``method`` picks direct Fourier summation or the bulk spline evaluator.
    """
    if points is None:
        z = G.grid.points()
        fz, fzb = fmap.fz_grid, fmap.fzb_grid
    else:
        z = np.asarray(points, dtype=complex)
        fz, fzb = derivatives(fmap, z, method=method)
    g11, g12, g22 = _metric_at(G, z, metric_fn)
    Df = df_from_wirtinger(fz, fzb)
    J = np.abs(fz) ** 2 - np.abs(fzb) ** 2
    grad1 = Df[..., 0, :]
    grad2 = Df[..., 1, :]

    def Gv(v):
        return np.stack([g11 * v[..., 0] + g12 * v[..., 1], g12 * v[..., 0] + g22 * v[..., 1]], -1)

    def rot(v):
        return np.stack([-v[..., 1], v[..., 0]], -1)

    G1, G2 = Gv(grad1), Gv(grad2)
    res = {
        "beltrami": np.abs(grad2 - rot(G1)).max(),
        "laplace2": np.abs(grad1 + rot(G2)).max(),
        "orthog": np.abs((G1 * grad2).sum(-1)).max(),
        "jacob": max(np.abs(J - (G1 * grad1).sum(-1)).max(), np.abs(J - (G2 * grad2).sum(-1)).max()),
    }
    Gm = np.stack([np.stack([g11, g12], -1), np.stack([g12, g22], -1)], -2)
    M = Df @ Gm @ np.swapaxes(Df, -1, -2) / J[..., None, None]
    res["changeg"] = np.abs(M - np.eye(2)).max()
    return {k: float(v) for k, v in res.items()}


def verify_identities(fmap: IsothermalMap, G: MetricField, tol: float = 1e-6, points=None,
                      metric_fn=None) -> ValidationReport:
    report = ValidationReport()
    for name, value in identity_residuals(fmap, G, points, metric_fn).items():
        report.check(name, value, tol)
    return report
