"""Periodic metric fields and their Beltrami coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEllipticityError, InvalidMetricError, StructuralError
from .grid import TorusGrid

DET_REL_TOL = 1e-10
# The fixed-point contraction rate of the Beltrami solver is sup|q|.
DEGENERACY_MARGIN = 1e-12


@dataclass
class ValidationReport:
    """Outcome of a batch of checks; ``violations`` holds (rule, location, value)."""

    violations: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def add(self, rule: str, location, value):
        self.violations.append((rule, location, value))

    def check(self, rule: str, value: float, tol: float, location=None):
        """Record ``value`` under ``rule`` and flag it if it exceeds ``tol``."""
        self.metrics[rule] = float(value)
        if not value <= tol:
            self.add(rule, location, float(value))

    def merge(self, other: "ValidationReport", prefix: str = ""):
        for rule, loc, val in other.violations:
            self.add(prefix + rule, loc, val)
        for key, val in other.metrics.items():
            self.metrics[prefix + key] = val

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [
                {"rule": r, "location": _jsonable(loc), "value": v} for r, loc, v in self.violations
            ],
            "metrics": dict(self.metrics),
        }


def _jsonable(obj):
    if isinstance(obj, (tuple, list, np.ndarray)):
        return [_jsonable(o) for o in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric 2x2 metric G sampled on a torus grid (entries g11, g12, g22)."""

    grid: TorusGrid
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray

    @classmethod
    def constant(cls, grid: TorusGrid, matrix) -> "MetricField":
        m = np.asarray(matrix, dtype=float)
        if m.shape != (2, 2) or abs(m[0, 1] - m[1, 0]) > 1e-14 * max(1.0, abs(m).max()):
            raise InvalidMetricError("constant metric must be a symmetric 2x2 matrix")
        ones = np.ones(grid.shape)
        return cls(grid, m[0, 0] * ones, m[0, 1] * ones, m[1, 1] * ones)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "MetricField":
        x1, x2 = grid.mesh()
        g11, g12, g22 = fn(x1, x2)
        shape = grid.shape
        return cls(grid, np.broadcast_to(g11, shape).astype(float),
                   np.broadcast_to(g12, shape).astype(float),
                   np.broadcast_to(g22, shape).astype(float))

    @property
    def det(self) -> np.ndarray:
        return self.g11 * self.g22 - self.g12 ** 2

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        half_tr = 0.5 * (self.g11 + self.g22)
        disc = np.sqrt((0.5 * (self.g11 - self.g22)) ** 2 + self.g12 ** 2)
        return half_tr - disc, half_tr + disc

    @property
    def c(self) -> float:
        return float(self.eigenvalues()[0].min())

    @property
    def C(self) -> float:
        return float(self.eigenvalues()[1].max())

    @property
    def det_constant(self) -> float:
        return float(self.det.mean())

    def matrices(self) -> np.ndarray:
        """Samplewise matrices, shape (n1, n2, 2, 2)."""
        return np.stack([np.stack([self.g11, self.g12], -1), np.stack([self.g12, self.g22], -1)], -2)


@dataclass(frozen=True, eq=False)
class BeltramiCoefficient:
    grid: TorusGrid
    q: np.ndarray

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.q).max())


def _check_shapes(G: MetricField):
    shape = G.grid.shape
    for name in ("g11", "g12", "g22"):
        if np.shape(getattr(G, name)) != shape:
            raise StructuralError(f"{name} has shape {np.shape(getattr(G, name))}, grid is {shape}")


def validate_metric(G: MetricField, c: float | None = None, C: float | None = None) -> ValidationReport:
    """Pointwise ellipticity and determinant-constancy checks.

    ``c`` and ``C`` default to the sampled extreme eigenvalues, in which case
    only positivity is enforced by the ellipticity rule.
    """
    _check_shapes(G)
    report = ValidationReport()
    lo, hi = G.eigenvalues()
    c_bound = 0.0 if c is None else c
    C_bound = np.inf if C is None else C
    if c is None and lo.min() <= 0:
        idx = np.unravel_index(np.argmin(lo), lo.shape)
        report.add("ellipticity", idx, float(lo[idx]))
    elif c is not None and lo.min() < c_bound:
        idx = np.unravel_index(np.argmin(lo), lo.shape)
        report.add("ellipticity", idx, float(lo[idx]))
    if hi.max() > C_bound:
        idx = np.unravel_index(np.argmax(hi), hi.shape)
        report.add("ellipticity", idx, float(hi[idx]))
    det = G.det
    d0 = det.mean()
    rel = np.abs(det - d0) / max(abs(d0), np.finfo(float).tiny)
    if rel.max() > DET_REL_TOL:
        idx = np.unravel_index(np.argmax(rel), rel.shape)
        report.add("det_constancy", idx, float(det[idx]))
    report.metrics.update(c=float(lo.min()), C=float(hi.max()), det_constant=float(d0))
    return report


def normalize_det(G: MetricField) -> tuple[MetricField, float]:
    """Return (G / sqrt(d), sqrt(d)) where d is the constant determinant."""
    d = G.det_constant
    if not d > 0:
        raise InvalidMetricError(f"determinant must be positive, got {d}")
    s = np.sqrt(d)
    return MetricField(G.grid, G.g11 / s, G.g12 / s, G.g22 / s), float(s)


def metric_to_beltrami(G: MetricField) -> BeltramiCoefficient:
    """q = (-g12 + i(1 - g22)) / (g12 - i(g22 + 1)) samplewise, for det G = 1."""
    _check_shapes(G)
    q = (-G.g12 + 1j * (1.0 - G.g22)) / (G.g12 - 1j * (G.g22 + 1.0))
    out = BeltramiCoefficient(G.grid, q)
    if out.sup_norm >= 1.0 - DEGENERACY_MARGIN:
        raise DegenerateEllipticityError(f"sup|q| = {out.sup_norm} is too close to 1")
    return out


def beltrami_to_metric(q: BeltramiCoefficient) -> MetricField:
    """Unique symmetric det-1 metric whose Beltrami coefficient is ``q``."""
    if q.sup_norm >= 1.0:
        raise DegenerateEllipticityError(f"sup|q| = {q.sup_norm} >= 1 has no elliptic preimage")
    qq = np.asarray(q.q)
    denom = 1.0 - np.abs(qq) ** 2
    g12 = -2.0 * qq.imag / denom
    g22 = np.abs(1.0 + qq) ** 2 / denom
    g11 = np.abs(1.0 - qq) ** 2 / denom
    return MetricField(q.grid, g11, g12, g22)


def sqrt_metric(G: MetricField) -> MetricField:
    """Symmetric positive square root F with F F = G.

    For a 2x2 positive matrix, sqrt(G) = (G + sqrt(det G) I) / sqrt(tr G + 2 sqrt(det G)).
    """
    det = G.det
    lo, _ = G.eigenvalues()
    if (lo <= 0).any() or (det <= 0).any():
        raise InvalidMetricError("metric is not positive definite at every sample")
    s = np.sqrt(det)
    t = np.sqrt(G.g11 + G.g22 + 2.0 * s)
    return MetricField(G.grid, (G.g11 + s) / t, G.g12 / t, (G.g22 + s) / t)
