"""Coefficient sets and their transport through the renormalized map g = R o f."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import fieldio
from .errors import InvalidMetricError, InversionError, PushforwardError, StructuralError
from .grid import TWO_PI, TorusGrid, interpolate_periodic, spectral_divergence, spectral_gradient
from .isothermal import RenormalizedMap, derivatives, df_from_wirtinger
from .metric import MetricField

OMEGA_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class DeltaLine:
    """Delta interaction on the horizontal line x2 = y0 with density sigma(x1).

    ``sigma`` is a scalar or samples on the uniform x1 grid of the owning set.
    """

    y0: float
    sigma: object = 1.0

    def samples(self, n1: int) -> np.ndarray:
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim == 0:
            return np.full(n1, float(s))
        if s.shape != (n1,):
            raise StructuralError(f"delta density has {s.shape[0]} samples, grid has {n1}")
        return s

    def to_json(self) -> dict:
        s = np.asarray(self.sigma, dtype=float)
        return {"y0": float(self.y0), "sigma": float(s) if s.ndim == 0 else s.tolist()}


@dataclass(frozen=True, eq=False)
class DeltaCurve:
    """Delta interaction on a sampled closed curve.

    ``points`` are complex positions y_i, ``sigma`` the density there and
    ``ds`` the arc-length quadrature weight of each sample.
    """

    points: np.ndarray
    sigma: np.ndarray
    ds: np.ndarray

    @property
    def total(self) -> float:
        """Quadrature of sigma ds along the curve."""
        return float(np.sum(self.sigma * self.ds))

    def to_json(self) -> dict:
        return {
            "points": np.column_stack([self.points.real, self.points.imag]).tolist(),
            "sigma": np.asarray(self.sigma).tolist(),
            "ds": np.asarray(self.ds).tolist(),
        }


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Coefficients (A or G, a, V, mu, delta data) of a periodic operator.

    ``metric`` is an optional variable metric field; when present it takes
    the place of the constant matrix ``A``. Missing a, V and mu mean 0, 0, 1.
    """

    grid: TorusGrid
    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    a1: np.ndarray | None = None
    a2: np.ndarray | None = None
    V: np.ndarray | None = None
    mu: np.ndarray | None = None
    metric: MetricField | None = None
    delta_lines: tuple = ()
    delta_curves: tuple = ()

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "A", A)
        if A.shape != (2, 2) or abs(A[0, 1] - A[1, 0]) > 1e-12 * abs(A).max():
            raise InvalidMetricError("A must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise InvalidMetricError("A must be positive definite")
        for name in ("a1", "a2", "V", "mu"):
            val = getattr(self, name)
            if val is not None and np.shape(val) != self.grid.shape:
                raise StructuralError(f"{name} has shape {np.shape(val)}, grid is {self.grid.shape}")
        if self.mu is not None and np.min(self.mu) <= 0:
            raise InvalidMetricError("weight mu must be positive at every sample")
        if self.metric is not None and self.metric.grid != self.grid:
            raise StructuralError("metric field lives on a different grid")
        object.__setattr__(self, "delta_lines", tuple(self.delta_lines))
        object.__setattr__(self, "delta_curves", tuple(self.delta_curves))

    def field(self, name: str) -> np.ndarray:
        val = getattr(self, name)
        if val is not None:
            return np.asarray(val, dtype=float)
        return np.ones(self.grid.shape) if name == "mu" else np.zeros(self.grid.shape)

    def metric_entries(self):
        """(g11, g12, g22) as grid arrays."""
        if self.metric is not None:
            return self.metric.g11, self.metric.g12, self.metric.g22
        ones = np.ones(self.grid.shape)
        return self.A[0, 0] * ones, self.A[0, 1] * ones, self.A[1, 1] * ones

    @property
    def has_magnetic(self) -> bool:
        return bool((self.a1 is not None and np.any(self.a1)) or (self.a2 is not None and np.any(self.a2)))

    def with_updates(self, **changes) -> "CoefficientSet":
        return replace(self, **changes)

    def save(self, path) -> None:
        fieldio.write_fields(path, self.grid, [self.field(n) for n in ("a1", "a2", "V", "mu")])
        fieldio.write_sidecar(path, {
            "A": self.A.tolist(),
            "grid": self.grid.to_dict(),
            "variableMetric": self.metric is not None,
            "deltaLines": [d.to_json() for d in self.delta_lines],
            "deltaCurves": [c.to_json() for c in self.delta_curves],
        })

    @classmethod
    def load(cls, path) -> "CoefficientSet":
        grid, comps = fieldio.read_fields(path)
        meta = fieldio.read_sidecar(path)
        lines = tuple(DeltaLine(d["y0"], np.asarray(d["sigma"], dtype=float)) for d in meta.get("deltaLines", []))
        curves = []
        for c in meta.get("deltaCurves", []):
            pts = np.asarray(c["points"], dtype=float)
            curves.append(DeltaCurve(pts[:, 0] + 1j * pts[:, 1], np.asarray(c["sigma"]), np.asarray(c["ds"])))
        return cls(grid, np.asarray(meta["A"]), comps[0], comps[1], comps[2], comps[3],
                   delta_lines=lines, delta_curves=tuple(curves))


def pushforward(rmap: RenormalizedMap, src: CoefficientSet, target: TorusGrid | None = None,
                tol: float = 1e-12) -> CoefficientSet:
    """Transport (a, V, mu) through g by pulling each target sample back.

    a~ = (Dg^T)^-1 a, V~ = V / Jg and mu~ = mu / Jg, all composed with g^-1.
    The result carries the constant metric A of ``rmap``; horizontal delta
    lines become sampled image curves.
    """
    target = target or src.grid
    y = target.points()
    try:
        x = rmap.invert(y.ravel(), tol=tol).reshape(y.shape)
    except InversionError as exc:
        raise PushforwardError(f"pullback failed: {exc}", location=exc.location) from exc
    Dg, Jg = rmap.jacobian(x)
    x1, x2 = x.real, x.imag
    out = {"V": interpolate_periodic(src.field("V"), x1, x2) / Jg, "mu": 1.0 / Jg}
    if src.mu is not None:
        out["mu"] = interpolate_periodic(src.field("mu"), x1, x2) / Jg
    if src.has_magnetic:
        a1 = interpolate_periodic(src.field("a1"), x1, x2)
        a2 = interpolate_periodic(src.field("a2"), x1, x2)
        # a~ = (Dg^T)^{-1} a, solved per sample.
        DgT = np.swapaxes(Dg, -1, -2)
        at = np.linalg.solve(DgT, np.stack([a1, a2], -1)[..., None])[..., 0]
        out["a1"], out["a2"] = at[..., 0], at[..., 1]
    if src.delta_curves:
        raise StructuralError("only horizontal source delta lines can be transported")
    curves = tuple(pushforward_delta(rmap, line.y0, line.samples(src.grid.n1)) for line in src.delta_lines)
    return CoefficientSet(target, rmap.A, out.get("a1"), out.get("a2"), out["V"], out["mu"],
                          delta_curves=curves)


def pushforward_delta(rmap: RenormalizedMap, y0: float, sigma) -> DeltaCurve:
    """Image of the line x2 = y0 with density sigma~ = |Dg^{-1} t| sigma o g^{-1}.

    The line is parametrized by x1 at the sample points of ``sigma``; the
    image tangent is Dg e1, so sigma~ = sigma / |Dg e1| and ds = |Dg e1| dx1.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        sigma = np.full(rmap.grid.n1, float(sigma))
    n = sigma.size
    t = np.arange(n) * (TWO_PI / n)
    x = t + 1j * y0
    try:
        y = rmap.evaluate(x, method="direct")
        fz, fzb = derivatives(rmap.base, x, method="direct")
    except InversionError as exc:
        raise PushforwardError(str(exc), location=exc.location) from exc
    tangent = rmap.R @ df_from_wirtinger(fz, fzb)[..., 0][..., None]
    speed = np.hypot(tangent[:, 0, 0], tangent[:, 1, 0])
    return DeltaCurve(points=np.asarray(y), sigma=sigma / speed, ds=speed * (TWO_PI / n))


def curve_length_spectral(curve: DeltaCurve) -> np.ndarray:
    """Arc-length weights recomputed from the sampled image points alone.

    The image of a horizontal line satisfies y(t + 2 pi) = y(t) + 2 pi, so
    y(t) - t is periodic and can be differentiated spectrally.
    """
    n = curve.points.size
    t = np.arange(n) * (TWO_PI / n)
    per = curve.points - t
    k = np.fft.fftfreq(n, 1.0 / n)
    c = np.fft.fft(per)
    c[n // 2] = 0.0
    dper = np.fft.ifft(1j * k * c)
    speed = np.abs(1.0 + dper)
    return speed * (TWO_PI / n)


def sandwich_reduce(omega, G=None, V=None, boundary: bool = False, grid: TorusGrid | None = None):
    """Reduce the omega-weighted operator to unit weight.

    Returns (V~, edge densities) with V~ = omega^-2 V + omega^-1 div(G grad omega)
    and, on the strip, sigma~ = -omega^-1 <G grad omega, n> on each edge.

    Torus: ``omega`` and ``V`` are grid arrays, ``G`` a MetricField or None,
    derivatives are spectral and the edge result is None.
    Strip: ``omega`` is a closed-form field with ``gradient`` and ``hessian``
    (see ``presets.ScalarSpec``), ``G`` a constant diagonal matrix and ``V``
    a callable; the return values are callables, the edge pair being
    (bottom edge x2 = 0, top edge x2 = pi), both functions of x1.
    """
    if boundary:
        return _sandwich_strip(omega, G, V)
    omega = np.asarray(omega, dtype=float)
    grid = grid or (G.grid if G is not None else TorusGrid(*omega.shape))
    if omega.min() <= OMEGA_FLOOR:
        raise InvalidMetricError(f"omega touches zero (min {omega.min():.3e})")
    d1, d2 = spectral_gradient(omega, grid)
    if G is None:
        f1, f2 = d1, d2
    else:
        f1 = G.g11 * d1 + G.g12 * d2
        f2 = G.g12 * d1 + G.g22 * d2
    div = spectral_divergence(f1, f2, grid)
    Vt = div / omega
    if V is not None:
        Vt = Vt + np.asarray(V) / omega ** 2
    return Vt, None


def _sandwich_strip(omega, B, V):
    B = np.eye(2) if B is None else np.asarray(B, dtype=float)
    if abs(B[0, 1]) > 0 or abs(B[1, 0]) > 0:
        raise InvalidMetricError("strip metric must be diagonal")
    b1, b2 = B[0, 0], B[1, 1]
    probe = omega(*np.meshgrid(np.linspace(0, TWO_PI, 33), np.linspace(0, np.pi, 33), indexing="ij"))
    if np.min(probe) <= OMEGA_FLOOR:
        raise InvalidMetricError("omega touches zero on the strip")

    def Vt(x1, x2):
        w = omega(x1, x2)
        h11, _, h22 = omega.hessian(x1, x2)
        out = (b1 * h11 + b2 * h22) / w
        if V is not None:
            out = out + V(x1, x2) / w ** 2
        return out

    # Exterior normals: -e2 on x2 = 0, +e2 on x2 = pi.
    def bottom(x1):
        x1 = np.asarray(x1, dtype=float)
        _, d2 = omega.gradient(x1, np.zeros_like(x1))
        return b2 * d2 / omega(x1, np.zeros_like(x1))

    def top(x1):
        x1 = np.asarray(x1, dtype=float)
        xp = np.full_like(x1, np.pi)
        _, d2 = omega.gradient(x1, xp)
        return -b2 * d2 / omega(x1, xp)

    return Vt, (bottom, top)
