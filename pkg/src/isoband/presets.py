"""Closed-form coefficient presets.

Fields are described by truncated Fourier series: a list of terms
``[m, n, c, s]`` stands for sum c cos(m x1 + n x2) + s sin(m x1 + n x2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import TorusGrid
from .metric import MetricField


def fourier_series(terms, constant: float = 0.0):
    """Callable (x1, x2) -> real values for a list of [m, n, c, s] terms."""
    terms = [tuple(float(v) for v in t) for t in (terms or [])]
    for t in terms:
        if len(t) != 4:
            raise ValueError(f"Fourier term must be [m, n, cos, sin], got {list(t)}")

    def fn(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.full(np.broadcast_shapes(x1.shape, x2.shape), float(constant))
        for m, n, c, s in terms:
            phase = m * x1 + n * x2
            out = out + c * np.cos(phase) + s * np.sin(phase)
        return out

    return fn


def fourier_series_gradient(terms):
    terms = [tuple(float(v) for v in t) for t in (terms or [])]

    def fn(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        shape = np.broadcast_shapes(x1.shape, x2.shape)
        d1 = np.zeros(shape)
        d2 = np.zeros(shape)
        for m, n, c, s in terms:
            phase = m * x1 + n * x2
            dphase = -c * np.sin(phase) + s * np.cos(phase)
            d1 = d1 + m * dphase
            d2 = d2 + n * dphase
        return d1, d2

    return fn


@dataclass(frozen=True)
class RotatedAnisotropic:
    """G = Rot(theta) diag(e^s, e^-s) Rot(theta)^T, so det G = 1 identically."""

    s_terms: tuple = ()
    theta_terms: tuple = ()
    s0: float = 0.0
    theta0: float = 0.0

    def __call__(self, x1, x2):
        s = fourier_series(self.s_terms, self.s0)(x1, x2)
        th = fourier_series(self.theta_terms, self.theta0)(x1, x2)
        ch, sh = np.cosh(s), np.sinh(s)
        c2, s2 = np.cos(2 * th), np.sin(2 * th)
        return ch + sh * c2, sh * s2, ch - sh * c2

    def field(self, grid: TorusGrid) -> MetricField:
        return MetricField.from_function(grid, self)


def constant_metric(matrix):
    m = np.asarray(matrix, dtype=float)

    def fn(x1, x2):
        shape = np.broadcast_shapes(np.shape(x1), np.shape(x2))
        return tuple(np.full(shape, v) for v in (m[0, 0], m[0, 1], m[1, 1]))

    return fn


# Three smooth nonconstant det-1 metrics used by the identity suite.
ROTATED_ANISOTROPIC = {
    "rotated-anisotropic-a": RotatedAnisotropic(
        s_terms=((1, 0, 0.3, 0.0), (0, 1, 0.0, 0.2)),
        theta_terms=((1, 1, 0.4, 0.0),),
    ),
    "rotated-anisotropic-b": RotatedAnisotropic(
        s_terms=((1, 1, 0.0, 0.25), (2, 0, 0.1, 0.0)),
        theta_terms=((0, 1, 0.0, 0.5), (1, -1, 0.2, 0.0)),
        s0=0.2,
    ),
    "rotated-anisotropic-c": RotatedAnisotropic(
        s_terms=((0, 2, 0.2, 0.0), (1, 0, 0.0, 0.3)),
        theta_terms=((1, 0, 0.3, 0.0), (0, 1, 0.0, 0.3)),
        theta0=0.4,
    ),
}

# theta odd and s even in x2: q(conj z) = conj q(z).
MIRROR_SYMMETRIC = {
    "mirror-symmetric-a": RotatedAnisotropic(
        s_terms=((1, 0, 0.3, 0.0), (0, 1, 0.2, 0.0), (1, 1, 0.1, 0.0), (1, -1, 0.1, 0.0)),
        theta_terms=((0, 1, 0.0, 0.4), (1, 1, 0.0, 0.2), (1, -1, 0.0, -0.2)),
        s0=0.1,
    ),
    "mirror-symmetric-b": RotatedAnisotropic(
        s_terms=((0, 2, 0.25, 0.0), (1, 0, 0.0, 0.2)),
        theta_terms=((1, 1, 0.0, 0.3), (1, -1, 0.0, -0.3), (0, 1, 0.0, 0.2)),
    ),
}


def metric_preset(name: str, params: dict | None = None):
    """Return a callable (x1, x2) -> (g11, g12, g22) for a named metric."""
    params = params or {}
    if name in ("identity", "free"):
        return constant_metric(np.eye(2))
    if name == "diag":
        return constant_metric(np.diag([params.get("g11", 0.5), params.get("g22", 2.0)]))
    if name == "constant":
        return constant_metric(params["matrix"])
    if name == "rotated-anisotropic" and params:
        return RotatedAnisotropic(
            s_terms=tuple(tuple(t) for t in params.get("s_terms", ())),
            theta_terms=tuple(tuple(t) for t in params.get("theta_terms", ())),
            s0=float(params.get("s0", 0.0)),
            theta0=float(params.get("theta0", 0.0)),
        )
    if name == "rotated-anisotropic":
        return ROTATED_ANISOTROPIC["rotated-anisotropic-a"]
    if name in ROTATED_ANISOTROPIC:
        return ROTATED_ANISOTROPIC[name]
    if name == "mirror-symmetric":
        return MIRROR_SYMMETRIC["mirror-symmetric-a"]
    if name in MIRROR_SYMMETRIC:
        return MIRROR_SYMMETRIC[name]
    raise KeyError(f"unknown metric preset {name!r}")


@dataclass
class ScalarSpec:
    """Closed-form scalar field with exact first and second derivatives.

    The base is ``constant + sum of Fourier terms + polynomial in x2``
    (``poly_x2`` lists coefficients from degree 0 up). With ``exponentiate``
    the field is exp(base), which keeps weights strictly positive.
    """

    constant: float = 0.0
    terms: list = field(default_factory=list)
    poly_x2: list = field(default_factory=list)
    exponentiate: bool = False

    @classmethod
    def from_json(cls, data) -> "ScalarSpec":
        if data is None:
            return cls()
        if isinstance(data, (int, float)):
            return cls(constant=float(data))
        return cls(
            constant=float(data.get("constant", 0.0)),
            terms=[list(t) for t in data.get("terms", [])],
            poly_x2=[float(c) for c in data.get("poly_x2", [])],
            exponentiate=bool(data.get("exp", False)),
        )

    def to_json(self) -> dict:
        return {"constant": self.constant, "terms": self.terms, "poly_x2": self.poly_x2,
                "exp": self.exponentiate}

    @property
    def is_zero(self) -> bool:
        return not self.exponentiate and self.constant == 0 and not self.terms and not any(self.poly_x2)

    def _base(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        shape = np.broadcast_shapes(x1.shape, x2.shape)
        b = np.broadcast_to(fourier_series(self.terms, self.constant)(x1, x2), shape).copy()
        d1, d2 = (np.broadcast_to(d, shape).copy() for d in fourier_series_gradient(self.terms)(x1, x2))
        h11 = np.zeros(shape)
        h12 = np.zeros(shape)
        h22 = np.zeros(shape)
        for m, n, c, s in (tuple(float(v) for v in t) for t in self.terms):
            phase = m * x1 + n * x2
            second = -c * np.cos(phase) - s * np.sin(phase)
            h11 = h11 + m * m * second
            h12 = h12 + m * n * second
            h22 = h22 + n * n * second
        if self.poly_x2:
            p = np.polynomial.Polynomial(self.poly_x2)
            b = b + p(x2)
            d2 = d2 + p.deriv(1)(x2)
            h22 = h22 + p.deriv(2)(x2)
        return b, (d1, d2), (h11, h12, h22)

    def __call__(self, x1, x2):
        b, _, _ = self._base(x1, x2)
        return np.exp(b) if self.exponentiate else b

    def gradient(self, x1, x2):
        b, (d1, d2), _ = self._base(x1, x2)
        if self.exponentiate:
            w = np.exp(b)
            return w * d1, w * d2
        return d1, d2

    def hessian(self, x1, x2):
        """(d11, d12, d22) of the field."""
        b, (d1, d2), (h11, h12, h22) = self._base(x1, x2)
        if self.exponentiate:
            w = np.exp(b)
            return w * (h11 + d1 * d1), w * (h12 + d1 * d2), w * (h22 + d2 * d2)
        return h11, h12, h22
