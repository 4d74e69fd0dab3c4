"""Periodic Beltrami solver on the torus.

The unknown map is written as f(z) = alpha z + beta conj(z) + p(z) with p
2*pi-periodic in both directions. With h = d_zbar f the equation
d_zbar f = q d_z f becomes the fixed point

    h = q (alpha + Pi(h - beta)),   beta = mean(h),   alpha = 1 - beta,

where Pi is the Beurling multiplier (m - i n)/(m + i n) on mean-zero modes.
Pi is an L2 isometry, so the map contracts with rate sup|q|.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import fieldio
from .errors import DegenerateEllipticityError, DegenerateLatticeError, IterationError
from .grid import TWO_PI, TorusGrid, fourier_coefficients, from_fourier
from .metric import BeltramiCoefficient

DEGENERATE_KAPPA = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    tolerance: float = 1e-12

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def beurling_multiplier(m, n):
    """Symbol (m - i n)/(m + i n) taking d_zbar coefficients to d_z coefficients."""
    m = np.asarray(m)
    n = np.asarray(n)
    if np.any((m == 0) & (n == 0)):
        raise ValueError("the (0, 0) mode has no Beurling symbol")
    out = (m - 1j * n) / (m + 1j * n)
    return complex(out) if out.ndim == 0 else out


def _symbols(grid: TorusGrid):
    """Fourier symbols of d_z, d_zbar and Pi, with Nyquist and zero modes set to 0."""
    m, n = grid.wavenumbers()
    keep = ~grid.nyquist_mask()
    keep[0, 0] = False
    dz = np.where(keep, 0.5j * (m - 1j * n), 0.0)
    dzb = np.where(keep, 0.5j * (m + 1j * n), 0.0)
    pi = np.zeros(grid.shape, dtype=complex)
    pi[keep] = (m[keep] - 1j * n[keep]) / (m[keep] + 1j * n[keep])
    return dz, dzb, pi, keep


@dataclass(frozen=True, eq=False)
class IsothermalMap:
    """Solved map f = alpha z + beta conj(z) + p(z) - p(0).

    ``p_hat`` holds the normalized FFT coefficients of the mean-zero periodic
    correction p on ``grid``.
    """

    grid: TorusGrid
    alpha: complex
    beta: complex
    p_hat: np.ndarray
    kappa: complex
    residual_l2: float
    iterations: int = 0
    history: tuple = field(default=())

    @cached_property
    def p0(self) -> complex:
        return complex(self.p_hat.sum())

    @cached_property
    def _derivative_coeffs(self):
        dz, dzb, _, _ = _symbols(self.grid)
        return dz * self.p_hat, dzb * self.p_hat

    @cached_property
    def fz_grid(self) -> np.ndarray:
        """d_z f sampled on the grid."""
        return self.alpha + from_fourier(self._derivative_coeffs[0])

    @cached_property
    def fzb_grid(self) -> np.ndarray:
        """d_zbar f sampled on the grid."""
        return self.beta + from_fourier(self._derivative_coeffs[1])

    @cached_property
    def values_grid(self) -> np.ndarray:
        z = self.grid.points()
        return self.alpha * z + self.beta * np.conj(z) + from_fourier(self.p_hat) - self.p0

    @cached_property
    def jacobian_grid(self) -> np.ndarray:
        return np.abs(self.fz_grid) ** 2 - np.abs(self.fzb_grid) ** 2

    def save(self, path) -> None:
        fieldio.write_fields(path, self.grid, [self.p_hat.real, self.p_hat.imag])
        fieldio.write_sidecar(path, {
            "alpha": fieldio.complex_to_json(self.alpha),
            "beta": fieldio.complex_to_json(self.beta),
            "kappa": fieldio.complex_to_json(self.kappa),
            "residualL2": self.residual_l2,
            "iterations": self.iterations,
            "grid": self.grid.to_dict(),
        })

    @classmethod
    def load(cls, path) -> "IsothermalMap":
        grid, comps = fieldio.read_fields(path)
        meta = fieldio.read_sidecar(path)
        return cls(
            grid=grid,
            alpha=fieldio.complex_from_json(meta["alpha"]),
            beta=fieldio.complex_from_json(meta["beta"]),
            p_hat=comps[0] + 1j * comps[1],
            kappa=fieldio.complex_from_json(meta["kappa"]),
            residual_l2=float(meta["residualL2"]),
            iterations=int(meta.get("iterations", 0)),
        )


def kappa_of(fmap: IsothermalMap) -> complex:
    """Second lattice vector f(z + 2 pi i) - f(z) = 2 pi i (alpha - beta)."""
    return 2j * np.pi * (fmap.alpha - fmap.beta)


def solve_periodic_beltrami(q: BeltramiCoefficient, cfg: SolverConfig | None = None) -> IsothermalMap:
    """Fixed-point solve of d_zbar f = q d_z f normalized by f(0) = 0, f(2 pi) = 2 pi."""
    cfg = cfg or SolverConfig()
    if q.sup_norm >= 1.0:
        raise DegenerateEllipticityError(f"sup|q| = {q.sup_norm} >= 1")
    grid = q.grid
    qq = np.asarray(q.q, dtype=complex)
    _, dzb, pi, keep = _symbols(grid)

    # State: beta and the Fourier coefficients w of d_zbar p.
    beta = 0.0j
    w = np.zeros(grid.shape, dtype=complex)
    history = []
    residual = np.inf
    for it in range(1, cfg.max_iterations + 1):
        fz = (1.0 - beta) + from_fourier(pi * w)
        target = qq * fz
        h = beta + from_fourier(w)
        residual = float(np.linalg.norm(h - target) / np.linalg.norm(fz))
        history.append(residual)
        if residual <= cfg.tolerance:
            break
        t_hat = fourier_coefficients(target)
        beta = t_hat[0, 0]
        w = np.where(keep, t_hat, 0.0)
    else:
        raise IterationError(
            f"Beltrami iteration stalled at residual {residual:.3e} after {cfg.max_iterations} steps",
            last_residual=residual,
        )

    p_hat = np.zeros(grid.shape, dtype=complex)
    p_hat[keep] = w[keep] / dzb[keep]
    alpha = 1.0 - beta
    kappa = 2j * np.pi * (alpha - beta)
    if abs(kappa.imag) < DEGENERATE_KAPPA:
        raise DegenerateLatticeError(f"Im kappa = {kappa.imag:.3e} is numerically zero")
    return IsothermalMap(
        grid=grid,
        alpha=complex(alpha),
        beta=complex(beta),
        p_hat=p_hat,
        kappa=complex(kappa),
        residual_l2=residual,
        iterations=it,
        history=tuple(history),
    )


def lattice_periods(fmap: IsothermalMap) -> tuple[complex, complex]:
    return complex(TWO_PI), fmap.kappa
