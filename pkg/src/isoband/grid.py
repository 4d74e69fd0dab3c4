"""Uniform grids on the 2*pi-periodic torus and Fourier helpers.

Fields are stored as arrays of shape ``(n1, n2)``: axis 0 runs along x1,
axis 1 along x2. Fourier coefficients follow ``numpy.fft`` ordering and are
normalized so that ``u(x) = sum c[m, n] exp(i (m x1 + n x2))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import StructuralError

TWO_PI = 2.0 * np.pi

# Direct Fourier summation below this many points, spline interpolation above.
DIRECT_EVALUATION_LIMIT = 1000


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Sample grid x_ij = (2 pi i / n1, 2 pi j / n2) on the fundamental cell."""

    n1: int
    n2: int

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if not isinstance(n, (int, np.integer)) or n < 8 or not _is_power_of_two(int(n)):
                raise StructuralError(f"grid sizes must be powers of two >= 8, got {self.n1}x{self.n2}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def h1(self) -> float:
        return TWO_PI / self.n1

    @property
    def h2(self) -> float:
        return TWO_PI / self.n2

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.arange(self.n1) * self.h1, np.arange(self.n2) * self.h2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = self.axes()
        return np.meshgrid(x1, x2, indexing="ij")

    def points(self) -> np.ndarray:
        """Sample points as complex numbers z = x1 + i x2, shape (n1, n2)."""
        x1, x2 = self.mesh()
        return x1 + 1j * x2

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumbers (m, n) broadcast to the grid shape."""
        m = np.fft.fftfreq(self.n1, 1.0 / self.n1)
        n = np.fft.fftfreq(self.n2, 1.0 / self.n2)
        return np.meshgrid(m, n, indexing="ij")

    def nyquist_mask(self) -> np.ndarray:
        """True on the Nyquist row and column, whose derivative is undefined."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.n1 // 2, :] = True
        mask[:, self.n2 // 2] = True
        return mask

    def to_dict(self) -> dict:
        return {"n1": int(self.n1), "n2": int(self.n2)}


def fourier_coefficients(u: np.ndarray) -> np.ndarray:
    return np.fft.fft2(u) / u.size


def from_fourier(c: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(c) * c.size


def spectral_gradient(u: np.ndarray, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Fourier derivatives (d/dx1 u, d/dx2 u); Nyquist modes are dropped."""
    c = fourier_coefficients(u)
    c[grid.nyquist_mask()] = 0.0
    m, n = grid.wavenumbers()
    d1 = from_fourier(1j * m * c)
    d2 = from_fourier(1j * n * c)
    if np.isrealobj(u):
        return d1.real, d2.real
    return d1, d2


def spectral_divergence(v1: np.ndarray, v2: np.ndarray, grid: TorusGrid) -> np.ndarray:
    d1, _ = spectral_gradient(v1, grid)
    _, d2 = spectral_gradient(v2, grid)
    return d1 + d2


def torus_mean(u: np.ndarray) -> complex | float:
    return u.mean()


def torus_integral(u: np.ndarray, grid: TorusGrid):
    """Trapezoidal (spectrally accurate) integral over the fundamental cell."""
    return u.sum() * grid.cell_area


def _basis_rows(coords: np.ndarray, n: int) -> np.ndarray:
    """exp(i k x) for the FFT wavenumbers k, with the Nyquist column as cos."""
    k = np.fft.fftfreq(n, 1.0 / n)
    rows = np.exp(1j * np.multiply.outer(coords, k))
    rows[:, n // 2] = np.cos(coords * (n // 2))
    return rows


def evaluate_fourier(coeffs: np.ndarray, x1, x2) -> np.ndarray:
    """Direct trigonometric summation of a coefficient table at arbitrary points."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    shape = np.broadcast_shapes(x1.shape, x2.shape)
    x1 = np.broadcast_to(x1, shape).ravel()
    x2 = np.broadcast_to(x2, shape).ravel()
    n1, n2 = coeffs.shape
    e1 = _basis_rows(x1, n1)
    e2 = _basis_rows(x2, n2)
    out = np.einsum("pn,pn->p", e1 @ coeffs, e2)
    return out.reshape(shape)


def _pad_spectrum(c: np.ndarray, factor: int, axis: int) -> np.ndarray:
    """Zero-pad one axis of an FFT-ordered spectrum, splitting the Nyquist mode."""
    c = np.moveaxis(c, axis, 0)
    n = c.shape[0]
    h = n // 2
    big = np.zeros((n * factor,) + c.shape[1:], dtype=complex)
    big[:h] = c[:h]
    big[n * factor - h + 1:] = c[h + 1:]
    big[h] = 0.5 * c[h]
    big[-h] = 0.5 * c[h]
    return np.moveaxis(big, 0, axis)


def upsample(u: np.ndarray, factor: int) -> np.ndarray:
    """Trigonometric interpolation of grid samples onto a factor-times finer grid."""
    if factor == 1:
        return u.copy()
    c = fourier_coefficients(u)
    c = _pad_spectrum(_pad_spectrum(c, factor, 0), factor, 1)
    out = from_fourier(c)
    return out.real if np.isrealobj(u) else out


class PeriodicInterpolator:
    """Bulk evaluation of a periodic grid field at scattered points.

    The field is first refined by trigonometric interpolation (zero padding)
    and then evaluated with a periodic cubic spline on the refined grid.
    """

    def __init__(self, values: np.ndarray, upsample_factor: int = 4, order: int = 3):
        values = np.asarray(values)
        self.shape = values.shape
        self.order = order
        fine = upsample(values, upsample_factor)
        self.fine_shape = fine.shape
        self.is_complex = np.iscomplexobj(fine)
        parts = [fine.real, fine.imag] if self.is_complex else [fine]
        self._coeffs = [ndimage.spline_filter(p, order=order, mode="grid-wrap") for p in parts]

    def __call__(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        shape = np.broadcast_shapes(x1.shape, x2.shape)
        n1, n2 = self.fine_shape
        i1 = np.mod(np.broadcast_to(x1, shape).ravel(), TWO_PI) * (n1 / TWO_PI)
        i2 = np.mod(np.broadcast_to(x2, shape).ravel(), TWO_PI) * (n2 / TWO_PI)
        coords = np.vstack([i1, i2])
        vals = [
            ndimage.map_coordinates(c, coords, order=self.order, mode="grid-wrap", prefilter=False)
            for c in self._coeffs
        ]
        out = vals[0] + 1j * vals[1] if self.is_complex else vals[0]
        return out.reshape(shape)


def interpolate_periodic(values: np.ndarray, x1, x2) -> np.ndarray:
    """Evaluate grid samples off-grid; direct summation for small point sets."""
    npts = np.broadcast(np.asarray(x1), np.asarray(x2)).size
    if npts < DIRECT_EVALUATION_LIMIT:
        out = evaluate_fourier(fourier_coefficients(values), x1, x2)
        return out.real if np.isrealobj(values) else out
    return PeriodicInterpolator(values)(x1, x2)
