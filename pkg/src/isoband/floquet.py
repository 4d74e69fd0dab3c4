"""Floquet fibers in a plane-wave basis, band structures and Thomas diagnostics.

The fiber at quasimomentum k acts on 2 pi-periodic functions through the
form  int <G (D - a + k e1) u, (D - a + k e1) u> + V |u|^2  plus delta terms,
with Bloch waves exp(i k x1) times periodic functions. The basis is
exp(i (m x1 + n x2)) with |m| <= M1, |n| <= M2, normalized so that the Gram
matrix of the weight mu has entries mu_hat[a - b].
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import AliasingError, AssemblyError, EigensolverError
from .grid import TWO_PI, fourier_coefficients
from .pushforward import CoefficientSet

HERMITIAN_TOL = 1e-10
FLAT_BAND_TOL = 1e-8


def _cutoff_pair(M) -> tuple[int, int]:
    if np.ndim(M) == 0:
        return int(M), int(M)
    M1, M2 = M
    return int(M1), int(M2)


def plane_wave_modes(M) -> tuple[np.ndarray, np.ndarray]:
    """Integer mode indices (m, n), m varying slowest."""
    M1, M2 = _cutoff_pair(M)
    m, n = np.meshgrid(np.arange(-M1, M1 + 1), np.arange(-M2, M2 + 1), indexing="ij")
    return m.ravel(), n.ravel()


@dataclass(frozen=True, eq=False)
class FiberOperator:
    k: complex
    cutoff: tuple
    H: np.ndarray
    B: np.ndarray
    modes: tuple

    @property
    def size(self) -> int:
        return self.H.shape[0]

    def hermitian_defect(self) -> float:
        return float(np.linalg.norm(self.H - self.H.conj().T) / max(np.linalg.norm(self.H), 1e-300))

    def eigenvalues(self, n_bands: int | None = None) -> np.ndarray:
        """Lowest eigenvalues of H u = lambda B u (Hermitian pencil)."""
        sub = None if n_bands is None else [0, min(n_bands, self.size) - 1]
        return linalg.eigh(self.H, self.B, eigvals_only=True, subset_by_index=sub)


def _gather(coeffs: np.ndarray, dm: np.ndarray, dn: np.ndarray) -> np.ndarray:
    n1, n2 = coeffs.shape
    return coeffs[dm % n1, dn % n2]


def assemble_fiber(coeffs: CoefficientSet, k, M) -> FiberOperator:
    """Matrices of the fiber form and of the weight Gram at quasimomentum k.

    ``k`` may be complex; the wave vector m + k is continued analytically
    (no conjugation), so H is Hermitian only for real k.
    """
    M1, M2 = _cutoff_pair(M)
    grid = coeffs.grid
    if grid.n1 < 2 * (2 * M1 + 1) or grid.n2 < 2 * (2 * M2 + 1):
        raise AliasingError(
            f"grid {grid.n1}x{grid.n2} cannot resolve the products of cutoff ({M1}, {M2})"
        )
    m, n = plane_wave_modes((M1, M2))
    dm = m[:, None] - m[None, :]
    dn = n[:, None] - n[None, :]
    K1 = m + k
    K2 = n.astype(float)

    g11, g12, g22 = coeffs.metric_entries()
    a1, a2 = coeffs.field("a1"), coeffs.field("a2")
    V = coeffs.field("V")
    Ga1 = g11 * a1 + g12 * a2
    Ga2 = g12 * a1 + g22 * a2
    scalar = a1 * Ga1 + a2 * Ga2 + V

    def hat(u):
        return _gather(fourier_coefficients(u), dm, dn)

    if coeffs.metric is None:
        A = coeffs.A
        eye = (dm == 0) & (dn == 0)
        H = np.where(eye, A[0, 0] * K1 * K1 + 2 * A[0, 1] * K1 * K2 + A[1, 1] * K2 * K2, 0.0).astype(complex)
    else:
        G11, G12, G22 = hat(g11), hat(g12), hat(g22)
        H = (np.outer(K1, K1) * G11 + np.outer(K1, K2) * G12 + np.outer(K2, K1) * G12
             + np.outer(K2, K2) * G22)
    if coeffs.has_magnetic:
        F1, F2 = hat(Ga1), hat(Ga2)
        H = H - (K1[:, None] + K1[None, :]) * F1 - (K2[:, None] + K2[None, :]) * F2
    if np.any(scalar):
        H = H + hat(scalar)
    for line in coeffs.delta_lines:
        s_hat = np.fft.fft(line.samples(grid.n1)) / grid.n1
        H = H + (1.0 / TWO_PI) * s_hat[dm % grid.n1] * np.exp(-1j * dn * line.y0)
    for curve in coeffs.delta_curves:
        w = curve.sigma * curve.ds
        y1, y2 = curve.points.real, curve.points.imag
        # sum_i w_i exp(-i (dm y1_i + dn y2_i)) as a product of per-axis phase tables.
        e1 = np.exp(-1j * np.multiply.outer(np.arange(-2 * M1, 2 * M1 + 1), y1))
        e2 = np.exp(-1j * np.multiply.outer(np.arange(-2 * M2, 2 * M2 + 1), y2))
        table = (e1 * w) @ e2.T
        H = H + table[dm + 2 * M1, dn + 2 * M2] / TWO_PI ** 2
    if coeffs.mu is None:
        B = np.eye(m.size, dtype=complex)
    else:
        B = hat(coeffs.field("mu"))
    fiber = FiberOperator(k=k, cutoff=(M1, M2), H=H, B=B, modes=(m, n))
    if np.isreal(k):
        defect = fiber.hermitian_defect()
        if defect > HERMITIAN_TOL:
            raise AssemblyError(f"fiber at real k = {k} is not Hermitian (defect {defect:.3e})")
    return fiber


@dataclass(frozen=True, eq=False)
class BandStructure:
    k_grid: np.ndarray
    bands: np.ndarray

    @property
    def oscillation(self) -> np.ndarray:
        return self.bands.max(axis=0) - self.bands.min(axis=0)

    @property
    def n_bands(self) -> int:
        return self.bands.shape[1]


@dataclass(frozen=True)
class OscillationStats:
    values: np.ndarray
    flagged: tuple

    @property
    def all_dispersive(self) -> bool:
        return not self.flagged


def solve_fiber_eigenvalues(fiber: FiberOperator, n_bands: int, index: int = 0) -> np.ndarray:
    try:
        vals = fiber.eigenvalues(n_bands)
    except (np.linalg.LinAlgError, linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"eigensolver failed at k index {index}: {exc}", k_index=index) from exc
    return np.sort(np.real(vals))


def map_over_k(fn, k_grid, jobs: int = 1) -> list:
    """Apply ``fn(index, k)`` over the k grid, in order, with up to ``jobs`` threads."""
    items = list(enumerate(k_grid))
    if jobs <= 1:
        return [fn(i, k) for i, k in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda ik: fn(*ik), items))


def solve_bands(coeffs: CoefficientSet, k_grid, n_bands: int, M, jobs: int = 1) -> BandStructure:
    """Lowest ``n_bands`` eigenvalues of the fiber pencil at each real k."""
    k_grid = np.asarray(k_grid, dtype=float)

    def one(i, k):
        return solve_fiber_eigenvalues(assemble_fiber(coeffs, k, M), n_bands, i)

    return BandStructure(k_grid, np.array(map_over_k(one, k_grid, jobs)))


def uniform_k_grid(count: int, half: bool = False) -> np.ndarray:
    """Equispaced quasimomenta in [0, 1).

    With ``half`` the points cover [0, 1/2] inclusive, which spans every band
    value when the fiber is time-reversal symmetric (a = 0).
    """
    if count <= 1:
        return np.zeros(1)
    if half:
        return np.linspace(0.0, 0.5, count)
    return np.arange(count) / count


def thomas_bound(coeffs: CoefficientSet, beta_shift: float, y_list, lam: float, M) -> np.ndarray:
    """Smallest singular value of H(beta + i y) - lam B for each y."""
    out = []
    for y in y_list:
        fiber = assemble_fiber(coeffs, beta_shift + 1j * y, M)
        out.append(linalg.svdvals(fiber.H - lam * fiber.B)[-1])
    return np.array(out)


def band_oscillation(bs: BandStructure, threshold: float = FLAT_BAND_TOL) -> OscillationStats:
    """Per-band max - min over k; bands below ``threshold`` are flagged."""
    values = bs.oscillation
    flagged = tuple(int(j) for j in np.nonzero(values < threshold)[0])
    return OscillationStats(values, flagged)


def sandwich_spectra_torus(omega: np.ndarray, k, n_bands: int, M, G=None, V=None):
    """Eigenvalues of the omega-weighted pencil and of its unit-weight reduction.

    The weighted side has metric omega^2 G, potential V and weight omega^2;
    the reduced side has metric G and the potential from ``sandwich_reduce``.
    Both are assembled in the same plane-wave basis.
    """
    from .metric import MetricField
    from .pushforward import sandwich_reduce

    omega = np.asarray(omega, dtype=float)
    grid = G.grid if G is not None else None
    if grid is None:
        from .grid import TorusGrid

        grid = TorusGrid(*omega.shape)
    if G is None:
        G = MetricField.constant(grid, np.eye(2))
    w2 = omega ** 2
    weighted = CoefficientSet(grid, metric=MetricField(grid, w2 * G.g11, w2 * G.g12, w2 * G.g22), V=V, mu=w2)
    Vt, _ = sandwich_reduce(omega, G, V, grid=grid)
    reduced = CoefficientSet(grid, metric=G, V=Vt)
    left = solve_fiber_eigenvalues(assemble_fiber(weighted, k, M), n_bands)
    right = solve_fiber_eigenvalues(assemble_fiber(reduced, k, M), n_bands)
    return left, right
