"""Strip problems, their reflection to a doubled cylinder, and corner exponents.

The strip is S = R x (0, pi), periodic with period 2 pi in x1. Strip
coefficients are closed-form callables of (x1, x2); edge and line densities
are constants or callables of x1. Reflection across x2 = 0 produces a
problem on the cylinder x2 in (-pi, pi], stored on an ordinary torus grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, AssemblyError, InvalidMetricError, StructuralError
from .floquet import FiberOperator, HERMITIAN_TOL, _cutoff_pair, assemble_fiber, solve_fiber_eigenvalues
from .grid import TWO_PI, TorusGrid
from .metric import ValidationReport
from .pushforward import CoefficientSet, DeltaLine

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


def _density(sigma, x1: np.ndarray) -> np.ndarray:
    if sigma is None:
        return np.zeros_like(x1)
    if callable(sigma):
        return np.broadcast_to(np.asarray(sigma(x1), dtype=float), x1.shape).copy()
    return np.full_like(x1, float(sigma))


def _sample(fn, x1, x2) -> np.ndarray | None:
    if fn is None:
        return None
    return np.broadcast_to(np.asarray(fn(x1, x2), dtype=float), np.broadcast_shapes(x1.shape, x2.shape)).copy()


@dataclass(frozen=True, eq=False)
class StripProblem:
    """Operator on the strip with constant diagonal metric B.

    ``robin`` holds the (bottom, top) edge densities at x2 = 0 and x2 = pi,
    each None, a constant or a callable of x1. ``delta_lines`` holds pairs
    (y0, sigma) with 0 < y0 < pi. ``n1`` and ``n2`` are the x1 sample count
    and the sample count of the doubled cylinder.
    """

    bc: str = DIRICHLET
    B: np.ndarray = None
    V: object = None
    a1: object = None
    a2: object = None
    robin: tuple = (None, None)
    delta_lines: tuple = ()
    n1: int = 64
    n2: int = 64

    def __post_init__(self):
        if self.bc not in (DIRICHLET, NEUMANN):
            raise StructuralError(f"unknown boundary condition {self.bc!r}")
        B = np.eye(2) if self.B is None else np.asarray(self.B, dtype=float)
        if B.shape != (2, 2) or B[0, 1] != 0 or B[1, 0] != 0 or min(B[0, 0], B[1, 1]) <= 0:
            raise InvalidMetricError("strip metric B must be diagonal with positive entries")
        object.__setattr__(self, "B", B)
        if self.n2 % 2:
            raise StructuralError("cylinder sample count must be even to be reflectable")
        TorusGrid(self.n1, self.n2)
        for y0, _ in self.delta_lines:
            if not 0 < y0 < np.pi:
                raise StructuralError(f"strip delta line y0 = {y0} must lie in (0, pi)")

    def with_bc(self, bc: str) -> "StripProblem":
        return StripProblem(bc, self.B, self.V, self.a1, self.a2, self.robin, self.delta_lines, self.n1, self.n2)

    @property
    def x1(self) -> np.ndarray:
        return np.arange(self.n1) * (TWO_PI / self.n1)


@dataclass(frozen=True, eq=False)
class DoubledProblem:
    """Reflected problem on the cylinder, x2 sampled on [0, 2 pi) == (-pi, pi]."""

    grid: TorusGrid
    B: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    Q: np.ndarray
    rho: tuple

    def parity_defects(self) -> dict:
        """Samplewise departure of b1, Q from evenness and of b2 from oddness."""
        flip = _mirror_index(self.grid.n2)
        return {
            "b1_even": float(np.abs(self.b1 - self.b1[:, flip]).max()),
            "Q_even": float(np.abs(self.Q - self.Q[:, flip]).max()),
            "b2_odd": float(np.abs(self.b2 + self.b2[:, flip]).max()),
        }

    def coefficient_set(self) -> CoefficientSet:
        return CoefficientSet(self.grid, A=self.B, a1=self.b1, a2=self.b2, V=self.Q, delta_lines=self.rho)


def _mirror_index(n2: int) -> np.ndarray:
    return (-np.arange(n2)) % n2


def _signed_x2(n2: int) -> np.ndarray:
    """Cylinder coordinates in (-pi, pi] for the torus samples 2 pi j / n2."""
    x2 = np.arange(n2) * (TWO_PI / n2)
    return np.where(x2 > np.pi, x2 - TWO_PI, x2)


def reflect_coefficients(sp: StripProblem) -> DoubledProblem:
    """Even extension of V, a1, odd extension of a2, mirrored delta data.

    Each strip edge becomes a line on the cylinder carrying two copies of the
    edge density; interior lines at y0 appear at y0 and -y0.
    """
    grid = TorusGrid(sp.n1, sp.n2)
    x1 = sp.x1
    s = _signed_x2(sp.n2)
    X1, S = np.meshgrid(x1, s, indexing="ij")
    absS = np.abs(S)
    # Odd extensions jump at x2 = 0 and pi; those self-mirrored samples take the midpoint 0.
    sign = np.where(np.isclose(np.abs(S), np.pi), 0.0, np.sign(S))
    zeros = np.zeros(grid.shape)
    Q = zeros if sp.V is None else _sample(sp.V, X1, absS)
    b1 = zeros if sp.a1 is None else _sample(sp.a1, X1, absS)
    b2 = zeros if sp.a2 is None else sign * _sample(sp.a2, X1, absS)
    rho = []
    for y0, sigma in sp.delta_lines:
        dens = _density(sigma, x1)
        rho.append(DeltaLine(float(y0), dens))
        rho.append(DeltaLine(float(TWO_PI - y0), dens))
    for pos, sigma in zip((0.0, np.pi), sp.robin):
        if sigma is None:
            continue
        dens = _density(sigma, x1)
        rho.extend([DeltaLine(pos, dens), DeltaLine(pos, dens)])
    return DoubledProblem(grid, sp.B, b1, b2, Q, tuple(rho))


def parity_project(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(P+ u, P- u) with P+- u = (u(x1, x2) +- u(x1, -x2)) / 2 on cylinder samples."""
    u = np.asarray(u)
    mirrored = u[..., _mirror_index(u.shape[-1])]
    return 0.5 * (u + mirrored), 0.5 * (u - mirrored)


def assemble_transverse(k, M1: int, n1: int, phi: np.ndarray, dphi: np.ndarray, weights: np.ndarray,
                        fields: dict, point_terms=(), transverse_index=None) -> FiberOperator:
    """Fiber matrices for the basis exp(i m x1) phi_j(x2) with real phi_j.

    ``phi`` and ``dphi`` hold basis values and x2-derivatives at quadrature
    nodes, shape (J, Q); ``fields`` maps g11, g12, g22, a1, a2, V, mu to
    arrays of shape (n1, Q) sampled at uniform x1 and the nodes (missing
    entries mean 0, except g11 = g22 = mu = 1). ``point_terms`` is a list of
    (sigma samples over x1, basis values (J,)) for line and edge densities.
    """
    if n1 < 2 * (2 * M1 + 1):
        raise AliasingError(f"{n1} x1 samples cannot resolve cutoff {M1}")
    J, Q = phi.shape
    shape = (n1, Q)
    zero = np.zeros(shape)
    one = np.ones(shape)

    def get(name, default):
        val = fields.get(name)
        return default if val is None else np.broadcast_to(val, shape)

    g11, g12, g22 = get("g11", one), get("g12", zero), get("g22", one)
    a1, a2, V, mu = get("a1", zero), get("a2", zero), get("V", zero), get("mu", one)
    c_lin = -(g11 * a1 + g12 * a2)
    c_mix = a1 * g12 + a2 * g22
    c0 = g11 * a1 ** 2 + 2 * g12 * a1 * a2 + g22 * a2 ** 2 + V

    deltas = np.arange(-2 * M1, 2 * M1 + 1)

    def xhat(F):
        return (np.fft.fft(F, axis=0) / n1)[deltas % n1]

    pp = np.einsum("jq,kq->jkq", phi * weights, phi)
    pd = np.einsum("jq,kq->jkq", phi * weights, dphi)
    dp = np.einsum("jq,kq->jkq", dphi * weights, phi)
    dd = np.einsum("jq,kq->jkq", dphi * weights, dphi)

    def term(F, T):
        return np.einsum("dq,jkq->djk", xhat(F), T)

    S_LR = term(g11, pp)
    S_L = term(c_lin, pp) + term(-1j * g12, pd)
    S_R = term(c_lin, pp) + term(1j * g12, dp)
    S_0 = term(c0, pp) + term(g22, dd) + term(1j * c_mix, pd) + term(-1j * c_mix, dp)
    S_B = term(mu, pp)
    for sigma, values in point_terms:
        s_hat = (np.fft.fft(np.asarray(sigma, dtype=float)) / n1)[deltas % n1]
        S_0 = S_0 + s_hat[:, None, None] * np.outer(values, values)[None]

    m = np.arange(-M1, M1 + 1)
    L = (m + k)[:, None, None, None]
    R = (m + k)[None, :, None, None]
    D = m[:, None] - m[None, :] + 2 * M1
    H = L * R * S_LR[D] + L * S_L[D] + R * S_R[D] + S_0[D]
    Bm = S_B[D]
    P = m.size
    H = H.transpose(0, 2, 1, 3).reshape(P * J, P * J)
    Bm = Bm.transpose(0, 2, 1, 3).reshape(P * J, P * J).astype(complex)
    idx = np.arange(J) if transverse_index is None else np.asarray(transverse_index)
    modes = (np.repeat(m, J), np.tile(idx, P))
    fiber = FiberOperator(k=k, cutoff=(M1, J), H=H, B=Bm, modes=modes)
    if np.isreal(k) and fiber.hermitian_defect() > HERMITIAN_TOL:
        raise AssemblyError(f"transverse fiber at k = {k} is not Hermitian")
    return fiber


def _strip_basis(bc: str, M2: int, x2: np.ndarray):
    if bc == DIRICHLET:
        n = np.arange(1, M2 + 1)
        return n, np.sin(np.outer(n, x2)), n[:, None] * np.cos(np.outer(n, x2))
    n = np.arange(0, M2 + 1)
    return n, np.cos(np.outer(n, x2)), -n[:, None] * np.sin(np.outer(n, x2))


def strip_quadrature(M2: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (0, pi), generous for smooth data."""
    nodes, weights = np.polynomial.legendre.leggauss(4 * M2 + 64)
    return 0.5 * np.pi * (nodes + 1.0), 0.5 * np.pi * weights


def assemble_strip_fiber(sp: StripProblem, k, M) -> FiberOperator:
    """Fiber of the strip problem in exp(i m x1) sin(n x2) or cos(n x2)."""
    M1, M2 = _cutoff_pair(M)
    x2, w = strip_quadrature(M2)
    n, phi, dphi = _strip_basis(sp.bc, M2, x2)
    X1, X2 = np.meshgrid(sp.x1, x2, indexing="ij")
    fields = {
        "g11": np.full(X1.shape, sp.B[0, 0]),
        "g22": np.full(X1.shape, sp.B[1, 1]),
        "a1": _sample(sp.a1, X1, X2),
        "a2": _sample(sp.a2, X1, X2),
        "V": _sample(sp.V, X1, X2),
    }
    points = []
    if sp.bc == NEUMANN:
        for pos, sigma in zip((0.0, np.pi), sp.robin):
            if sigma is not None:
                points.append((_density(sigma, sp.x1), _strip_basis(sp.bc, M2, np.array([pos]))[1][:, 0]))
    for y0, sigma in sp.delta_lines:
        points.append((_density(sigma, sp.x1), _strip_basis(sp.bc, M2, np.array([y0]))[1][:, 0]))
    return assemble_transverse(k, M1, sp.n1, phi, dphi, w, fields, points, transverse_index=n)


def assemble_parity_fiber(dp: DoubledProblem, parity: str, k, M) -> FiberOperator:
    """Doubled-cylinder fiber restricted to cos (even) or sin (odd) transverse modes."""
    M1, M2 = _cutoff_pair(M)
    n2 = dp.grid.n2
    if n2 < 2 * (2 * M2 + 1):
        raise AliasingError(f"{n2} cylinder samples cannot resolve cutoff {M2}")
    x2 = np.arange(n2) * (TWO_PI / n2)
    w = np.full(n2, TWO_PI / n2)
    bc = NEUMANN if parity == "even" else DIRICHLET
    n, phi, dphi = _strip_basis(bc, M2, x2)
    fields = {
        "g11": np.full(dp.grid.shape, dp.B[0, 0]),
        "g22": np.full(dp.grid.shape, dp.B[1, 1]),
        "a1": dp.b1, "a2": dp.b2, "V": dp.Q,
    }
    points = [(line.samples(dp.grid.n1), _strip_basis(bc, M2, np.array([line.y0]))[1][:, 0]) for line in dp.rho]
    return assemble_transverse(k, M1, dp.grid.n1, phi, dphi, w, fields, points, transverse_index=n)


def _compare(report: ValidationReport, rule: str, a: np.ndarray, b: np.ndarray, tol: float, tables: dict):
    diff = np.abs(np.asarray(a) - np.asarray(b))
    worst = float(diff.max())
    loc = tuple(int(i) for i in np.unravel_index(np.argmax(diff), diff.shape))
    report.metrics[rule] = worst
    tables[rule] = {"left": np.asarray(a).tolist(), "right": np.asarray(b).tolist()}
    if worst > tol:
        report.add(rule, loc, worst)


def verify_reflection_equivalence(sp: StripProblem, k_grid, n_bands: int, M, tol: float = 1e-8) -> ValidationReport:
    """Dirichlet and Neumann strip bands against the doubled cylinder problem."""
    M1, M2 = _cutoff_pair(M)
    dp = reflect_coefficients(sp)
    report = ValidationReport()
    for name, value in dp.parity_defects().items():
        report.check(f"parity_{name}", value, 1e-12)
    coeffs = dp.coefficient_set()
    rows = {key: [] for key in ("D", "N", "full", "odd", "even")}
    for i, k in enumerate(k_grid):
        rows["D"].append(solve_fiber_eigenvalues(assemble_strip_fiber(sp.with_bc(DIRICHLET), k, (M1, M2)), n_bands, i))
        rows["N"].append(solve_fiber_eigenvalues(assemble_strip_fiber(sp.with_bc(NEUMANN), k, (M1, M2)), n_bands, i))
        rows["full"].append(solve_fiber_eigenvalues(assemble_fiber(coeffs, k, (M1, M2)), n_bands, i))
        rows["odd"].append(solve_fiber_eigenvalues(assemble_parity_fiber(dp, "odd", k, (M1, M2)), n_bands, i))
        rows["even"].append(solve_fiber_eigenvalues(assemble_parity_fiber(dp, "even", k, (M1, M2)), n_bands, i))
    bands = {key: np.array(v) for key, v in rows.items()}
    union = np.sort(np.concatenate([bands["D"], bands["N"]], axis=1), axis=1)[:, :n_bands]
    tables = {}
    _compare(report, "union_vs_doubled", union, bands["full"], tol, tables)
    _compare(report, "dirichlet_vs_odd", bands["D"], bands["odd"], tol, tables)
    _compare(report, "neumann_vs_even", bands["N"], bands["even"], tol, tables)
    report.metrics["match_tables"] = tables
    return report


def corner_exponent(gamma_minus: complex, gamma_plus: complex, q0: complex) -> float:
    """nu = arg(-(g- + q0 conj g-) / (g+ + q0 conj g+)) / pi with arg in (0, 2 pi].

    ``gamma_minus`` and ``gamma_plus`` are the one-sided tangents before and
    after the corner, with the boundary traversed so the domain lies to the left.
    """
    if abs(q0) >= 1:
        raise ValueError("|q0| must be below 1")
    if gamma_minus == 0 or gamma_plus == 0:
        raise ValueError("tangents must be nonzero")
    num = gamma_minus + q0 * np.conj(gamma_minus)
    den = gamma_plus + q0 * np.conj(gamma_plus)
    if abs(den) < 1e-300:
        raise ZeroDivisionError("degenerate tangent image")
    angle = float(np.angle(-num / den))
    if angle <= 0:
        angle += TWO_PI
    return angle / np.pi


def sandwich_spectra_strip(omega, k, n_bands: int, M, B=None, V=None, n1: int = 64):
    """Neumann strip eigenvalues of the omega-weighted pencil and of its reduction.

    ``omega`` is a closed-form field of x2 alone (``presets.ScalarSpec``).
    The weighted pencil is assembled in the congruent basis
    exp(i m x1) cos(n x2) / omega(x2), the reduced problem (potential V~ and
    Robin edge densities) in exp(i m x1) cos(n x2); at fixed discretization
    the two Galerkin problems coincide up to quadrature error.
    """
    from .pushforward import sandwich_reduce

    M1, M2 = _cutoff_pair(M)
    B = np.eye(2) if B is None else np.asarray(B, dtype=float)
    x1 = np.arange(n1) * (TWO_PI / n1)
    x2, w = strip_quadrature(M2)
    probe_x1 = np.linspace(0.0, TWO_PI, 7)
    if np.ptp(omega(probe_x1[:, None], x2[None, :]), axis=0).max() > 1e-14:
        raise StructuralError("the congruent strip basis needs omega independent of x1")
    n, chi, dchi = _strip_basis(NEUMANN, M2, x2)
    zero = np.zeros_like(x2)
    om = omega(zero, x2)
    _, dom = omega.gradient(zero, x2)
    phi = chi / om
    dphi = dchi / om - chi * dom / om ** 2
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    om2 = np.broadcast_to(om ** 2, X1.shape)
    Vs = _sample(V, X1, X2)
    weighted = assemble_transverse(
        k, M1, n1, phi, dphi, w,
        {"g11": om2 * B[0, 0], "g22": om2 * B[1, 1], "V": Vs, "mu": om2},
        transverse_index=n,
    )
    Vt, (bottom, top) = sandwich_reduce(omega, B, V, boundary=True)
    points = [
        (bottom(x1), _strip_basis(NEUMANN, M2, np.array([0.0]))[1][:, 0]),
        (top(x1), _strip_basis(NEUMANN, M2, np.array([np.pi]))[1][:, 0]),
    ]
    reduced = assemble_transverse(
        k, M1, n1, chi, dchi, w,
        {"g11": np.full(X1.shape, B[0, 0]), "g22": np.full(X1.shape, B[1, 1]), "V": Vt(X1, X2)},
        points, transverse_index=n,
    )
    return solve_fiber_eigenvalues(weighted, n_bands), solve_fiber_eigenvalues(reduced, n_bands)
