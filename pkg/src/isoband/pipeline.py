"""Declarative problem specs, the reduction pipeline and stage timing."""

from __future__ import annotations

import copy
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fieldio
from .beltrami import SolverConfig, kappa_of, solve_periodic_beltrami
from .boundary import (
    DIRICHLET,
    NEUMANN,
    StripProblem,
    assemble_strip_fiber,
    reflect_coefficients,
    sandwich_spectra_strip,
    verify_reflection_equivalence,
)
from .errors import IsobandError, StageError, StructuralError
from .floquet import (
    BandStructure,
    band_oscillation,
    map_over_k,
    sandwich_spectra_torus,
    solve_bands,
    solve_fiber_eigenvalues,
    uniform_k_grid,
)
from .grid import TWO_PI, TorusGrid
from .isothermal import evaluate, identity_residuals, renormalize
from .metric import MetricField, metric_to_beltrami, normalize_det, validate_metric
from .presets import ScalarSpec, metric_preset
from .pushforward import CoefficientSet, DeltaLine, pushforward, sandwich_reduce

TORUS = "torus"
STRIP = "strip"
IDENTITY_TOL = 1e-6
PERIODICITY_TOL = 1e-8
DET_A_TOL = 1e-12
MASS_TOL = 1e-7
EQUIVALENCE_TOL = 1e-4
SANDWICH_TOL = 1e-6
REFLECTION_TOL = 1e-8
OSCILLATION_TOL = 1e-6

DEFAULT_SOLVER = {
    "grid": [64, 64],
    "M": 8,
    "kPoints": 33,
    "kRange": "auto",
    "nBands": 6,
    "tolerance": 1e-12,
    "maxIterations": 200,
}


@dataclass
class ProblemSpec:
    """Parsed problem description; see ``PROBLEM_PRESETS`` for examples."""

    name: str = "problem"
    geometry: str = TORUS
    metric: dict = field(default_factory=lambda: {"preset": "identity"})
    omega: object = None
    V: object = None
    a: object = None
    mu: object = None
    delta_lines: list = field(default_factory=list)
    bc: str | None = None
    B: list | None = None
    robin: list | None = None
    solver: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ProblemSpec":
        data = copy.deepcopy(data)
        if "preset" in data:
            base = copy.deepcopy(PROBLEM_PRESETS[data.pop("preset")])
            solver = {**base.get("solver", {}), **data.pop("solver", {})}
            base.update(data)
            base["solver"] = solver
            data = base
        known = {"name", "geometry", "metric", "omega", "V", "a", "mu", "deltaLines", "bc", "B", "robin", "solver"}
        unknown = set(data) - known
        if unknown:
            raise StructuralError(f"unknown problem keys: {sorted(unknown)}")
        spec = cls(
            name=data.get("name", "problem"),
            geometry=data.get("geometry", TORUS),
            metric=data.get("metric") or {"preset": "identity"},
            omega=data.get("omega"),
            V=data.get("V"),
            a=data.get("a"),
            mu=data.get("mu"),
            delta_lines=list(data.get("deltaLines", [])),
            bc=data.get("bc"),
            B=data.get("B"),
            robin=data.get("robin"),
            solver={**DEFAULT_SOLVER, **data.get("solver", {})},
            base_dir=Path(base_dir) if base_dir else Path.cwd(),
        )
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "ProblemSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def validate(self):
        if self.geometry not in (TORUS, STRIP):
            raise StructuralError(f"geometry must be torus or strip, got {self.geometry!r}")
        if self.geometry == STRIP and self.bc not in (DIRICHLET, NEUMANN):
            raise StructuralError("strip problems need bc = dirichlet or neumann")
        if self.geometry == TORUS and (self.bc or self.robin):
            raise StructuralError("bc and robin apply to strip problems only")
        grid = self.solver["grid"]
        TorusGrid(int(grid[0]), int(grid[1]))
        if int(self.solver["nBands"]) < 1 or int(self.solver["kPoints"]) < 1:
            raise StructuralError("nBands and kPoints must be positive")
        for ref in self._file_refs():
            if not (self.base_dir / ref).exists():
                raise StructuralError(f"referenced file {ref} does not exist")

    def _file_refs(self):
        items = [self.metric, self.omega, self.V, self.mu] + (list(self.a) if isinstance(self.a, list) else [])
        return [item["file"] for item in items if isinstance(item, dict) and "file" in item]

    @property
    def grid(self) -> TorusGrid:
        n1, n2 = self.solver["grid"]
        return TorusGrid(int(n1), int(n2))

    @property
    def cutoff(self):
        M = self.solver["M"]
        return tuple(int(v) for v in M) if isinstance(M, (list, tuple)) else int(M)

    @property
    def has_magnetic(self) -> bool:
        return self.a is not None

    def k_grid(self) -> np.ndarray:
        mode = self.solver.get("kRange", "auto")
        half = (mode == "half") or (mode == "auto" and not self.has_magnetic)
        return uniform_k_grid(int(self.solver["kPoints"]), half=half)

    def to_dict(self) -> dict:
        out = {
            "name": self.name, "geometry": self.geometry, "metric": self.metric, "omega": self.omega,
            "V": self.V, "a": self.a, "mu": self.mu, "deltaLines": self.delta_lines, "solver": self.solver,
        }
        if self.geometry == STRIP:
            out.update(bc=self.bc, B=self.B, robin=self.robin)
        return out


@dataclass
class RunReport:
    name: str
    geometry: str
    timings: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    kappa: complex | None = None
    A: list | None = None
    det_scale: float = 1.0
    bands_csv: str | None = None
    bands: BandStructure | None = None
    oscillation: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def check(self, name: str, value: float, tol: float, passed: bool | None = None):
        if name in self.checks:
            raise StructuralError(f"check {name} recorded twice")
        value = float(value)
        ok = (value <= tol) if passed is None else bool(passed)
        self.checks[name] = {"passed": ok, "value": value, "tol": tol}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "geometry": self.geometry,
            "passed": self.passed,
            "timingsMs": {k: round(v * 1e3, 3) for k, v in self.timings.items()},
            "residuals": self.residuals,
            "checks": self.checks,
            "kappa": None if self.kappa is None else fieldio.complex_to_json(self.kappa),
            "A": self.A,
            "detScale": self.det_scale,
            "bandsCsv": self.bands_csv,
            "oscillation": self.oscillation,
        }


class _Stages:
    """Times named stages and tags any failure with the stage name."""

    def __init__(self, report: RunReport):
        self.report = report

    def run(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except (IsobandError, ValueError, np.linalg.LinAlgError) as exc:
            raise StageError(name, exc) from exc
        finally:
            self.report.timings[name] = self.report.timings.get(name, 0.0) + time.perf_counter() - t0


def _load_components(spec: ProblemSpec, ref: dict, count: int, grid: TorusGrid) -> np.ndarray:
    fgrid, comps = fieldio.read_fields(spec.base_dir / ref["file"])
    if fgrid != grid:
        raise StructuralError(f"{ref['file']} is sampled on {fgrid.shape}, solver grid is {grid.shape}")
    if comps.shape[0] != count:
        raise StructuralError(f"{ref['file']} has {comps.shape[0]} components, expected {count}")
    return comps


def _scalar_on_grid(spec: ProblemSpec, value, grid: TorusGrid):
    if value is None:
        return None
    if isinstance(value, dict) and "file" in value:
        return _load_components(spec, value, 1, grid)[0]
    x1, x2 = grid.mesh()
    return np.broadcast_to(ScalarSpec.from_json(value)(x1, x2), grid.shape).astype(float)


def _density_samples(value, n1: int) -> np.ndarray:
    x1 = np.arange(n1) * (TWO_PI / n1)
    return np.broadcast_to(ScalarSpec.from_json(value)(x1, 0.0 * x1), (n1,)).astype(float)


def build_metric(spec: ProblemSpec, grid: TorusGrid) -> MetricField:
    ref = spec.metric
    if "file" in ref:
        comps = _load_components(spec, ref, 3, grid)
        return MetricField(grid, comps[0], comps[1], comps[2])
    fn = metric_preset(ref.get("preset", "identity"), ref.get("params"))
    return MetricField.from_function(grid, fn)


def build_torus_source(spec: ProblemSpec) -> tuple[MetricField, CoefficientSet, np.ndarray | None]:
    """Source metric, coefficients (with unit metric placeholder) and omega samples."""
    grid = spec.grid
    G = build_metric(spec, grid)
    a1 = a2 = None
    if spec.a is not None:
        if isinstance(spec.a, dict) and "file" in spec.a:
            a1, a2 = _load_components(spec, spec.a, 2, grid)
        else:
            a1 = _scalar_on_grid(spec, spec.a[0], grid)
            a2 = _scalar_on_grid(spec, spec.a[1], grid)
    lines = tuple(DeltaLine(float(d["y0"]), _density_samples(d.get("sigma", 1.0), grid.n1)) for d in spec.delta_lines)
    coeffs = CoefficientSet(grid, metric=G, a1=a1, a2=a2, V=_scalar_on_grid(spec, spec.V, grid),
                            mu=_scalar_on_grid(spec, spec.mu, grid), delta_lines=lines)
    return G, coeffs, _scalar_on_grid(spec, spec.omega, grid)


def _strip_callable(value):
    if value is None:
        return None
    spec = ScalarSpec.from_json(value)
    return None if spec.is_zero else spec


def _edge_callable(value):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return float(value)
    spec = ScalarSpec.from_json(value)
    return lambda x1: spec(x1, np.zeros_like(np.asarray(x1, dtype=float)))


def build_strip_problem(spec: ProblemSpec) -> tuple[StripProblem, object]:
    """Strip problem before the omega reduction, plus the omega field (or None)."""
    grid = spec.grid
    a = spec.a or [None, None]
    robin = spec.robin or [None, None]
    lines = tuple((float(d["y0"]), _edge_callable(d.get("sigma", 1.0))) for d in spec.delta_lines)
    sp = StripProblem(
        bc=spec.bc, B=np.diag(np.diag(np.asarray(spec.B, dtype=float))) if spec.B is not None else None,
        V=_strip_callable(spec.V), a1=_strip_callable(a[0]), a2=_strip_callable(a[1]),
        robin=(_edge_callable(robin[0]), _edge_callable(robin[1])), delta_lines=lines,
        n1=grid.n1, n2=grid.n2,
    )
    if spec.B is not None and np.count_nonzero(np.asarray(spec.B) - np.diag(np.diag(spec.B))):
        raise StructuralError("strip metric B must be diagonal")
    omega = _strip_callable(spec.omega)
    return sp, omega


def _sum_edges(first, second):
    if first is None:
        return second
    if second is None:
        return first

    def fn(x1):
        x1 = np.asarray(x1, dtype=float)
        f = first(x1) if callable(first) else first
        s = second(x1) if callable(second) else second
        return np.broadcast_to(f + s, x1.shape)

    return fn


def _reduce_strip(sp: StripProblem, omega) -> StripProblem:
    """Replace the omega-weighted strip problem by its unit-weight reduction."""
    Vt, (bottom, top) = sandwich_reduce(omega, sp.B, sp.V, boundary=True)

    def scaled(sigma, y0):
        def fn(x1):
            x1 = np.asarray(x1, dtype=float)
            s = sigma(x1) if callable(sigma) else sigma
            return s / omega(x1, np.full_like(x1, y0)) ** 2

        return fn

    lines = tuple((y0, scaled(sigma, y0)) for y0, sigma in sp.delta_lines)
    robin = (_sum_edges(sp.robin[0], bottom), _sum_edges(sp.robin[1], top))
    return StripProblem(sp.bc, sp.B, Vt, sp.a1, sp.a2, robin, lines, sp.n1, sp.n2)


def _write_bands(out_dir: Path | None, bs: BandStructure, report: RunReport):
    if out_dir is None:
        return
    path = fieldio.write_bands_csv(out_dir / "bands.csv", bs.k_grid, bs.bands)
    report.bands_csv = str(path)


def run_pipeline(spec: ProblemSpec, out_dir=None, jobs: int = 1, verify: str = "fast") -> RunReport:
    """Run every stage for ``spec``; files are written when ``out_dir`` is given."""
    if verify not in ("fast", "full"):
        raise ValueError("verify must be fast or full")
    report = RunReport(spec.name, spec.geometry)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    if spec.geometry == TORUS:
        _run_torus(spec, report, out, jobs, verify)
    else:
        _run_strip(spec, report, out, jobs, verify)
    if out is not None:
        (out / "report.json").write_text(fieldio.dumps_json(report.to_dict()))
    return report


def _oscillation_check(report: RunReport, bs: BandStructure):
    stats = band_oscillation(bs)
    report.oscillation = [float(v) for v in stats.values]
    report.check("band_oscillation", float(stats.values.min()), OSCILLATION_TOL, passed=stats.values.min() > OSCILLATION_TOL)


def _run_torus(spec: ProblemSpec, report: RunReport, out: Path | None, jobs: int, verify: str):
    st = _Stages(report)
    grid = spec.grid
    M = spec.cutoff
    n_bands = int(spec.solver["nBands"])
    k_grid = spec.k_grid()

    G, src, omega = st.run("load", build_torus_source, spec)

    def validate():
        rep = validate_metric(G)
        report.check("metric_valid", len(rep.violations), 0)
        G1, scale = normalize_det(G)
        return G1, scale

    G1, scale = st.run("validate", validate)
    report.det_scale = scale
    # The constant det factor multiplies the whole kinetic term; fold it into omega^2.
    om = omega if omega is not None else np.ones(grid.shape)
    om = om * np.sqrt(scale)
    weighted = omega is not None or abs(scale - 1.0) > 1e-14

    def sandwich():
        if not weighted:
            return src.with_updates(metric=G1)
        Vt, _ = sandwich_reduce(om, G1, src.V, grid=grid)
        mu = src.field("mu") / om ** 2
        lines = tuple(DeltaLine(d.y0, d.samples(grid.n1) / _on_line(om, d.y0) ** 2) for d in src.delta_lines)
        return src.with_updates(metric=G1, V=Vt, mu=mu, delta_lines=lines)

    reduced = st.run("sandwich", sandwich)
    cfg = SolverConfig(int(spec.solver["maxIterations"]), float(spec.solver["tolerance"]))
    fmap = st.run("beltrami", lambda: solve_periodic_beltrami(metric_to_beltrami(G1), cfg))
    report.kappa = kappa_of(fmap)
    report.residuals["beltrami"] = fmap.residual_l2
    rmap = st.run("renormalize", renormalize, fmap)
    report.A = rmap.A.tolist()
    target = st.run("pushforward", pushforward, rmap, reduced)

    bs = st.run("bands", solve_bands, target, k_grid, n_bands, M, jobs)
    report.bands = bs

    def checks():
        report.check("beltrami_residual", fmap.residual_l2, max(cfg.tolerance, 1e-12))
        res = identity_residuals(fmap, G1)
        report.residuals["identities_grid"] = res
        report.check("identities", max(res.values()), IDENTITY_TOL)
        z = _check_points(grid, 64)
        per1 = np.abs(evaluate(fmap, z + TWO_PI) - evaluate(fmap, z) - TWO_PI).max()
        per2 = np.abs(evaluate(fmap, z + 1j * TWO_PI) - evaluate(fmap, z) - fmap.kappa).max()
        report.check("periodicity", max(per1, per2 / (1 + abs(fmap.kappa))), PERIODICITY_TOL)
        report.check("det_A", abs(np.linalg.det(rmap.A) - 1.0), DET_A_TOL)
        src_mass = reduced.field("mu").mean()
        report.check("weight_mass", abs(target.field("mu").mean() - src_mass) / src_mass, MASS_TOL)
        _oscillation_check(report, bs)
        if verify == "full":
            zoff = _check_points(grid, 4096)
            res_off = identity_residuals(fmap, G1, zoff)
            report.residuals["identities_offgrid"] = res_off
            report.check("identities_offgrid", max(res_off.values()), IDENTITY_TOL)
            ks = k_grid

            def src_one(i, k):
                from .floquet import assemble_fiber

                return solve_fiber_eigenvalues(assemble_fiber(reduced, k, M), n_bands, i)

            src_bands = np.array(map_over_k(src_one, ks, jobs))
            report.check("unitary_equivalence", np.abs(src_bands - bs.bands).max(), EQUIVALENCE_TOL)
            if weighted:
                left, right = sandwich_spectra_torus(om, float(ks[len(ks) // 2]), n_bands, M, G=G1, V=src.V)
                report.check("sandwich_equivalence", np.abs(left - right).max(), SANDWICH_TOL)

    st.run("verify", checks)

    def write():
        if out is None:
            return
        _write_bands(out, bs, report)
        fmap.save(out / "map.isob")
        target.save(out / "coeffs.isob")

    st.run("write", write)


def _on_line(values: np.ndarray, y0: float) -> np.ndarray:
    """Samples of a grid field along x2 = y0 (trigonometric interpolation in x2)."""
    from .grid import interpolate_periodic

    n1 = values.shape[0]
    x1 = np.arange(n1) * (TWO_PI / n1)
    return np.asarray(interpolate_periodic(values, x1, np.full(n1, y0)), dtype=float)


def _check_points(grid: TorusGrid, count: int) -> np.ndarray:
    rng = np.random.default_rng(12345)
    return TWO_PI * (rng.random(count) + 1j * rng.random(count))


def _run_strip(spec: ProblemSpec, report: RunReport, out: Path | None, jobs: int, verify: str):
    st = _Stages(report)
    M = spec.cutoff
    n_bands = int(spec.solver["nBands"])
    k_grid = spec.k_grid()
    sp, omega = st.run("load", build_strip_problem, spec)
    reduced = st.run("sandwich", lambda: sp if omega is None else _reduce_strip(sp, omega))
    report.A = reduced.B.tolist()
    doubled = st.run("reflect", reflect_coefficients, reduced)

    def bands():
        def one(i, k):
            return solve_fiber_eigenvalues(assemble_strip_fiber(reduced, k, M), n_bands, i)

        return BandStructure(k_grid, np.array(map_over_k(one, k_grid, jobs)))

    bs = st.run("bands", bands)
    report.bands = bs

    def checks():
        defects = doubled.parity_defects()
        report.residuals["parity"] = defects
        report.check("doubled_parity", max(defects.values()), 1e-12)
        ks = k_grid if verify == "full" else k_grid[:: max(1, len(k_grid) // 3)][:3]
        rep = verify_reflection_equivalence(reduced, ks, n_bands, M, tol=REFLECTION_TOL)
        metrics = {k: v for k, v in rep.metrics.items() if k != "match_tables"}
        report.residuals["reflection"] = metrics
        worst = max(metrics[k] for k in ("union_vs_doubled", "dirichlet_vs_odd", "neumann_vs_even"))
        report.check("reflection_equivalence", worst, REFLECTION_TOL)
        _oscillation_check(report, bs)
        if verify == "full" and omega is not None and spec.bc == NEUMANN:
            left, right = sandwich_spectra_strip(omega, float(ks[0]), n_bands, M, B=sp.B, V=sp.V, n1=sp.n1)
            report.check("sandwich_equivalence", np.abs(left - right).max(), SANDWICH_TOL)

    st.run("verify", checks)

    def write():
        if out is None:
            return
        _write_bands(out, bs, report)
        doubled.coefficient_set().save(out / "coeffs.isob")

    st.run("write", write)


def bench(spec: ProblemSpec, repeat: int = 3, jobs: int = 1) -> dict:
    """Median wall-clock milliseconds per stage over ``repeat`` runs."""
    samples: dict[str, list] = {}
    for _ in range(max(1, repeat)):
        rep = run_pipeline(spec, None, jobs=jobs, verify="fast")
        for stage, secs in rep.timings.items():
            samples.setdefault(stage, []).append(secs * 1e3)
    return {stage: statistics.median(v) for stage, v in samples.items()}


PROBLEM_PRESETS = {
    "free-torus": {
        "name": "free-torus", "geometry": TORUS, "metric": {"preset": "identity"},
    },
    "diag-half-two": {
        "name": "diag-half-two", "geometry": TORUS, "metric": {"preset": "diag", "params": {"g11": 0.5, "g22": 2.0}},
    },
    "rotated-anisotropic": {
        "name": "rotated-anisotropic", "geometry": TORUS,
        "metric": {"preset": "rotated-anisotropic-a"},
        "V": {"terms": [[1, 0, 1.0, 0.0], [1, 1, 0.0, 0.5]]},
        "solver": {"grid": [128, 128], "M": 8},
    },
    "mirror-symmetric": {
        "name": "mirror-symmetric", "geometry": TORUS,
        "metric": {"preset": "mirror-symmetric-a"},
        "solver": {"grid": [128, 128], "M": 8},
    },
    "magnetic-torus": {
        "name": "magnetic-torus", "geometry": TORUS,
        "metric": {"preset": "rotated-anisotropic-b"},
        "a": [{"terms": [[0, 1, 0.2, 0.0]]}, {"terms": [[1, 0, 0.0, 0.1]]}],
        "V": {"terms": [[1, 0, 1.0, 0.0]]},
        "solver": {"grid": [128, 128], "M": 8},
    },
    "weighted-torus": {
        "name": "weighted-torus", "geometry": TORUS, "metric": {"preset": "identity"},
        "omega": {"terms": [[1, 0, 0.0, 0.1]], "exp": True},
    },
    "cosine-potential-torus": {
        "name": "cosine-potential-torus", "geometry": TORUS, "metric": {"preset": "identity"},
        "V": {"terms": [[1, 0, 2.0, 0.0]]},
    },
    "kronig-penney": {
        "name": "kronig-penney", "geometry": TORUS, "metric": {"preset": "identity"},
        "deltaLines": [{"y0": float(np.pi), "sigma": 1.0}],
    },
    "dirichlet-free-strip": {
        "name": "dirichlet-free-strip", "geometry": STRIP, "bc": DIRICHLET,
    },
    "neumann-free-strip": {
        "name": "neumann-free-strip", "geometry": STRIP, "bc": NEUMANN,
    },
    "cosine-potential-strip": {
        "name": "cosine-potential-strip", "geometry": STRIP, "bc": DIRICHLET,
        "V": {"terms": [[1, 0, 1.0, 0.0]]},
    },
    "odd-a2-strip": {
        "name": "odd-a2-strip", "geometry": STRIP, "bc": NEUMANN,
        "a": [None, {"terms": [[0, 1, 0.0, 1.0]]}],
    },
    "robin-strip": {
        "name": "robin-strip", "geometry": STRIP, "bc": NEUMANN,
        "omega": {"poly_x2": [0.0, 0.2], "exp": True},
    },
}


def preset_spec(name: str, **solver) -> ProblemSpec:
    data = {"preset": name}
    if solver:
        data["solver"] = solver
    return ProblemSpec.from_dict(data)
