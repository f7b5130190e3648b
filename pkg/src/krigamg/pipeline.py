"""End-to-end runs: problem -> test vectors -> covariance -> coarsening -> solve.

RunConfig collects every knob of one experiment.  Defaults follow the
benchmark protocol: coarse fraction 1/4 with caliber 4 for the isotropic
cases, fraction 1/2 with caliber 2 (square) or 3 (circle) for the
anisotropic ones, localization radius 4, one smoothing sweep, and a
10^8 PCG residual reduction.

Seeds: the run seed drives the test vectors; the variogram subsample,
the rate-estimation start vector and the PCG right-hand side use fixed
documented offsets of it, so every artifact of a run is reproducible
from the single seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields

import numpy as np

from . import covariance as cov
from .coarsen import coarsen, embeddability_failure_fraction
from .errors import NumericalError
from .metric import GraphDistanceOracle, median_neighbor_distance
from .problems import CASE_LABELS, ProblemInstance, generate_case, load_matrix_market
from .smoother import generate_test_vectors, greedy_coloring
from .twogrid import SolveReport, build_twogrid, estimate_asymptotic_rate, pcg_solve

__all__ = ["RunConfig", "build_problem", "build_covariance_source", "run_solve",
           "variogram_products", "CASE_DEFAULTS"]

MODELS = ("emp", "sph", "exp")
_FAMILY = {"sph": "spherical", "exp": "exponential"}

CLOUD_SEED_OFFSET = 1_000_003
RATE_SEED_OFFSET = 2_000_003
RHS_SEED_OFFSET = 3_000_003

# (q_max, coarse fraction) per benchmark case
CASE_DEFAULTS = {
    "s-iso": (4, 0.25),
    "c-iso": (4, 0.25),
    "s-aniso": (2, 0.5),
    "c-aniso": (3, 0.5),
    "external": (4, 0.25),
}


@dataclass
class RunConfig:
    """All parameters of one experiment run."""

    case: str | None = None
    matrix: str | None = None
    coords: str | None = None
    model: str = "sph"
    K: int = 1
    nu: int = 1
    seed: int = 1
    q_max: int | None = None
    radius: float = 4.0
    nc_fraction: float | None = None
    tolerance: float | None = None
    grid_m: int = 45
    rings: int = 29
    mean_mode: str = "zero"
    vario_max_distance: float | None = None
    bin_width: float | None = None
    pair_budget: int | None = None
    batch: bool = False
    min_separation: float | None = None
    out: str = "."

    def validate(self) -> None:
        if (self.case is None) == (self.matrix is None):
            raise ValueError("specify exactly one of case or matrix")
        if self.case is not None and self.case not in CASE_LABELS:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASE_LABELS}")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.nu < 0:
            raise ValueError("nu must be >= 0")
        if self.q_max is not None and self.q_max < 1:
            raise ValueError("q_max must be >= 1")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if self.nc_fraction is not None and not (0.0 < self.nc_fraction <= 1.0):
            raise ValueError("nc_fraction must be in (0, 1]")
        if self.tolerance is not None and self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.nc_fraction is not None and self.tolerance is not None:
            raise ValueError("nc_fraction and tolerance are mutually exclusive")
        if self.mean_mode not in ("zero", "estimated"):
            raise ValueError("mean_mode must be zero or estimated")
        if self.grid_m < 2:
            raise ValueError("grid_m must be >= 2")
        if self.rings < 2:
            raise ValueError("rings must be >= 2")
        if self.vario_max_distance is not None and self.vario_max_distance <= 0.0:
            raise ValueError("vario_max_distance must be positive")
        if self.bin_width is not None and self.bin_width <= 0.0:
            raise ValueError("bin_width must be positive")
        if self.pair_budget is not None and self.pair_budget < 1:
            raise ValueError("pair_budget must be >= 1")

    @property
    def case_label(self) -> str:
        return self.case if self.case is not None else "external"

    def resolved_q_max(self) -> int:
        if self.q_max is not None:
            return self.q_max
        return CASE_DEFAULTS[self.case_label][0]

    def resolved_target(self, n: int) -> dict:
        if self.tolerance is not None:
            return {"tolerance": self.tolerance}
        frac = self.nc_fraction
        if frac is None:
            frac = CASE_DEFAULTS[self.case_label][1]
        return {"n_coarse": max(1, math.floor(n * frac))}

    def model_name(self) -> str:
        return f"{self.model}-{self.K}"


def parse_config_file(path) -> dict:
    """Flat key=value config; keys must be RunConfig fields."""
    known = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(key, value.strip())
    return out


def _coerce(key: str, value: str):
    if value.lower() in ("none", ""):
        return None
    ints = {"K", "nu", "seed", "q_max", "grid_m", "rings", "pair_budget"}
    floats = {"radius", "nc_fraction", "tolerance", "vario_max_distance",
              "bin_width", "min_separation"}
    if key in ints:
        return int(value)
    if key in floats:
        return float(value)
    if key == "batch":
        return value.lower() in ("1", "true", "yes", "on")
    return value


def build_problem(config: RunConfig) -> ProblemInstance:
    if config.case is not None:
        return generate_case(config.case, m=config.grid_m, rings=config.rings)
    return load_matrix_market(config.matrix, config.coords)


def default_pair_budget(K: int) -> int:
    """Cap the cloud at roughly two million squared differences."""
    return min(200_000, max(20_000, 2_000_000 // K))


def variogram_products(problem: ProblemInstance, vectors: np.ndarray, config: RunConfig):
    """Variogram cloud, binned semivariogram, and default geometry parameters."""
    max_d = config.vario_max_distance
    if max_d is None:
        max_d = 2.0 * config.radius
    width = config.bin_width
    if width is None:
        width = median_neighbor_distance(problem.matrix)
    budget = config.pair_budget
    if budget is None:
        budget = default_pair_budget(vectors.shape[1])
    oracle = GraphDistanceOracle(problem.matrix, max_d)
    cloud = cov.build_variogram_cloud(
        vectors, oracle, max_d, pair_budget=budget,
        seed=config.seed + CLOUD_SEED_OFFSET,
    )
    emp = cov.bin_semivariogram(cloud, width, distance_kind="graph")
    return cloud, emp


def build_covariance_source(problem: ProblemInstance, vectors: np.ndarray,
                            config: RunConfig, oracle=None):
    """Covariance source for the run's model choice, plus the fitted model if any."""
    if config.model == "emp":
        return cov.EmpiricalCovariance(vectors, mean_mode=config.mean_mode), None
    _, emp = variogram_products(problem, vectors, config)
    if len(emp) < 2:
        raise NumericalError(
            "empirical semivariogram has fewer than 2 nonempty bins; "
            "increase vario_max_distance or lower bin_width"
        )
    model = cov.fit_semivariogram(emp, _FAMILY[config.model])
    if oracle is None:
        oracle = GraphDistanceOracle(problem.matrix, config.radius)
    return cov.ParametricCovariance(model, oracle), model


def run_solve(config: RunConfig, problem: ProblemInstance | None = None):
    """Full pipeline; returns (SolveReport, PartitionState, InterpolationOperator,
    TwoGridOperator, ProblemInstance)."""
    config.validate()
    timings = {}
    t0 = time.perf_counter()
    if problem is None:
        problem = build_problem(config)
    coloring = greedy_coloring(problem.matrix)
    tv = generate_test_vectors(problem.matrix, config.K, config.nu, config.seed, coloring)
    oracle = GraphDistanceOracle(problem.matrix, config.radius)
    source, _model = build_covariance_source(problem, tv.vectors, config, oracle)
    timings["setup"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    state, interp = coarsen(
        problem,
        source,
        q_max=config.resolved_q_max(),
        radius=config.radius,
        batch=config.batch,
        min_separation=config.min_separation,
        oracle=oracle,
        **config.resolved_target(problem.n),
    )
    timings["coarsen"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    op = build_twogrid(problem.matrix, interp.to_csr(), coloring)
    rate = estimate_asymptotic_rate(op, seed=config.seed + RATE_SEED_OFFSET)
    timings["rate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rhs = np.random.default_rng(config.seed + RHS_SEED_OFFSET).standard_normal(problem.n)
    pcg = pcg_solve(op, rhs, reduction=1e-8)
    timings["pcg"] = time.perf_counter() - t0

    diag = state.diagnostics
    report = SolveReport(
        case=problem.label,
        model=config.model_name(),
        K=config.K,
        n_c=interp.n_c,
        q_max=config.resolved_q_max(),
        radius=config.radius,
        rho=rate.rho,
        pcg_iterations=pcg.iterations,
        rho_l2=rate.rho_l2,
        converged=pcg.converged,
        diverged=rate.diverged,
        residuals=pcg.residuals,
        timings=timings,
        diagnostics={
            "negative_variance_events": diag.negative_variance_events,
            "regularized_events": diag.regularized_events,
            "qmax_reductions": diag.qmax_reductions,
            "empty_stencils": diag.empty_stencils,
            "embeddability_failure_fraction": embeddability_failure_fraction(state, oracle),
        },
    )
    return report, state, interp, op, problem
