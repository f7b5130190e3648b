"""Galerkin two-grid operator, V(1,1) cycle, rate estimation, and PCG.

The cycle pairs one colored Gauss-Seidel pre-sweep, an exact coarse
correction through the Galerkin operator P^T A P (dense Cholesky), and
one post-sweep.  The stationary solver applies both sweeps in the same
ascending color order, so its error propagator is exactly
(I-MA)(I-Pi)(I-MA) with one and the same smoother M on both sides.
Reversing the post-sweep order instead makes the cycle self-adjoint in
the A inner product; that symmetrized pairing is used exclusively when
the cycle preconditions conjugate gradients, where symmetry is
mandatory.  (For red-black colorings the reversed pairing also wastes
part of the second sweep, since the middle color is relaxed twice in a
row, which is why the solver keeps the same-order form.)

The asymptotic convergence factor is estimated by power iteration on the
solver's error propagator (zero right-hand side), measured in the A-norm
and renormalized every step; the 2-norm ratio is tracked alongside for
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import NumericalError
from .smoother import Coloring, ColoredSweeper, greedy_coloring

__all__ = [
    "TwoGridOperator",
    "build_twogrid",
    "galerkin",
    "vcycle_apply",
    "precondition_apply",
    "RateEstimate",
    "estimate_asymptotic_rate",
    "PCGResult",
    "pcg_solve",
    "SolveReport",
    "REPORT_COLUMNS",
    "write_report_csv",
]


def galerkin(a: sp.csr_matrix, p: sp.csr_matrix) -> sp.csr_matrix:
    """Coarse operator P^T A P, explicitly symmetrized against roundoff."""
    a_c = (p.T @ (a @ p)).tocsr()
    a_c = ((a_c + a_c.T) * 0.5).tocsr()
    a_c.sort_indices()
    return a_c


@dataclass
class TwoGridOperator:
    """Assembled V(1,1) two-grid method for one matrix/interpolation pair."""

    a: sp.csr_matrix
    p: sp.csr_matrix
    a_c: sp.csr_matrix
    coloring: Coloring
    sweeper: ColoredSweeper = field(repr=False)
    coarse_factor: tuple = field(repr=False)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_c(self) -> int:
        return self.p.shape[1]


def build_twogrid(a: sp.csr_matrix, p: sp.csr_matrix, coloring: Coloring | None = None) -> TwoGridOperator:
    if coloring is None:
        coloring = greedy_coloring(a)
    a_c = galerkin(a, p)
    try:
        factor = scipy.linalg.cho_factor(a_c.toarray(), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError("Galerkin coarse matrix is not positive definite") from exc
    return TwoGridOperator(
        a=a.tocsr(),
        p=p.tocsr(),
        a_c=a_c,
        coloring=coloring,
        sweeper=ColoredSweeper(a, coloring),
        coarse_factor=factor,
    )


def vcycle_apply(
    op: TwoGridOperator, b: np.ndarray, x0: np.ndarray, post_reverse: bool = False
) -> np.ndarray:
    """One V(1,1) cycle: pre-sweep, exact coarse correction, post-sweep.

    By default both sweeps ascend the color order (the stationary solver,
    error propagator (I-MA)(I-Pi)(I-MA)).  With post_reverse=True the
    post-sweep descends, giving the A-self-adjoint variant required for
    preconditioning CG.
    """
    x = op.sweeper.sweep(x0, b, reverse=False)
    r = b - op.a @ x
    x = x + op.p @ scipy.linalg.cho_solve(op.coarse_factor, op.p.T @ r)
    return op.sweeper.sweep(x, b, reverse=post_reverse)


def precondition_apply(op: TwoGridOperator, r: np.ndarray) -> np.ndarray:
    """Symmetrized V(1,1) cycle on residual r with zero initial guess."""
    return vcycle_apply(op, r, np.zeros(op.n), post_reverse=True)


@dataclass
class RateEstimate:
    rho: float
    rho_l2: float
    cycles: int
    stalled: bool
    diverged: bool


def estimate_asymptotic_rate(
    op: TwoGridOperator,
    seed: int = 0,
    max_cycles: int = 200,
    stall_tol: float = 1e-3,
) -> RateEstimate:
    """Power iteration on the error propagator; rho = A-norm reduction per cycle.

    Stops once consecutive A-norm ratios differ by less than stall_tol or
    at max_cycles.  A sustained ratio above 1 is reported as divergence,
    not raised.
    """
    if max_cycles < 10:
        raise ValueError("max_cycles must be >= 10")
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(op.n)
    zero = np.zeros(op.n)

    def a_norm(v):
        return float(np.sqrt(max(v @ (op.a @ v), 0.0)))

    e /= a_norm(e)
    rho = rho_l2 = 0.0
    prev = None
    stalled = False
    over_one = 0
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        e_next = vcycle_apply(op, zero, e)
        num = a_norm(e_next)
        if num == 0.0:
            rho = rho_l2 = 0.0
            stalled = True
            break
        rho = num  # previous iterate had unit A-norm
        rho_l2 = float(np.linalg.norm(e_next) / np.linalg.norm(e))
        e = e_next / num
        over_one = over_one + 1 if rho > 1.0 else 0
        if prev is not None and abs(rho - prev) < stall_tol:
            stalled = True
            break
        prev = rho
    return RateEstimate(
        rho=rho,
        rho_l2=rho_l2,
        cycles=cycles,
        stalled=stalled,
        diverged=over_one >= 5,
    )


@dataclass
class PCGResult:
    iterations: int
    converged: bool
    residuals: list[float]


def pcg_solve(
    op: TwoGridOperator,
    b: np.ndarray,
    reduction: float = 1e-8,
    max_it: int = 500,
    x0: np.ndarray | None = None,
) -> PCGResult:
    """Conjugate gradients preconditioned by one V(1,1) cycle per application.

    The preconditioner is applied with a zero initial guess on the
    current residual.  Stops when ||r_k|| <= reduction * ||r_0||; running
    out of iterations is reported, an indefinite preconditioner (z^T r
    <= 0) is raised as NumericalError.
    """
    a = op.a
    n = op.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    r0_norm = float(np.linalg.norm(r))
    residuals = [r0_norm]
    if r0_norm == 0.0:
        return PCGResult(iterations=0, converged=True, residuals=residuals)
    z = precondition_apply(op, r)
    rz = float(r @ z)
    if rz <= 0.0:
        raise NumericalError("two-grid preconditioner is not positive definite")
    p = z.copy()
    for k in range(1, max_it + 1):
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise NumericalError("system matrix is not positive definite in PCG")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rnorm = float(np.linalg.norm(r))
        residuals.append(rnorm)
        if rnorm <= reduction * r0_norm:
            return PCGResult(iterations=k, converged=True, residuals=residuals)
        z = precondition_apply(op, r)
        rz_next = float(r @ z)
        if rz_next <= 0.0:
            raise NumericalError("two-grid preconditioner is not positive definite")
        p = z + (rz_next / rz) * p
        rz = rz_next
    return PCGResult(iterations=max_it, converged=False, residuals=residuals)


REPORT_COLUMNS = ("case", "model", "K", "n_c", "q_max", "radius", "rho", "k")


@dataclass
class SolveReport:
    """One solver-evaluation record (one cell of the results tables)."""

    case: str
    model: str
    K: int
    n_c: int
    q_max: int
    radius: float
    rho: float
    pcg_iterations: int
    rho_l2: float = float("nan")
    converged: bool = True
    diverged: bool = False
    residuals: list[float] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    error: str = ""

    def csv_row(self) -> str:
        return (
            f"{self.case},{self.model},{self.K},{self.n_c},{self.q_max},"
            f"{float(self.radius)!r},{float(self.rho)!r},{self.pcg_iterations}"
        )


def write_report_csv(reports, path) -> None:
    with open(path, "w") as handle:
        handle.write(",".join(REPORT_COLUMNS) + "\n")
        for rep in reports:
            handle.write(rep.csv_row() + "\n")
