"""ADMM solver for the sparse-smooth decomposition of a block.

The block f is modelled as f ≈ s + P′α and the solver minimizes

    ½‖f − Gy‖² + λ‖y‖₁,   G = (I | P′),  y = [s; α]

with the splitting y = z. Only the quadratic y-update touches G, and its
operator (GᵀG + ρI)⁻¹ does not depend on f, so it is factored once and
shared by every block.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np
import scipy.linalg

from scseg.dct_basis import ScaledBasis
from scseg.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_RHO = 1.0
DEFAULT_ITERATIONS = 100

SolveMethod = Literal["structured", "dense"]


def soft_threshold(x: float | np.ndarray, kappa: float) -> float | np.ndarray:
    """sign(x) · max(|x| − κ, 0), elementwise for arrays."""
    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)


@dataclass(frozen=True, eq=False)
class StackedSystem:
    """The operator G = (I | P′), applied without materialising it."""

    basis: np.ndarray

    @classmethod
    def from_basis(cls, basis: ScaledBasis) -> StackedSystem:
        return cls(basis=basis.columns)

    @property
    def n2(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def g(self) -> np.ndarray:
        return self.dense()

    def matvec(self, y: np.ndarray) -> np.ndarray:
        """G y = s + P′α."""
        return y[: self.n2] + self.basis @ y[self.n2 :]

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        """Gᵀ r = [r; P′ᵀr]."""
        return np.concatenate((r, self.basis.T @ r))

    def dense(self) -> np.ndarray:
        return np.hstack((np.eye(self.n2), self.basis))


class YUpdate(ABC):
    """Solve operator for (GᵀG + ρI) w = rhs."""

    def __init__(self, system: StackedSystem, rho: float) -> None:
        self._system = system
        self._rho = rho

    @abstractmethod
    def solve(self, rhs: np.ndarray) -> np.ndarray:
        pass


class DenseCholeskyUpdate(YUpdate):
    """Cholesky factor of the full (N²+K)-dimensional system."""

    def __init__(self, system: StackedSystem, rho: float) -> None:
        super().__init__(system, rho)
        g = system.dense()
        gram = g.T @ g
        gram[np.diag_indices_from(gram)] += rho
        self._factor = scipy.linalg.cho_factor(gram)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, rhs)


class SchurUpdate(YUpdate):
    """Block elimination of the sparse part, leaving a K×K system.

    With c = 1+ρ the system reads c·s + P′α = r₁ and P′ᵀs + (P′ᵀP′ + ρI)α = r₂.
    Eliminating s gives S α = r₂ − P′ᵀr₁/c with S = ρI + (ρ/c)P′ᵀP′, then
    s = (r₁ − P′α)/c. Each solve costs O(N²K).
    """

    def __init__(self, system: StackedSystem, rho: float) -> None:
        super().__init__(system, rho)
        self._c = 1.0 + rho
        self._factor = None
        if system.k:
            schur = (rho / self._c) * (system.basis.T @ system.basis)
            schur[np.diag_indices_from(schur)] += rho
            self._factor = scipy.linalg.cho_factor(schur)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        system = self._system
        r1, r2 = rhs[: system.n2], rhs[system.n2 :]
        if self._factor is None:
            return r1 / self._c
        p = system.basis
        alpha = scipy.linalg.cho_solve(self._factor, r2 - p.T @ r1 / self._c)
        return np.concatenate(((r1 - p @ alpha) / self._c, alpha))


@dataclass(frozen=True, eq=False)
class SolverState:
    system: StackedSystem
    rho: float
    factorization: YUpdate

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factorization.solve(rhs)


class IterationStats(NamedTuple):
    objective: float
    primal_residual: float
    dual_residual: float


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Solver output for one block, taken from the thresholded iterate z."""

    alpha: np.ndarray
    sparse: np.ndarray
    smooth: np.ndarray
    iterations_run: int
    primal_residual: float
    objective: float = float("nan")
    history: list[IterationStats] = field(default_factory=list)

    @property
    def coefficients(self) -> np.ndarray:
        """The stacked solution y = [s; α]."""
        return np.concatenate((self.sparse, self.alpha))

    def fit_residual(self, f: np.ndarray) -> np.ndarray:
        """f − Gz, so that f = smooth + sparse + fit_residual(f)."""
        return f - self.smooth - self.sparse


def precompute_solver(
    basis: ScaledBasis, rho: float = DEFAULT_RHO, method: SolveMethod = "structured"
) -> SolverState:
    if not rho > 0:
        raise InvalidArgumentError(f"rho must be positive, got {rho}")
    system = StackedSystem.from_basis(basis)
    if method == "structured":
        factorization: YUpdate = SchurUpdate(system, rho)
    elif method == "dense":
        factorization = DenseCholeskyUpdate(system, rho)
    else:
        raise InvalidArgumentError(f"unknown solve method {method!r}")
    logger.debug("Prepared %s y-update for N²=%d, K=%d, rho=%g", method, system.n2, system.k, rho)
    return SolverState(system=system, rho=rho, factorization=factorization)


def objective(f: np.ndarray, system: StackedSystem, y: np.ndarray, lam: float) -> float:
    residual = f - system.matvec(y)
    return float(0.5 * residual @ residual + lam * np.abs(y).sum())


def _check_block(f: np.ndarray, system: StackedSystem) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (system.n2,):
        raise InvalidArgumentError(
            f"expected a vector of length {system.n2}, got shape {f.shape}"
        )
    if not np.all(np.isfinite(f)):
        raise InvalidArgumentError("block contains non-finite values")
    return f


def solve_lasso(
    f: np.ndarray,
    state: SolverState,
    lam: float,
    iterations: int = DEFAULT_ITERATIONS,
    record_history: bool = False,
) -> Decomposition:
    """Run exactly ``iterations`` ADMM steps from y = z = u = 0."""
    system = state.system
    f = _check_block(f, system)
    if not (lam > 0 and np.isfinite(lam)):
        raise InvalidArgumentError(f"lambda must be positive and finite, got {lam}")
    if iterations < 1:
        raise InvalidArgumentError(f"iterations must be at least 1, got {iterations}")

    rho = state.rho
    kappa = lam / rho
    gtf = system.rmatvec(f)
    size = system.n2 + system.k
    y = np.zeros(size)
    z = np.zeros(size)
    u = np.zeros(size)
    history: list[IterationStats] = []

    for _ in range(iterations):
        y = state.solve(gtf + rho * (z - u))
        z_prev = z
        z = soft_threshold(y + u, kappa)
        u += y - z
        if record_history:
            history.append(IterationStats(
                objective=objective(f, system, z, lam),
                primal_residual=float(np.linalg.norm(y - z)),
                dual_residual=float(np.linalg.norm(rho * (z - z_prev))),
            ))

    primal = float(np.linalg.norm(y - z))
    alpha = z[system.n2 :]
    logger.debug("ADMM finished %d iterations, primal residual %.3g", iterations, primal)
    return Decomposition(
        alpha=alpha,
        sparse=z[: system.n2],
        smooth=system.basis @ alpha,
        iterations_run=iterations,
        primal_residual=primal,
        objective=objective(f, system, z, lam),
        history=history,
    )


def kkt_residual(
    decomp: Decomposition, system: StackedSystem, f: np.ndarray, lam: float
) -> float:
    """Largest violation of the LASSO optimality conditions at z."""
    f = _check_block(f, system)
    z = decomp.coefficients
    if z.shape != (system.n2 + system.k,):
        raise InvalidArgumentError(
            f"decomposition has {z.shape[0]} coefficients, system expects {system.n2 + system.k}"
        )
    grad = system.rmatvec(f - system.matvec(z))
    active = z != 0
    violation = np.where(
        active,
        np.abs(grad - lam * np.sign(z)),
        np.maximum(0.0, np.abs(grad) - lam),
    )
    return float(violation.max(initial=0.0))
