"""Grids, truncation parameters and the upwind finite-volume operator.

The discrete unknown is the vector of cell averages ``U_j``.  The direct operator
is written in generator form ``A`` so that the truncated eigenproblem reads
``A U = lambda U``:

    (A U)_i = [tau_eta(x_i) U_{i-1} - tau_eta(x_{i+1}) U_i] / dx_i
              - (beta_i + mu_i) U_i
              + sum_{j >= i} n beta_j m_ij U_j dx_j / dx_i
              + [i == 0] delta * sum_j U_j dx_j / dx_0

where ``m_ij`` is the kernel mass that a parent at the center of cell ``j`` sends
into cell ``i``.  All off-diagonal entries are >= 0 and ``A`` is upper Hessenberg.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse
from scipy.linalg import solve_banded, solve_triangular

from .errors import ConfigurationError, DomainError
from .problem_model import ProblemSpec, eval_rate, kernel_mass

log = logging.getLogger(__name__)

MIN_ASSEMBLY_CELLS = 16


@dataclass(frozen=True, eq=False)
class Grid:
    """Finite-volume grid on ``[x_min, R]``."""

    R: float
    N: int
    kind: str
    edges: np.ndarray
    ratio: float | None = None

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @cached_property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def x_min(self) -> float:
        return float(self.edges[0])

    @property
    def max_width(self) -> float:
        return float(self.widths.max())

    def integrate(self, values) -> float:
        return float(np.dot(values, self.widths))


def build_grid(R: float, N: int, kind: str = "uniform", ratio: float | None = None,
               x_min: float = 0.0, first_edge: float | None = None) -> Grid:
    """Build a uniform or geometric grid on ``[x_min, R]``.

    Geometric edges are ``x_min`` followed by ``x_min + (R - x_min) * ratio**(k - N)``
    for ``k = 1..N``, so every cell but the first is ``ratio`` times wider than its
    left neighbour.  With ``first_edge`` instead of ``ratio`` the ratio is chosen so
    the first cell has that width.

    Examples
    --------
    >>> build_grid(8.0, 3, "geometric", ratio=2.0).edges
    array([0., 2., 4., 8.])
    """
    if not (math.isfinite(R) and math.isfinite(x_min)):
        raise DomainError("grid bounds must be finite")
    if not R > x_min:
        raise DomainError("need R > x_min")
    if int(N) != N or N < 2:
        raise DomainError("need an integer N >= 2")
    N = int(N)
    L = R - x_min
    if kind == "uniform":
        edges = x_min + L * (np.arange(N + 1) / N)
        edges[-1] = R
        return Grid(float(R), N, "uniform", edges)
    if kind != "geometric":
        raise DomainError(f"unknown grid kind {kind!r}")
    if ratio is None:
        if first_edge is None:
            raise DomainError("geometric grid needs ratio or first_edge")
        if not 0 < first_edge < L:
            raise DomainError("first_edge must lie inside the domain")
        ratio = (L / first_edge) ** (1.0 / (N - 1))
    if not (math.isfinite(ratio) and ratio > 1.0):
        raise DomainError("geometric ratio must be > 1")
    k = np.arange(1, N + 1)
    edges = np.concatenate([[x_min], x_min + L * ratio ** (k - N).astype(float)])
    edges[-1] = R
    if np.any(np.diff(edges) <= 0):
        raise DomainError("geometric grid underflows; reduce N or ratio")
    return Grid(float(R), N, "geometric", edges, float(ratio))


@dataclass(frozen=True)
class TruncationParams:
    """``(R, eta, delta, mu_inf)`` of the truncated, regularized problem."""

    R: float
    eta: float
    mu_inf: float
    delta: float

    def tau_eta(self, tau, x):
        """Growth rate floored to ``eta`` on ``[0, eta]``."""
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.eta, self.eta, eval_rate(tau, x))


def make_truncation(problem: ProblemSpec, grid: Grid, eta: float,
                    delta: float | None = None) -> TruncationParams:
    """Truncation parameters with the default ``delta = mu_inf / (2 R)``.

    ``mu_inf`` is the infimum of ``tau_eta`` over the grid edges, centers and
    tabulation nodes, which is exact for the monotone analytic rate kinds.
    """
    if not (eta > 0 and math.isfinite(eta)):
        raise DomainError("eta must be finite and > 0")
    probe = [grid.edges, grid.centers]
    if problem.tau.kind == "tabulated":
        tx = np.asarray(problem.tau.table_x)
        probe.append(tx[(tx >= grid.x_min) & (tx <= grid.R)])
    b = problem.tau.support_infimum_b
    if grid.x_min < b <= grid.R:
        probe.append(np.array([b]))
    xs = np.concatenate(probe)
    tr = TruncationParams(grid.R, float(eta), 0.0, 0.0)
    mu_inf = float(np.min(tr.tau_eta(problem.tau, xs)))
    if delta is None:
        delta = mu_inf / (2.0 * grid.R)
    return TruncationParams(grid.R, float(eta), mu_inf, float(delta))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Assembled direct operator (or its adjoint in the ``dx``-weighted pairing).

    Attributes
    ----------
    gain : (N, N) ndarray
        Upper-triangular fragmentation gain ``n beta_j m_ij dx_j / dx_i``.
    outflow : (N,) ndarray
        Transport loss rate ``tau_eta(x_{j+1}) / dx_j``.
    influx : (N-1,) ndarray
        Subdiagonal transport gain ``tau_eta(x_{i}) / dx_i`` into cell ``i >= 1``.
    loss : (N,) ndarray
        ``beta_j + mu_j`` at cell centers.
    inflow_row : (N,) ndarray
        Boundary row ``delta dx_j / dx_0`` added to cell 0.
    adjoint : bool
        When set, the operator acts as ``D^{-1} A^T D`` with ``D = diag(dx)``.
    """

    problem: ProblemSpec
    grid: Grid
    trunc: TruncationParams
    gain: np.ndarray
    outflow: np.ndarray
    influx: np.ndarray
    loss: np.ndarray
    inflow_row: np.ndarray
    kernel_columns: np.ndarray
    adjoint: bool = False

    @property
    def N(self) -> int:
        return self.grid.N

    @cached_property
    def generator(self) -> np.ndarray:
        """Dense direct generator ``A`` (always the direct one)."""
        N = self.N
        A = self.gain.copy()
        idx = np.arange(N)
        A[idx, idx] -= self.outflow + self.loss
        A[idx[1:], idx[:-1]] += self.influx
        A[0, :] += self.inflow_row
        return A

    def dense(self) -> np.ndarray:
        A = self.generator
        if not self.adjoint:
            return A.copy()
        dx = self.grid.widths
        return A.T * dx[None, :] / dx[:, None]

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if not self.adjoint:
            return self.generator @ v
        dx = self.grid.widths
        return (self.generator.T @ (dx * v)) / dx

    def diagonal(self) -> np.ndarray:
        return np.diag(self.generator).copy()

    def to_sparse(self) -> scipy.sparse.coo_matrix:
        M = self.dense()
        M[np.abs(M) < 1e-300] = 0.0
        return scipy.sparse.coo_matrix(M)

    def export_coo(self, path) -> None:
        """Write the operator as a Matrix Market coordinate file."""
        kind = "adjoint" if self.adjoint else "direct"
        scipy.io.mmwrite(str(path), self.to_sparse(),
                         comment=f" growthfrag {kind} generator, N={self.N}, R={self.grid.R:g}")


def kernel_mass_matrix(problem: ProblemSpec, grid: Grid) -> np.ndarray:
    """``m_ij``: kernel mass from a parent at center ``j`` into cell ``i`` (``i <= j``).

    Each column is renormalized to the exact mass of ``[x_min, y_j]``.
    """
    e = grid.edges
    y = grid.centers
    yy = y[None, :]
    a = np.minimum(e[:-1][:, None], yy)
    b = np.minimum(e[1:][:, None], yy)
    M = kernel_mass(problem.kernel, np.broadcast_to(yy, a.shape), a, b)
    M = np.triu(M)
    target = kernel_mass(problem.kernel, y, np.full_like(y, e[0]), y)
    s = M.sum(axis=0)
    scale = np.divide(target, s, out=np.zeros_like(s), where=s > 0)
    return M * scale[None, :]


def assemble_direct(problem: ProblemSpec, grid: Grid, trunc: TruncationParams,
                    check_regime: bool = True) -> DiscreteOperator:
    """Assemble the direct generator of the truncated problem on ``grid``.

    Raises
    ------
    ConfigurationError
        If ``delta * R >= mu_inf`` with ``delta > 0``, or the grid is too coarse.
    """
    if grid.N < MIN_ASSEMBLY_CELLS:
        raise ConfigurationError(f"assembly needs N >= {MIN_ASSEMBLY_CELLS}")
    if abs(trunc.R - grid.R) > 1e-12 * grid.R:
        raise ConfigurationError("truncation R differs from the grid R")
    if trunc.delta < 0:
        raise ConfigurationError("delta must be >= 0")
    if check_regime and trunc.delta > 0 and not trunc.delta * trunc.R < trunc.mu_inf:
        raise ConfigurationError(
            f"delta*R = {trunc.delta * trunc.R:g} >= mu_inf = {trunc.mu_inf:g}; positive eigenvalue not guaranteed")
    dx = grid.widths
    c = grid.centers
    tau_e = trunc.tau_eta(problem.tau, grid.edges)
    beta = np.asarray(eval_rate(problem.beta, c), dtype=float)
    mu = np.asarray(eval_rate(problem.death_mu, c), dtype=float)
    M = kernel_mass_matrix(problem, grid)
    gain = problem.n_fragments * M * (beta * dx)[None, :] / dx[:, None]
    outflow = tau_e[1:] / dx
    influx = tau_e[1:-1] / dx[1:]
    inflow_row = trunc.delta * dx / dx[0]
    return DiscreteOperator(problem, grid, trunc, gain, outflow, influx, beta + mu,
                            inflow_row, M)


def assemble_adjoint(direct: DiscreteOperator) -> DiscreteOperator:
    """Adjoint of ``direct`` in the pairing ``<u, phi> = sum u_j phi_j dx_j``.

    The upwind transport becomes a downwind difference with ``phi_N = 0`` built in,
    and the boundary row becomes the source ``delta * phi_0`` in every cell.
    """
    return DiscreteOperator(direct.problem, direct.grid, direct.trunc, direct.gain,
                            direct.outflow, direct.influx, direct.loss, direct.inflow_row,
                            direct.kernel_columns, adjoint=not direct.adjoint)


@dataclass(eq=False)
class HessenbergLU:
    """LU factorization without pivoting of ``sigma I - A`` for upper-Hessenberg ``A``.

    For the Metzler generator ``A`` all pivots are positive exactly when ``sigma``
    exceeds the Perron root of ``A``, which gives a rigorous test of a shift.
    """

    sigma: float
    lower: np.ndarray  # subdiagonal multipliers of the unit lower-bidiagonal factor
    upper: np.ndarray
    pivots: np.ndarray = field(init=False)

    def __post_init__(self):
        self.pivots = np.diag(self.upper).copy()

    @classmethod
    def factor(cls, A: np.ndarray, sigma: float) -> "HessenbergLU":
        N = A.shape[0]
        H = -A.copy()
        H[np.diag_indices(N)] += sigma
        lower = np.zeros(N - 1)
        for k in range(N - 1):
            p = H[k, k]
            if p == 0.0:
                lower[k:] = np.nan
                break
            lk = H[k + 1, k] / p
            lower[k] = lk
            H[k + 1, k:] -= lk * H[k, k:]
        return cls(sigma, lower, np.triu(H))

    @property
    def dominates(self) -> bool:
        """True when ``sigma`` lies strictly above the Perron root."""
        return bool(np.all(np.isfinite(self.lower)) and np.all(self.pivots > 0))

    def _lower_banded(self, transpose: bool) -> np.ndarray:
        N = self.pivots.size
        ab = np.zeros((2, N))
        if transpose:
            ab[0, 1:] = self.lower
            ab[1, :] = 1.0
        else:
            ab[0, :] = 1.0
            ab[1, :-1] = self.lower
        return ab

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = solve_banded((1, 0), self._lower_banded(False), b, check_finite=False)
        return solve_triangular(self.upper, y, lower=False, check_finite=False)

    def solve_transpose(self, b: np.ndarray) -> np.ndarray:
        y = solve_triangular(self.upper, b, lower=False, trans="T", check_finite=False)
        return solve_banded((0, 1), self._lower_banded(True), y, check_finite=False)
