"""Principal eigentriple of the truncated problem and the continuation in (R, eta, delta).

The direct vector comes from inverse iteration on ``(sigma I - A)^{-1}``, a
nonnegative matrix whenever ``sigma`` exceeds the Perron root of the Metzler
generator ``A``.  The iteration starts at a conservative shift and then moves
``sigma`` down towards the Collatz-Wielandt upper bound of the eigenvalue; every
new shift is accepted only if the Hessenberg LU of ``sigma I - A`` has positive
pivots, so the iteration map stays positive throughout.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .discretization import (DiscreteOperator, Grid, HessenbergLU, TruncationParams,
                             assemble_adjoint, assemble_direct, build_grid, make_truncation)
from .errors import ConfigurationError, NonConvergenceError, PositivityError
from .problem_model import ProblemSpec, eval_rate

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps

# non-existence signatures
MOMENT_GROWTH_FACTOR = 2.0
MOMENT_WINDOW = 4  # stages, i.e. three successive transitions
LAMBDA_CHANGE_REL = 0.05
LAMBDA_CHANGE_MIN_STAGES = 4
BALANCE_MISMATCH_REL = 0.05
SETTLED_REL = 1e-9


@dataclass
class SolverConfig:
    """Inverse-iteration settings.

    ``shift_nu`` is the initial shift; ``None`` picks
    ``max(2 max|A_jj|, colsum_bound + 1)``, which lies above the Perron root.
    """

    shift_nu: float | None = None
    tol_lambda: float = 1e-12
    max_iter: int = 100_000
    contraction_monitor: bool = True
    warm_iterations: int = 10
    positivity_tol: float = 1e-14
    m_threshold: float = 1e-8
    seed: int | None = None


@dataclass
class EigenTriple:
    lam: float
    U: np.ndarray
    phi: np.ndarray
    grid: Grid
    trunc: TruncationParams
    tauU: np.ndarray
    support_infimum_m: float
    residual_direct: float
    residual_dual: float
    lambda_adjoint: float
    dual_growth: tuple[float, float, float]  # (k, theta, C)
    iterations: int = 0
    factorizations: int = 0
    shift: float = 0.0
    contraction_ratio: float = float("nan")
    seconds: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return self.grid.centers

    @property
    def dx(self) -> np.ndarray:
        return self.grid.widths

    @property
    def first_moment(self) -> float:
        return float(np.sum(self.x * self.U * self.dx))

    def summary(self) -> dict:
        k, theta, C = self.dual_growth
        return {
            "lambda": self.lam,
            "lambda_adjoint": self.lambda_adjoint,
            "residual_direct": self.residual_direct,
            "residual_dual": self.residual_dual,
            "support_infimum_m": self.support_infimum_m,
            "first_moment": self.first_moment,
            "R": self.grid.R,
            "N": self.grid.N,
            "eta": self.trunc.eta,
            "delta": self.trunc.delta,
            "mu_inf": self.trunc.mu_inf,
            "dual_growth": {"k": k, "theta": theta, "C": C},
            "iterations": self.iterations,
            "factorizations": self.factorizations,
            "shift": self.shift,
            "contraction_ratio": self.contraction_ratio,
            "seconds": self.seconds,
        }


def _initial_shift(A: np.ndarray, dx: np.ndarray) -> float:
    # lambda <= max_j sum_i dx_i A_ij / dx_j  (column sums of the weighted generator)
    colsum = (dx @ A) / dx
    return float(max(2.0 * np.abs(np.diag(A)).max(), colsum.max() + 1.0))


def _factor_above(A: np.ndarray, sigma: float, counter: list) -> HessenbergLU:
    lu = HessenbergLU.factor(A, sigma)
    counter[0] += 1
    while not lu.dominates:
        sigma = 2.0 * abs(sigma) + 1.0
        lu = HessenbergLU.factor(A, sigma)
        counter[0] += 1
    return lu


def _inverse_iteration(A, weights, lu, v, cfg, transpose, counter, label):
    """Shift-refined inverse iteration on ``A`` (or ``A^T``); returns (lam, v, res, lu, its, ratio).

    ``weights`` define the L1 norm in which the iterate is normalized and the
    residual measured.
    """
    solve = lu.solve_transpose if transpose else lu.solve
    M = A.T if transpose else A
    scale = 2.0 * np.abs(np.diag(A)).max()
    v = v / np.dot(np.abs(v), weights)
    prev_diff = None
    ratio = float("nan")
    its = 0
    for _ in range(cfg.warm_iterations):
        w = solve(v)
        w = w / np.dot(w, weights)
        diff = np.dot(np.abs(w - v), weights)
        if prev_diff is not None and prev_diff > 0:
            ratio = diff / prev_diff
        prev_diff = diff
        v = w
        its += 1
    if cfg.contraction_monitor and cfg.warm_iterations >= 3 and ratio >= 1.0:
        log.warning("%s: shifted iteration not contracting (ratio %.3g)", label, ratio)
    best = math.inf
    since_best = 0
    res = math.inf
    lam = float("nan")
    while its < cfg.max_iter:
        w = solve(v)
        its += 1
        if not np.all(np.isfinite(w)):
            lu = _factor_above(A, lu.sigma + max(1.0, abs(lu.sigma)) * 1e-6, counter)
            solve = lu.solve_transpose if transpose else lu.solve
            continue
        mask = v > 1e-12 * v.max()
        r = w[mask] / v[mask]
        hi = lu.sigma - 1.0 / r.max()
        v = w / np.dot(w, weights)
        Mv = M @ v
        lam = float(np.dot(Mv, weights))
        res = float(np.dot(np.abs(Mv - lam * v), weights)) / max(abs(lam), 1e-300)
        floor = 50.0 * EPS * scale / max(abs(lam), 1e-300)
        if res <= max(10.0 * cfg.tol_lambda, floor):
            return lam, v, res, lu, its, ratio
        if res < 0.5 * best:
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best > 500:
                break
        target = hi + 0.5 * abs(hi - lam) + 1e-9 * max(1.0, abs(hi))
        if target < lu.sigma - 0.2 * (lu.sigma - hi):
            for _ in range(30):
                trial = HessenbergLU.factor(A, target)
                counter[0] += 1
                if trial.dominates:
                    lu = trial
                    solve = lu.solve_transpose if transpose else lu.solve
                    break
                target = 0.5 * (target + lu.sigma)
    raise NonConvergenceError(f"{label}: residual {res:.3g} after {its} iterations",
                              last_iterate=v, lam=lam)


def _check_positive(v: np.ndarray, tol: float, label: str) -> np.ndarray:
    top = np.abs(v).max()
    if v.min() < -tol * top:
        raise PositivityError(f"{label} has a negative component {v.min():.3g} (max {top:.3g})")
    return np.clip(v, 0.0, None)


def fit_dual_growth(x: np.ndarray, phi: np.ndarray, R: float) -> tuple[float, float, float]:
    """Fit ``(k, theta, C)`` with ``phi <= C x**k + theta`` on the whole grid.

    ``k`` is the log-log slope of ``phi`` over ``[R/10, R/2]`` rounded up to a
    multiple of 1/2 (with slack 0.25); ``C`` and ``theta`` then make the bound hold.
    """
    sel = (x >= 0.1 * R) & (x <= 0.5 * R) & (phi > 0)
    k = 0.0
    if sel.sum() >= 3:
        slope = np.polyfit(np.log(x[sel]), np.log(phi[sel]), 1)[0]
        k = max(0.0, math.ceil(2.0 * (slope - 0.25)) / 2.0)
    big = x >= 1.0
    xk = x**k
    C = float(np.max(phi[big] / xk[big])) if big.any() else 1.0
    C = max(C, 1e-300)
    theta = float(max(0.0, np.max(phi - C * xk)))
    return k, theta, C


def solve_truncated(op: DiscreteOperator, adj: DiscreteOperator | None = None,
                    cfg: SolverConfig | None = None, u0: np.ndarray | None = None) -> EigenTriple:
    """Principal eigentriple ``(lambda, U, phi)`` of an assembled operator pair.

    Parameters
    ----------
    op, adj : DiscreteOperator
        Direct operator and its adjoint (``assemble_adjoint(op)`` when omitted).
    cfg : SolverConfig
    u0 : ndarray, optional
        Positive starting vector; a seeded random vector when ``cfg.seed`` is set,
        otherwise constant.

    Returns
    -------
    EigenTriple
        ``sum U dx = 1`` and ``sum phi U dx = 1``.

    Raises
    ------
    NonConvergenceError, PositivityError
    """
    t0 = time.perf_counter()
    cfg = cfg or SolverConfig()
    if op.adjoint:
        op = assemble_adjoint(op)
    if adj is None:
        adj = assemble_adjoint(op)
    if adj.grid is not op.grid and not np.array_equal(adj.grid.edges, op.grid.edges):
        raise ConfigurationError("direct and adjoint operators live on different grids")
    grid, dx = op.grid, op.grid.widths
    A = op.generator
    N = grid.N
    if u0 is None:
        if cfg.seed is not None:
            u0 = np.random.default_rng(cfg.seed).uniform(0.1, 1.0, N)
        else:
            u0 = np.ones(N)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (N,) or np.any(u0 < 0) or not u0.any():
        raise ConfigurationError("starting vector must be nonnegative, nonzero and of length N")
    u0 = np.maximum(u0, 1e-3 * u0.max())  # keep every component active

    counter = [0]
    sigma0 = cfg.shift_nu if cfg.shift_nu is not None else _initial_shift(A, dx)
    lu = _factor_above(A, sigma0, counter)

    lam, U, res_d, lu, its, ratio = _inverse_iteration(A, dx, lu, u0, cfg, False, counter, "direct")
    U = _check_positive(U, cfg.positivity_tol, "U")
    U = U / np.dot(U, dx)

    # psi = dx * phi is the left Perron vector of A
    psi0 = dx * np.ones(N)
    dual_cfg = SolverConfig(tol_lambda=cfg.tol_lambda, max_iter=cfg.max_iter,
                            contraction_monitor=False, warm_iterations=2)
    _, psi, _, lu, its_d, _ = _inverse_iteration(A, 1.0 / dx, lu, psi0, dual_cfg, True,
                                                 counter, "dual")
    phi = _check_positive(psi / dx, cfg.positivity_tol, "phi")
    phi = phi / np.dot(phi * U, dx)

    Aphi = adj.matvec(phi)
    lam_adj = float(np.dot(Aphi, dx) / np.dot(phi, dx))
    res_p = float(np.dot(np.abs(Aphi - lam_adj * phi), dx) / np.dot(phi, dx)) / max(abs(lam_adj), 1e-300)

    x = grid.centers
    tauU = np.asarray(eval_rate(op.problem.tau, x), dtype=float) * U
    triple = EigenTriple(
        lam=lam, U=U, phi=phi, grid=grid, trunc=op.trunc, tauU=tauU,
        support_infimum_m=float("nan"), residual_direct=res_d, residual_dual=res_p,
        lambda_adjoint=lam_adj, dual_growth=fit_dual_growth(x, phi, grid.R),
        iterations=its + its_d, factorizations=counter[0], shift=lu.sigma,
        contraction_ratio=ratio,
    )
    triple.support_infimum_m = support_infimum(triple, cfg.m_threshold)
    triple.seconds = time.perf_counter() - t0
    return triple


def support_infimum(triple: EigenTriple, threshold: float = 1e-8) -> float:
    """Smallest cell center where ``tau U`` exceeds ``threshold * max(tau U)``.

    When ``tau U`` vanishes in the first cell because ``tau(0) = 0`` the density
    ``U`` itself decides, so a profile with ``U(0) > 0`` still has ``m = 0``.
    """
    x = triple.x
    g = triple.tauU
    top = g.max()
    if top <= 0:
        g = triple.U
        top = g.max()
    idx = np.flatnonzero(g > threshold * top)
    if idx.size == 0:
        return float(triple.grid.R)
    j = int(idx[0])
    if j > 0 and triple.U[0] > threshold * triple.U.max() and np.all(triple.U[: j + 1] > 0):
        j = 0
    return 0.0 if j == 0 else float(x[j])


def verify_bounds(triple: EigenTriple, problem: ProblemSpec, grid: Grid | None = None,
                  eps_grid: float | None = None) -> dict:
    """Check the a-priori bounds on the computed triple.

    * ``lambda >= max(tau U) / 2 - eps``
    * ``lambda <= delta + int beta U + eps`` (number balance; equality up to the
      outflow at ``R``, the death term and ``n - 2`` extra fragments)
    * ``phi <= C x**k + theta`` with the fitted ``(C, k, theta)``

    ``eps`` defaults to ``5 max(dx) * max(|lambda|, max tau U)``.  Violations are
    flagged, never raised.
    """
    grid = grid or triple.grid
    dx = grid.widths
    x = grid.centers
    U = triple.U
    lam = triple.lam
    if eps_grid is None:
        eps_grid = 5.0 * grid.max_width * max(abs(lam), float(triple.tauU.max()))
    beta = np.asarray(eval_rate(problem.beta, x), dtype=float)
    mu = np.asarray(eval_rate(problem.death_mu, x), dtype=float)
    int_beta_u = float(np.dot(beta * U, dx))
    half_max_tau_u = 0.5 * float(triple.tauU.max())
    number_rhs = triple.trunc.delta + (problem.n_fragments - 1.0) * int_beta_u - float(np.dot(mu * U, dx))
    k, theta, C = triple.dual_growth
    growth_ok = bool(np.all(triple.phi <= C * x**k + theta + 1e-12 * triple.phi.max()))
    return {
        "eps_grid": eps_grid,
        "half_max_tauU": half_max_tau_u,
        "lower_bound_ok": bool(lam >= half_max_tau_u - eps_grid),
        "int_beta_U": int_beta_u,
        "number_balance_rhs": number_rhs,
        "upper_bound_ok": bool(lam <= number_rhs + eps_grid),
        "number_balance_gap": number_rhs - lam,
        "dual_growth": {"k": k, "theta": theta, "C": C},
        "dual_growth_ok": growth_ok,
        "lambda_positive": bool(lam > 0),
        "adjoint_gap": abs(triple.lambda_adjoint - lam),
    }


def mass_balance_lambda(triple: EigenTriple, op: DiscreteOperator) -> float:
    """Eigenvalue implied by the first-moment balance of the untruncated problem.

    ``lambda int x U = int tau U - int mu x U + int beta U (n <x>_kappa - y)``, with
    the unregularized ``tau`` and no outflow at ``R``.  It agrees with ``lambda``
    (which satisfies the number balance) when an eigentriple of the full problem
    exists.
    """
    problem = op.problem
    grid = op.grid
    x, dx, U = grid.centers, grid.widths, triple.U
    tau = np.asarray(eval_rate(problem.tau, x), dtype=float)
    mu = np.asarray(eval_rate(problem.death_mu, x), dtype=float)
    beta = np.asarray(eval_rate(problem.beta, x), dtype=float)
    frag_first = problem.n_fragments * (x @ op.kernel_columns) - x
    num = np.dot(tau * U, dx) - np.dot(mu * x * U, dx) + np.dot(beta * frag_first * U, dx)
    return float(num / np.dot(x * U, dx))


@dataclass(frozen=True)
class Stage:
    R: float
    eta: float
    N: int


def make_schedule(R0: float, N0: int, eta0: float, stages: int, R_growth: float = 2.0,
                  eta_decay: float = 0.1, N_growth: float | None = None) -> list[Stage]:
    """Geometric schedule ``R_k = R0 g**k``, ``eta_k = eta0 d**k``, ``N_k = N0 h**k``.

    ``N_growth`` defaults to ``R_growth`` so uniform cells keep their width.
    """
    if stages < 1:
        raise ConfigurationError("schedule needs at least one stage")
    if not (R_growth >= 1.0 and 0.0 < eta_decay <= 1.0):
        raise ConfigurationError("need R_growth >= 1 and 0 < eta_decay <= 1")
    h = R_growth if N_growth is None else N_growth
    return [Stage(R0 * R_growth**k, eta0 * eta_decay**k, int(round(N0 * h**k)))
            for k in range(stages)]


@dataclass
class ContinuationResult:
    schedule: list[Stage]
    lambdas: list[float]
    first_moments: list[float]
    balance_lambdas: list[float]
    deltas: list[float]
    triples: list[EigenTriple]
    extrapolated_lambda: float
    richardson_lambda: float
    verdict: str
    reason: str
    lambda_positive_from_R: float | None = None
    stage_seconds: list[float] = field(default_factory=list)
    failure: str | None = None

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "reason": self.reason,
            "stages": [
                {"R": s.R, "eta": s.eta, "N": s.N, "delta": d, "lambda": lam,
                 "first_moment": m, "balance_lambda": bl, "seconds": sec}
                for s, d, lam, m, bl, sec in zip(self.schedule, self.deltas, self.lambdas,
                                                 self.first_moments, self.balance_lambdas,
                                                 self.stage_seconds)
            ],
            "extrapolated_lambda": self.extrapolated_lambda,
            "richardson_lambda": self.richardson_lambda,
            "lambda_positive_from_R": self.lambda_positive_from_R,
            "failure": self.failure,
        }


def stage_grid(problem: ProblemSpec, stage: Stage, kind: str = "uniform",
               ratio: float | None = None) -> Grid:
    """Grid for a stage; geometric grids without a ratio put the first edge at eta/4."""
    first = None
    if kind == "geometric" and ratio is None:
        first = stage.eta / 4.0
    return build_grid(stage.R, stage.N, kind, ratio=ratio, x_min=problem.x_min, first_edge=first)


def solve_stage(problem: ProblemSpec, stage: Stage, cfg: SolverConfig, kind="uniform",
                ratio=None, u0=None):
    grid = stage_grid(problem, stage, kind, ratio)
    trunc = make_truncation(problem, grid, stage.eta)
    op = assemble_direct(problem, grid, trunc)
    triple = solve_truncated(op, assemble_adjoint(op), cfg, u0=u0)
    return triple, op


def _interp_start(prev: EigenTriple | None, grid: Grid) -> np.ndarray | None:
    if prev is None:
        return None
    u = np.interp(grid.centers, prev.x, prev.U, right=0.0)
    top = u.max()
    if not top > 0:
        return None
    return np.maximum(u, 1e-6 * top)


def _verdict(lambdas, moments, balance, failed, tau_vanishes) -> tuple[str, str]:
    if failed:
        return "lambda_not_settling", "a stage failed to converge"
    lam = lambdas[-1]
    gaps = [abs(a - b) / max(abs(a), 1e-300) for a, b in zip(lambdas, balance)]
    if tau_vanishes and len(gaps) >= 2 and min(gaps[-2:]) >= BALANCE_MISMATCH_REL:
        return "lambda_not_settling", (
            f"tau vanishes at the minimal size and the number balance (lambda={lam:.6g}) "
            f"and first-moment balance ({balance[-1]:.6g}) disagree")
    if len(moments) >= MOMENT_WINDOW:
        w = np.asarray(moments[-MOMENT_WINDOW:])
        if np.all(np.diff(w) > 0) and w[-1] >= MOMENT_GROWTH_FACTOR * w[0]:
            return "diverging_first_moment", (
                f"first moment grew {w[-1] / w[0]:.3g}x over the last {MOMENT_WINDOW} stages")
    if gaps[-1] >= BALANCE_MISMATCH_REL:
        return "lambda_not_settling", (
            f"number balance gives lambda={lam:.6g}, first-moment balance gives {balance[-1]:.6g}")
    if len(lambdas) >= LAMBDA_CHANGE_MIN_STAGES:
        rel = abs(lambdas[-1] - lambdas[-2]) / max(abs(lam), 1e-300)
        if rel >= LAMBDA_CHANGE_REL:
            return "lambda_not_settling", f"lambda still moves by {rel:.3g} relative"
    if len(lambdas) >= 3:
        d = np.abs(np.diff(lambdas[-3:]))
        if not (d[-1] <= d[-2] or d[-1] <= SETTLED_REL * abs(lam)):
            return "lambda_not_settling", "stage differences of lambda are not decreasing"
    return "converged", "stage differences decreasing and balances consistent"


def continuation_solve(problem: ProblemSpec, schedule: list[Stage], cfg: SolverConfig | None = None,
                       grid_kind: str = "uniform", ratio: float | None = None,
                       richardson: bool = True, warm_start: bool = True) -> ContinuationResult:
    """Solve every stage of ``schedule`` and classify the limit.

    Verdicts, checked in this order:

    1. ``lambda_not_settling`` if a stage fails;
    2. ``lambda_not_settling`` if ``tau`` vanishes at the minimal size and the
       number balance (``lambda`` itself) and the untruncated first-moment balance
       disagree by 5% at the last two stages;
    3. ``diverging_first_moment`` if ``int x U`` grows monotonically by a factor
       >= 2 over the last four stages;
    4. ``lambda_not_settling`` if the two balances disagree by 5% at the last
       stage, or lambda still moves by 5% after four stages, or the stage
       differences of lambda stop decreasing;
    5. ``converged`` otherwise.

    The extrapolated eigenvalue combines first-order Richardson extrapolation in
    ``1/N`` at the last stage (``2 lambda_N - lambda_{N/2}``) with the geometric
    tail of the stage-to-stage differences.
    """
    cfg = cfg or SolverConfig()
    if not schedule:
        raise ConfigurationError("empty schedule")
    for a, b in zip(schedule, schedule[1:]):
        if b.R < a.R or b.eta > a.eta:
            raise ConfigurationError("schedule needs nondecreasing R and nonincreasing eta")
    lambdas, moments, balance, deltas, triples, secs = [], [], [], [], [], []
    failure = None
    prev = None
    last_op = None
    for st in schedule:
        t0 = time.perf_counter()
        grid = stage_grid(problem, st, grid_kind, ratio)
        trunc = make_truncation(problem, grid, st.eta)
        op = assemble_direct(problem, grid, trunc)
        try:
            tr = solve_truncated(op, assemble_adjoint(op), cfg,
                                 u0=_interp_start(prev, grid) if warm_start else None)
        except (NonConvergenceError, PositivityError) as exc:
            failure = f"R={st.R:g}: {exc}"
            log.warning("continuation stage failed: %s", failure)
            break
        prev, last_op = tr, op
        lambdas.append(tr.lam)
        moments.append(tr.first_moment)
        balance.append(mass_balance_lambda(tr, op))
        deltas.append(trunc.delta)
        triples.append(tr)
        secs.append(time.perf_counter() - t0)
        log.info("stage R=%g eta=%g N=%d: lambda=%.10g  int xU=%.6g  (%.2fs)",
                 st.R, st.eta, st.N, tr.lam, moments[-1], secs[-1])

    if not lambdas:
        return ContinuationResult(schedule, [], [], [], [], [], float("nan"), float("nan"),
                                  "lambda_not_settling", "first stage failed", None, [], failure)

    rich = lambdas[-1]
    if richardson and failure is None and last_op is not None:
        st = schedule[len(lambdas) - 1]
        half = Stage(st.R, st.eta, max(16, st.N // 2))
        try:
            tr_half, _ = solve_stage(problem, half, cfg, grid_kind, ratio)
            rich = 2.0 * lambdas[-1] - tr_half.lam
        except (NonConvergenceError, PositivityError) as exc:
            log.warning("half-grid solve failed: %s", exc)
    tail = 0.0
    if len(lambdas) >= 3:
        d1, d2 = lambdas[-2] - lambdas[-3], lambdas[-1] - lambdas[-2]
        if d1 != 0.0:
            q = d2 / d1
            if 0.0 < q < 0.9:
                tail = d2 * q / (1.0 - q)
    tau_vanishes = float(eval_rate(problem.tau, problem.x_min)) == 0.0
    verdict, reason = _verdict(lambdas, moments, balance, failure is not None, tau_vanishes)
    positive_from = None
    for st, lam in zip(schedule, lambdas):
        if lam > 0:
            positive_from = st.R
            break
    return ContinuationResult(schedule, lambdas, moments, balance, deltas, triples,
                              rich + tail, rich, verdict, reason, positive_from, secs, failure)


def observed_order(hs, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    hs = np.asarray(hs, dtype=float)
    errors = np.abs(np.asarray(errors, dtype=float))
    if hs.size < 2 or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def three_grid_order(values) -> float:
    """Order from three values on grids refined by 2: ``log2(|v1-v2| / |v2-v3|)``."""
    v1, v2, v3 = values
    num, den = abs(v1 - v2), abs(v2 - v3)
    if den == 0 or num == 0:
        return float("nan")
    return float(math.log2(num / den))


def grid_study(problem: ProblemSpec, R: float, eta: float, Ns, cfg: SolverConfig | None = None,
               exact_lambda: float | None = None, kind: str = "uniform",
               ratio: float | None = None) -> dict:
    """Solve at fixed ``(R, eta)`` on several grids and fit the convergence order."""
    cfg = cfg or SolverConfig()
    rows = []
    for N in Ns:
        tr, _ = solve_stage(problem, Stage(R, eta, int(N)), cfg, kind, ratio)
        rows.append({"N": int(N), "h": tr.grid.max_width, "lambda": tr.lam,
                     "error": None if exact_lambda is None else tr.lam - exact_lambda,
                     "seconds": tr.seconds})
    lams = [r["lambda"] for r in rows]
    out = {"rows": rows}
    if exact_lambda is not None:
        out["order"] = observed_order([r["h"] for r in rows], [r["error"] for r in rows])
    if len(rows) == 3:
        out["three_grid_order"] = three_grid_order(lams)
    return out


def restart_spread(op: DiscreteOperator, cfg: SolverConfig | None = None, restarts: int = 10,
                   seed: int = 0) -> dict:
    """Solve from ``restarts`` independent random positive starts and report the spread."""
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    adj = assemble_adjoint(op)
    dx = op.grid.widths
    lams, Us = [], []
    for _ in range(restarts):
        tr = solve_truncated(op, adj, cfg, u0=rng.uniform(0.01, 1.0, op.N))
        lams.append(tr.lam)
        Us.append(tr.U)
    lams = np.asarray(lams)
    ref = Us[0]
    return {
        "lambdas": lams,
        "lambda_spread": float(lams.max() - lams.min()),
        "U_l1_spread": float(max(np.dot(np.abs(u - ref), dx) for u in Us)),
    }
