"""Numerical audit of the standing hypotheses on (tau, beta, kappa).

Entry ids:

=================  ==========================================================
``kappa1``         kernel mass is 1
``kappa2``         kernel first moment is ``y / n``
``kappa3``         kernel second moment ``c < 1 / n``
``betatauspace``   local boundedness of ``x**alpha0 tau`` and ``beta``, power-law
                   growth at infinity (fitted exponents, heuristic)
``taupositivity``  ``tau > 0`` on ``(0, R_probe]``
``betasupport``    ``beta = 0`` on ``[0, b)`` and ``> 0`` beyond
``kappatau``       ``F(z) <= min(1, C z**gamma)`` and ``x**gamma / tau`` integrable at 0
``betatau0``       ``beta / tau`` integrable at 0
``betatauinf``     ``x beta / tau -> infinity`` (no gelation)
=================  ==========================================================

Limits are never proven: they are read off exact local exponents for the
analytic rate kinds and from sampled trends otherwise, and reported
``inconclusive`` when the evidence is mixed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .discretization import Grid
from .problem_model import KernelSpec, ProblemSpec, RateSpec, eval_rate, kernel_mass, kernel_moment

STRICT_MARGIN = 1e-9
INCONCLUSIVE = "inconclusive"
ASSUMPTION_IDS = ("kappa1", "kappa2", "kappa3", "betatauspace", "taupositivity", "betasupport",
                  "kappatau", "betatau0", "betatauinf")


@dataclass
class AuditEntry:
    id: str
    satisfied: bool | str
    witness: float
    detail: str


@dataclass
class AssumptionReport:
    entries: list[AuditEntry]
    second_moment_c: float
    middle_mass_lower_bound: float
    middle_mass_eta: float
    certified_c: float | None
    gelation_samples: list[tuple[float, float]] = field(default_factory=list)
    fitted_exponents: dict = field(default_factory=dict)

    def entry(self, id_: str) -> AuditEntry:
        for e in self.entries:
            if e.id == id_:
                return e
        raise KeyError(id_)

    @property
    def failing_ids(self) -> list[str]:
        return [e.id for e in self.entries if e.satisfied is False]

    @property
    def passed(self) -> bool:
        return not self.failing_ids

    def to_dict(self) -> dict:
        d = asdict(self)
        d["failing_ids"] = self.failing_ids
        return d


def _exponent_at_zero(rate: RateSpec) -> float | None:
    """Exponent ``p`` with ``rate ~ x**p`` near 0 (``inf`` if it vanishes near 0)."""
    if rate.support_infimum_b > 0:
        return math.inf
    c = rate.coeffs
    if rate.kind == "power_law":
        return c[1] if c[0] > 0 else math.inf
    if rate.kind == "affine":
        if c[0] > 0:
            return 0.0
        return 1.0 if c[1] > 0 else math.inf
    if rate.kind == "constant":
        return 0.0 if c[0] > 0 else math.inf
    return None


def _exponent_at_infinity(rate: RateSpec) -> float | None:
    c = rate.coeffs
    if rate.kind == "power_law":
        return c[1] if c[0] > 0 else None
    if rate.kind == "affine":
        if c[1] > 0:
            return 1.0
        return 0.0 if c[0] > 0 else None
    if rate.kind == "constant":
        return 0.0 if c[0] > 0 else None
    return None


def _integrable_at_zero(f, exponent: float | None, upper: float) -> tuple[bool | str, float, str]:
    """Is ``f`` integrable on ``(0, upper)``?  Exact when the local exponent is known."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            out = integrate.quad(f, 0.0, upper, limit=200, full_output=1)
            val = float(out[0])
            clean = len(out) == 3 and math.isfinite(val)
        except (ZeroDivisionError, FloatingPointError, ValueError):
            val, clean = math.inf, False
    if exponent is not None:
        ok = exponent < 1.0
        return ok, val if ok else math.inf, f"integrand ~ x^{-exponent:g} at 0"
    if clean:
        return True, val, "quadrature converged"
    return INCONCLUSIVE, val, "quadrature did not converge near 0"


def _loglog_slope(x, y) -> float:
    m = (y > 0) & np.isfinite(y)
    if m.sum() < 3:
        return float("nan")
    return float(np.polyfit(np.log(x[m]), np.log(y[m]), 1)[0])


def middle_mass_bound(kernel: KernelSpec, eta_probe: float) -> float:
    """Kernel mass on ``[eta y, (1 - eta) y]`` (independent of ``y``)."""
    if not 0.0 < eta_probe < 0.5:
        raise ValueError("eta_probe must lie in (0, 1/2)")
    # closed interval: add the atoms sitting exactly at the right end
    inner = kernel_mass(kernel, 1.0, eta_probe, 1.0 - eta_probe)
    right = sum(w for z, w in kernel.atoms() if z == 1.0 - eta_probe)
    return float(min(1.0, inner + right))


def shattering_eta(kernel: KernelSpec) -> float:
    """``min(1/4, (4C)**(-1/gamma))``; requires ``gamma > 0``."""
    g, C = kernel.gamma, kernel.shattering_constant_C
    if not g > 0:
        raise ValueError("needs gamma > 0")
    return min(0.25, (4.0 * C) ** (-1.0 / g))


def audit(problem: ProblemSpec, probe_grid: Grid | None = None, R_probe: float | None = None) -> AssumptionReport:
    """Check every hypothesis for ``problem`` and return a report.

    Parameters
    ----------
    problem : ProblemSpec
    probe_grid : Grid, optional
        Its ``R`` sets the probe range; defaults to ``R_probe`` or 1e4.
    """
    kern, tau, beta = problem.kernel, problem.tau, problem.beta
    n = problem.n_fragments
    Rp = probe_grid.R if probe_grid is not None else (R_probe or 1e4)
    entries: list[AuditEntry] = []
    ys = np.array([1e-3, 0.5, 1.0, 7.0, 1e3])

    masses = np.array([kernel_mass(kern, y, 0.0, y) for y in ys])
    err = float(np.max(np.abs(masses - 1.0)))
    entries.append(AuditEntry("kappa1", err <= 1e-12, err, "max |mass - 1| over sample parents"))

    m1 = np.array([kernel_moment(kern, y, 1) for y in ys])
    err = float(np.max(np.abs(m1 - 1.0 / n)))
    entries.append(AuditEntry("kappa2", err <= 1e-12, float(m1[0]), f"first moment vs 1/n = {1.0 / n:g}"))

    c = float(kernel_moment(kern, 1.0, 2))
    entries.append(AuditEntry("kappa3", c < 1.0 / n - STRICT_MARGIN, c, f"second moment c vs 1/n = {1.0 / n:g}"))

    # probe samples: four decades up to R_probe, plus the grid centers
    xs = np.geomspace(Rp * 1e-4, Rp, 401)
    if probe_grid is not None:
        xs = np.union1d(xs, probe_grid.centers[probe_grid.centers > 0])
    t_s = np.asarray(eval_rate(tau, xs), dtype=float)
    b_s = np.asarray(eval_rate(beta, xs), dtype=float)
    last = xs >= Rp / 10.0
    bsup = beta.support_infimum_b
    fit_tau = _loglog_slope(xs[last], t_s[last])
    fit_beta = _loglog_slope(xs[last], b_s[last])
    exps = {"tau_infinity": fit_tau, "beta_infinity": fit_beta, "heuristic": True}

    small = np.geomspace(1e-10, min(1.0, Rp), 200)
    a0 = tau.alpha0
    loc_tau = small**a0 * np.asarray(eval_rate(tau, small), dtype=float)
    loc_beta = np.asarray(eval_rate(beta, small), dtype=float)
    bounded = bool(np.all(np.isfinite(loc_tau)) and np.all(np.isfinite(loc_beta)))
    grows = bool(np.all(b_s[last] > 0) and np.all(t_s[last] > 0)
                 and np.isfinite(fit_tau) and np.isfinite(fit_beta))
    sat = bounded and grows
    entries.append(AuditEntry("betatauspace", sat if bounded else False, max(fit_tau, fit_beta),
                              f"fitted exponents at infinity tau {fit_tau:.3g}, beta {fit_beta:.3g} (heuristic)"))

    tpos = xs[xs > 0]
    tmin = float(np.min(eval_rate(tau, np.concatenate([small, tpos]))))
    entries.append(AuditEntry("taupositivity", tmin > 0, tmin, "min tau over (0, R_probe]"))

    below = xs < bsup
    zero_below = bool(np.all(b_s[below] == 0)) if below.any() else True
    pos_above = bool(np.all(b_s[xs > bsup] > 0))
    entries.append(AuditEntry("betasupport", zero_below and pos_above, bsup,
                              f"beta vanishes on [0, {bsup:g}) and is positive beyond"))

    zs = np.geomspace(1e-8, 1.0, 200)
    F = np.array([kernel_mass(kern, 1.0, 0.0, z) for z in zs])
    bound = np.minimum(1.0, kern.shattering_constant_C * zs**kern.gamma)
    mass_ok = bool(np.all(F <= bound + 1e-12))
    g = kern.gamma
    p_tau = _exponent_at_zero(tau)
    exp_kt = None if p_tau is None else p_tau - g
    integ, val, why = _integrable_at_zero(
        lambda s: s**g / max(float(eval_rate(tau, s)), 1e-300) if s > 0 else 0.0, exp_kt, 1.0)
    kt = (integ if mass_ok else False)
    entries.append(AuditEntry("kappatau", kt, val,
                              f"mass near 0 {'within' if mass_ok else 'exceeds'} min(1, C z^gamma); "
                              f"x^gamma/tau: {why}"))

    if bsup > 0:
        entries.append(AuditEntry("betatau0", True, 0.0, "beta vanishes near 0"))
    else:
        p_b = _exponent_at_zero(beta)
        e = None if (p_tau is None or p_b is None) else p_tau - p_b
        integ, val, why = _integrable_at_zero(
            lambda s: float(eval_rate(beta, s)) / max(float(eval_rate(tau, s)), 1e-300) if s > 0 else 0.0,
            e, 1.0)
        entries.append(AuditEntry("betatau0", integ, val, f"beta/tau: {why}"))

    with np.errstate(divide="ignore", invalid="ignore"):
        gel = xs * b_s / t_s
    gel_samples = [(float(a), float(b)) for a, b in zip(xs[::20], gel[::20])]
    s_gel = _loglog_slope(xs[last], gel[last])
    pi, pb = _exponent_at_infinity(tau), _exponent_at_infinity(beta)
    if pi is not None and pb is not None:
        s_exact = 1.0 + pb - pi
        gsat: bool | str = s_exact > 0
        detail = f"x beta/tau ~ x^{s_exact:g}"
    else:
        incr = bool(np.all(np.diff(gel[last]) > 0))
        if incr and s_gel >= 0.1:
            gsat = True
        elif s_gel <= 0.01:
            gsat = False
        else:
            gsat = INCONCLUSIVE
        detail = f"sampled log-slope {s_gel:.3g} over the last decade"
    entries.append(AuditEntry("betatauinf", gsat, s_gel, detail))

    mm, eta_l, cert = float("nan"), float("nan"), None
    if kern.gamma > 0:
        eta_l = shattering_eta(kern)
        mm = middle_mass_bound(kern, eta_l)
        if mm >= 1.0 / 3.0:
            cert = 0.5 - eta_l**2 * mm
    return AssumptionReport(entries, c, mm, eta_l, cert, gel_samples, exps)
