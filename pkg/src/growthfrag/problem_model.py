"""Rates, fragmentation kernels and the growth-fragmentation model they define.

The model is

    d/dt u + d/dx (tau u) + (beta + mu) u = n * int_x^inf beta(y) kappa(x, y) u(y) dy,   x >= x_min

with ``u(x_min, t) = 0``.  Kernels are self-similar, ``kappa(x, y) = kappa0(x / y) / y``,
with ``kappa0`` a probability measure on ``[0, 1]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import DomainError, InvalidSpecError

log = logging.getLogger(__name__)

RATE_KINDS = ("power_law", "affine", "constant", "tabulated")
KERNEL_KINDS = ("mitosis_r", "homogeneous_alpha", "uniform", "tabulated_density", "mixture")


@dataclass(frozen=True)
class RateSpec:
    """A nonnegative rate on ``[0, inf)``.

    Parameters
    ----------
    kind : {'power_law', 'affine', 'constant', 'tabulated'}
        ``power_law``: ``c * x**p`` with ``coeffs = (c, p)``;
        ``affine``: ``a + b * x`` with ``coeffs = (a, b)``;
        ``constant``: ``c`` with ``coeffs = (c,)``;
        ``tabulated``: piecewise-linear through ``(table_x, table_y)``.
    support_infimum_b : float
        The rate is forced to zero on ``[0, b)``.
    alpha0 : float
        Exponent such that ``x**alpha0 * rate`` is locally bounded near 0.
    """

    kind: str
    coeffs: tuple[float, ...] = ()
    support_infimum_b: float = 0.0
    alpha0: float = 0.0
    table_x: tuple[float, ...] = ()
    table_y: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "table_x", tuple(float(c) for c in self.table_x))
        object.__setattr__(self, "table_y", tuple(float(c) for c in self.table_y))
        if self.kind not in RATE_KINDS:
            raise InvalidSpecError(f"unknown rate kind {self.kind!r}")
        if not (self.support_infimum_b >= 0 and math.isfinite(self.support_infimum_b)):
            raise InvalidSpecError("support_infimum_b must be finite and >= 0")
        c = self.coeffs
        if self.kind == "power_law":
            if len(c) != 2:
                raise InvalidSpecError("power_law needs coeffs (c, p)")
            if c[0] < 0:
                raise InvalidSpecError("power_law coefficient c < 0 gives negative rates")
            if c[1] < 0:
                raise InvalidSpecError("power_law exponent must be >= 0")
        elif self.kind == "affine":
            if len(c) != 2:
                raise InvalidSpecError("affine needs coeffs (a, b)")
            if c[0] < 0 or c[1] < 0:
                raise InvalidSpecError("affine coefficients must be >= 0 for a nonnegative rate")
        elif self.kind == "constant":
            if len(c) != 1:
                raise InvalidSpecError("constant needs coeffs (c,)")
            if c[0] < 0:
                raise InvalidSpecError("constant rate must be >= 0")
        else:
            tx, ty = np.asarray(self.table_x), np.asarray(self.table_y)
            if tx.size < 2 or tx.size != ty.size:
                raise InvalidSpecError("tabulated rate needs >= 2 matching (x, y) points")
            if np.any(np.diff(tx) <= 0):
                raise InvalidSpecError("tabulated x must be strictly increasing")
            if np.any(ty < 0):
                raise InvalidSpecError("tabulated rate has negative values")

    # convenience constructors
    @classmethod
    def constant(cls, c: float, b: float = 0.0) -> "RateSpec":
        return cls("constant", (c,), support_infimum_b=b)

    @classmethod
    def power(cls, c: float, p: float, b: float = 0.0) -> "RateSpec":
        return cls("power_law", (c, p), support_infimum_b=b)

    @classmethod
    def linear(cls, c: float, b: float = 0.0) -> "RateSpec":
        return cls("power_law", (c, 1.0), support_infimum_b=b)

    @classmethod
    def affine(cls, a: float, b_slope: float, b: float = 0.0) -> "RateSpec":
        return cls("affine", (a, b_slope), support_infimum_b=b)

    @classmethod
    def tabulated(cls, x, y, b: float = 0.0) -> "RateSpec":
        return cls("tabulated", table_x=tuple(x), table_y=tuple(y), support_infimum_b=b)

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.coeffs[0] == 0.0

    def __call__(self, x):
        return eval_rate(self, x)


_warned_extrapolation: set[int] = set()


def eval_rate(spec: RateSpec, x):
    """Evaluate a rate at ``x`` (scalar or array); exact for analytic kinds."""
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("rate evaluated at a non-finite point")
    c = spec.coeffs
    if spec.kind == "power_law":
        if c[1] == 0.0:
            val = np.full_like(xa, c[0])
        else:
            val = c[0] * np.abs(xa) ** c[1]
    elif spec.kind == "affine":
        val = c[0] + c[1] * xa
    elif spec.kind == "constant":
        val = np.full_like(xa, c[0])
    else:
        tx = np.asarray(spec.table_x)
        outside = (xa < tx[0]) | (xa > tx[-1])
        if np.any(outside) and id(spec) not in _warned_extrapolation:
            _warned_extrapolation.add(id(spec))
            log.warning("tabulated rate extrapolated as a constant outside [%g, %g]", tx[0], tx[-1])
        val = np.interp(xa, tx, spec.table_y)
    if spec.support_infimum_b > 0:
        val = np.where(xa < spec.support_infimum_b, 0.0, val)
    if np.any(val < 0):
        raise InvalidSpecError("rate evaluates to a negative value")
    if np.ndim(x) == 0:
        return float(val)
    return val


@dataclass(frozen=True)
class KernelSpec:
    """Self-similar fragmentation kernel ``kappa(x, y) = kappa0(x / y) / y``.

    ``mitosis_r`` puts mass 1/2 at ``r`` and ``1 - r`` (``r = 1/2``: equal mitosis,
    ``r = 0``: renewal).  ``homogeneous_alpha`` has density
    ``(alpha + 1) / 2 * (z**alpha + (1 - z)**alpha)``.  ``tabulated_density`` is a
    piecewise-linear density through ``(table_z, table_density)``, renormalized to mass 1.
    ``mixture`` combines ``components`` ``((weight, KernelSpec), ...)``.

    ``gamma`` and ``shattering_constant_C`` bound the mass near zero,
    ``int_0^x kappa(z, y) dz <= min(1, C (x / y)**gamma)``.  They are derived for the
    built-in kinds when not given and are required for tabulated densities.
    """

    kind: str
    parameter: float = 0.0
    gamma: float | None = None
    shattering_constant_C: float | None = None
    table_z: tuple[float, ...] = ()
    table_density: tuple[float, ...] = ()
    components: tuple = ()
    symmetric: bool = True
    _cdf_nodes: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidSpecError(f"unknown kernel kind {self.kind!r}")
        p = float(self.parameter)
        object.__setattr__(self, "parameter", p)
        if self.kind == "mitosis_r" and not (0.0 <= p <= 0.5):
            raise InvalidSpecError("mitosis parameter r must lie in [0, 1/2]")
        if self.kind == "homogeneous_alpha" and not p > -1.0:
            raise InvalidSpecError("homogeneous kernel needs alpha > -1")
        if self.kind == "tabulated_density":
            z = np.asarray(self.table_z, dtype=float)
            d = np.asarray(self.table_density, dtype=float)
            if z.size < 2 or z.size != d.size:
                raise InvalidSpecError("tabulated kernel needs >= 2 matching (z, density) points")
            if abs(z[0]) > 0 or abs(z[-1] - 1.0) > 0 or np.any(np.diff(z) <= 0):
                raise InvalidSpecError("tabulated kernel nodes must increase from 0 to 1")
            if np.any(d < 0):
                raise InvalidSpecError("tabulated kernel density is negative")
            seg = 0.5 * (d[1:] + d[:-1]) * np.diff(z)
            total = seg.sum()
            if not total > 0:
                raise InvalidSpecError("tabulated kernel has zero mass")
            d = d / total
            if self.symmetric and not np.allclose(np.interp(1.0 - z, z, d), d, rtol=1e-9, atol=1e-12):
                raise InvalidSpecError("tabulated kernel is not symmetric about 1/2")
            if self.gamma is None or self.shattering_constant_C is None:
                raise InvalidSpecError("tabulated kernels need gamma and shattering_constant_C")
            object.__setattr__(self, "table_z", tuple(z))
            object.__setattr__(self, "table_density", tuple(d))
            object.__setattr__(self, "_cdf_nodes", np.concatenate([[0.0], np.cumsum(seg / total)]))
        if self.kind == "mixture":
            if not self.components:
                raise InvalidSpecError("mixture kernel needs components")
            comps = tuple((float(w), k) for w, k in self.components)
            ws = np.array([w for w, _ in comps])
            if np.any(ws < 0) or abs(ws.sum() - 1.0) > 1e-12:
                raise InvalidSpecError("mixture weights must be >= 0 and sum to 1")
            object.__setattr__(self, "components", comps)
        if self.gamma is None or self.shattering_constant_C is None:
            g, c = _derived_shattering(self)
            if self.gamma is None:
                object.__setattr__(self, "gamma", g)
            if self.shattering_constant_C is None:
                object.__setattr__(self, "shattering_constant_C", c)
        if self.gamma < 0 or not self.shattering_constant_C > 0:
            raise InvalidSpecError("need gamma >= 0 and C > 0")

    @classmethod
    def uniform(cls) -> "KernelSpec":
        return cls("uniform")

    @classmethod
    def mitosis(cls, r: float = 0.5, gamma: float | None = None) -> "KernelSpec":
        return cls("mitosis_r", r, gamma=gamma)

    @classmethod
    def homogeneous(cls, alpha: float) -> "KernelSpec":
        return cls("homogeneous_alpha", alpha)

    @classmethod
    def renewal_mixture(cls, rho: float, r: float) -> "KernelSpec":
        """``rho * renewal + (1 - rho) * mitosis(r)``."""
        return cls("mixture", components=((rho, cls.mitosis(0.0)), (1.0 - rho, cls.mitosis(r))))

    @property
    def is_atomic(self) -> bool:
        if self.kind == "mixture":
            return any(k.is_atomic for _, k in self.components)
        return self.kind == "mitosis_r"

    def atoms(self) -> list[tuple[float, float]]:
        """(position, weight) pairs of the atomic part of ``kappa0``."""
        if self.kind == "mitosis_r":
            r = self.parameter
            if r == 0.5:
                return [(0.5, 1.0)]
            return [(r, 0.5), (1.0 - r, 0.5)]
        if self.kind == "mixture":
            return [(z, w * wz) for w, k in self.components for z, wz in k.atoms()]
        return []

    def density(self, z):
        """Density of the absolutely continuous part of ``kappa0`` (zero for atoms)."""
        z = np.asarray(z, dtype=float)
        if self.kind == "uniform":
            return np.where((z >= 0) & (z <= 1), 1.0, 0.0)
        if self.kind == "homogeneous_alpha":
            a = self.parameter
            zc = np.clip(z, 0.0, 1.0)
            with np.errstate(divide="ignore"):
                val = 0.5 * (a + 1.0) * (zc**a + (1.0 - zc) ** a)
            return np.where((z >= 0) & (z <= 1), val, 0.0)
        if self.kind == "tabulated_density":
            return np.interp(z, self.table_z, self.table_density, left=0.0, right=0.0)
        if self.kind == "mixture":
            return sum(w * k.density(z) for w, k in self.components)
        return np.zeros_like(z)

    def cdf_left(self, t):
        """Mass of ``kappa0`` on ``[0, t)``; equals 1 for ``t > 1``.

        Atoms sitting exactly at ``t`` are excluded, which makes masses of
        half-open cells ``[a, b)`` additive.
        """
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, 0.0, 1.0)
        if self.kind == "uniform":
            out = tc
        elif self.kind == "homogeneous_alpha":
            s = self.parameter + 1.0
            out = 0.5 * (tc**s - (1.0 - tc) ** s + 1.0)
        elif self.kind == "mitosis_r":
            out = sum(w * (t > z) for z, w in self.atoms())
            out = np.asarray(out, dtype=float)
        elif self.kind == "tabulated_density":
            z = np.asarray(self.table_z)
            d = np.asarray(self.table_density)
            k = np.clip(np.searchsorted(z, tc, side="right") - 1, 0, z.size - 2)
            h = tc - z[k]
            slope = (d[k + 1] - d[k]) / (z[k + 1] - z[k])
            out = self._cdf_nodes[k] + d[k] * h + 0.5 * slope * h * h
        else:
            out = sum(w * k.cdf_left(t) for w, k in self.components)
        out = np.where(t > 1.0, 1.0, np.where(t <= 0.0, 0.0, out))
        if self.kind in ("uniform", "homogeneous_alpha", "tabulated_density"):
            out = np.where(t >= 1.0, 1.0, out)
        return out


def _derived_shattering(spec: KernelSpec) -> tuple[float, float]:
    """Analytic (gamma, C) with ``F(z) <= min(1, C z**gamma)`` for built-in kernels."""
    if spec.kind == "uniform":
        return 1.0, 1.0
    if spec.kind == "mitosis_r":
        r = spec.parameter
        if r == 0.0:
            return 0.0, 1.0
        return 1.0, 1.0 / r
    if spec.kind == "homogeneous_alpha":
        a = spec.parameter
        if a <= 0.0:
            # (1 - z)**s + z**s >= 1 for s in (0, 1]  =>  F(z) <= z**(1 + a)
            return 1.0 + a, 1.0
        # density is bounded, so F(z) <= sup(kappa0) z
        return 1.0, (a + 1.0) * (2.0**-a if a <= 1.0 else 0.5)
    if spec.kind == "mixture":
        gs = [k.gamma for _, k in spec.components]
        return min(gs), sum(w * k.shattering_constant_C for w, k in spec.components)
    raise InvalidSpecError("tabulated kernels need explicit gamma and C")


def kernel_mass(spec: KernelSpec, y, a, b):
    """Mass of ``kappa(., y)`` on ``[a, b)``.

    Intervals are half-open, except that an interval reaching ``y`` is closed on
    the right so that an atom at ``x = y`` is counted.  Vectorized over arrays.
    """
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("kernel_mass needs y > 0")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < a):
        raise DomainError("kernel_mass needs 0 <= a <= b")
    hi = np.where(b >= y, 1.0, spec.cdf_left(b / y))
    lo = spec.cdf_left(a / y)
    out = np.clip(hi - lo, 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def kernel_moment(spec: KernelSpec, y: float, p: int) -> float:
    """``int (x / y)**p kappa(x, y) dx``; independent of ``y`` for self-similar kernels."""
    if not y > 0:
        raise DomainError("kernel_moment needs y > 0")
    if p < 0 or int(p) != p:
        raise DomainError("moment order must be an integer >= 0")
    p = int(p)
    if p == 0:
        return 1.0
    if spec.kind == "uniform":
        return 1.0 / (p + 1.0)
    if spec.kind == "mitosis_r":
        return float(sum(w * z**p for z, w in spec.atoms()))
    if spec.kind == "homogeneous_alpha":
        a = spec.parameter
        return 0.5 * (a + 1.0) * (1.0 / (p + a + 1.0) + special.beta(p + 1.0, a + 1.0))
    if spec.kind == "mixture":
        return float(sum(w * kernel_moment(k, y, p) for w, k in spec.components))
    z = np.asarray(spec.table_z)
    val, _ = integrate.quad(
        lambda s: s**p * np.interp(s, z, spec.table_density), 0.0, 1.0,
        points=z[1:-1][:50] if z.size > 2 else None, epsabs=1e-14, epsrel=1e-13, limit=500,
    )
    return float(val)


@dataclass(frozen=True)
class ProblemSpec:
    """Full model: growth ``tau``, fragmentation ``beta``, kernel, ``n`` fragments,
    death rate ``death_mu`` and minimal size ``x_min``.

    With ``n_fragments = 2``, zero death and ``x_min = 0`` this is the classical
    growth-fragmentation equation.
    """

    tau: RateSpec
    beta: RateSpec
    kernel: KernelSpec
    n_fragments: float = 2.0
    death_mu: RateSpec = field(default_factory=lambda: RateSpec.constant(0.0))
    x_min: float = 0.0

    def __post_init__(self):
        if not self.n_fragments >= 2:
            # n > 1 is enough for the model; n < 2 is rejected by the build contract
            raise InvalidSpecError("n_fragments must be >= 2")
        if not (self.x_min >= 0 and math.isfinite(self.x_min)):
            raise InvalidSpecError("x_min must be finite and >= 0")

    @property
    def is_classical(self) -> bool:
        return self.n_fragments == 2 and self.death_mu.is_zero and self.x_min == 0
