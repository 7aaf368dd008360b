"""Closed-form eigentriples and a dense-spectrum reference solver."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .discretization import DiscreteOperator
from .errors import DomainError

DENSE_LIMIT = 400


@dataclass(frozen=True)
class AnalyticTriple:
    lam: float
    U: Callable
    phi: Callable
    validity: str
    first_moment: float | None = None


def example_linear_beta(tau0: float, beta0: float) -> AnalyticTriple:
    """Constant growth ``tau0``, fragmentation ``beta0 x``, uniform kernel.

    With ``X = sqrt(beta0 / tau0) x``::

        lambda = sqrt(beta0 tau0)
        U(x)   = 2 sqrt(beta0 / tau0) (X + X^2 / 2) exp(-X - X^2 / 2)
        phi(x) = (1 + X) / 2
    """
    if not (tau0 > 0 and beta0 > 0):
        raise DomainError("tau0 and beta0 must be > 0")
    s = math.sqrt(beta0 / tau0)

    def U(x):
        X = s * np.asarray(x, dtype=float)
        return 2.0 * s * (X + 0.5 * X * X) * np.exp(-X - 0.5 * X * X)

    def phi(x):
        return 0.5 * (1.0 + s * np.asarray(x, dtype=float))

    return AnalyticTriple(math.sqrt(beta0 * tau0), U, phi, "tau0 > 0, beta0 > 0")


def example_linear_tau(tau0: float, beta0: float, n: int) -> AnalyticTriple:
    """Linear growth ``tau0 x``, fragmentation ``beta0 x**n``, uniform kernel.

    ``lambda = tau0``, ``U = a n / Gamma(1/n) exp(-beta0 x^n / (n tau0))`` and
    ``phi = a Gamma(1/n) / Gamma(2/n) x`` with ``a = (beta0 / (n tau0))**(1/n)``.
    ``phi(x) = x / int y U(y) dy``.
    """
    if not (tau0 > 0 and beta0 > 0):
        raise DomainError("tau0 and beta0 must be > 0")
    if int(n) != n or n < 1:
        raise DomainError("n must be an integer >= 1")
    n = int(n)
    a = (beta0 / (n * tau0)) ** (1.0 / n)
    g1, g2 = math.gamma(1.0 / n), math.gamma(2.0 / n)
    cU = a * n / g1
    cphi = a * g1 / g2
    c = beta0 / (n * tau0)

    def U(x):
        x = np.asarray(x, dtype=float)
        return cU * np.exp(-c * x**n)

    def phi(x):
        return cphi * np.asarray(x, dtype=float)

    return AnalyticTriple(float(tau0), U, phi, "tau0 > 0, beta0 > 0, n >= 1", first_moment=1.0 / cphi)


@dataclass
class DenseSpectrum:
    eigenvalues: np.ndarray
    perron_value: float
    perron_vector: np.ndarray  # normalized to unit dx-weighted mass when a grid is known
    perron_index: int


def dense_spectrum(op, weights: np.ndarray | None = None) -> DenseSpectrum:
    """Full eigendecomposition of a small operator and its Perron pair.

    ``op`` is a DiscreteOperator or a square array.  The Perron value is the
    eigenvalue with the largest real part; its eigenvector is returned with a
    nonnegative sign and unit ``weights``-weighted sum.
    """
    if isinstance(op, DiscreteOperator):
        M = op.dense()
        if weights is None:
            weights = op.grid.widths
    else:
        M = np.asarray(op, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("dense_spectrum needs a square operator")
    if M.shape[0] > DENSE_LIMIT:
        raise DomainError(f"dense oracle refuses N > {DENSE_LIMIT}")
    if weights is None:
        weights = np.ones(M.shape[0])
    w, V = scipy.linalg.eig(M)
    k = int(np.argmax(w.real))
    v = V[:, k].real
    v = v / np.dot(v, weights)
    return DenseSpectrum(w, float(w[k].real), v, k)
