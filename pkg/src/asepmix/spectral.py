"""Closed-form spectral theory of the height dynamics.

An exponential change of variables linearizes the drift of the height
evolution, producing an explicit family of eigenfunctions ``f_j`` of the
generator built from a sine mode and a boundary-corrector profile ``a``.
The smallest eigenvalue yields the spectral gap formula, and monotonicity of
the first eigenfunction gives a computable contraction bound on the worst
pairwise total-variation distance.

Everything here requires p < 1 (the exponential substitution degenerates for
the totally asymmetric chain, which is analyzed by absorption in
:mod:`asepmix.exact` instead).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .chains import HeightFunction, ModelParams, vee, wedge


def _require_partial_asymmetry(params: ModelParams):
    if params.totally_asymmetric:
        raise ValueError("spectral formulas need p < 1 (odds ratio is infinite at p = 1)")


def _log_expm1(y: float) -> float:
    """log(exp(y) - 1), stable for both small and very large y."""
    if y > 30.0:
        return y + math.log1p(-math.exp(-y))
    return math.log(math.expm1(y))


def _log1mexp(y: float) -> float:
    """log(1 - exp(-y)) for y > 0."""
    if y > 0.693:
        return math.log1p(-math.exp(-y))
    return math.log(-math.expm1(-y))


def gamma_mode(n: int, j: int, params: ModelParams) -> float:
    """Oscillatory part of the j-th explicit eigenvalue, 4*sqrt(pq)*sin(j*pi/2n)**2."""
    return 4.0 * math.sqrt(params.p * params.q) * math.sin(j * math.pi / (2 * n)) ** 2


def gap_formula(n: int, params: ModelParams) -> float:
    """Spectral gap of both chains; independent of the particle number."""
    if n < 2:
        raise ValueError("need n >= 2")
    return params.gap_limit + gamma_mode(n, 1, params)


def corrector(n: int, k: int, params: ModelParams) -> np.ndarray:
    """Boundary profile a(0..n) solving sqrt(pq)*Lap(a) = gap_limit * a
    with a(0) = 1 and a(n) = odds**(k - n/2).

    Evaluated from the closed form A*odds**(x/2) + B*odds**(-x/2) in log
    space, so it stays finite-precision-accurate up to n ~ 10**3.
    """
    _require_partial_asymmetry(params)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    L = params.log_odds
    # coefficients from the two boundary conditions, kept as logarithms
    log_a_coef = (k - n) * L + _log1mexp(k * L) - _log1mexp(n * L)
    log_b_coef = _log1mexp((n - k) * L) - _log1mexp(n * L)
    x = np.arange(n + 1, dtype=np.float64)
    return np.exp(np.logaddexp(log_a_coef + x * L / 2.0, log_b_coef - x * L / 2.0))


def corrector_tridiagonal(n: int, k: int, params: ModelParams) -> np.ndarray:
    """Same profile via a banded linear solve; independent of the closed form."""
    from scipy.linalg import solve_banded

    _require_partial_asymmetry(params)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    s = math.sqrt(params.p * params.q)
    # interior balance: s*a(x-1) - a(x) + s*a(x+1) = 0, since 2s + gap_limit = 1
    m = n - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = s
    ab[1, :] = -1.0
    ab[2, :-1] = s
    rhs = np.zeros(m)
    rhs[0] = -s * 1.0
    rhs[-1] = -s * math.exp((k - n / 2.0) * params.log_odds)
    interior = solve_banded((1, 1), ab, rhs)
    out = np.empty(n + 1)
    out[0] = 1.0
    out[1:n] = interior
    out[n] = math.exp((k - n / 2.0) * params.log_odds)
    return out


@dataclass
class EigenData:
    """Cached ingredients of the explicit eigenfunction for one mode index."""

    n: int
    k: int
    j: int
    params: ModelParams
    gamma_j: float = field(init=False)
    a: np.ndarray = field(init=False)
    sines: np.ndarray = field(init=False)

    def __post_init__(self):
        _require_partial_asymmetry(self.params)
        if not 1 <= self.j <= self.n - 1:
            raise ValueError(f"mode index must lie in [1, {self.n - 1}]")
        self.gamma_j = gamma_mode(self.n, self.j, self.params)
        self.a = corrector(self.n, self.k, self.params)
        x = np.arange(1, self.n)
        self.sines = np.sin(x * self.j * np.pi / self.n)

    def value(self, h) -> float:
        """Evaluate the eigenfunction on a height function (or raw value array)."""
        v = h.to_array() if isinstance(h, HeightFunction) else np.asarray(h)
        interior = np.exp(v[1:-1] * (self.params.log_odds / 2.0)) - self.a[1:-1]
        return float(self.sines @ interior)

    def value_many(self, heights: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on rows of height values (shape (m, n+1))."""
        interior = np.exp(heights[:, 1:-1] * (self.params.log_odds / 2.0)) - self.a[1:-1]
        return interior @ self.sines

    def eigenvalue(self) -> float:
        return self.params.gap_limit + self.gamma_j

    def scale(self, h) -> float:
        """Magnitude proxy for relative residuals: sum of |sine| * max(term, a)."""
        v = h.to_array() if isinstance(h, HeightFunction) else np.asarray(h)
        interior = np.maximum(
            np.exp(v[1:-1] * (self.params.log_odds / 2.0)), self.a[1:-1])
        return float(np.abs(self.sines) @ interior)


@lru_cache(maxsize=256)
def _eigendata(n: int, k: int, j: int, p: float) -> EigenData:
    return EigenData(n, k, j, ModelParams(p))


def eigenfunction(j: int, n: int, k: int, params: ModelParams, xi: HeightFunction) -> float:
    """Value of the j-th explicit eigenfunction at a height function."""
    return _eigendata(n, k, j, params.p).value(xi)


def delta_min(n: int, k: int, params: ModelParams) -> tuple[float, float]:
    """Smallest increment of the first eigenfunction over comparable distinct
    pairs, and its simple lower bound (odds - 1)/n * odds**((k-n)/2).

    Flipping one corner at site x up from the minimal bridge changes the
    eigenfunction by sin(x*pi/n) * (odds - 1) * odds**(vee(x)/2); every
    interior site supports such a pair, so the exact minimum scans x.
    """
    _require_partial_asymmetry(params)
    L = params.log_odds
    bottom = np.asarray(vee(n, k).values, dtype=np.float64)
    x = np.arange(1, n)
    logs = (np.log(np.sin(x * np.pi / n)) + _log_expm1(L) + bottom[1:-1] * (L / 2.0))
    exact = float(np.exp(logs.min()))
    bound = float(np.exp(_log_expm1(L) - math.log(n) + (k - n) * L / 2.0))
    return exact, bound


def contraction_bound(t: float, n: int, k: int, params: ModelParams,
                      as_log: bool = False) -> float:
    """Upper bound on the worst pairwise total-variation distance at time t:
    (f(top) - f(bottom)) / delta_min * exp(-gap * t).

    Computed in log space; with ``as_log`` the logarithm is returned, which
    stays finite when the prefactor overflows double precision.
    """
    _require_partial_asymmetry(params)
    if t < 0:
        raise ValueError("time must be nonnegative")
    L = params.log_odds
    top = np.asarray(wedge(n, k).values, dtype=np.float64)[1:-1]
    bottom = np.asarray(vee(n, k).values, dtype=np.float64)[1:-1]
    x = np.arange(1, n)
    # f(top) - f(bottom) is a sum of positive terms, one per interior site
    logs = (np.log(np.sin(x * np.pi / n)) + bottom * (L / 2.0)
            + np.array([_log_expm1(d) for d in (top - bottom) * (L / 2.0)]))
    log_num = float(np.logaddexp.reduce(logs))
    exact_delta, _ = delta_min(n, k, params)
    log_bound = log_num - math.log(exact_delta) - gap_formula(n, params) * t
    if as_log:
        return log_bound
    return float(np.exp(log_bound)) if log_bound < 709 else math.inf
